#include "iqp/driver.hpp"

#include "iqp/implicit_ipm.hpp"

namespace iqp::driver {

RunOptions RunOptions::defaults(Precision precision) {
  RunOptions o;
  o.config = SolverConfig::defaults(precision);
  return o;
}

namespace {

Vector<double> widen(const auto& v) { return Vector<double>(v.begin(), v.end()); }

template <typename Real>
Residuals<double> widen(const Residuals<Real>& r) {
  Residuals<double> out;
  out.r_t = widen(r.r_t);
  out.r_e = widen(r.r_e);
  out.r_i = widen(r.r_i);
  out.r_z = widen(r.r_z);
  out.r_s = widen(r.r_s);
  out.r_c = widen(r.r_c);
  out.r_kappa = double(r.r_kappa);
  out.has_kappa = r.has_kappa;
  return out;
}

template <typename Real>
GradientBundle<double> widen(const GradientBundle<Real>& g) {
  return {g.dQ.template cast<double>(), widen(g.dq), g.dA.template cast<double>(),
          widen(g.db),                   g.dG.template cast<double>(), widen(g.dh)};
}

template <typename Real>
io::SolutionFile solve_typed(const QpProblem<double>& qp_in, const RunOptions& opts) {
  const QpProblem<Real> qp = qp_in.cast<Real>();
  io::SolutionFile out;
  out.paradigm = opts.paradigm;
  out.precision = opts.config.precision;
  Iterate<Real> it;
  SolveReport report;
  if (opts.paradigm == Paradigm::Implicit) {
    auto res = implicit_ipm::solve_qp(qp, opts.config);
    it = std::move(res.iterate);
    report = std::move(res.report);
  } else {
    auto res = explicit_ipm::explicit_solve_qp(qp, opts.config, opts.explicit_factorization);
    it = std::move(res.iterate);
    report = std::move(res.report);
  }
  out.iterate = it.template cast<double>();
  if (it.x.size() == qp.n && it.y.size() == qp.m_eq && it.z.size() == qp.p && it.s.size() == qp.p)
    out.residuals = widen(evaluate_residuals(qp, it, opts.paradigm));
  out.status = report.status;
  out.iterations = report.iterations;
  out.residual = report.residual;
  out.nan_stage = report.nan_stage;
  out.nan_detail = report.nan_detail;
  return out;
}

template <typename Real>
io::GradientFile differentiate_typed(const QpProblem<double>& qp_in, std::span<const double> dl_dx_in,
                                     const RunOptions& opts) {
  const QpProblem<Real> qp = qp_in.cast<Real>();
  const Vector<Real> dl_dx(dl_dx_in.begin(), dl_dx_in.end());
  const Real kappa_relax = static_cast<Real>(opts.config.kappa_relax);

  io::GradientFile out;
  out.n = qp.n;
  out.m_eq = qp.m_eq;
  out.p = qp.p;
  out.kappa_relax = opts.config.kappa_relax;
  out.paradigm = opts.paradigm;
  out.precision = opts.config.precision;
  out.status = Status::Converged;

  auto absorb = [&](const SolveReport& r) {
    if (r.status == Status::NumericalFailure) {
      out.status = Status::NumericalFailure;
      out.nan_stage = r.nan_stage;
      out.nan_detail = r.nan_detail;
      return false;
    }
    if (r.status == Status::MaxIter) out.status = Status::MaxIter;
    return true;
  };
  auto backward_failure = [&](const Error& e) {
    out.status = Status::NumericalFailure;
    out.nan_stage = NanStage::Backward;
    out.nan_detail = std::string(to_string(e.code())) + ": " + e.what();
  };

  if (opts.paradigm == Paradigm::Implicit) {
    auto solved = implicit_ipm::solve_qp(qp, opts.config);
    if (!absorb(solved.report)) return out;
    auto relaxed = implicit_ipm::relax_qp<Real>(qp, solved.iterate, kappa_relax,
                                                solved.factor ? &*solved.factor : nullptr, opts.config);
    if (!absorb(relaxed.report)) return out;
    try {
      out.bundle = widen(implicit_ipm::compute_qp_gradients<Real>(qp, relaxed.iterate, kappa_relax, dl_dx,
                                                                  relaxed.factor));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteStep) throw;
      backward_failure(e);
    }
  } else {
    auto solved = explicit_ipm::explicit_solve_qp(qp, opts.config, opts.explicit_factorization);
    if (!absorb(solved.report)) return out;
    auto relaxed = explicit_ipm::explicit_relax_qp<Real>(qp, solved.iterate, kappa_relax, opts.config,
                                                         opts.explicit_factorization);
    if (!absorb(relaxed.report)) return out;
    try {
      out.bundle = widen(explicit_ipm::explicit_compute_gradients<Real>(qp, relaxed.iterate, kappa_relax, dl_dx,
                                                                        *relaxed.factor));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteStep) throw;
      backward_failure(e);
    }
  }
  return out;
}

}  // namespace

io::SolutionFile solve(const QpProblem<double>& qp, const RunOptions& opts) {
  qp.validate();
  opts.config.validate();
  return opts.config.precision == Precision::F32 ? solve_typed<float>(qp, opts) : solve_typed<double>(qp, opts);
}

io::GradientFile differentiate(const QpProblem<double>& qp, std::span<const double> dl_dx, const RunOptions& opts) {
  qp.validate();
  opts.config.validate();
  if (dl_dx.size() != qp.n)
    throw Error(ErrorCode::DimensionMismatch, "differentiate: dl_dx has length " + std::to_string(dl_dx.size()) +
                                                  ", expected " + std::to_string(qp.n));
  return opts.config.precision == Precision::F32 ? differentiate_typed<float>(qp, dl_dx, opts)
                                                 : differentiate_typed<double>(qp, dl_dx, opts);
}

}  // namespace iqp::driver
