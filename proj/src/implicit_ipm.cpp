#include "iqp/implicit_ipm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iqp::implicit_ipm {

using linalg::RowRole;

template <typename Real>
bool StepDirection<Real>::all_finite() const {
  using linalg::all_finite;
  return all_finite<Real>(dx) && all_finite<Real>(dy) && all_finite<Real>(dz) && all_finite<Real>(ds) &&
         all_finite<Real>(dv) && std::isfinite(dkappa);
}

template <typename Real>
DenseMatrix<Real> assemble_condensed_matrix(const QpProblem<Real>& qp, std::span<const Real> d_minus) {
  const std::size_t n = qp.n, p = qp.p, m = qp.m_eq, dim = n + p + m;
  if (d_minus.size() != p) throw Error(ErrorCode::DimensionMismatch, "condensed matrix: B block length");
  DenseMatrix<Real> k(dim, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      Real gtg = 0;
      for (std::size_t r = 0; r < p; ++r) gtg += qp.G(r, i) * qp.G(r, j);
      k(i, j) = k(j, i) = qp.Q(i, j) - gtg;
    }
  }
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t j = 0; j < n; ++j) k(n + r, j) = k(j, n + r) = qp.G(r, j);
    k(n + r, n + r) = -d_minus[r];
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) k(n + p + r, j) = k(j, n + p + r) = qp.A(r, j);
  return k;
}

template <typename Real>
KktFactor<Real> precompute_kkt_factors(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa,
                                       int refine_steps) {
  if (v.size() != qp.p) throw Error(ErrorCode::DimensionMismatch, "precompute_kkt_factors: v length");
  KktFactor<Real> f;
  f.v_at.assign(v.begin(), v.end());
  f.kappa_at = kappa;
  if (qp.p > 0) f.eval = retraction::retract_derivatives<Real>(v, kappa);
  f.G = qp.G;
  f.A = qp.A;
  f.refine_steps = refine_steps;

  std::vector<RowRole> roles(qp.n + qp.p + qp.m_eq, RowRole::Dual);
  std::fill_n(roles.begin(), qp.n, RowRole::Primal);
  f.factor = linalg::factor_symmetric_indefinite<Real>(assemble_condensed_matrix<Real>(qp, f.eval.d_minus),
                                                       Real(0), roles);
  return f;
}

template <typename Real>
StepDirection<Real> solve_kkt(const KktFactor<Real>& f, const Residuals<Real>& r, Real kappa_target) {
  const std::size_t n = f.G.cols(), p = f.G.rows(), m = f.A.rows();
  if (r.r_t.size() != n || r.r_e.size() != m || r.r_i.size() != p || r.r_z.size() != p || r.r_s.size() != p)
    throw Error(ErrorCode::DimensionMismatch, "solve_kkt: residual shapes do not match the factor");

  const Real r_kappa = p > 0 ? f.kappa_at - kappa_target : Real(0);
  const auto& c = f.eval.c;

  Vector<Real> rhs(n + p + m);
  Vector<Real> coupled(p);
  for (std::size_t i = 0; i < p; ++i) coupled[i] = r.r_i[i] + r.r_z[i] - r.r_s[i];
  const Vector<Real> gt = linalg::matvec_transposed<Real>(f.G, coupled);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = -(r.r_t[i] - gt[i]);
  for (std::size_t i = 0; i < p; ++i) rhs[n + i] = -(r.r_i[i] - r.r_s[i] - c[i] * r_kappa);
  for (std::size_t i = 0; i < m; ++i) rhs[n + p + i] = -r.r_e[i];

  const Vector<Real> w = linalg::solve_factored<Real>(f.factor, rhs, f.refine_steps);

  StepDirection<Real> d;
  d.dx.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
  d.dv.assign(w.begin() + static_cast<std::ptrdiff_t>(n), w.begin() + static_cast<std::ptrdiff_t>(n + p));
  d.dy.assign(w.begin() + static_cast<std::ptrdiff_t>(n + p), w.end());
  d.dkappa = -r_kappa;
  d.dz.resize(p);
  d.ds.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    d.dz[i] = f.eval.d_plus[i] * d.dv[i] + c[i] * d.dkappa - r.r_z[i];
    d.ds[i] = -f.eval.d_minus[i] * d.dv[i] + c[i] * d.dkappa - r.r_s[i];
  }
  if (!d.all_finite()) throw Error(ErrorCode::NonFiniteStep, "solve_kkt: non-finite step direction");
  return d;
}

template <typename Real>
Real linesearch(std::span<const Real> s, std::span<const Real> z, std::span<const Real> ds,
                std::span<const Real> dz, Real tau_frac) {
  Real alpha = 1;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (ds[i] < Real(0)) alpha = std::min(alpha, -s[i] / ds[i]);
  for (std::size_t i = 0; i < z.size(); ++i)
    if (dz[i] < Real(0)) alpha = std::min(alpha, -z[i] / dz[i]);
  return std::min(Real(1), tau_frac * alpha);
}

namespace {

template <typename Real>
Real complementarity(const Iterate<Real>& it) {
  Real out = 0;
  for (std::size_t i = 0; i < it.z.size(); ++i) out = std::max(out, std::abs(it.z[i] * it.s[i]));
  return out;
}

template <typename Real>
double manifold_error(const Iterate<Real>& it) {
  if (it.z.empty()) return 0.0;
  double worst = 0;
  for (std::size_t i = 0; i < it.z.size(); ++i)
    worst = std::max(worst, std::abs(double(it.z[i]) * double(it.s[i]) - double(it.kappa)));
  return worst / double(it.kappa);
}

// Takes the step on (x, y, v, kappa) and retracts onto the manifold.
template <typename Real>
void take_step(Iterate<Real>& it, const StepDirection<Real>& d, Real alpha) {
  for (std::size_t i = 0; i < it.x.size(); ++i) it.x[i] += alpha * d.dx[i];
  for (std::size_t i = 0; i < it.y.size(); ++i) it.y[i] += alpha * d.dy[i];
  if (it.z.empty()) return;
  for (std::size_t i = 0; i < it.v.size(); ++i) it.v[i] += alpha * d.dv[i];
  it.kappa += alpha * d.dkappa;
  auto [z, s] = retraction::retract<Real>(it.v, it.kappa);
  it.z = std::move(z);
  it.s = std::move(s);
}

template <typename Real>
void log_block(IterationLog& entry, const KktFactor<Real>& f) {
  if (f.eval.d_minus.empty()) return;
  const auto [lo, hi] = std::minmax_element(f.eval.d_minus.begin(), f.eval.d_minus.end());
  entry.bblock_min = -double(*hi);
  entry.bblock_max = -double(*lo);
}

template <typename Real>
bool within_drift(const KktFactor<Real>& f, const Iterate<Real>& it) {
  if (f.v_at.size() != it.v.size() || !(f.kappa_at > Real(0))) return false;
  if (std::abs(it.kappa - f.kappa_at) > Real(0.1) * f.kappa_at) return false;
  Real diff = 0;
  for (std::size_t i = 0; i < it.v.size(); ++i) diff = std::max(diff, std::abs(it.v[i] - f.v_at[i]));
  const Real scale = linalg::norm_inf<Real>(f.v_at);
  return diff <= Real(0.1) * scale;
}

void record_failure(SolveReport& report, NanStage stage, const Error& e) {
  report.status = Status::NumericalFailure;
  if (report.nan_stage == NanStage::None) {
    report.nan_stage = stage;
    report.nan_detail = std::string(to_string(e.code())) + ": " + e.what() + " at iteration " +
                        std::to_string(report.iterations);
  }
}

}  // namespace

template <typename Real>
SolveResult<Real> solve_qp(const QpProblem<Real>& qp, const SolverConfig& cfg) {
  cfg.validate();
  SolveResult<Real> out;
  SolveReport& report = out.report;
  const int refine = cfg.effective_refine_steps();
  const Real tol = static_cast<Real>(cfg.tol);
  const Real sigma = static_cast<Real>(cfg.sigma);
  const Real tau = static_cast<Real>(cfg.tau_frac);

  Iterate<Real>& it = out.iterate;
  try {
    it = initialize(qp, refine);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) throw;
    record_failure(report, NanStage::Scaling, e);
    return out;
  }

  NanStage stage = NanStage::Scaling;
  try {
    for (int k = 0;; ++k) {
      if (qp.p > 0) it.update_manifold_coordinates();
      const Residuals<Real> r = evaluate_residuals(qp, it, Paradigm::Implicit);
      const Real measure = std::max(r.inf_norm(), complementarity(it));
      report.residual = double(measure);
      if (!report.scan<Real>(NanStage::Corrector, measure, "residual")) {
        report.status = Status::NumericalFailure;
        break;
      }
      if (measure < tol) {
        report.status = Status::Converged;
        break;
      }
      if (k >= cfg.max_iter) {
        report.status = Status::MaxIter;
        break;
      }

      // Floor the target at sigma * tol; complementarity below tol is all the
      // convergence test asks for, and f32 kappa would otherwise underflow
      // while the other residuals stagnate.
      const Real kappa_target = std::min(it.kappa, std::max(sigma * it.kappa, sigma * tol));

      IterationLog entry;
      entry.residual = report.residual;
      entry.kappa = double(it.kappa);

      stage = NanStage::Scaling;
      out.factor = precompute_kkt_factors<Real>(qp, it.v, it.kappa, refine);
      ++report.factorizations;
      log_block(entry, *out.factor);
      if (!report.scan<Real>(NanStage::Scaling, out.factor->eval.d_minus, "B_k(-v)")) {
        report.status = Status::NumericalFailure;
        break;
      }

      stage = NanStage::Corrector;
      const StepDirection<Real> d = solve_kkt(*out.factor, r, kappa_target);

      stage = NanStage::LineSearch;
      const Real alpha = qp.p == 0 ? Real(1) : linesearch<Real>(it.s, it.z, d.ds, d.dz, tau);
      if (!report.scan<Real>(NanStage::LineSearch, alpha, "alpha")) {
        report.status = Status::NumericalFailure;
        break;
      }
      stage = NanStage::Corrector;
      take_step(it, d, alpha);
      report.iterations = k + 1;
      entry.alpha = double(alpha);
      entry.manifold_error = manifold_error(it);
      report.log.push_back(entry);
      if (!report.scan<Real>(NanStage::Corrector, it.x, "x") || !report.scan<Real>(NanStage::Corrector, it.y, "y")) {
        report.status = Status::NumericalFailure;
        break;
      }
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) throw;
    record_failure(report, stage, e);
  }
  return out;
}

template <typename Real>
RelaxResult<Real> relax_qp(const QpProblem<Real>& qp, const Iterate<Real>& solved, Real kappa_relax,
                           const KktFactor<Real>* cached, const SolverConfig& cfg) {
  cfg.validate();
  retraction::check_kappa(kappa_relax);
  RelaxResult<Real> out;
  out.iterate = solved;
  Iterate<Real>& it = out.iterate;
  SolveReport& report = out.report;
  const int refine = cfg.effective_refine_steps();
  const Real tol = static_cast<Real>(cfg.tol);
  const Real tau = static_cast<Real>(cfg.tau_frac);

  std::optional<KktFactor<Real>> factor;
  if (cached != nullptr) factor = *cached;

  try {
    for (int k = 0;; ++k) {
      if (qp.p == 0) {
        report.status = Status::Converged;
        break;
      }
      it.update_manifold_coordinates();
      Residuals<Real> r = evaluate_residuals(qp, it, Paradigm::Implicit);
      // kappa mismatch is measured relative to the target; absolute would
      // accept any kappa below tol when kappa_relax is of the order of tol.
      r.r_kappa = (it.kappa - kappa_relax) / kappa_relax;
      r.has_kappa = true;
      const Real measure = r.inf_norm();
      report.residual = double(measure);
      if (!report.scan<Real>(NanStage::Relaxation, measure, "relaxation residual")) {
        report.status = Status::NumericalFailure;
        break;
      }
      if (measure < tol) {
        report.status = Status::Converged;
        break;
      }
      if (k >= cfg.max_iter) {
        report.status = Status::MaxIter;
        break;
      }

      IterationLog entry;
      entry.residual = report.residual;
      entry.kappa = double(it.kappa);
      const bool reuse = k == 0 && factor && within_drift(*factor, it);
      if (!reuse) {
        factor = precompute_kkt_factors<Real>(qp, it.v, it.kappa, refine);
        ++report.factorizations;
      }
      entry.refactored = !reuse;
      log_block(entry, *factor);

      // solve_kkt measures r_kappa from kappa_at; shift the target so a reused
      // factor still steps the current kappa onto kappa_relax.
      const Real target = kappa_relax - (it.kappa - factor->kappa_at);
      const StepDirection<Real> d = solve_kkt(*factor, r, target);
      const Real alpha = linesearch<Real>(it.s, it.z, d.ds, d.dz, tau);
      if (!report.scan<Real>(NanStage::Relaxation, alpha, "alpha")) {
        report.status = Status::NumericalFailure;
        break;
      }
      take_step(it, d, alpha);
      report.iterations = k + 1;
      entry.alpha = double(alpha);
      entry.manifold_error = manifold_error(it);
      report.log.push_back(entry);
    }
    if (report.status != Status::NumericalFailure) {
      if (qp.p > 0) it.update_manifold_coordinates();
      const bool current = factor && factor->v_at == it.v && factor->kappa_at == it.kappa;
      if (!current) {
        factor = precompute_kkt_factors<Real>(qp, it.v, qp.p > 0 ? it.kappa : Real(0), refine);
        ++report.factorizations;
      }
      out.factor = std::move(*factor);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) throw;
    record_failure(report, NanStage::Relaxation, e);
  }
  return out;
}

template <typename Real>
GradientBundle<Real> compute_qp_gradients(const QpProblem<Real>& qp, const Iterate<Real>& relaxed,
                                          Real kappa_relax, std::span<const Real> dl_dx,
                                          const KktFactor<Real>& f) {
  (void)kappa_relax;
  if (dl_dx.size() != qp.n) throw Error(ErrorCode::DimensionMismatch, "compute_qp_gradients: dl_dx length");
  if (f.v_at.size() != qp.p || relaxed.x.size() != qp.n)
    throw Error(ErrorCode::DimensionMismatch, "compute_qp_gradients: factor does not match the problem");

  // Newton convention: the system is solved against -r, so r_t = dl_dx
  // places -dl_dx on the right-hand side. The kappa row targets kappa_at,
  // which makes dkappa exactly zero.
  Residuals<Real> r;
  r.r_t.assign(dl_dx.begin(), dl_dx.end());
  r.r_e.assign(qp.m_eq, Real(0));
  r.r_i.assign(qp.p, Real(0));
  r.r_z.assign(qp.p, Real(0));
  r.r_s.assign(qp.p, Real(0));
  StepDirection<Real> d;
  try {
    d = solve_kkt(f, r, f.kappa_at);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFiniteStep)
      throw Error(ErrorCode::NonFiniteStep, "compute_qp_gradients: non-finite differential");
    throw;
  }
  GradientBundle<Real> g = assemble_gradients<Real>(relaxed.x, relaxed.y, relaxed.z, d.dx, d.dy, d.dz);
  if (!g.all_finite()) throw Error(ErrorCode::NonFiniteStep, "compute_qp_gradients: non-finite gradient");
  return g;
}

template <typename Real>
DenseMatrix<Real> assemble_uncondensed_matrix(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa) {
  const std::size_t n = qp.n, m = qp.m_eq, p = qp.p;
  const std::size_t ox = 0, oy = n, oz = n + m, os = n + m + p, ov = n + m + 2 * p, ok = n + m + 3 * p;
  const std::size_t dim = ok + 1;
  DenseMatrix<Real> k(dim, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(ox + i, ox + j) = qp.Q(i, j);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) {
      k(ox + j, oy + r) = qp.A(r, j);
      k(oy + r, ox + j) = qp.A(r, j);
    }
  retraction::RetractionEval<Real> e;
  if (p > 0) e = retraction::retract_derivatives<Real>(v, kappa);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t j = 0; j < n; ++j) {
      k(ox + j, oz + r) = qp.G(r, j);
      k(oz + r, ox + j) = qp.G(r, j);
    }
    k(oz + r, os + r) = 1;                // row i: G dx + ds
    k(os + r, oz + r) = 1;                // row z: dz - B(v) dv - c dk
    k(os + r, ov + r) = -e.d_plus[r];
    k(os + r, ok) = -e.c[r];
    k(ov + r, os + r) = 1;                // row s: ds + B(-v) dv - c dk
    k(ov + r, ov + r) = e.d_minus[r];
    k(ov + r, ok) = -e.c[r];
  }
  k(ok, ok) = 1;
  return k;
}

template <typename Real>
StepDirection<Real> solve_kkt_first_condensed(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa,
                                              const Residuals<Real>& r, Real kappa_target) {
  const std::size_t n = qp.n, p = qp.p, m = qp.m_eq, dim = n + p + m;
  if (v.size() != p) throw Error(ErrorCode::DimensionMismatch, "solve_kkt_first_condensed: v length");
  const auto e = retraction::retract_derivatives<Real>(v, kappa);
  // v rows scaled by B_k(v) to make the matrix symmetric
  DenseMatrix<Real> k(dim, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = qp.Q(i, j);
  for (std::size_t rr = 0; rr < p; ++rr) {
    for (std::size_t j = 0; j < n; ++j) k(j, n + rr) = k(n + rr, j) = qp.G(rr, j) * e.d_plus[rr];
    k(n + rr, n + rr) = -e.d_plus[rr] * e.d_minus[rr];
  }
  for (std::size_t rr = 0; rr < m; ++rr)
    for (std::size_t j = 0; j < n; ++j) k(n + p + rr, j) = k(j, n + p + rr) = qp.A(rr, j);

  const Real r_kappa = kappa - kappa_target;
  Vector<Real> coupled(p);
  for (std::size_t i = 0; i < p; ++i) coupled[i] = r.r_z[i] + e.c[i] * r_kappa;
  const Vector<Real> gt = linalg::matvec_transposed<Real>(qp.G, coupled);
  Vector<Real> rhs(dim);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = -(r.r_t[i] - gt[i]);
  for (std::size_t i = 0; i < p; ++i) rhs[n + i] = -e.d_plus[i] * (r.r_i[i] - r.r_s[i] - e.c[i] * r_kappa);
  for (std::size_t i = 0; i < m; ++i) rhs[n + p + i] = -r.r_e[i];

  std::vector<RowRole> roles(dim, RowRole::Dual);
  std::fill_n(roles.begin(), n, RowRole::Primal);
  const Vector<Real> w =
      linalg::solve_factored(linalg::factor_symmetric_indefinite<Real>(k, Real(0), roles), std::span<const Real>(rhs), 1);
  StepDirection<Real> d;
  d.dx.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
  d.dv.assign(w.begin() + static_cast<std::ptrdiff_t>(n), w.begin() + static_cast<std::ptrdiff_t>(n + p));
  d.dy.assign(w.begin() + static_cast<std::ptrdiff_t>(n + p), w.end());
  d.dkappa = -r_kappa;
  d.dz.resize(p);
  d.ds.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    d.dz[i] = e.d_plus[i] * d.dv[i] + e.c[i] * d.dkappa - r.r_z[i];
    d.ds[i] = -e.d_minus[i] * d.dv[i] + e.c[i] * d.dkappa - r.r_s[i];
  }
  return d;
}

#define IQP_INSTANTIATE_IMPLICIT(Real)                                                                    \
  template struct StepDirection<Real>;                                                                    \
  template DenseMatrix<Real> assemble_condensed_matrix<Real>(const QpProblem<Real>&, std::span<const Real>); \
  template KktFactor<Real> precompute_kkt_factors<Real>(const QpProblem<Real>&, std::span<const Real>, Real, \
                                                        int);                                             \
  template StepDirection<Real> solve_kkt<Real>(const KktFactor<Real>&, const Residuals<Real>&, Real);     \
  template Real linesearch<Real>(std::span<const Real>, std::span<const Real>, std::span<const Real>,     \
                                 std::span<const Real>, Real);                                            \
  template SolveResult<Real> solve_qp<Real>(const QpProblem<Real>&, const SolverConfig&);                 \
  template RelaxResult<Real> relax_qp<Real>(const QpProblem<Real>&, const Iterate<Real>&, Real,           \
                                            const KktFactor<Real>*, const SolverConfig&);                 \
  template GradientBundle<Real> compute_qp_gradients<Real>(const QpProblem<Real>&, const Iterate<Real>&,  \
                                                           Real, std::span<const Real>,                   \
                                                           const KktFactor<Real>&);                       \
  template DenseMatrix<Real> assemble_uncondensed_matrix<Real>(const QpProblem<Real>&,                    \
                                                               std::span<const Real>, Real);              \
  template StepDirection<Real> solve_kkt_first_condensed<Real>(const QpProblem<Real>&,                    \
                                                               std::span<const Real>, Real,               \
                                                               const Residuals<Real>&, Real);

IQP_INSTANTIATE_IMPLICIT(float)
IQP_INSTANTIATE_IMPLICIT(double)

}  // namespace iqp::implicit_ipm
