#include "iqp/explicit_ipm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iqp::explicit_ipm {

using linalg::RowRole;

const char* to_string(Factorization f) noexcept {
  switch (f) {
    case Factorization::CondensedCholesky: return "condensed_cholesky";
    case Factorization::AugmentedLdlt: return "augmented_ldlt";
  }
  return "unknown";
}

std::optional<Factorization> parse_factorization(std::string_view s) {
  if (s == "condensed_cholesky") return Factorization::CondensedCholesky;
  if (s == "augmented_ldlt") return Factorization::AugmentedLdlt;
  return std::nullopt;
}

template <typename Real>
DenseMatrix<Real> assemble_augmented_matrix(const QpProblem<Real>& qp, std::span<const Real> s,
                                            std::span<const Real> z) {
  const std::size_t n = qp.n, m = qp.m_eq, p = qp.p, dim = n + m + p;
  if (s.size() != p || z.size() != p) throw Error(ErrorCode::DimensionMismatch, "augmented matrix: s, z length");
  DenseMatrix<Real> k(dim, dim);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) k(i, j) = qp.Q(i, j);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) k(n + r, j) = k(j, n + r) = qp.A(r, j);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t j = 0; j < n; ++j) k(n + m + r, j) = k(j, n + m + r) = qp.G(r, j);
    k(n + m + r, n + m + r) = -s[r] / z[r];
  }
  return k;
}

template <typename Real>
ExplicitKktFactor<Real> precompute_kkt_factors(const QpProblem<Real>& qp, std::span<const Real> s,
                                               std::span<const Real> z, Factorization method,
                                               int refine_steps) {
  if (s.size() != qp.p || z.size() != qp.p)
    throw Error(ErrorCode::DimensionMismatch, "explicit precompute_kkt_factors: s, z length");
  ExplicitKktFactor<Real> f;
  f.method = method;
  f.s_at.assign(s.begin(), s.end());
  f.z_at.assign(z.begin(), z.end());
  f.G = qp.G;
  f.A = qp.A;
  f.refine_steps = refine_steps;

  const std::size_t n = qp.n, m = qp.m_eq, p = qp.p;
  if (method == Factorization::AugmentedLdlt) {
    std::vector<RowRole> roles(n + m + p, RowRole::Dual);
    std::fill_n(roles.begin(), n, RowRole::Primal);
    // s / z spans many orders of magnitude; without row scaling the pivot
    // threshold is set by the largest entry and regularization swamps Q.
    DenseMatrix<Real> k = assemble_augmented_matrix<Real>(qp, s, z);
    f.equilibration.assign(k.rows(), Real(1));
    for (std::size_t i = 0; i < k.rows(); ++i) {
      Real rowmax = 0;
      for (std::size_t j = 0; j < k.cols(); ++j) rowmax = std::max(rowmax, std::abs(k(i, j)));
      if (rowmax > Real(0) && std::isfinite(rowmax)) f.equilibration[i] = Real(1) / std::sqrt(rowmax);
    }
    for (std::size_t i = 0; i < k.rows(); ++i)
      for (std::size_t j = 0; j < k.cols(); ++j) k(i, j) *= f.equilibration[i] * f.equilibration[j];
    f.ldlt = linalg::factor_symmetric_indefinite<Real>(k, Real(0), roles);
    return f;
  }

  DenseMatrix<Real> h = qp.Q;
  for (std::size_t r = 0; r < p; ++r) {
    const Real w = z[r] / s[r];
    for (std::size_t i = 0; i < n; ++i) {
      const Real gi = w * qp.G(r, i);
      for (std::size_t j = 0; j < n; ++j) h(i, j) += gi * qp.G(r, j);
    }
  }
  f.chol_h = linalg::cholesky_nan_on_failure<Real>(h);
  f.h_inv_at = DenseMatrix<Real>(n, m);
  for (std::size_t r = 0; r < m; ++r) {
    const Vector<Real> col = linalg::cholesky_solve<Real>(f.chol_h, qp.A.row(r));
    for (std::size_t i = 0; i < n; ++i) f.h_inv_at(i, r) = col[i];
  }
  DenseMatrix<Real> schur(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Real acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += qp.A(i, k) * f.h_inv_at(k, j);
      schur(i, j) = acc;
    }
  f.chol_schur = linalg::cholesky_nan_on_failure<Real>(schur);
  return f;
}

template <typename Real>
StepDirection<Real> explicit_solve_kkt(const ExplicitKktFactor<Real>& f, const Residuals<Real>& r) {
  const std::size_t n = f.G.cols(), p = f.G.rows(), m = f.A.rows();
  if (r.r_t.size() != n || r.r_e.size() != m || r.r_i.size() != p || r.r_c.size() != p)
    throw Error(ErrorCode::DimensionMismatch, "explicit_solve_kkt: residual shapes do not match the factor");

  // r_i - r_c / z
  Vector<Real> ri_mod(p);
  for (std::size_t i = 0; i < p; ++i) ri_mod[i] = r.r_i[i] - r.r_c[i] / f.z_at[i];

  StepDirection<Real> d;
  if (f.method == Factorization::AugmentedLdlt) {
    Vector<Real> rhs(n + m + p);
    for (std::size_t i = 0; i < n; ++i) rhs[i] = -r.r_t[i];
    for (std::size_t i = 0; i < m; ++i) rhs[n + i] = -r.r_e[i];
    for (std::size_t i = 0; i < p; ++i) rhs[n + m + i] = -ri_mod[i];
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] *= f.equilibration[i];
    Vector<Real> w = linalg::solve_factored<Real>(*f.ldlt, rhs, f.refine_steps);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] *= f.equilibration[i];
    d.dx.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(n));
    d.dy.assign(w.begin() + static_cast<std::ptrdiff_t>(n), w.begin() + static_cast<std::ptrdiff_t>(n + m));
    d.dz.assign(w.begin() + static_cast<std::ptrdiff_t>(n + m), w.end());
  } else {
    // dz = D(z / s) (G dx + r_i - r_c / z); H dx + A^T dy = -r_t - G^T D(z / s)(r_i - r_c / z) = g.
    Vector<Real> scaled(p);
    for (std::size_t i = 0; i < p; ++i) scaled[i] = f.z_at[i] / f.s_at[i] * ri_mod[i];
    Vector<Real> g = linalg::matvec_transposed<Real>(f.G, scaled);
    for (std::size_t i = 0; i < n; ++i) g[i] = -r.r_t[i] - g[i];
    const Vector<Real> hg = linalg::cholesky_solve<Real>(f.chol_h, g);
    // (A H^{-1} A^T) dy = A H^{-1} g + r_e
    Vector<Real> ys = linalg::matvec<Real>(f.A, hg);
    for (std::size_t i = 0; i < m; ++i) ys[i] += r.r_e[i];
    d.dy = linalg::cholesky_solve<Real>(f.chol_schur, ys);
    const Vector<Real> corr = linalg::matvec<Real>(f.h_inv_at, d.dy);
    d.dx.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.dx[i] = hg[i] - corr[i];
    const Vector<Real> gdx = linalg::matvec<Real>(f.G, d.dx);
    d.dz.resize(p);
    for (std::size_t i = 0; i < p; ++i) d.dz[i] = f.z_at[i] / f.s_at[i] * (gdx[i] + ri_mod[i]);
  }
  const Vector<Real> gdx = linalg::matvec<Real>(f.G, d.dx);
  d.ds.resize(p);
  for (std::size_t i = 0; i < p; ++i) d.ds[i] = -r.r_i[i] - gdx[i];
  d.dv.assign(p, Real(0));
  d.dkappa = 0;
  if (!d.all_finite()) throw Error(ErrorCode::NonFiniteStep, "explicit_solve_kkt: non-finite step direction");
  return d;
}

namespace {

template <typename Real>
Real mean_complementarity(std::span<const Real> s, std::span<const Real> z) {
  return linalg::dot<Real>(s, z) / static_cast<Real>(s.size());
}

template <typename Real>
void take_step(Iterate<Real>& it, const StepDirection<Real>& d, Real alpha) {
  for (std::size_t i = 0; i < it.x.size(); ++i) it.x[i] += alpha * d.dx[i];
  for (std::size_t i = 0; i < it.y.size(); ++i) it.y[i] += alpha * d.dy[i];
  for (std::size_t i = 0; i < it.z.size(); ++i) it.z[i] += alpha * d.dz[i];
  for (std::size_t i = 0; i < it.s.size(); ++i) it.s[i] += alpha * d.ds[i];
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
ExplicitSolveResult<Real> explicit_solve_qp(const QpProblem<Real>& qp, const SolverConfig& cfg,
                                            Factorization method) {
  cfg.validate();
  ExplicitSolveResult<Real> out;
  SolveReport& report = out.report;
  Iterate<Real>& it = out.iterate;
  const int refine = cfg.effective_refine_steps();
  const Real tol = static_cast<Real>(cfg.tol);
  const Real tau = static_cast<Real>(cfg.tau_frac);
  const std::size_t p = qp.p;

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
      Residuals<Real> r = evaluate_residuals(qp, it, Paradigm::Explicit);
      const Real measure = r.inf_norm();
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
      IterationLog entry;
      entry.residual = report.residual;

      if (p == 0) {
        stage = NanStage::Corrector;
        const auto f = precompute_kkt_factors<Real>(qp, it.s, it.z, method, refine);
        ++report.factorizations;
        take_step(it, explicit_solve_kkt(f, r), Real(1));
        report.iterations = k + 1;
        entry.alpha = 1;
        report.log.push_back(entry);
        continue;
      }

      stage = NanStage::Scaling;
      Vector<Real> scaling(p);
      for (std::size_t i = 0; i < p; ++i) scaling[i] = it.z[i] / it.s[i];
      if (!report.scan<Real>(NanStage::Scaling, scaling, "z / s")) {
        report.status = Status::NumericalFailure;
        break;
      }

      // Affine predictor: target z * s = 0.
      stage = NanStage::Predictor;
      const auto f = precompute_kkt_factors<Real>(qp, it.s, it.z, method, refine);
      ++report.factorizations;
      const StepDirection<Real> aff = explicit_solve_kkt(f, r);
      const Real alpha_aff = implicit_ipm::linesearch<Real>(it.s, it.z, aff.ds, aff.dz, Real(1));
      if (!report.scan<Real>(NanStage::Predictor, alpha_aff, "alpha_aff")) {
        report.status = Status::NumericalFailure;
        break;
      }

      stage = NanStage::Centering;
      const Real mu = mean_complementarity<Real>(it.s, it.z);
      Vector<Real> s_aff(p), z_aff(p);
      for (std::size_t i = 0; i < p; ++i) {
        s_aff[i] = it.s[i] + alpha_aff * aff.ds[i];
        z_aff[i] = it.z[i] + alpha_aff * aff.dz[i];
      }
      const Real mu_aff = mean_complementarity<Real>(s_aff, z_aff);
      const Real ratio = mu_aff / mu;
      const Real sigma = ratio * ratio * ratio;
      if (!report.scan<Real>(NanStage::Centering, mu, "mu") ||
          !report.scan<Real>(NanStage::Centering, sigma, "sigma")) {
        report.status = Status::NumericalFailure;
        break;
      }
      entry.kappa = double(mu);

      stage = NanStage::Corrector;
      for (std::size_t i = 0; i < p; ++i) r.r_c[i] += aff.ds[i] * aff.dz[i] - sigma * mu;
      const StepDirection<Real> d = explicit_solve_kkt(f, r);

      stage = NanStage::LineSearch;
      const Real alpha = implicit_ipm::linesearch<Real>(it.s, it.z, d.ds, d.dz, tau);
      if (!report.scan<Real>(NanStage::LineSearch, alpha, "alpha")) {
        report.status = Status::NumericalFailure;
        break;
      }
      take_step(it, d, alpha);
      report.iterations = k + 1;
      entry.alpha = double(alpha);
      report.log.push_back(entry);
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) throw;
    record_failure(report, stage, e);
  }
  if (p > 0) it.update_manifold_coordinates();
  return out;
}

template <typename Real>
ExplicitRelaxResult<Real> explicit_relax_qp(const QpProblem<Real>& qp, const Iterate<Real>& solved,
                                            Real kappa_relax, const SolverConfig& cfg, Factorization method) {
  cfg.validate();
  retraction::check_kappa(kappa_relax);
  ExplicitRelaxResult<Real> out;
  out.iterate = solved;
  Iterate<Real>& it = out.iterate;
  SolveReport& report = out.report;
  const int refine = cfg.effective_refine_steps();
  const Real tol = static_cast<Real>(cfg.tol);
  const Real tau = static_cast<Real>(cfg.tau_frac);

  try {
    for (int k = 0;; ++k) {
      const Residuals<Real> r = evaluate_residuals(qp, it, Paradigm::Explicit, kappa_relax);
      // Complementarity relative to the target, the rest absolute; NaN wins.
      Real measure = linalg::norm_inf<Real>(r.r_c) / kappa_relax;
      for (const Real part : {linalg::norm_inf<Real>(r.r_t), linalg::norm_inf<Real>(r.r_e),
                              linalg::norm_inf<Real>(r.r_i)})
        if (std::isnan(part) || part > measure) measure = part;
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
      entry.kappa = double(mean_complementarity<Real>(it.s, it.z));
      const auto f = precompute_kkt_factors<Real>(qp, it.s, it.z, method, refine);
      ++report.factorizations;
      const StepDirection<Real> d = explicit_solve_kkt(f, r);
      const Real alpha = qp.p == 0 ? Real(1) : implicit_ipm::linesearch<Real>(it.s, it.z, d.ds, d.dz, tau);
      if (!report.scan<Real>(NanStage::Relaxation, alpha, "alpha")) {
        report.status = Status::NumericalFailure;
        break;
      }
      take_step(it, d, alpha);
      report.iterations = k + 1;
      entry.alpha = double(alpha);
      report.log.push_back(entry);
    }
    if (report.status != Status::NumericalFailure) {
      out.factor = precompute_kkt_factors<Real>(qp, it.s, it.z, method, refine);
      ++report.factorizations;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DimensionMismatch) throw;
    record_failure(report, NanStage::Relaxation, e);
  }
  if (qp.p > 0) it.update_manifold_coordinates();
  return out;
}

template <typename Real>
GradientBundle<Real> explicit_compute_gradients(const QpProblem<Real>& qp, const Iterate<Real>& relaxed,
                                                Real kappa_relax, std::span<const Real> dl_dx,
                                                const ExplicitKktFactor<Real>& f) {
  (void)kappa_relax;
  if (dl_dx.size() != qp.n) throw Error(ErrorCode::DimensionMismatch, "explicit_compute_gradients: dl_dx length");
  if (f.s_at.size() != qp.p || relaxed.x.size() != qp.n)
    throw Error(ErrorCode::DimensionMismatch, "explicit_compute_gradients: factor does not match the problem");
  Residuals<Real> r;
  r.r_t.assign(dl_dx.begin(), dl_dx.end());
  r.r_e.assign(qp.m_eq, Real(0));
  r.r_i.assign(qp.p, Real(0));
  r.r_c.assign(qp.p, Real(0));
  StepDirection<Real> d;
  try {
    d = explicit_solve_kkt(f, r);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NonFiniteStep)
      throw Error(ErrorCode::NonFiniteStep, "explicit_compute_gradients: non-finite differential");
    throw;
  }
  GradientBundle<Real> g = assemble_gradients<Real>(relaxed.x, relaxed.y, relaxed.z, d.dx, d.dy, d.dz);
  if (!g.all_finite()) throw Error(ErrorCode::NonFiniteStep, "explicit_compute_gradients: non-finite gradient");
  return g;
}

#define IQP_INSTANTIATE_EXPLICIT(Real)                                                                    \
  template DenseMatrix<Real> assemble_augmented_matrix<Real>(const QpProblem<Real>&, std::span<const Real>, \
                                                             std::span<const Real>);                      \
  template ExplicitKktFactor<Real> precompute_kkt_factors<Real>(const QpProblem<Real>&,                   \
                                                                std::span<const Real>,                    \
                                                                std::span<const Real>, Factorization, int); \
  template StepDirection<Real> explicit_solve_kkt<Real>(const ExplicitKktFactor<Real>&,                   \
                                                        const Residuals<Real>&);                          \
  template ExplicitSolveResult<Real> explicit_solve_qp<Real>(const QpProblem<Real>&, const SolverConfig&, \
                                                             Factorization);                              \
  template ExplicitRelaxResult<Real> explicit_relax_qp<Real>(const QpProblem<Real>&, const Iterate<Real>&, \
                                                             Real, const SolverConfig&, Factorization);   \
  template GradientBundle<Real> explicit_compute_gradients<Real>(const QpProblem<Real>&,                  \
                                                                 const Iterate<Real>&, Real,              \
                                                                 std::span<const Real>,                   \
                                                                 const ExplicitKktFactor<Real>&);

IQP_INSTANTIATE_EXPLICIT(float)
IQP_INSTANTIATE_EXPLICIT(double)

}  // namespace iqp::explicit_ipm
