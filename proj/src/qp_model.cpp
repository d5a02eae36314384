#include "iqp/qp_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iqp/retraction.hpp"

namespace iqp {

const char* to_string(Precision p) noexcept { return p == Precision::F32 ? "f32" : "f64"; }
const char* to_string(Paradigm p) noexcept { return p == Paradigm::Implicit ? "implicit" : "explicit"; }

const char* to_string(Status s) noexcept {
  switch (s) {
    case Status::Converged: return "Converged";
    case Status::MaxIter: return "MaxIter";
    case Status::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

const char* to_string(NanStage s) noexcept {
  switch (s) {
    case NanStage::None: return "none";
    case NanStage::Scaling: return "scaling";
    case NanStage::Predictor: return "predictor";
    case NanStage::Centering: return "centering";
    case NanStage::Corrector: return "corrector";
    case NanStage::LineSearch: return "linesearch";
    case NanStage::Relaxation: return "relaxation";
    case NanStage::Backward: return "backward";
  }
  return "none";
}

std::optional<Precision> parse_precision(std::string_view s) {
  if (s == "f32" || s == "binary32") return Precision::F32;
  if (s == "f64" || s == "binary64") return Precision::F64;
  return std::nullopt;
}

std::optional<Paradigm> parse_paradigm(std::string_view s) {
  if (s == "implicit") return Paradigm::Implicit;
  if (s == "explicit") return Paradigm::Explicit;
  return std::nullopt;
}

std::optional<Status> parse_status(std::string_view s) {
  for (Status st : {Status::Converged, Status::MaxIter, Status::NumericalFailure})
    if (s == to_string(st)) return st;
  return std::nullopt;
}

std::optional<NanStage> parse_nan_stage(std::string_view s) {
  for (NanStage st : {NanStage::None, NanStage::Scaling, NanStage::Predictor, NanStage::Centering,
                      NanStage::Corrector, NanStage::LineSearch, NanStage::Relaxation, NanStage::Backward})
    if (s == to_string(st)) return st;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

namespace {

void expect(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

void expect_shape(const auto& m, std::size_t r, std::size_t c, const char* name) {
  expect(m.rows() == r && m.cols() == c,
         std::string(name) + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
             ", expected " + std::to_string(r) + "x" + std::to_string(c));
}

void expect_len(const auto& v, std::size_t n, const char* name) {
  expect(v.size() == n, std::string(name) + " has length " + std::to_string(v.size()) + ", expected " +
                            std::to_string(n));
}

}  // namespace

template <typename Real>
void QpProblem<Real>::validate() const {
  expect_shape(Q, n, n, "Q");
  expect_len(q, n, "q");
  expect_shape(A, m_eq, n, "A");
  expect_len(b, m_eq, "b");
  expect_shape(G, p, n, "G");
  expect_len(h, p, "h");
  if (!linalg::is_symmetric(Q)) throw Error(ErrorCode::InvalidArgument, "Q is not symmetric");
}

template <typename Real>
bool QpProblem<Real>::is_psd() const {
  const DenseMatrix<double> qd = Q.template cast<double>();
  DenseMatrix<double> shifted = qd;
  const double shift = 1e-8 * std::max(linalg::frobenius_norm(qd), 1e-300);
  for (std::size_t i = 0; i < n; ++i) shifted(i, i) += shift;
  return linalg::all_finite<double>(linalg::cholesky_nan_on_failure(shifted).data());
}

template <typename Real>
void Iterate<Real>::update_manifold_coordinates() {
  v.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) v[i] = z[i] - s[i];
  kappa = z.empty() ? Real(0) : linalg::dot<Real>(s, z) / static_cast<Real>(z.size());
}

SolverConfig SolverConfig::defaults(Precision precision) {
  SolverConfig cfg;
  cfg.precision = precision;
  cfg.tol = precision == Precision::F32 ? 1e-4 : 1e-8;
  return cfg;
}

void SolverConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(tol > 0)) fail("tol must be positive");
  if (max_iter < 0) fail("max_iter must be non-negative");
  if (!(sigma > 0 && sigma < 1)) fail("sigma must lie in (0, 1)");
  if (!(kappa_relax > 0)) fail("kappa_relax must be positive");
  if (!(tau_frac > 0 && tau_frac <= 1)) fail("tau_frac must lie in (0, 1]");
}

int SolverConfig::effective_refine_steps() const {
  if (refine_steps >= 0) return refine_steps;
  return precision == Precision::F32 ? 1 : 0;
}

template <typename Real>
Real Residuals<Real>::inf_norm() const {
  Real out = 0;
  for (const Vector<Real>* r : {&r_t, &r_e, &r_i, &r_z, &r_s, &r_c}) {
    const Real m = linalg::norm_inf<Real>(*r);
    if (std::isnan(m)) return m;
    out = std::max(out, m);
  }
  if (has_kappa) {
    if (std::isnan(r_kappa)) return r_kappa;
    out = std::max(out, std::abs(r_kappa));
  }
  return out;
}

template <typename Real>
Residuals<Real> evaluate_residuals(const QpProblem<Real>& qp, const Iterate<Real>& it, Paradigm paradigm,
                                   Real kappa_perturb) {
  expect_len(it.x, qp.n, "x");
  expect_len(it.y, qp.m_eq, "y");
  expect_len(it.z, qp.p, "z");
  expect_len(it.s, qp.p, "s");

  Residuals<Real> r;
  r.r_t = linalg::matvec<Real>(qp.Q, it.x);
  const Vector<Real> gz = linalg::matvec_transposed<Real>(qp.G, it.z);
  const Vector<Real> ay = linalg::matvec_transposed<Real>(qp.A, it.y);
  for (std::size_t i = 0; i < qp.n; ++i) r.r_t[i] += qp.q[i] + gz[i] + ay[i];

  r.r_e = linalg::matvec<Real>(qp.A, it.x);
  for (std::size_t i = 0; i < qp.m_eq; ++i) r.r_e[i] -= qp.b[i];

  r.r_i = linalg::matvec<Real>(qp.G, it.x);
  for (std::size_t i = 0; i < qp.p; ++i) r.r_i[i] += it.s[i] - qp.h[i];

  if (paradigm == Paradigm::Implicit) {
    if (qp.p > 0) {
      expect_len(it.v, qp.p, "v");
      r.r_z.resize(qp.p);
      r.r_s.resize(qp.p);
      for (std::size_t i = 0; i < qp.p; ++i) {
        r.r_z[i] = it.z[i] - retraction::softplus(it.v[i], it.kappa);
        r.r_s[i] = it.s[i] - retraction::softplus(-it.v[i], it.kappa);
      }
    }
  } else {
    r.r_c.resize(qp.p);
    for (std::size_t i = 0; i < qp.p; ++i) r.r_c[i] = it.z[i] * it.s[i] - kappa_perturb;
  }
  return r;
}

template <typename Real>
Iterate<Real> initialize(const QpProblem<Real>& qp, int refine_steps) {
  qp.validate();
  const std::size_t n = qp.n, m = qp.m_eq, p = qp.p, dim = n + m + p;

  // [[Q, A^T, G^T], [A, 0, 0], [G, 0, -I]] (x, y, z) = (-q, b, h)
  DenseMatrix<Real> kkt(dim, dim);
  std::vector<linalg::RowRole> roles(dim, linalg::RowRole::Dual);
  for (std::size_t i = 0; i < n; ++i) {
    roles[i] = linalg::RowRole::Primal;
    for (std::size_t j = 0; j < n; ++j) kkt(i, j) = qp.Q(i, j);
  }
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t j = 0; j < n; ++j) kkt(n + r, j) = kkt(j, n + r) = qp.A(r, j);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t j = 0; j < n; ++j) kkt(n + m + r, j) = kkt(j, n + m + r) = qp.G(r, j);
    kkt(n + m + r, n + m + r) = Real(-1);
  }
  Vector<Real> rhs(dim);
  for (std::size_t i = 0; i < n; ++i) rhs[i] = -qp.q[i];
  for (std::size_t r = 0; r < m; ++r) rhs[n + r] = qp.b[r];
  for (std::size_t r = 0; r < p; ++r) rhs[n + m + r] = qp.h[r];

  const auto f = linalg::factor_symmetric_indefinite<Real>(kkt, Real(0), roles);
  const Vector<Real> sol = linalg::solve_factored<Real>(f, rhs, refine_steps);

  Iterate<Real> it;
  it.x.assign(sol.begin(), sol.begin() + static_cast<std::ptrdiff_t>(n));
  it.y.assign(sol.begin() + static_cast<std::ptrdiff_t>(n), sol.begin() + static_cast<std::ptrdiff_t>(n + m));
  const Vector<Real> zhat(sol.begin() + static_cast<std::ptrdiff_t>(n + m), sol.end());

  auto shift_into_orthant = [](Vector<Real> w) {
    if (w.empty()) return w;
    const Real alpha = -*std::min_element(w.begin(), w.end());
    if (alpha >= Real(0))
      for (Real& wi : w) wi += Real(1) + alpha;
    return w;
  };
  Vector<Real> stilde(p);
  for (std::size_t i = 0; i < p; ++i) stilde[i] = -zhat[i];
  it.s = shift_into_orthant(std::move(stilde));
  it.z = shift_into_orthant(zhat);
  it.update_manifold_coordinates();
  if (!linalg::all_finite<Real>(it.x) || !linalg::all_finite<Real>(it.y))
    throw Error(ErrorCode::SingularMatrix, "initialize: non-finite starting point");
  return it;
}

template <typename Real>
bool SolveReport::scan(NanStage stage, std::span<const Real> values, std::string_view what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      if (nan_stage == NanStage::None) {
        nan_stage = stage;
        nan_detail = std::string(what) + "[" + std::to_string(i) + "] is non-finite at iteration " +
                     std::to_string(iterations);
      }
      return false;
    }
  }
  return true;
}

template <typename Real>
bool GradientBundle<Real>::all_finite() const {
  using linalg::all_finite;
  return all_finite<Real>(dQ.data()) && all_finite<Real>(dq) && all_finite<Real>(dA.data()) &&
         all_finite<Real>(db) && all_finite<Real>(dG.data()) && all_finite<Real>(dh);
}

template <typename Real>
GradientBundle<Real> assemble_gradients(std::span<const Real> x, std::span<const Real> y,
                                        std::span<const Real> z, std::span<const Real> dx,
                                        std::span<const Real> dy, std::span<const Real> dz) {
  const std::size_t n = x.size(), m = y.size(), p = z.size();
  GradientBundle<Real> g;
  g.dQ = DenseMatrix<Real>(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g.dQ(i, j) = (dx[i] * x[j] + x[i] * dx[j]) / Real(2);
  g.dq.assign(dx.begin(), dx.end());
  g.dA = DenseMatrix<Real>(m, n);
  g.db.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    g.db[r] = -dy[r];
    for (std::size_t j = 0; j < n; ++j) g.dA(r, j) = dy[r] * x[j] + y[r] * dx[j];
  }
  g.dG = DenseMatrix<Real>(p, n);
  g.dh.resize(p);
  for (std::size_t r = 0; r < p; ++r) {
    g.dh[r] = -dz[r];
    for (std::size_t j = 0; j < n; ++j) g.dG(r, j) = dz[r] * x[j] + z[r] * dx[j];
  }
  return g;
}

#define IQP_INSTANTIATE_MODEL(Real)                                                                   \
  template struct QpProblem<Real>;                                                                    \
  template struct Iterate<Real>;                                                                      \
  template struct Residuals<Real>;                                                                    \
  template struct GradientBundle<Real>;                                                               \
  template Residuals<Real> evaluate_residuals<Real>(const QpProblem<Real>&, const Iterate<Real>&,     \
                                                    Paradigm, Real);                                  \
  template Iterate<Real> initialize<Real>(const QpProblem<Real>&, int);                               \
  template bool SolveReport::scan<Real>(NanStage, std::span<const Real>, std::string_view);           \
  template GradientBundle<Real> assemble_gradients<Real>(std::span<const Real>, std::span<const Real>, \
                                                         std::span<const Real>, std::span<const Real>, \
                                                         std::span<const Real>, std::span<const Real>);

IQP_INSTANTIATE_MODEL(float)
IQP_INSTANTIATE_MODEL(double)

}  // namespace iqp
