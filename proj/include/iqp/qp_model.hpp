#pragma once

// Problem data, iterates, solver configuration, residuals and the reporting
// types shared by the implicit and explicit interior-point solvers.
//
//   minimize   1/2 x^T Q x + q^T x
//   subject to A x = b,  G x + s = h,  s >= 0

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "iqp/linalg.hpp"

namespace iqp {

using linalg::DenseMatrix;
using linalg::Vector;

enum class Precision { F32, F64 };
enum class Paradigm { Implicit, Explicit };
enum class Status { Converged, MaxIter, NumericalFailure };

/// Solver stage in which a non-finite intermediate was first observed.
enum class NanStage { None, Scaling, Predictor, Centering, Corrector, LineSearch, Relaxation, Backward };

const char* to_string(Precision p) noexcept;
const char* to_string(Paradigm p) noexcept;
const char* to_string(Status s) noexcept;
const char* to_string(NanStage s) noexcept;
std::optional<Precision> parse_precision(std::string_view s);
std::optional<Paradigm> parse_paradigm(std::string_view s);
std::optional<Status> parse_status(std::string_view s);
std::optional<NanStage> parse_nan_stage(std::string_view s);

template <typename Real>
struct QpProblem {
  std::size_t n = 0;
  std::size_t m_eq = 0;
  std::size_t p = 0;
  DenseMatrix<Real> Q;
  Vector<Real> q;
  DenseMatrix<Real> A;
  Vector<Real> b;
  DenseMatrix<Real> G;
  Vector<Real> h;

  /// Shapes agree with (n, m_eq, p) and Q is symmetric. Throws DimensionMismatch
  /// or InvalidArgument.
  void validate() const;

  /// Q + 1e-8 ||Q|| I admits a Cholesky factorization (validation mode only).
  bool is_psd() const;

  template <typename Other>
  QpProblem<Other> cast() const {
    return {n,
            m_eq,
            p,
            Q.template cast<Other>(),
            linalg::convert<Other>(q),
            A.template cast<Other>(),
            linalg::convert<Other>(b),
            G.template cast<Other>(),
            linalg::convert<Other>(h)};
  }
};

/// Primal-dual point plus manifold coordinates v = z - s and kappa.
template <typename Real>
struct Iterate {
  Vector<Real> x;
  Vector<Real> y;
  Vector<Real> z;
  Vector<Real> s;
  Vector<Real> v;
  Real kappa = Real(0);

  /// v <- z - s, kappa <- s^T z / p (kappa = 0 when p = 0).
  void update_manifold_coordinates();

  template <typename Other>
  Iterate<Other> cast() const {
    return {linalg::convert<Other>(x), linalg::convert<Other>(y), linalg::convert<Other>(z),
            linalg::convert<Other>(s), linalg::convert<Other>(v), static_cast<Other>(kappa)};
  }
};

struct SolverConfig {
  double tol = 1e-8;
  int max_iter = 100;
  double sigma = 0.1;
  double kappa_relax = 1e-4;
  double tau_frac = 0.99;
  int refine_steps = -1;  ///< -1: one round in f32, none in f64
  Precision precision = Precision::F64;

  static SolverConfig defaults(Precision precision);

  /// Throws InvalidArgument on out-of-range fields.
  void validate() const;

  int effective_refine_steps() const;
};

template <typename Real>
struct Residuals {
  Vector<Real> r_t;  ///< Q x + q + G^T z + A^T y
  Vector<Real> r_e;  ///< A x - b
  Vector<Real> r_i;  ///< G x + s - h
  Vector<Real> r_z;  ///< z - b_k(v)        (implicit)
  Vector<Real> r_s;  ///< s - b_k(-v)       (implicit)
  Vector<Real> r_c;  ///< z * s - k_perturb (explicit)
  Real r_kappa = Real(0);
  bool has_kappa = false;

  /// Max over every populated field.
  Real inf_norm() const;
};

template <typename Real>
Residuals<Real> evaluate_residuals(const QpProblem<Real>& qp, const Iterate<Real>& it, Paradigm paradigm,
                                   Real kappa_perturb = Real(0));

/// Starting point from the equality-constrained KKT system with s = -z,
/// shifted into the positive orthant.
template <typename Real>
Iterate<Real> initialize(const QpProblem<Real>& qp, int refine_steps = 0);

struct IterationLog {
  double residual = 0;        ///< convergence measure before the step
  double kappa = 0;           ///< kappa (implicit) or mu (explicit) before the step
  double alpha = 0;
  double manifold_error = 0;  ///< max_i |z_i s_i - kappa| / kappa after the step (implicit)
  double bblock_min = 0;      ///< range of the -B_k(-v) block that was factored (implicit)
  double bblock_max = 0;
  bool refactored = true;
};

struct SolveReport {
  Status status = Status::MaxIter;
  int iterations = 0;
  double residual = 0;
  NanStage nan_stage = NanStage::None;
  std::string nan_detail;
  int factorizations = 0;
  std::vector<IterationLog> log;

  /// Records the first non-finite entry of `values`; returns false if one was found.
  template <typename Real>
  bool scan(NanStage stage, std::span<const Real> values, std::string_view what);
  template <typename Real>
  bool scan(NanStage stage, Real value, std::string_view what) {
    return scan<Real>(stage, std::span<const Real>(&value, 1), what);
  }
};

/// Loss gradients with respect to every field of the problem data.
template <typename Real>
struct GradientBundle {
  DenseMatrix<Real> dQ;
  Vector<Real> dq;
  DenseMatrix<Real> dA;
  Vector<Real> db;
  DenseMatrix<Real> dG;
  Vector<Real> dh;

  bool all_finite() const;
};

/// Assembles the bundle from the differentials (dx, dy, dz) at the point (x, y, z).
template <typename Real>
GradientBundle<Real> assemble_gradients(std::span<const Real> x, std::span<const Real> y,
                                        std::span<const Real> z, std::span<const Real> dx,
                                        std::span<const Real> dy, std::span<const Real> dz);

}  // namespace iqp
