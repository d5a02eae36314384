#pragma once

// Standard primal-dual interior-point method with explicit complementarity
// z * s = mu and Mehrotra predictor-corrector steps. Each step solves
//
//   [ Q   A^T   G^T        ] [dx]     [ r_t             ]
//   [ A   0     0          ] [dy] = - [ r_e             ]
//   [ G   0     -D(s / z)  ] [dz]     [ r_i - r_c / z   ]
//
// and recovers ds = -r_i - G dx. The scaling s / z is unbounded near the
// solution, which is what the single-precision ablation exercises.

#include <optional>
#include <span>
#include <string_view>

#include "iqp/implicit_ipm.hpp"
#include "iqp/linalg.hpp"
#include "iqp/qp_model.hpp"

namespace iqp::explicit_ipm {

using implicit_ipm::StepDirection;

enum class Factorization {
  /// Eliminate dz, Cholesky on Q + G^T D(z / s) G and on the equality Schur
  /// complement. No shifts, so loss of definiteness surfaces as NaN. This is
  /// how the array-framework baseline solves the system.
  CondensedCholesky,
  /// Bunch-Kaufman LDL^T on the full three-block matrix.
  AugmentedLdlt,
};

const char* to_string(Factorization f) noexcept;
std::optional<Factorization> parse_factorization(std::string_view s);

template <typename Real>
struct ExplicitKktFactor {
  Factorization method = Factorization::CondensedCholesky;
  Vector<Real> s_at;
  Vector<Real> z_at;
  DenseMatrix<Real> G;
  DenseMatrix<Real> A;
  int refine_steps = 0;

  // CondensedCholesky
  DenseMatrix<Real> chol_h;      ///< L with L L^T = Q + G^T D(z / s) G
  DenseMatrix<Real> h_inv_at;    ///< H^{-1} A^T, n x m_eq
  DenseMatrix<Real> chol_schur;  ///< L with L L^T = A H^{-1} A^T

  // AugmentedLdlt, factored as E M E with E = diag(equilibration)
  std::optional<linalg::SymIndefFactor<Real>> ldlt;
  Vector<Real> equilibration;
};

/// The three-block matrix, ordered (x, y, z).
template <typename Real>
DenseMatrix<Real> assemble_augmented_matrix(const QpProblem<Real>& qp, std::span<const Real> s,
                                            std::span<const Real> z);

/// Factors the system at (s, z). CondensedCholesky never throws on loss of
/// definiteness; the NaN shows up in the solve. AugmentedLdlt throws
/// SingularMatrix.
template <typename Real>
ExplicitKktFactor<Real> precompute_kkt_factors(const QpProblem<Real>& qp, std::span<const Real> s,
                                               std::span<const Real> z, Factorization method,
                                               int refine_steps = 0);

/// Solves for (dx, dy, dz) with r_c taken from r, then ds = -r_i - G dx.
/// dv and dkappa are zero. Throws NonFiniteStep.
template <typename Real>
StepDirection<Real> explicit_solve_kkt(const ExplicitKktFactor<Real>& f, const Residuals<Real>& r);

template <typename Real>
struct ExplicitSolveResult {
  Iterate<Real> iterate;
  SolveReport report;
};

template <typename Real>
ExplicitSolveResult<Real> explicit_solve_qp(const QpProblem<Real>& qp, const SolverConfig& cfg,
                                            Factorization method = Factorization::CondensedCholesky);

template <typename Real>
struct ExplicitRelaxResult {
  Iterate<Real> iterate;
  std::optional<ExplicitKktFactor<Real>> factor;  ///< at the returned iterate, unless relaxation failed
  SolveReport report;
};

/// Centering steps toward z * s = kappa_relax. Converged when the primal and
/// dual residuals and max_i |z_i s_i - kappa_relax| / kappa_relax are below cfg.tol.
template <typename Real>
ExplicitRelaxResult<Real> explicit_relax_qp(const QpProblem<Real>& qp, const Iterate<Real>& solved,
                                            Real kappa_relax, const SolverConfig& cfg,
                                            Factorization method = Factorization::CondensedCholesky);

/// Vector-Jacobian product at the relaxed point from the same linear system.
/// Throws NonFiniteStep.
template <typename Real>
GradientBundle<Real> explicit_compute_gradients(const QpProblem<Real>& qp, const Iterate<Real>& relaxed,
                                                Real kappa_relax, std::span<const Real> dl_dx,
                                                const ExplicitKktFactor<Real>& f);

}  // namespace iqp::explicit_ipm
