#pragma once

// Primal-dual interior-point method with implicit complementarity. The
// iterate lives on z * s = kappa through the softplus retraction, and each
// Newton step solves the partially condensed system
//
//   [ Q - G^T G   G^T          A^T ] [dx]     [ r_t - G^T (r_i + r_z - r_s) ]
//   [ G           -B_k(-v)     0   ] [dv] = - [ r_i - r_s - c r_kappa       ]
//   [ A           0            0   ] [dy]     [ r_e                         ]
//
// whose only iterate-dependent block is diagonal with entries in (0, 1].

#include <optional>
#include <span>

#include "iqp/linalg.hpp"
#include "iqp/qp_model.hpp"
#include "iqp/retraction.hpp"

namespace iqp::implicit_ipm {

/// Factorization of the condensed matrix at (v_at, kappa_at).
template <typename Real>
struct KktFactor {
  linalg::SymIndefFactor<Real> factor;
  Vector<Real> v_at;
  Real kappa_at = Real(0);
  retraction::RetractionEval<Real> eval;
  DenseMatrix<Real> G;
  DenseMatrix<Real> A;
  int refine_steps = 0;
};

template <typename Real>
struct StepDirection {
  Vector<Real> dx;
  Vector<Real> dy;
  Vector<Real> dz;
  Vector<Real> ds;
  Vector<Real> dv;
  Real dkappa = Real(0);

  bool all_finite() const;
};

/// The condensed matrix, ordered (x, v, y).
template <typename Real>
DenseMatrix<Real> assemble_condensed_matrix(const QpProblem<Real>& qp, std::span<const Real> d_minus);

template <typename Real>
KktFactor<Real> precompute_kkt_factors(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa,
                                       int refine_steps = 0);

/// Solves the condensed system and back-substitutes dkappa = -r_kappa,
/// dz = B_k(v) dv + c dkappa - r_z, ds = -B_k(-v) dv + c dkappa - r_s.
/// r_kappa is taken as kappa_at - kappa_target. Throws NonFiniteStep.
template <typename Real>
StepDirection<Real> solve_kkt(const KktFactor<Real>& f, const Residuals<Real>& r, Real kappa_target);

/// Largest step in (0, 1] keeping s and z inside (1 - tau) of the boundary.
template <typename Real>
Real linesearch(std::span<const Real> s, std::span<const Real> z, std::span<const Real> ds,
                std::span<const Real> dz, Real tau_frac);

template <typename Real>
struct SolveResult {
  Iterate<Real> iterate;
  SolveReport report;
  std::optional<KktFactor<Real>> factor;  ///< last factorization, if any
};

/// Constant-sigma implicit interior-point solve. Convergence requires every
/// residual and max_i z_i s_i below cfg.tol.
template <typename Real>
SolveResult<Real> solve_qp(const QpProblem<Real>& qp, const SolverConfig& cfg);

template <typename Real>
struct RelaxResult {
  Iterate<Real> iterate;
  KktFactor<Real> factor;  ///< evaluated at the returned iterate
  SolveReport report;
};

/// Walks a converged iterate back along the central path to kappa_relax.
/// `cached` is reused for the first step when (v, kappa) drifted less than 10%.
template <typename Real>
RelaxResult<Real> relax_qp(const QpProblem<Real>& qp, const Iterate<Real>& solved, Real kappa_relax,
                           const KktFactor<Real>* cached, const SolverConfig& cfg);

/// Vector-Jacobian product of x*(theta) at the relaxed point. Throws
/// NonFiniteStep on a non-finite differential.
template <typename Real>
GradientBundle<Real> compute_qp_gradients(const QpProblem<Real>& qp, const Iterate<Real>& relaxed,
                                          Real kappa_relax, std::span<const Real> dl_dx,
                                          const KktFactor<Real>& f);

// ---------------------------------------------------------------------------
// Diagnostics. Not used by the solver.

/// The six-block uncondensed Newton matrix, ordered (x, y, z, s, v, kappa).
template <typename Real>
DenseMatrix<Real> assemble_uncondensed_matrix(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa);

/// The other partially condensed form, [[Q, G^T B_k(v), A^T], [G, -B_k(-v), 0], [A, 0, 0]],
/// with the v rows scaled by B_k(v) so it factors like the production system.
/// Diagnostic only: dv reaches stationarity through B_k(v), which vanishes on
/// inactive constraints, and single precision loses it.
template <typename Real>
StepDirection<Real> solve_kkt_first_condensed(const QpProblem<Real>& qp, std::span<const Real> v, Real kappa,
                                              const Residuals<Real>& r, Real kappa_target);

}  // namespace iqp::implicit_ipm
