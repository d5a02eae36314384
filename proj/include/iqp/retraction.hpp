#pragma once

// Softplus retraction b_k(w) = (w + sqrt(w^2 + 4k)) / 2 onto the manifold
// z * s = k, with z = b_k(v) and s = b_k(-v).

#include <span>

#include "iqp/linalg.hpp"

namespace iqp::retraction {

using linalg::Vector;

/// b_k(w), split on the sign of w so neither branch subtracts nearly equal
/// quantities.
template <typename Real>
Real softplus(Real w, Real kappa);

/// d/dw b_k(w), same branch split.
template <typename Real>
Real softplus_dw(Real w, Real kappa);

/// d/dk b_k(w) = 1 / sqrt(w^2 + 4k); one formula for both signs of w.
template <typename Real>
Real softplus_dk(Real w, Real kappa);

/// The single-branch textbook formula. Loses every digit for w << -sqrt(k)
/// and is kept only as a reference for the cancellation diagnostics.
template <typename Real>
Real softplus_naive(Real w, Real kappa);

template <typename Real>
struct Retracted {
  Vector<Real> z;
  Vector<Real> s;
};

template <typename Real>
struct RetractionEval {
  Vector<Real> b_plus;   ///< b_k(v)
  Vector<Real> b_minus;  ///< b_k(-v)
  Vector<Real> d_plus;   ///< b_k'(v)
  Vector<Real> d_minus;  ///< b_k'(-v)
  Vector<Real> c;        ///< d/dk b_k(v)
};

/// Throws InvalidKappa if kappa <= 0 or not finite.
template <typename Real>
void check_kappa(Real kappa);

template <typename Real>
Retracted<Real> retract(std::span<const Real> v, Real kappa);

template <typename Real>
RetractionEval<Real> retract_derivatives(std::span<const Real> v, Real kappa);

}  // namespace iqp::retraction
