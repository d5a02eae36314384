#include "iqp/retraction.hpp"

#include <cmath>
#include <string>

namespace iqp::retraction {

namespace {

// sqrt(w^2 + 4k) without overflowing w^2.
template <typename Real>
Real root(Real w, Real kappa) {
  return std::hypot(w, Real(2) * std::sqrt(kappa));
}

}  // namespace

template <typename Real>
void check_kappa(Real kappa) {
  if (!(kappa > Real(0)) || !std::isfinite(kappa))
    throw Error(ErrorCode::InvalidKappa, "retraction: kappa must be positive and finite, got " +
                                             std::to_string(static_cast<double>(kappa)));
}

template <typename Real>
Real softplus(Real w, Real kappa) {
  const Real r = root(w, kappa);
  if (w >= Real(0)) return (w + r) / Real(2);
  return Real(2) * kappa / (r - w);
}

template <typename Real>
Real softplus_dw(Real w, Real kappa) {
  const Real r = root(w, kappa);
  if (w >= Real(0)) return (Real(1) + w / r) / Real(2);
  // 2k / (w^2 + 4k - w r) with w^2 + 4k = r^2
  return Real(2) * kappa / (r * (r - w));
}

template <typename Real>
Real softplus_dk(Real w, Real kappa) {
  return Real(1) / root(w, kappa);
}

template <typename Real>
Real softplus_naive(Real w, Real kappa) {
  return (w + std::sqrt(w * w + Real(4) * kappa)) / Real(2);
}

template <typename Real>
Retracted<Real> retract(std::span<const Real> v, Real kappa) {
  check_kappa(kappa);
  Retracted<Real> out{Vector<Real>(v.size()), Vector<Real>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    out.z[i] = softplus(v[i], kappa);
    out.s[i] = softplus(-v[i], kappa);
  }
  return out;
}

template <typename Real>
RetractionEval<Real> retract_derivatives(std::span<const Real> v, Real kappa) {
  check_kappa(kappa);
  const std::size_t p = v.size();
  RetractionEval<Real> e{Vector<Real>(p), Vector<Real>(p), Vector<Real>(p), Vector<Real>(p),
                         Vector<Real>(p)};
  for (std::size_t i = 0; i < p; ++i) {
    e.b_plus[i] = softplus(v[i], kappa);
    e.b_minus[i] = softplus(-v[i], kappa);
    e.d_plus[i] = softplus_dw(v[i], kappa);
    e.d_minus[i] = softplus_dw(-v[i], kappa);
    e.c[i] = softplus_dk(v[i], kappa);
  }
  return e;
}

#define IQP_INSTANTIATE_RETRACTION(Real)                                                  \
  template void check_kappa<Real>(Real);                                                  \
  template Real softplus<Real>(Real, Real);                                               \
  template Real softplus_dw<Real>(Real, Real);                                            \
  template Real softplus_dk<Real>(Real, Real);                                            \
  template Real softplus_naive<Real>(Real, Real);                                         \
  template Retracted<Real> retract<Real>(std::span<const Real>, Real);                    \
  template RetractionEval<Real> retract_derivatives<Real>(std::span<const Real>, Real);

IQP_INSTANTIATE_RETRACTION(float)
IQP_INSTANTIATE_RETRACTION(double)

}  // namespace iqp::retraction
