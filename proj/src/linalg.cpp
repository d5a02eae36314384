#include "iqp/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>

namespace iqp::linalg {

namespace {

std::string shape(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

}  // namespace

template <typename Real>
DenseMatrix<Real>::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_,
          "matrix data length " + std::to_string(data_.size()) + " does not match " +
              shape(rows_, cols_));
}

template <typename Real>
DenseMatrix<Real>::DenseMatrix(std::initializer_list<std::initializer_list<Real>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    require(r.size() == cols_, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

template <typename Real>
DenseMatrix<Real> DenseMatrix<Real>::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
  return m;
}

template <typename Real>
Real DenseMatrix<Real>::max_abs() const {
  Real out = 0;
  for (Real v : data_) out = std::max(out, std::abs(v));
  return out;
}

template <typename Real>
Real DenseMatrix<Real>::max_abs_diagonal() const {
  Real out = 0;
  for (std::size_t i = 0; i < std::min(rows_, cols_); ++i) out = std::max(out, std::abs((*this)(i, i)));
  return out;
}

template <typename Real>
Vector<Real> matvec(const DenseMatrix<Real>& a, std::span<const Real> x) {
  require(a.cols() == x.size(), "matvec: " + shape(a.rows(), a.cols()) + " times vector of length " +
                                    std::to_string(x.size()));
  Vector<Real> y(a.rows(), Real(0));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    Real acc = 0;
    for (std::size_t j = 0; j < r.size(); ++j) acc += r[j] * x[j];
    y[i] = acc;
  }
  return y;
}

template <typename Real>
Vector<Real> matvec_transposed(const DenseMatrix<Real>& a, std::span<const Real> x) {
  require(a.rows() == x.size(), "matvec_transposed: " + shape(a.rows(), a.cols()) +
                                    "^T times vector of length " + std::to_string(x.size()));
  Vector<Real> y(a.cols(), Real(0));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * x[i];
  }
  return y;
}

template <typename Real>
DenseMatrix<Real> matmul(const DenseMatrix<Real>& a, const DenseMatrix<Real>& b) {
  require(a.cols() == b.rows(), "matmul: " + shape(a.rows(), a.cols()) + " times " +
                                    shape(b.rows(), b.cols()));
  DenseMatrix<Real> c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = a(i, k);
      if (aik == Real(0)) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

template <typename Real>
DenseMatrix<Real> transpose(const DenseMatrix<Real>& a) {
  DenseMatrix<Real> t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b) {
  require(a.size() == b.size(), "dot: lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()));
  Real acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <typename Real>
Real norm_inf(std::span<const Real> a) {
  Real out = 0;
  for (Real v : a) {
    if (std::isnan(v)) return v;
    out = std::max(out, std::abs(v));
  }
  return out;
}

template <typename Real>
Real norm2(std::span<const Real> a) {
  Real acc = 0;
  for (Real v : a) acc += v * v;
  return std::sqrt(acc);
}

template <typename Real>
Real frobenius_norm(const DenseMatrix<Real>& a) {
  return norm2<Real>(a.data());
}

template <typename Real>
bool all_finite(std::span<const Real> a) {
  return std::all_of(a.begin(), a.end(), [](Real v) { return std::isfinite(v); });
}

template <typename Real>
bool is_symmetric(const DenseMatrix<Real>& m) {
  if (m.rows() != m.cols()) return false;
  const Real tol = Real(8) * std::numeric_limits<Real>::epsilon() * m.max_abs();
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(m(i, j) - m(j, i)) > tol) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Bunch-Kaufman LDL^T

template <typename Real>
std::size_t SymIndefFactor<Real>::two_by_two_count() const {
  return static_cast<std::size_t>(std::count(block.begin(), block.end(), std::uint8_t{2}));
}

template <typename Real>
DenseMatrix<Real> SymIndefFactor<Real>::reconstruct() const {
  const std::size_t n = dim();
  DenseMatrix<Real> ld(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (block[k] == 0) continue;
      if (block[k] == 1) {
        ld(i, k) = lower(i, k) * d_diag[k];
      } else {
        const Real a = d_diag[k], b = d_sub[k], c = d_diag[k + 1];
        ld(i, k) = lower(i, k) * a + lower(i, k + 1) * b;
        ld(i, k + 1) = lower(i, k) * b + lower(i, k + 1) * c;
      }
    }
  }
  DenseMatrix<Real> out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += ld(i, k) * lower(j, k);
      out(perm[i], perm[j]) = acc;
    }
  }
  return out;
}

template <typename Real>
Real pivot_threshold(const DenseMatrix<Real>& m) {
  Real scale = m.max_abs_diagonal();
  if (scale == Real(0)) scale = m.max_abs();
  return std::sqrt(std::numeric_limits<Real>::epsilon()) * scale;
}

namespace {

enum class PivotOutcome { Ok, Tiny, Zero };

void symmetric_swap(auto& w, std::size_t a, std::size_t b) {
  const std::size_t n = w.rows();
  for (std::size_t j = 0; j < n; ++j) std::swap(w(a, j), w(b, j));
  for (std::size_t i = 0; i < n; ++i) std::swap(w(i, a), w(i, b));
}

// tiny > 0: report Tiny when a whole pivot column collapses below it.
// tiny == 0: only exact zeros or non-finite pivots abort.
template <typename Real>
PivotOutcome bunch_kaufman(DenseMatrix<Real> w, Real tiny, SymIndefFactor<Real>& f) {
  const std::size_t n = w.rows();
  const Real alpha = (Real(1) + std::sqrt(Real(17))) / Real(8);

  f.perm.resize(n);
  std::iota(f.perm.begin(), f.perm.end(), std::size_t{0});
  f.lower = DenseMatrix<Real>::identity(n);
  f.d_diag.assign(n, Real(0));
  f.d_sub.assign(n, Real(0));
  f.block.assign(n, 0);

  std::size_t k = 0;
  while (k < n) {
    const Real absakk = std::abs(w(k, k));
    std::size_t imax = k;
    Real colmax = 0;
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(w(i, k)) > colmax) {
        colmax = std::abs(w(i, k));
        imax = i;
      }
    }
    if (!std::isfinite(absakk) || !std::isfinite(colmax)) return PivotOutcome::Zero;
    if (std::max(absakk, colmax) <= tiny) return PivotOutcome::Tiny;
    if (absakk == Real(0) && colmax == Real(0)) return PivotOutcome::Zero;

    std::size_t size = 1;
    std::size_t kp = k;
    if (absakk < alpha * colmax) {
      Real rowmax = 0;
      for (std::size_t j = k; j < n; ++j)
        if (j != imax) rowmax = std::max(rowmax, std::abs(w(imax, j)));
      if (absakk * rowmax >= alpha * colmax * colmax) {
        kp = k;
      } else if (std::abs(w(imax, imax)) >= alpha * rowmax) {
        kp = imax;
      } else {
        kp = imax;
        size = 2;
      }
    }

    const std::size_t kk = k + size - 1;
    if (kp != kk) {
      symmetric_swap(w, kk, kp);
      std::swap(f.perm[kk], f.perm[kp]);
      for (std::size_t j = 0; j < k; ++j) std::swap(f.lower(kk, j), f.lower(kp, j));
    }

    if (size == 1) {
      const Real d = w(k, k);
      if (d == Real(0)) return PivotOutcome::Zero;
      f.d_diag[k] = d;
      f.block[k] = 1;
      for (std::size_t i = k + 1; i < n; ++i) f.lower(i, k) = w(i, k) / d;
      for (std::size_t i = k + 1; i < n; ++i) {
        const Real li = f.lower(i, k);
        if (li == Real(0)) continue;
        for (std::size_t j = k + 1; j <= i; ++j) {
          w(i, j) -= li * w(j, k);
          w(j, i) = w(i, j);
        }
      }
    } else {
      const Real a = w(k, k), b = w(k + 1, k), c = w(k + 1, k + 1);
      const Real det = a * c - b * b;
      if (det == Real(0) || !std::isfinite(det)) return PivotOutcome::Zero;
      f.d_diag[k] = a;
      f.d_diag[k + 1] = c;
      f.d_sub[k] = b;
      f.block[k] = 2;
      for (std::size_t i = k + 2; i < n; ++i) {
        const Real w1 = w(i, k), w2 = w(i, k + 1);
        f.lower(i, k) = (w1 * c - w2 * b) / det;
        f.lower(i, k + 1) = (w2 * a - w1 * b) / det;
      }
      for (std::size_t i = k + 2; i < n; ++i) {
        const Real l1 = f.lower(i, k), l2 = f.lower(i, k + 1);
        for (std::size_t j = k + 2; j <= i; ++j) {
          w(i, j) -= l1 * w(j, k) + l2 * w(j, k + 1);
          w(j, i) = w(i, j);
        }
      }
    }
    k += size;
  }
  return PivotOutcome::Ok;
}

template <typename Real>
Vector<Real> ldl_solve(const SymIndefFactor<Real>& f, std::span<const Real> rhs) {
  const std::size_t n = f.dim();
  Vector<Real> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = rhs[f.perm[k]];
  for (std::size_t i = 0; i < n; ++i) {
    Real acc = w[i];
    for (std::size_t j = 0; j < i; ++j) acc -= f.lower(i, j) * w[j];
    w[i] = acc;
  }
  for (std::size_t k = 0; k < n;) {
    if (f.block[k] == 1) {
      w[k] /= f.d_diag[k];
      k += 1;
    } else {
      const Real a = f.d_diag[k], b = f.d_sub[k], c = f.d_diag[k + 1];
      const Real det = a * c - b * b;
      const Real w1 = w[k], w2 = w[k + 1];
      w[k] = (c * w1 - b * w2) / det;
      w[k + 1] = (a * w2 - b * w1) / det;
      k += 2;
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    Real acc = w[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= f.lower(j, i) * w[j];
    w[i] = acc;
  }
  Vector<Real> out(n);
  for (std::size_t k = 0; k < n; ++k) out[f.perm[k]] = w[k];
  return out;
}

}  // namespace

template <typename Real>
SymIndefFactor<Real> factor_symmetric_indefinite(const DenseMatrix<Real>& m, Real delta_static,
                                                 std::span<const RowRole> roles) {
  require(m.rows() == m.cols(), "factor_symmetric_indefinite: matrix is " + shape(m.rows(), m.cols()));
  require(roles.empty() || roles.size() == m.rows(), "factor_symmetric_indefinite: role count mismatch");
  if (!is_symmetric(m)) throw Error(ErrorCode::InvalidArgument, "factor_symmetric_indefinite: matrix is not symmetric");

  SymIndefFactor<Real> f;
  f.matrix = m;
  f.roles.assign(roles.begin(), roles.end());
  if (f.roles.empty()) f.roles.assign(m.rows(), RowRole::Primal);

  const Real theta = pivot_threshold(m);
  const PivotOutcome first = bunch_kaufman(m, theta, f);
  if (first == PivotOutcome::Ok) return f;

  const Real delta = delta_static > Real(0) ? delta_static : theta;
  DenseMatrix<Real> reg = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    reg(i, i) += f.roles[i] == RowRole::Primal ? delta : -delta;
  if (delta == Real(0) || bunch_kaufman(reg, Real(0), f) != PivotOutcome::Ok)
    throw Error(ErrorCode::SingularMatrix, "factor_symmetric_indefinite: zero pivot block after regularization");
  f.delta_applied = delta;
  return f;
}

template <typename Real>
Vector<Real> solve_factored(const SymIndefFactor<Real>& f, std::span<const Real> rhs, int refine_steps) {
  require(rhs.size() == f.dim(), "solve_factored: rhs length " + std::to_string(rhs.size()) +
                                     " for factor of dimension " + std::to_string(f.dim()));
  Vector<Real> w = ldl_solve(f, rhs);
  if (refine_steps <= 0) return w;

  auto residual = [&](const Vector<Real>& x) {
    Vector<Real> r = matvec<Real>(f.matrix, x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rhs[i] - r[i];
    return r;
  };
  Vector<Real> r = residual(w);
  Real rnorm = norm_inf<Real>(r);
  for (int step = 0; step < refine_steps && rnorm > Real(0) && std::isfinite(rnorm); ++step) {
    const Vector<Real> dw = ldl_solve<Real>(f, r);
    Vector<Real> candidate = w;
    for (std::size_t i = 0; i < w.size(); ++i) candidate[i] += dw[i];
    Vector<Real> rc = residual(candidate);
    const Real rcnorm = norm_inf<Real>(rc);
    if (!(rcnorm < rnorm)) break;
    w = std::move(candidate);
    r = std::move(rc);
    rnorm = rcnorm;
  }
  return w;
}

// ---------------------------------------------------------------------------

template <typename Real>
DenseMatrix<Real> cholesky_nan_on_failure(const DenseMatrix<Real>& m) {
  require(m.rows() == m.cols(), "cholesky: matrix is " + shape(m.rows(), m.cols()));
  const std::size_t n = m.rows();
  DenseMatrix<Real> l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    Real diag = m(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    // sqrt of a negative pivot is NaN; it propagates through the solve.
    const Real ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      Real acc = m(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      l(i, j) = acc / ljj;
    }
  }
  return l;
}

template <typename Real>
Vector<Real> cholesky_solve(const DenseMatrix<Real>& l, std::span<const Real> rhs) {
  const std::size_t n = l.rows();
  require(rhs.size() == n, "cholesky_solve: rhs length mismatch");
  Vector<Real> w(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) w[i] -= l(i, j) * w[j];
    w[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) w[i] -= l(j, i) * w[j];
    w[i] /= l(i, i);
  }
  return w;
}

#define IQP_INSTANTIATE_LINALG(Real)                                                              \
  template class DenseMatrix<Real>;                                                               \
  template struct SymIndefFactor<Real>;                                                           \
  template Vector<Real> matvec<Real>(const DenseMatrix<Real>&, std::span<const Real>);            \
  template Vector<Real> matvec_transposed<Real>(const DenseMatrix<Real>&, std::span<const Real>); \
  template DenseMatrix<Real> matmul<Real>(const DenseMatrix<Real>&, const DenseMatrix<Real>&);    \
  template DenseMatrix<Real> transpose<Real>(const DenseMatrix<Real>&);                           \
  template Real dot<Real>(std::span<const Real>, std::span<const Real>);                          \
  template Real norm_inf<Real>(std::span<const Real>);                                            \
  template Real norm2<Real>(std::span<const Real>);                                               \
  template Real frobenius_norm<Real>(const DenseMatrix<Real>&);                                   \
  template bool all_finite<Real>(std::span<const Real>);                                          \
  template bool is_symmetric<Real>(const DenseMatrix<Real>&);                                     \
  template Real pivot_threshold<Real>(const DenseMatrix<Real>&);                                  \
  template SymIndefFactor<Real> factor_symmetric_indefinite<Real>(                                \
      const DenseMatrix<Real>&, Real, std::span<const RowRole>);                                  \
  template Vector<Real> solve_factored<Real>(const SymIndefFactor<Real>&, std::span<const Real>,  \
                                             int);                                                \
  template DenseMatrix<Real> cholesky_nan_on_failure<Real>(const DenseMatrix<Real>&);             \
  template Vector<Real> cholesky_solve<Real>(const DenseMatrix<Real>&, std::span<const Real>);

IQP_INSTANTIATE_LINALG(float)
IQP_INSTANTIATE_LINALG(double)

}  // namespace iqp::linalg
