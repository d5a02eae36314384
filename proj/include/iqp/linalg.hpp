#pragma once

// Dense kernels and a pivoted symmetric-indefinite LDL^T factorization.
// Everything is templated on the working precision (float or double).

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "iqp/error.hpp"

namespace iqp::linalg {

template <typename Real>
using Vector = std::vector<Real>;

/// Row-major dense matrix.
template <typename Real>
class DenseMatrix {
public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<Real> data);
  DenseMatrix(std::initializer_list<std::initializer_list<Real>> rows);

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  Real operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<Real> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const Real> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const std::vector<Real>& data() const noexcept { return data_; }
  std::vector<Real>& data() noexcept { return data_; }

  /// Largest absolute entry; 0 for an empty matrix.
  Real max_abs() const;
  Real max_abs_diagonal() const;

  template <typename Other>
  DenseMatrix<Other> cast() const {
    return DenseMatrix<Other>(rows_, cols_, std::vector<Other>(data_.begin(), data_.end()));
  }

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

template <typename Real>
Vector<Real> matvec(const DenseMatrix<Real>& a, std::span<const Real> x);

/// a^T x without forming the transpose.
template <typename Real>
Vector<Real> matvec_transposed(const DenseMatrix<Real>& a, std::span<const Real> x);

template <typename Real>
DenseMatrix<Real> matmul(const DenseMatrix<Real>& a, const DenseMatrix<Real>& b);

template <typename Real>
DenseMatrix<Real> transpose(const DenseMatrix<Real>& a);

template <typename Real>
Real dot(std::span<const Real> a, std::span<const Real> b);

template <typename Real>
Real norm_inf(std::span<const Real> a);

template <typename Real>
Real norm2(std::span<const Real> a);

template <typename Real>
Real frobenius_norm(const DenseMatrix<Real>& a);

template <typename Real>
bool all_finite(std::span<const Real> a);

/// Symmetry test at 8 eps_machine relative to the largest entry.
template <typename Real>
bool is_symmetric(const DenseMatrix<Real>& m);

/// Block role of a row in a saddle-point matrix. Static regularization adds
/// +delta on primal rows and -delta on dual rows.
enum class RowRole : std::int8_t { Dual = -1, Primal = 1 };

/// P (M + Delta_reg) P^T = L D L^T with unit lower L and 1x1/2x2 blocks in D.
template <typename Real>
struct SymIndefFactor {
  std::vector<std::size_t> perm;      ///< row k of P M P^T is row perm[k] of M
  DenseMatrix<Real> lower;            ///< unit lower triangular L
  std::vector<Real> d_diag;           ///< diagonal of D
  std::vector<Real> d_sub;            ///< D(k+1,k) for 2x2 blocks, 0 otherwise
  std::vector<std::uint8_t> block;    ///< 1 or 2 at the leading index of each block, 0 on the trailing index
  Real delta_applied = Real(0);
  std::vector<RowRole> roles;
  DenseMatrix<Real> matrix;           ///< unregularized M, kept for refinement

  std::size_t dim() const noexcept { return perm.size(); }
  std::size_t two_by_two_count() const;

  /// P^T L D L^T P, i.e. the regularized matrix this factor represents.
  DenseMatrix<Real> reconstruct() const;
};

/// Pivot threshold sqrt(eps) * max_i |M_ii| (falls back to max |M_ij| when the
/// diagonal is zero).
template <typename Real>
Real pivot_threshold(const DenseMatrix<Real>& m);

/// Bunch-Kaufman factorization. When a pivot column collapses below the
/// pivot threshold the factorization restarts on M + delta * diag(roles);
/// delta_static <= 0 selects the default sqrt(eps) * max_i |M_ii|.
/// Throws SingularMatrix if the regularized matrix still has a zero pivot.
template <typename Real>
SymIndefFactor<Real> factor_symmetric_indefinite(const DenseMatrix<Real>& m,
                                                 Real delta_static = Real(0),
                                                 std::span<const RowRole> roles = {});

/// Solves M w = rhs followed by refine_steps rounds of iterative refinement
/// against the unregularized M. A refinement round that does not reduce the
/// residual is discarded.
template <typename Real>
Vector<Real> solve_factored(const SymIndefFactor<Real>& f, std::span<const Real> rhs,
                            int refine_steps = 0);

/// Cholesky without pivoting or shifts. A non-positive pivot produces NaN
/// in the factor instead of throwing, the way array frameworks report it.
template <typename Real>
DenseMatrix<Real> cholesky_nan_on_failure(const DenseMatrix<Real>& m);

template <typename Real>
Vector<Real> cholesky_solve(const DenseMatrix<Real>& l, std::span<const Real> rhs);

template <typename To, typename From>
Vector<To> convert(const Vector<From>& v) {
  return Vector<To>(v.begin(), v.end());
}

}  // namespace iqp::linalg
