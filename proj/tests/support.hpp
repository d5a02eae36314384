#pragma once
// Glue between the oracle types and the library types.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "iqp/qp_model.hpp"
#include "oracles.hpp"

namespace support {

inline iqp::QpProblem<double> to_problem(const oracle::Qp& o) {
  iqp::QpProblem<double> qp;
  qp.n = o.n;
  qp.m_eq = o.m_eq;
  qp.p = o.p;
  qp.Q = iqp::DenseMatrix<double>(o.n, o.n, o.Q);
  qp.q = o.q;
  qp.A = iqp::DenseMatrix<double>(o.m_eq, o.n, o.A);
  qp.b = o.b;
  qp.G = iqp::DenseMatrix<double>(o.p, o.n, o.G);
  qp.h = o.h;
  return qp;
}

inline oracle::Qp to_oracle(const iqp::QpProblem<double>& qp) {
  return {qp.n, qp.m_eq, qp.p, qp.Q.data(), qp.q, qp.A.data(), qp.b, qp.G.data(), qp.h};
}

template <typename Real>
oracle::Mat to_mat(const iqp::DenseMatrix<Real>& m) {
  oracle::Mat out = oracle::zeros(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

template <typename T>
oracle::Vec to_vec(const std::vector<T>& v) {
  return oracle::Vec(v.begin(), v.end());
}

// max |a - b| / max(max |b|, floor)
template <typename A, typename B>
double rel_diff(std::span<const A> a, std::span<const B> b, double floor = 1e-12) {
  double err = 0, scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) {
    err = std::max(err, std::abs(double(a[i]) - double(b[i])));
    scale = std::max(scale, std::abs(double(b[i])));
  }
  return err / scale;
}

template <typename A, typename B>
double rel_diff(const std::vector<A>& a, const std::vector<B>& b, double floor = 1e-12) {
  return rel_diff(std::span<const A>(a), std::span<const B>(b), floor);
}

}  // namespace support
