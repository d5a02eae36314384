#pragma once
// Reference computations for the tests. Nothing here calls into the library
// under test: dense solves are long-double Gaussian elimination, the
// retraction is re-derived from its closed form, and constrained optima come
// from enumerating active sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace oracle {

using Ld = long double;
using Mat = std::vector<std::vector<Ld>>;
using Vec = std::vector<Ld>;

inline Mat zeros(std::size_t r, std::size_t c) { return Mat(r, Vec(c, 0.0L)); }

// Gaussian elimination with partial pivoting. Empty result if singular.
inline std::optional<Vec> gauss_solve(Mat a, Vec b, Ld singular_tol = 1e-14L) {
  const std::size_t n = b.size();
  Ld scale = 0;
  for (const auto& row : a)
    for (Ld x : row) scale = std::max(scale, std::fabs(x));
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[piv][k])) piv = i;
    if (std::fabs(a[piv][k]) <= singular_tol * std::max(scale, Ld(1e-300L))) return std::nullopt;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const Ld f = a[i][k] / a[k][k];
      if (f == 0) continue;
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  Vec x(n);
  for (std::size_t i = n; i-- > 0;) {
    Ld acc = b[i];
    for (std::size_t j = i + 1; j < n; ++j) acc -= a[i][j] * x[j];
    x[i] = acc / a[i][i];
  }
  return x;
}

inline Vec mul(const Mat& a, const Vec& x) {
  Vec out(a.size(), 0.0L);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += a[i][j] * x[j];
  return out;
}

// b_k(w) and its derivatives straight from (w + sqrt(w^2 + 4k)) / 2, with
// the negative branch rationalized. Long double throughout.
inline Ld softplus(Ld w, Ld k) {
  const Ld r = std::sqrt(w * w + 4 * k);
  return w >= 0 ? (w + r) / 2 : 2 * k / (r - w);
}
inline Ld softplus_dw(Ld w, Ld k) { return softplus(w, k) / std::sqrt(w * w + 4 * k); }
inline Ld softplus_dk(Ld w, Ld k) { return 1 / std::sqrt(w * w + 4 * k); }

// Problem data in plain row-major doubles so oracles stay independent of
// the library types.
struct Qp {
  std::size_t n = 0, m_eq = 0, p = 0;
  std::vector<double> Q, q, A, b, G, h;
};

// Strictly convex QP, Q = R^T R / n + I, with a strictly feasible point x0.
inline Qp random_qp(std::uint64_t seed, std::size_t n, std::size_t m_eq, std::size_t p) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> margin(0.1, 1.0);
  Qp qp;
  qp.n = n;
  qp.m_eq = m_eq;
  qp.p = p;
  std::vector<double> r(n * n);
  for (double& x : r) x = normal(rng);
  qp.Q.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = i == j ? 1.0 : 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += r[k * n + i] * r[k * n + j] / double(n);
      qp.Q[i * n + j] = acc;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) qp.Q[i * n + j] = qp.Q[j * n + i];
  qp.q.resize(n);
  for (double& x : qp.q) x = 3 * normal(rng);
  std::vector<double> x0(n);
  for (double& x : x0) x = normal(rng);
  qp.A.resize(m_eq * n);
  for (double& x : qp.A) x = normal(rng);
  qp.b.assign(m_eq, 0.0);
  for (std::size_t i = 0; i < m_eq; ++i)
    for (std::size_t j = 0; j < n; ++j) qp.b[i] += qp.A[i * n + j] * x0[j];
  qp.G.resize(p * n);
  for (double& x : qp.G) x = normal(rng);
  qp.h.assign(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < n; ++j) qp.h[i] += qp.G[i * n + j] * x0[j];
    qp.h[i] += margin(rng);
  }
  return qp;
}

struct KktPoint {
  Vec x, y, z;
  std::uint64_t active_mask = 0;
};

// Exact optimum by trying every active set (p <= 20): solve the equality
// KKT system for each subset and keep the one that is primal feasible with
// nonnegative multipliers.
inline std::optional<KktPoint> active_set_solve(const Qp& qp, Ld feas_tol = 1e-9L) {
  const std::size_t n = qp.n, me = qp.m_eq, p = qp.p;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << p); ++mask) {
    std::vector<std::size_t> act;
    for (std::size_t i = 0; i < p; ++i)
      if (mask >> i & 1) act.push_back(i);
    if (act.size() + me > n) continue;
    const std::size_t dim = n + me + act.size();
    Mat k = zeros(dim, dim);
    Vec rhs(dim, 0.0L);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) k[i][j] = qp.Q[i * n + j];
      rhs[i] = -qp.q[i];
    }
    for (std::size_t e = 0; e < me; ++e) {
      for (std::size_t j = 0; j < n; ++j) k[n + e][j] = k[j][n + e] = qp.A[e * n + j];
      rhs[n + e] = qp.b[e];
    }
    for (std::size_t a = 0; a < act.size(); ++a) {
      const std::size_t r = n + me + a;
      for (std::size_t j = 0; j < n; ++j) k[r][j] = k[j][r] = qp.G[act[a] * n + j];
      rhs[r] = qp.h[act[a]];
    }
    const auto sol = gauss_solve(k, rhs, 1e-13L);
    if (!sol) continue;
    KktPoint pt;
    pt.x.assign(sol->begin(), sol->begin() + n);
    pt.y.assign(sol->begin() + n, sol->begin() + n + me);
    pt.z.assign(p, 0.0L);
    bool ok = true;
    for (std::size_t a = 0; a < act.size(); ++a) {
      pt.z[act[a]] = (*sol)[n + me + a];
      if (pt.z[act[a]] < -feas_tol) ok = false;
    }
    for (std::size_t i = 0; i < p && ok; ++i) {
      Ld gx = 0;
      for (std::size_t j = 0; j < n; ++j) gx += qp.G[i * n + j] * pt.x[j];
      if (gx > qp.h[i] + feas_tol * (1 + std::fabs(Ld(qp.h[i])))) ok = false;
    }
    if (!ok) continue;
    pt.active_mask = mask;
    return pt;
  }
  return std::nullopt;
}

// Every active set certifying a projection of x onto {y : G y <= h}. The
// multipliers come from G_S G_S^T z = G_S x - h_S, and y = x - G_S^T z.
inline std::vector<Vec> projection_kkt_points(const std::vector<double>& G, const std::vector<double>& h,
                                              const std::vector<double>& x, std::size_t n, Ld tol = 1e-9L) {
  const std::size_t p = h.size();
  std::vector<Vec> found;
  std::vector<std::size_t> act;
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << p); ++mask) {
    act.clear();
    for (std::size_t i = 0; i < p; ++i)
      if (mask >> i & 1) act.push_back(i);
    if (act.size() > n) continue;
    const std::size_t k = act.size();
    Mat gram = zeros(k, k);
    Vec rhs(k, 0.0L);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        Ld acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += Ld(G[act[a] * n + j]) * G[act[b] * n + j];
        gram[a][b] = acc;
      }
      Ld gx = 0;
      for (std::size_t j = 0; j < n; ++j) gx += Ld(G[act[a] * n + j]) * x[j];
      rhs[a] = gx - h[act[a]];
    }
    Vec z;
    if (k) {
      auto sol = gauss_solve(gram, rhs, 1e-12L);
      if (!sol) continue;
      z = *sol;
    }
    bool ok = true;
    for (Ld zi : z)
      if (zi < -tol) ok = false;
    if (!ok) continue;
    Vec y(x.begin(), x.end());
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t j = 0; j < n; ++j) y[j] -= z[a] * G[act[a] * n + j];
    for (std::size_t i = 0; i < p && ok; ++i) {
      Ld gy = 0;
      for (std::size_t j = 0; j < n; ++j) gy += Ld(G[i * n + j]) * y[j];
      if (gy > h[i] + tol) ok = false;
    }
    if (ok) found.push_back(y);
  }
  return found;
}

// Newton matrix of the implicit residual map
//   r_t = Qx + q + G^T z + A^T y,  r_e = Ax - b,  r_i = Gx + s - h,
//   r_z = z - b_k(v),  r_s = s - b_k(-v),  r_k = k - k_target
// in the unknown order (x, y, z, s, v, k), differentiated by hand.
inline Mat implicit_newton_matrix(const Qp& qp, const std::vector<double>& v, Ld kappa) {
  const std::size_t n = qp.n, me = qp.m_eq, p = qp.p;
  const std::size_t ox = 0, oy = n, oz = n + me, os = oz + p, ov = os + p, ok = ov + p, dim = ok + 1;
  Mat k = zeros(dim, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[ox + i][ox + j] = qp.Q[i * n + j];
    for (std::size_t e = 0; e < me; ++e) k[ox + i][oy + e] = qp.A[e * n + i];
    for (std::size_t c = 0; c < p; ++c) k[ox + i][oz + c] = qp.G[c * n + i];
  }
  for (std::size_t e = 0; e < me; ++e)
    for (std::size_t j = 0; j < n; ++j) k[oy + e][ox + j] = qp.A[e * n + j];
  const std::size_t ri = oz, rz = os, rs = ov, rk = ok;  // row blocks
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t j = 0; j < n; ++j) k[ri + c][ox + j] = qp.G[c * n + j];
    k[ri + c][os + c] = 1;
    // r_z = z - b(v)
    k[rz + c][oz + c] = 1;
    k[rz + c][ov + c] = -softplus_dw(v[c], kappa);
    k[rz + c][ok] = -softplus_dk(v[c], kappa);
    // r_s = s - b(-v)
    k[rs + c][os + c] = 1;
    k[rs + c][ov + c] = softplus_dw(-v[c], kappa);
    k[rs + c][ok] = -softplus_dk(-v[c], kappa);
  }
  k[rk][ok] = 1;
  return k;
}

// Newton matrix of the explicit residual map with r_c = z * s - mu, unknowns
// (x, y, z, s).
inline Mat explicit_newton_matrix(const Qp& qp, const std::vector<double>& s, const std::vector<double>& z) {
  const std::size_t n = qp.n, me = qp.m_eq, p = qp.p;
  const std::size_t oy = n, oz = n + me, os = oz + p, dim = os + p;
  Mat k = zeros(dim, dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) k[i][j] = qp.Q[i * n + j];
    for (std::size_t e = 0; e < me; ++e) k[i][oy + e] = qp.A[e * n + i];
    for (std::size_t c = 0; c < p; ++c) k[i][oz + c] = qp.G[c * n + i];
  }
  for (std::size_t e = 0; e < me; ++e)
    for (std::size_t j = 0; j < n; ++j) k[oy + e][j] = qp.A[e * n + j];
  for (std::size_t c = 0; c < p; ++c) {
    for (std::size_t j = 0; j < n; ++j) k[oz + c][j] = qp.G[c * n + j];
    k[oz + c][os + c] = 1;
    k[os + c][oz + c] = s[c];
    k[os + c][os + c] = z[c];
  }
  return k;
}

// Hard-Jacobian projector I - G_A^T (G_A G_A^T)^{-1} G_A by columns.
inline Mat tangent_projector(const std::vector<double>& ga, std::size_t m, std::size_t n) {
  Mat j = zeros(n, n);
  Mat gram = zeros(m, m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t k = 0; k < n; ++k) gram[a][b] += Ld(ga[a * n + k]) * ga[b * n + k];
  for (std::size_t col = 0; col < n; ++col) {
    Vec rhs(m);
    for (std::size_t a = 0; a < m; ++a) rhs[a] = ga[a * n + col];
    const Vec w = m ? *gauss_solve(gram, rhs) : Vec{};
    for (std::size_t r = 0; r < n; ++r) {
      Ld acc = r == col ? 1 : 0;
      for (std::size_t a = 0; a < m; ++a) acc -= ga[a * n + r] * w[a];
      j[r][col] = acc;
    }
  }
  return j;
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
  double out = 0;
  for (std::size_t i = 0; i < a.size(); ++i) out = std::max(out, double(std::fabs(a[i] - b[i])));
  return out;
}

}  // namespace oracle
