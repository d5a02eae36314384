#include "iqp/selftest.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>

#include "iqp/implicit_ipm.hpp"
#include "iqp/retraction.hpp"

namespace iqp::selftest {

namespace {

std::string fmt(const char* f, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), f, a, b);
  return buf;
}

template <typename Real>
double worst_product_error() {
  double worst = 0;
  for (double kappa : {1e-9, 1e-6, 1e-4, 1e-2, 1.0}) {
    for (int i = 0; i <= 40; ++i) {
      const double mag = std::pow(10.0, -8.0 + 16.0 * i / 40.0);
      for (double v : {mag, -mag}) {
        const Real k = static_cast<Real>(kappa);
        const Real z = retraction::softplus<Real>(static_cast<Real>(v), k);
        const Real s = retraction::softplus<Real>(static_cast<Real>(-v), k);
        const long double prod = static_cast<long double>(z) * static_cast<long double>(s);
        worst = std::max(worst, double(std::abs(prod - static_cast<long double>(k)) / static_cast<long double>(k)));
      }
    }
  }
  return worst;
}

Check retraction_identities() {
  Check c{"retraction identities", true, ""};
  const double p64 = worst_product_error<double>();
  const double p32 = worst_product_error<float>();
  double sum_ulps = 0, coord_ulps = 0;
  for (double kappa : {1e-9, 1e-6, 1e-4, 1e-2, 1.0}) {
    for (int i = 0; i <= 40; ++i) {
      const double mag = std::pow(10.0, -8.0 + 16.0 * i / 40.0);
      for (double v : {mag, -mag}) {
        const double eps = std::numeric_limits<double>::epsilon();
        const double dp = retraction::softplus_dw(v, kappa), dm = retraction::softplus_dw(-v, kappa);
        sum_ulps = std::max(sum_ulps, std::abs(dp + dm - 1.0) / eps);
        const double z = retraction::softplus(v, kappa), s = retraction::softplus(-v, kappa);
        coord_ulps = std::max(coord_ulps, std::abs((z - s) - v) / (eps * std::max(z, s)));
      }
    }
  }
  c.passed = p64 <= 1e-12 && p32 <= 1e-5 && sum_ulps <= 4 && coord_ulps <= 4;
  c.detail = fmt("product rel err f64 %.2e, f32 %.2e; ", p64, p32) +
             fmt("d+ + d- off by %.1f ulp, z - s off by %.1f ulp", sum_ulps, coord_ulps);
  return c;
}

Check cancellation_witness(bool naive) {
  const long double v = -1e6L, kappa = 1.0L;
  const long double oracle = 2 * kappa / (std::sqrt(v * v + 4 * kappa) - v);
  const float got = naive ? retraction::softplus_naive<float>(float(v), float(kappa))
                          : retraction::softplus<float>(float(v), float(kappa));
  const double rel = double(std::abs(static_cast<long double>(got) - oracle) / oracle);
  const double got64 = retraction::softplus<double>(double(v), double(kappa));
  const double rel64 = double(std::abs(static_cast<long double>(got64) - oracle) / oracle);
  Check c{"cancellation witness", rel <= 1e-5 && rel64 <= 1e-12, ""};
  c.detail = fmt(naive ? "naive b(-1e6) rel err f32 %.2e, f64 %.2e" : "b(-1e6) rel err f32 %.2e, f64 %.2e", rel, rel64);
  return c;
}

QpProblem<double> random_qp(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t p) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> margin(0.5, 1.5);
  QpProblem<double> qp;
  qp.n = n;
  qp.m_eq = m;
  qp.p = p;
  DenseMatrix<double> r(n, n);
  for (double& x : r.data()) x = normal(rng);
  qp.Q = DenseMatrix<double>(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = i == j ? 1.0 : 0.0;
      for (std::size_t k = 0; k < n; ++k) acc += r(k, i) * r(k, j) / double(n);
      qp.Q(i, j) = acc;
    }
  qp.q.resize(n);
  for (double& x : qp.q) x = normal(rng);
  Vector<double> x0(n);
  for (double& x : x0) x = normal(rng);
  qp.A = DenseMatrix<double>(m, n);
  for (double& x : qp.A.data()) x = normal(rng);
  qp.b = linalg::matvec<double>(qp.A, x0);
  qp.G = DenseMatrix<double>(p, n);
  for (double& x : qp.G.data()) x = normal(rng);
  qp.h = linalg::matvec<double>(qp.G, x0);
  for (double& x : qp.h) x += margin(rng);
  return qp;
}

Check condensation_equivalence() {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const QpProblem<double> qp = random_qp(rng, 4, 1, 3);
    Iterate<double> it;
    it.x.resize(qp.n);
    it.y.resize(qp.m_eq);
    it.v.resize(qp.p);
    for (double& x : it.x) x = normal(rng);
    for (double& x : it.y) x = normal(rng);
    for (double& x : it.v) x = normal(rng);
    it.kappa = 0.3;
    auto [z, s] = retraction::retract<double>(it.v, it.kappa);
    it.z = z;
    it.s = s;
    for (double& x : it.z) x *= 1.1;  // off-manifold so r_z, r_s are nonzero
    const Residuals<double> r = evaluate_residuals(qp, it, Paradigm::Implicit);
    const double target = 0.1 * it.kappa;
    const auto f = implicit_ipm::precompute_kkt_factors<double>(qp, it.v, it.kappa);
    const auto d = implicit_ipm::solve_kkt(f, r, target);
    const DenseMatrix<double> k = implicit_ipm::assemble_uncondensed_matrix<double>(qp, it.v, it.kappa);
    Vector<double> delta, rhs;
    for (const auto* part : {&d.dx, &d.dy, &d.dz, &d.ds, &d.dv}) delta.insert(delta.end(), part->begin(), part->end());
    delta.push_back(d.dkappa);
    for (const auto* part : {&r.r_t, &r.r_e, &r.r_i, &r.r_z, &r.r_s})
      for (double x : *part) rhs.push_back(-x);
    rhs.push_back(-(it.kappa - target));
    const Vector<double> kd = linalg::matvec<double>(k, delta);
    double res = 0;
    for (std::size_t i = 0; i < rhs.size(); ++i) res = std::max(res, std::abs(kd[i] - rhs[i]));
    worst = std::max(worst, res / linalg::norm_inf<double>(rhs));
  }
  return {"condensation equivalence", worst <= 1e-10, fmt("worst relative residual %.2e over 10 instances", worst)};
}

double loss_at(const QpProblem<double>& qp, std::span<const double> dl, double kappa_relax, const SolverConfig& cfg) {
  auto solved = implicit_ipm::solve_qp(qp, cfg);
  auto relaxed = implicit_ipm::relax_qp<double>(qp, solved.iterate, kappa_relax, nullptr, cfg);
  return linalg::dot<double>(dl, relaxed.iterate.x);
}

Check finite_difference_gradients() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal;
  SolverConfig cfg = SolverConfig::defaults(Precision::F64);
  cfg.tol = 1e-11;
  const double kappa_relax = 1e-4, h = 1e-6;
  double worst = 0;
  for (int trial = 0; trial < 3; ++trial) {
    const QpProblem<double> qp = random_qp(rng, 4, 1, 3);
    Vector<double> dl(qp.n);
    for (double& x : dl) x = normal(rng);
    auto solved = implicit_ipm::solve_qp(qp, cfg);
    auto relaxed = implicit_ipm::relax_qp<double>(qp, solved.iterate, kappa_relax, nullptr, cfg);
    const auto g = implicit_ipm::compute_qp_gradients<double>(qp, relaxed.iterate, kappa_relax, dl, relaxed.factor);
    auto check = [&](Vector<double> QpProblem<double>::*field, const Vector<double>& analytic) {
      double scale = 1e-8, err = 0;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        QpProblem<double> plus = qp, minus = qp;
        (plus.*field)[i] += h;
        (minus.*field)[i] -= h;
        const double fd = (loss_at(plus, dl, kappa_relax, cfg) - loss_at(minus, dl, kappa_relax, cfg)) / (2 * h);
        err = std::max(err, std::abs(fd - analytic[i]));
        scale = std::max(scale, std::abs(analytic[i]));
      }
      worst = std::max(worst, err / scale);
    };
    check(&QpProblem<double>::q, g.dq);
    check(&QpProblem<double>::h, g.dh);
    check(&QpProblem<double>::b, g.db);
  }
  return {"finite-difference gradients", worst <= 1e-4, fmt("worst relative error %.2e over 3 instances", worst)};
}

Check strict_interiority(double tau_frac) {
  const Vector<double> s{1.0}, z{1.0}, ds{-4.0}, dz{0.0};
  const double alpha = implicit_ipm::linesearch<double>(s, z, ds, dz, tau_frac);
  const double s_next = s[0] + alpha * ds[0];
  bool ok = s_next > 0;

  // min 1/2 ||x - (2, 0)||^2 s.t. x_1 <= 1 under the same fraction-to-boundary
  QpProblem<double> qp;
  qp.n = 2;
  qp.p = 1;
  qp.Q = DenseMatrix<double>::identity(2);
  qp.q = {-2.0, 0.0};
  qp.A = DenseMatrix<double>(0, 2);
  qp.G = DenseMatrix<double>{{1.0, 0.0}};
  qp.h = {1.0};
  SolverConfig cfg = SolverConfig::defaults(Precision::F64);
  cfg.tau_frac = tau_frac;
  const auto res = implicit_ipm::solve_qp(qp, cfg);
  ok = ok && res.report.status == Status::Converged && res.iterate.s[0] > 0 && res.iterate.z[0] > 0;
  return {"strict interiority", ok,
          fmt("tau %.3g: blocked step leaves s = %.3g", tau_frac, s_next) + "; projection solve " +
              to_string(res.report.status)};
}

}  // namespace

std::vector<Check> run(const Options& opts) {
  std::vector<Check> out;
  auto guarded = [&](const char* name, auto fn) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("retraction identities", retraction_identities);
  guarded("cancellation witness", [&] { return cancellation_witness(opts.naive_softplus); });
  guarded("condensation equivalence", condensation_equivalence);
  guarded("finite-difference gradients", finite_difference_gradients);
  guarded("strict interiority", [&] { return strict_interiority(opts.tau_frac); });
  return out;
}

}  // namespace iqp::selftest
