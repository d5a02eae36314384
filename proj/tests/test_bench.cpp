#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "iqp/bench.hpp"
#include "iqp/implicit_ipm.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iqp;
using namespace iqp::bench;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](double x, double y) {
           return std::memcmp(&x, &y, sizeof x) == 0;
         });
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

// Small grid for the sweep plumbing tests.
SweepConfig small_config() {
  SweepConfig cfg;
  cfg.sizes = {2, 6};
  cfg.m_ratios = {0.2, 0.8};
  cfg.displacements = {0.1, 1.0, 10.0};
  cfg.seeds = {0, 1};
  cfg.kappas = {1e-2, 1e-4};
  cfg.kappa_ms = {10};
  cfg.threads = 1;
  return cfg;
}

}  // namespace

TEST_CASE("two-dimensional instance with one active row") {
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    const auto inst = generate_instance(2, 2, 1, 1.0, seed);
    REQUIRE(inst.active_rows.size() == 1);
    const std::size_t a = inst.active_rows[0];
    std::size_t tight = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      const double gy = inst.G(i, 0) * inst.y0[0] + inst.G(i, 1) * inst.y0[1];
      if (std::abs(gy - inst.h[i]) <= 1e-14 * std::max(1.0, std::abs(inst.h[i]))) ++tight;
      if (i != a) CHECK(gy < inst.h[i]);
    }
    CHECK(tight == 1);
    // x_query - y0 is a positive multiple of the active normal
    const double dx0 = inst.x_query[0] - inst.y0[0], dx1 = inst.x_query[1] - inst.y0[1];
    const double cross = dx0 * inst.G(a, 1) - dx1 * inst.G(a, 0);
    const double along = dx0 * inst.G(a, 0) + dx1 * inst.G(a, 1);
    CHECK(std::abs(cross) <= 1e-14);
    CHECK(along > 0);
    // so x_query is outside the polytope
    CHECK(inst.G(a, 0) * inst.x_query[0] + inst.G(a, 1) * inst.x_query[1] > inst.h[a]);
  }
}

TEST_CASE("instance invariants") {
  for (std::size_t n : {2u, 6u, 14u}) {
    for (double ratio : {0.2, 0.8}) {
      const std::size_t p = size_sweep_p(n), m = size_sweep_m(n, ratio);
      const auto inst = generate_instance(n, p, m, 3.0, 4);
      CHECK(inst.active_rows.size() == m);
      CHECK(std::is_sorted(inst.active_rows.begin(), inst.active_rows.end()));
      for (std::size_t i = 0; i < p; ++i) {
        double gy = 0, norm = 0;
        for (std::size_t j = 0; j < n; ++j) {
          gy += inst.G(i, j) * inst.y0[j];
          norm += inst.G(i, j) * inst.G(i, j);
        }
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-12));
        const bool active = std::binary_search(inst.active_rows.begin(), inst.active_rows.end(), i);
        if (active) {
          CHECK(std::abs(gy - inst.h[i]) <= 1e-12 * std::max(1.0, std::abs(gy)));
        } else {
          CHECK(inst.h[i] - gy >= 0.5 - 1e-12);
          CHECK(inst.h[i] - gy <= 1.5 + 1e-12);
        }
      }
      const auto qp = inst.to_qp();
      CHECK(qp.Q == DenseMatrix<double>::identity(n));
      for (std::size_t j = 0; j < n; ++j) CHECK(qp.q[j] == -inst.x_query[j]);
      CHECK(qp.m_eq == 0);
    }
  }
}

TEST_CASE("generator is deterministic bit for bit") {
  const auto a = generate_instance(10, 12, 6, 2.5, 3);
  const auto b = generate_instance(10, 12, 6, 2.5, 3);
  CHECK(same_bits(a.G.data(), b.G.data()));
  CHECK(same_bits(a.h, b.h));
  CHECK(same_bits(a.x_query, b.x_query));
  CHECK(same_bits(a.y0, b.y0));
  CHECK(same_bits(a.v_probe, b.v_probe));
  CHECK(a.active_rows == b.active_rows);
  const auto c = generate_instance(10, 12, 6, 2.5, 4);
  CHECK_FALSE(same_bits(a.G.data(), c.G.data()));
  // the displacement only moves the query point
  const auto d = generate_instance(10, 12, 6, 0.5, 3);
  CHECK(same_bits(a.G.data(), d.G.data()));
  CHECK(same_bits(a.y0, d.y0));
  CHECK_FALSE(same_bits(a.x_query, d.x_query));
}

TEST_CASE("bad sizes are rejected") {
  CHECK_THROWS_AS(generate_instance(2, 2, 0, 1.0, 0), Error);
  CHECK_THROWS_AS(generate_instance(2, 2, 3, 1.0, 0), Error);
  CHECK_THROWS_AS(generate_instance(4, 2, 3, 1.0, 0), Error);
  CHECK_THROWS_AS(generate_instance(2, 2, 1, 0.0, 0), Error);
  CHECK_THROWS_AS(generate_instance(2, 2, 1, -1.0, 0), Error);
}

TEST_CASE("enumeration confirms the designed projection point") {
  for (std::size_t n : {2u, 6u}) {
    for (double ratio : {0.2, 0.6, 0.8}) {
      const std::size_t p = size_sweep_p(n), m = size_sweep_m(n, ratio);
      REQUIRE(p <= 12);
      for (double d : {0.01, 1.0, 100.0}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
          const auto inst = generate_instance(n, p, m, d, seed);
          const auto pts = oracle::projection_kkt_points(inst.G.data(), inst.h, inst.x_query, n);
          REQUIRE_FALSE(pts.empty());
          // projection is unique, so every certifying active set gives the same point
          for (const auto& y : pts) CHECK(oracle::max_abs_diff(y, support::to_vec(inst.y0)) <= 1e-9 * (1 + d));
        }
      }
    }
  }
}

TEST_CASE("solving a generated instance recovers y0") {
  auto cfg = SolverConfig::defaults(Precision::F64);
  cfg.tol = 1e-10;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto inst = generate_instance(10, 12, 6, 1.0, seed);
    const auto res = implicit_ipm::solve_qp(inst.to_qp(), cfg);
    REQUIRE(res.report.status == Status::Converged);
    double err = 0;
    for (std::size_t j = 0; j < 10; ++j) err = std::max(err, std::abs(res.iterate.x[j] - inst.y0[j]));
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("hard Jacobian examples") {
  const DenseMatrix<double> ga{{1, 0}};
  const auto t = hard_jacobian_gradient(ga, Vector<double>{0, 1});
  CHECK(t[0] == 0);
  CHECK(t[1] == 1);
  const auto nrm = hard_jacobian_gradient(ga, Vector<double>{1, 0});
  CHECK(std::abs(nrm[0]) <= 1e-15);
  CHECK(std::abs(nrm[1]) <= 1e-15);
  // vertex: m = n
  const DenseMatrix<double> vertex{{1, 2}, {-1, 0.5}};
  const auto z = hard_jacobian_gradient(vertex, Vector<double>{3, -7});
  CHECK(std::abs(z[0]) <= 1e-14);
  CHECK(std::abs(z[1]) <= 1e-14);
  CHECK_THROWS_AS(hard_jacobian_gradient(DenseMatrix<double>{{1, 1}, {2, 2}}, Vector<double>{1, 0}), Error);
  try {
    hard_jacobian(DenseMatrix<double>{{1, 1}, {2, 2}});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RankDeficient);
  }
}

TEST_CASE("hard Jacobian is a symmetric idempotent projector") {
  for (std::size_t n : {2u, 6u, 10u, 22u, 38u}) {
    for (double ratio : {0.2, 0.6, 0.8}) {
      const auto inst = generate_instance(n, size_sweep_p(n), size_sweep_m(n, ratio), 1.0, n);
      const auto ga = inst.active_normals();
      const auto j = hard_jacobian(ga);
      const auto j2 = linalg::matmul(j, j);
      double idem = 0, sym = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          idem += std::pow(j2(a, b) - j(a, b), 2);
          sym += std::pow(j(a, b) - j(b, a), 2);
        }
      CHECK(std::sqrt(idem) <= 1e-10);
      CHECK(std::sqrt(sym) <= 1e-12);
      // matches the independent long-double projector
      const auto ref = oracle::tangent_projector(ga.data(), ga.rows(), n);
      double diff = 0;
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) diff = std::max(diff, double(std::fabs(j(a, b) - ref[a][b])));
      CHECK(diff <= 1e-12);
      // and the gradient is J v
      const auto g = hard_jacobian_gradient(ga, inst.v_probe);
      const auto jv = linalg::matvec<double>(j, inst.v_probe);
      CHECK(support::rel_diff(g, jv) <= 1e-12);
    }
  }
}

TEST_CASE("gradient error metric") {
  const Vector<double> g{3, 4};
  CHECK(gradient_error(g, g) == 0);
  CHECK(gradient_error(Vector<double>{6, 8}, g) == doctest::Approx(1));
  CHECK(std::isnan(gradient_error(Vector<double>{std::nan(""), 4}, g)));
  CHECK(std::isnan(gradient_error(Vector<double>{INFINITY, 4}, g)));
  // zero reference uses the 1e-12 floor
  CHECK(gradient_error(Vector<double>{1e-12, 0}, Vector<double>{0, 0}) == doctest::Approx(1));
}

TEST_CASE("doubling the probe leaves the error of a correct gradient unchanged") {
  const auto inst = generate_instance(6, 7, 3, 1.0, 2);
  const auto ga = inst.active_normals();
  const auto g = hard_jacobian_gradient(ga, inst.v_probe);
  Vector<double> v2 = inst.v_probe;
  for (double& x : v2) x *= 2;
  const auto g2 = hard_jacobian_gradient(ga, v2);
  // a slightly perturbed "computed" gradient, scaled along with the probe
  Vector<double> c = g, c2 = g2;
  c[0] += 1e-3;
  c2[0] += 2e-3;
  CHECK(gradient_error(c2, g2) == doctest::Approx(gradient_error(c, g)).epsilon(1e-12));
  CHECK(gradient_error(g2, g2) == 0);
}

TEST_CASE("size sweep dimensions") {
  CHECK(size_sweep_p(2) == 2);
  CHECK(size_sweep_p(6) == 7);
  CHECK(size_sweep_p(10) == 12);
  CHECK(size_sweep_p(38) == 47);
  CHECK(size_sweep_m(2, 0.2) == 1);
  CHECK(size_sweep_m(2, 0.8) == 1);
  CHECK(size_sweep_m(10, 0.6) == 6);
  CHECK(size_sweep_m(10, 0.8) == 8);
  CHECK(size_sweep_m(38, 0.2) == 8);
  const auto ds = SweepConfig::logspace(-2, 2, 21);
  REQUIRE(ds.size() == 21);
  CHECK(ds.front() == doctest::Approx(0.01));
  CHECK(ds[10] == doctest::Approx(1.0));
  CHECK(ds.back() == doctest::Approx(100.0));
}

TEST_CASE("default sweep grid matches the published lists") {
  const SweepConfig cfg;
  CHECK(cfg.sizes == std::vector<std::size_t>{2, 6, 10, 14, 18, 22, 26, 30, 34, 38});
  CHECK(cfg.m_ratios == std::vector<double>{0.2, 0.6, 0.8});
  CHECK(cfg.displacements.size() == 21);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(cfg.kappas.size() == 8);
  CHECK(cfg.kappa_ms == std::vector<std::size_t>{10, 12, 15});
  CHECK(cfg.kappa_n == 20);
  CHECK(cfg.kappa_p == 25);
  CHECK(cfg.kappa_relax == 1e-4);
  CHECK(cfg.tol == 1e-4);
  CHECK(cfg.max_iter == 100);
}

TEST_CASE("sweep cardinality, ordering and record invariants") {
  const auto cfg = small_config();
  const auto size = run_size_sweep(cfg);
  CHECK(size.size() == 2 * 2 * 2 * 3 * 2);
  const auto kap = run_kappa_sweep(cfg);
  CHECK(kap.size() == 2 * 2 * 1 * 3 * 2);
  for (const auto* recs : {&size, &kap}) {
    auto sorted = *recs;
    sort_records(sorted);
    for (std::size_t i = 0; i < recs->size(); ++i) {
      CHECK((*recs)[i].seed == sorted[i].seed);
      CHECK((*recs)[i].d == sorted[i].d);
    }
    for (const auto& r : *recs) {
      // grad_err is NaN exactly when a stage is set
      CHECK(std::isnan(r.grad_err) == (r.nan_stage != NanStage::None));
      CHECK(r.precision == Precision::F32);
    }
  }
  for (const auto& r : kap) {
    CHECK(r.n == 20);
    CHECK(r.p == 25);
    CHECK(r.m == 10);
  }
}

TEST_CASE("thread count does not change the records") {
  auto cfg = small_config();
  cfg.paradigms = {Paradigm::Implicit, Paradigm::Explicit};
  const auto one = run_size_sweep(cfg);
  cfg.threads = 3;
  const auto three = run_size_sweep(cfg);
  REQUIRE(one.size() == three.size());
  std::ostringstream a, b;
  write_csv(a, one);
  write_csv(b, three);
  CHECK(a.str() == b.str());
}

TEST_CASE("CSV round trip") {
  auto recs = run_size_sweep(small_config());
  SweepRecord failed;
  failed.paradigm = Paradigm::Explicit;
  failed.grad_err = std::nan("");
  failed.nan_stage = NanStage::Predictor;
  failed.status = Status::NumericalFailure;
  failed.d = 0.1 + 0.2;
  failed.kappa_relax = 1e-9;
  recs.push_back(failed);
  std::ostringstream os;
  write_csv(os, recs);
  const std::string text = os.str();
  CHECK(text.rfind("paradigm,precision,seed,n,p,m,d,kappa_relax,grad_err,nan_stage,iterations,status\n", 0) == 0);
  std::istringstream is(text);
  const auto back = read_csv(is);
  REQUIRE(back.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].paradigm == recs[i].paradigm);
    CHECK(back[i].precision == recs[i].precision);
    CHECK(back[i].seed == recs[i].seed);
    CHECK(back[i].n == recs[i].n);
    CHECK(back[i].p == recs[i].p);
    CHECK(back[i].m == recs[i].m);
    CHECK(same_bits({back[i].d}, {recs[i].d}));
    CHECK(same_bits({back[i].kappa_relax}, {recs[i].kappa_relax}));
    if (std::isnan(recs[i].grad_err))
      CHECK(std::isnan(back[i].grad_err));
    else
      CHECK(same_bits({back[i].grad_err}, {recs[i].grad_err}));
    CHECK(back[i].nan_stage == recs[i].nan_stage);
    CHECK(back[i].iterations == recs[i].iterations);
    CHECK(back[i].status == recs[i].status);
  }
  std::istringstream bad("paradigm,precision\nimplicit,f32\n");
  CHECK_THROWS_AS(read_csv(bad), Error);
}

TEST_CASE("summary groups and medians") {
  std::vector<SweepRecord> recs;
  for (double e : {1.0, 3.0, 2.0, std::nan("")}) {
    SweepRecord r;
    r.n = 6;
    r.m = 2;
    r.kappa_relax = 1e-4;
    r.grad_err = e;
    if (std::isnan(e)) r.nan_stage = NanStage::Relaxation;
    recs.push_back(r);
  }
  const auto groups = summarize(recs);
  REQUIRE(groups.size() == 1);
  CHECK(groups[0].count == 4);
  CHECK(groups[0].nan_count == 1);
  CHECK(groups[0].nan_rate() == doctest::Approx(0.25));
  CHECK(groups[0].median_err == 2.0);
  std::ostringstream os;
  print_summary(os, groups);
  CHECK(os.str().find("0.250") != std::string::npos);
}

TEST_CASE("clean double precision runs have no first-hit stage") {
  const auto inst = generate_instance(10, 12, 6, 1.0, 0);
  const auto res = implicit_ipm::solve_qp(inst.to_qp(), SolverConfig::defaults(Precision::F64));
  CHECK(nan_first_hit_trace(res.report) == NanStage::None);
  const auto ex = explicit_ipm::explicit_solve_qp(inst.to_qp(), SolverConfig::defaults(Precision::F64));
  CHECK(nan_first_hit_trace(ex.report) == NanStage::None);
  SolveReport failed;
  failed.nan_stage = NanStage::Predictor;
  CHECK(nan_first_hit_trace(failed) == NanStage::Predictor);
}

TEST_CASE("run_cell records failures instead of throwing") {
  const auto inst = generate_instance(20, 25, 15, SweepConfig::logspace(-2, 2, 21)[16], 0);
  CellOptions opts;
  const auto ex = run_cell(inst, Paradigm::Explicit, Precision::F32, opts);
  CHECK(ex.status == Status::NumericalFailure);
  CHECK(ex.nan_stage == NanStage::Predictor);
  CHECK(std::isnan(ex.grad_err));
  CHECK_FALSE(ex.detail.empty());
  const auto im = run_cell(inst, Paradigm::Implicit, Precision::F32, opts);
  CHECK(im.nan_stage == NanStage::None);
  CHECK(im.grad_err <= 1e-2);
}

TEST_CASE("double precision control arm: per-kappa medians agree within 2x") {
  SweepConfig cfg;
  cfg.precisions = {Precision::F64};
  cfg.explicit_factorization = explicit_ipm::Factorization::AugmentedLdlt;
  cfg.threads = 1;
  const auto recs = run_kappa_sweep(cfg);
  std::map<double, std::vector<double>> imp, exp;
  for (const auto& r : recs) {
    if (std::isnan(r.grad_err)) continue;
    (r.paradigm == Paradigm::Implicit ? imp : exp)[r.kappa_relax].push_back(r.grad_err);
  }
  REQUIRE(imp.size() == 8);
  REQUIRE(exp.size() == 8);
  for (const auto& [kappa, errs] : imp) {
    const double a = median(errs), b = median(exp[kappa]);
    INFO("kappa " << kappa << ": implicit " << a << ", explicit " << b);
    CHECK(std::max(a, b) <= 2 * std::min(a, b));
  }
}
