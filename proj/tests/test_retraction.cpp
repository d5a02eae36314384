#include <doctest.h>

#include <cmath>
#include <limits>

#include "iqp/retraction.hpp"
#include "oracles.hpp"

using namespace iqp;
using namespace iqp::retraction;

namespace {

std::vector<double> log_grid() {
  std::vector<double> out;
  for (int i = 0; i <= 40; ++i) {
    const double mag = std::pow(10.0, -8.0 + 16.0 * i / 40.0);
    out.push_back(mag);
    out.push_back(-mag);
  }
  return out;
}

const double kKappas[] = {1e-9, 1e-6, 1e-4, 1e-2, 1.0};

}  // namespace

TEST_CASE("retract at v = 0") {
  const std::vector<double> v{0.0};
  auto r = retract<double>(v, 1.0);
  CHECK(r.z[0] == 1.0);
  CHECK(r.s[0] == 1.0);
  r = retract<double>(v, 0.25);
  CHECK(r.z[0] == 0.5);
  CHECK(r.s[0] == 0.5);
  CHECK(r.z[0] * r.s[0] == 0.25);
}

TEST_CASE("retract far on the negative side matches the extended oracle") {
  const std::vector<double> v{-1e6};
  const auto r = retract<double>(v, 1.0);
  const long double z_ref = 2.0L / (std::sqrt(1e12L + 4.0L) + 1e6L);
  const long double s_ref = oracle::softplus(1e6L, 1.0L);
  CHECK(std::fabs(r.z[0] - z_ref) / z_ref <= 1e-12L);
  CHECK(std::fabs(r.s[0] - s_ref) / s_ref <= 1e-12L);
  CHECK(r.z[0] == doctest::Approx(1e-6).epsilon(1e-6));
}

TEST_CASE("single-branch formula loses the small root in single precision") {
  const long double ref = oracle::softplus(-1e6L, 1.0L);
  const float safe = softplus<float>(-1e6f, 1.0f);
  const float naive = softplus_naive<float>(-1e6f, 1.0f);
  CHECK(std::fabs(safe - ref) / ref <= 1e-5L);
  CHECK(std::fabs(naive - ref) / ref > 1e-5L);
}

TEST_CASE("derivatives at v = 0") {
  const std::vector<double> v{0.0};
  for (double k : kKappas) {
    const auto e = retract_derivatives<double>(v, k);
    CHECK(e.d_plus[0] == 0.5);
    CHECK(e.d_minus[0] == 0.5);
  }
  const auto e = retract_derivatives<double>(v, 1.0);
  const double h = 1e-6;
  const double fd = (softplus(0.0, 1.0 + h) - softplus(0.0, 1.0 - h)) / (2 * h);
  CHECK(e.c[0] == doctest::Approx(0.5));
  CHECK(e.c[0] == doctest::Approx(fd).epsilon(1e-8));
}

TEST_CASE("derivative identity at v = 3, kappa = 1e-4") {
  const std::vector<double> v{3.0};
  const auto e = retract_derivatives<double>(v, 1e-4);
  CHECK(std::abs(e.d_plus[0] + e.d_minus[0] - 1.0) <= 4 * std::numeric_limits<double>::epsilon());
}

TEST_CASE("product identity over the log grid") {
  const auto grid = log_grid();
  for (double k : kKappas) {
    const auto r64 = retract<double>(grid, k);
    const std::vector<float> gf(grid.begin(), grid.end());
    const auto r32 = retract<float>(gf, float(k));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const long double p64 = static_cast<long double>(r64.z[i]) * r64.s[i];
      CHECK(std::fabs(p64 - k) / k <= 1e-12L);
      const long double p32 = static_cast<long double>(r32.z[i]) * r32.s[i];
      const long double k32 = float(k);
      CHECK(std::fabs(p32 - k32) / k32 <= 1e-5L);
    }
  }
}

TEST_CASE("derivative properties over the log grid") {
  const auto grid = log_grid();
  const double eps = std::numeric_limits<double>::epsilon();
  for (double k : kKappas) {
    const auto e = retract_derivatives<double>(grid, k);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(std::abs(e.d_plus[i] + e.d_minus[i] - 1.0) <= 4 * eps);
      CHECK(e.d_plus[i] > 0);
      CHECK(e.d_plus[i] <= 1);
      CHECK(e.d_minus[i] > 0);
      CHECK(e.d_minus[i] <= 1);
      CHECK(e.b_plus[i] > 0);
      CHECK(e.b_minus[i] > 0);
      // b(v) - b(-v) = v
      const double big = std::max(e.b_plus[i], e.b_minus[i]);
      CHECK(std::abs((e.b_plus[i] - e.b_minus[i]) - grid[i]) <= 4 * eps * big);
    }
  }
}

TEST_CASE("derivatives agree with the long-double oracle and with central differences") {
  for (double k : {1e-4, 1e-2, 1.0}) {
    for (double v : {-3.0, -0.5, -1e-3, 0.0, 2e-3, 0.7, 5.0}) {
      const std::vector<double> vv{v};
      const auto e = retract_derivatives<double>(vv, k);
      CHECK(e.d_plus[0] == doctest::Approx(double(oracle::softplus_dw(v, k))).epsilon(1e-13));
      CHECK(e.d_minus[0] == doctest::Approx(double(oracle::softplus_dw(-v, k))).epsilon(1e-13));
      CHECK(e.c[0] == doctest::Approx(double(oracle::softplus_dk(v, k))).epsilon(1e-13));
      const double h = 1e-6 * std::max(1.0, std::abs(v));
      const double fd_v = (softplus(v + h, k) - softplus(v - h, k)) / (2 * h);
      const double hk = 1e-3 * k;
      const double fd_k = (softplus(v, k + hk) - softplus(v, k - hk)) / (2 * hk);
      CHECK(e.d_plus[0] == doctest::Approx(fd_v).epsilon(1e-6));
      CHECK(e.c[0] == doctest::Approx(fd_k).epsilon(1e-6));
    }
  }
}

TEST_CASE("b is strictly increasing") {
  const auto grid = log_grid();
  std::vector<double> sorted = grid;
  std::sort(sorted.begin(), sorted.end());
  for (double k : kKappas) {
    const auto r = retract<double>(sorted, k);
    for (std::size_t i = 1; i < sorted.size(); ++i) CHECK(r.z[i] > r.z[i - 1]);
  }
}

TEST_CASE("invalid kappa") {
  const std::vector<double> v{1.0};
  for (double k : {0.0, -1.0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::quiet_NaN()}) {
    CHECK_THROWS_AS(retract<double>(v, k), Error);
    CHECK_THROWS_AS(retract_derivatives<double>(v, k), Error);
    try {
      check_kappa(k);
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidKappa);
    }
  }
}

TEST_CASE("outputs stay positive and finite at extreme arguments") {
  const std::vector<double> v{-1e300, -1e150, 1e150, 1e300};
  const auto r = retract<double>(v, 1e-9);
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(std::isfinite(r.z[i]));
    CHECK(std::isfinite(r.s[i]));
    CHECK(r.z[i] >= 0);
    CHECK(r.s[i] >= 0);
  }
}
