#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <json.hpp>

#include "iqp/driver.hpp"
#include "iqp/io.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace iqp;

namespace {

const std::string kData = IQP_TEST_DATA;

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  return a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Awkward doubles that need all 17 digits.
QpProblem<double> awkward_problem() {
  auto qp = support::to_problem(oracle::random_qp(11, 4, 2, 3));
  qp.q[0] = 0.1 + 0.2;
  qp.q[1] = 1.0 / 3.0;
  qp.h[0] = 5e-324;
  qp.b[1] = -1.7976931348623157e308;
  return qp;
}

}  // namespace

TEST_CASE("problem round trip is bit exact") {
  const auto qp = awkward_problem();
  const Vector<double> dl{1e-300, -0.0, 2.5, 1.0 / 7.0};
  const auto back = io::parse_problem(io::problem_to_json(qp, dl));
  CHECK(back.qp.n == 4);
  CHECK(back.qp.m_eq == 2);
  CHECK(back.qp.p == 3);
  CHECK(same_bits(back.qp.Q.data(), qp.Q.data()));
  CHECK(same_bits(back.qp.q, qp.q));
  CHECK(same_bits(back.qp.A.data(), qp.A.data()));
  CHECK(same_bits(back.qp.b, qp.b));
  CHECK(same_bits(back.qp.G.data(), qp.G.data()));
  CHECK(same_bits(back.qp.h, qp.h));
  REQUIRE(back.dl_dx);
  CHECK(same_bits(*back.dl_dx, dl));
  CHECK_FALSE(io::parse_problem(io::problem_to_json(qp)).dl_dx);
}

TEST_CASE("problem round trip through a file") {
  const auto path = (std::filesystem::temp_directory_path() / "iqp_io_roundtrip.json").string();
  const auto qp = awkward_problem();
  io::write_problem(path, qp);
  const auto back = io::read_problem(path);
  CHECK(same_bits(back.qp.Q.data(), qp.Q.data()));
  CHECK(same_bits(back.qp.h, qp.h));
  std::remove(path.c_str());
  CHECK(code_of([&] { io::read_problem(path); }) == ErrorCode::Io);
}

TEST_CASE("declared sizes must match array lengths") {
  const std::string wrong_q =
      R"({"n": 2, "m_eq": 0, "p": 0, "Q": [1, 0, 0], "q": [0, 0], "A": [], "b": [], "G": [], "h": []})";
  CHECK(code_of([&] { io::parse_problem(wrong_q); }) == ErrorCode::DimensionMismatch);
  CHECK(message_of([&] { io::parse_problem(wrong_q); }).find("Q") != std::string::npos);
  const std::string wrong_h =
      R"({"n": 1, "m_eq": 0, "p": 1, "Q": [1], "q": [0], "A": [], "b": [], "G": [1], "h": [1, 2]})";
  CHECK(code_of([&] { io::parse_problem(wrong_h); }) == ErrorCode::DimensionMismatch);
  const std::string wrong_dl =
      R"({"n": 1, "m_eq": 0, "p": 0, "Q": [1], "q": [0], "A": [], "b": [], "G": [], "h": [], "dl_dx": [1, 2]})";
  CHECK(code_of([&] { io::parse_problem(wrong_dl); }) == ErrorCode::DimensionMismatch);
}

TEST_CASE("parse errors carry a location") {
  const auto text = io::read_text(kData + "/malformed.json");
  CHECK(code_of([&] { io::parse_problem(text); }) == ErrorCode::ParseError);
  CHECK(message_of([&] { io::parse_problem(text); }).find("line") != std::string::npos);
  // schema problems name the field
  const std::string missing = R"({"n": 1, "m_eq": 0, "p": 0, "Q": [1], "A": [], "b": [], "G": [], "h": []})";
  CHECK(code_of([&] { io::parse_problem(missing); }) == ErrorCode::ParseError);
  CHECK(message_of([&] { io::parse_problem(missing); }).find("'q'") != std::string::npos);
  const std::string wrong_type =
      R"({"n": 1, "m_eq": 0, "p": 0, "Q": ["a"], "q": [0], "A": [], "b": [], "G": [], "h": []})";
  CHECK(code_of([&] { io::parse_problem(wrong_type); }) == ErrorCode::ParseError);
  const std::string negative =
      R"({"n": -1, "m_eq": 0, "p": 0, "Q": [], "q": [], "A": [], "b": [], "G": [], "h": []})";
  CHECK(code_of([&] { io::parse_problem(negative); }) == ErrorCode::ParseError);
  CHECK(code_of([&] { io::parse_problem("[1, 2]"); }) == ErrorCode::ParseError);
  // null is accepted only in outputs
  const std::string with_null =
      R"({"n": 1, "m_eq": 0, "p": 0, "Q": [null], "q": [0], "A": [], "b": [], "G": [], "h": []})";
  CHECK(code_of([&] { io::parse_problem(with_null); }) == ErrorCode::ParseError);
}

TEST_CASE("projection problem file solves to (1, 0)") {
  const auto file = io::read_problem(kData + "/projection.json");
  const auto sol = driver::solve(file.qp, driver::RunOptions::defaults(Precision::F64));
  CHECK(sol.status == Status::Converged);
  CHECK(sol.iterate.x[0] == doctest::Approx(1).epsilon(1e-8));
  CHECK(std::abs(sol.iterate.x[1]) <= 1e-8);
  CHECK(sol.iterate.z[0] == doctest::Approx(1).epsilon(1e-6));
}

TEST_CASE("solution round trip") {
  const auto qp = support::to_problem(oracle::random_qp(2, 5, 1, 4));
  for (auto paradigm : {Paradigm::Implicit, Paradigm::Explicit}) {
    for (auto precision : {Precision::F32, Precision::F64}) {
      auto opts = driver::RunOptions::defaults(precision);
      opts.paradigm = paradigm;
      const auto sol = driver::solve(qp, opts);
      const auto back = io::parse_solution(io::solution_to_json(sol));
      CHECK(same_bits(back.iterate.x, sol.iterate.x));
      CHECK(same_bits(back.iterate.y, sol.iterate.y));
      CHECK(same_bits(back.iterate.z, sol.iterate.z));
      CHECK(same_bits(back.iterate.s, sol.iterate.s));
      CHECK(back.iterate.kappa == sol.iterate.kappa);
      CHECK(back.status == sol.status);
      CHECK(back.iterations == sol.iterations);
      CHECK(back.paradigm == paradigm);
      CHECK(back.precision == precision);
      CHECK(same_bits(back.residuals.r_t, sol.residuals.r_t));
    }
  }
}

TEST_CASE("non-finite values are written as null and read back as NaN") {
  io::SolutionFile sol;
  sol.iterate.x = {1.0, std::nan(""), INFINITY};
  sol.status = Status::NumericalFailure;
  sol.nan_stage = NanStage::Predictor;
  sol.nan_detail = "dz";
  const auto text = io::solution_to_json(sol);
  const auto j = nlohmann::json::parse(text);
  CHECK(j["x"][0] == 1.0);
  CHECK(j["x"][1].is_null());
  CHECK(j["x"][2].is_null());
  const auto back = io::parse_solution(text);
  REQUIRE(back.iterate.x.size() == 3);
  CHECK(back.iterate.x[0] == 1.0);
  CHECK(std::isnan(back.iterate.x[1]));
  CHECK(std::isnan(back.iterate.x[2]));
  CHECK(back.nan_stage == NanStage::Predictor);
  CHECK(back.nan_detail == "dz");
}

TEST_CASE("gradient round trip") {
  const auto file = io::read_problem(kData + "/unconstrained.json");
  REQUIRE(file.dl_dx);
  const auto g = driver::differentiate(file.qp, *file.dl_dx, driver::RunOptions::defaults(Precision::F64));
  REQUIRE(g.bundle);
  // Q = 2I, dl_dx = (2, 0): dl/dq = -Q^{-1} dl_dx = (-1, 0)
  CHECK(g.bundle->dq[0] == doctest::Approx(-1).epsilon(1e-12));
  CHECK(std::abs(g.bundle->dq[1]) <= 1e-12);
  const auto back = io::parse_gradient(io::gradient_to_json(g));
  REQUIRE(back.bundle);
  CHECK(back.n == 2);
  CHECK(same_bits(back.bundle->dQ.data(), g.bundle->dQ.data()));
  CHECK(same_bits(back.bundle->dq, g.bundle->dq));
  CHECK(same_bits(back.bundle->dG.data(), g.bundle->dG.data()));
  CHECK(back.kappa_relax == g.kappa_relax);

  io::GradientFile failed;
  failed.n = 2;
  failed.status = Status::NumericalFailure;
  failed.nan_stage = NanStage::Backward;
  const auto fb = io::parse_gradient(io::gradient_to_json(failed));
  CHECK_FALSE(fb.bundle);
  CHECK(fb.nan_stage == NanStage::Backward);
}

TEST_CASE("text helpers") {
  const auto path = (std::filesystem::temp_directory_path() / "iqp_io_text.txt").string();
  io::write_text(path, "abc\n");
  CHECK(io::read_text(path) == "abc\n");
  std::remove(path.c_str());
  CHECK(code_of([] { io::write_text("/nonexistent-dir/x.json", "x"); }) == ErrorCode::Io);
}
