#include "iqp/io.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace iqp::io {

using nlohmann::json;

namespace {

json number(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json array(std::span<const double> v) {
  json out = json::array();
  for (double x : v) out.push_back(number(x));
  return out;
}

[[noreturn]] void field_error(std::string_view field, const std::string& what) {
  throw Error(ErrorCode::ParseError, "field '" + std::string(field) + "': " + what);
}

const json& require(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  if (it == obj.end()) field_error(key, "missing");
  return *it;
}

std::size_t read_count(const json& obj, std::string_view key) {
  const json& v = require(obj, key);
  if (!v.is_number_integer() || v.get<long long>() < 0) field_error(key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

double read_double(const json& v, std::string_view key) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) field_error(key, "expected a number");
  return v.get<double>();
}

Vector<double> read_array(const json& obj, std::string_view key, std::size_t expected) {
  const json& v = require(obj, key);
  if (!v.is_array()) field_error(key, "expected an array");
  if (v.size() != expected)
    throw Error(ErrorCode::DimensionMismatch, "field '" + std::string(key) + "': length " +
                                                  std::to_string(v.size()) + ", expected " + std::to_string(expected));
  Vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = read_double(v[i], key);
  return out;
}

Vector<double> read_optional_array(const json& obj, std::string_view key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) return {};
  Vector<double> out(it->size());
  for (std::size_t i = 0; i < it->size(); ++i) out[i] = read_double((*it)[i], key);
  return out;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // nlohmann reports "line L, column C" in the message.
    throw Error(ErrorCode::ParseError, std::string("malformed JSON: ") + e.what());
  }
}

const json& require_object(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "top level: expected a JSON object");
  return j;
}

template <typename E>
E read_enum(const json& obj, std::string_view key, std::optional<E> (*parse)(std::string_view), E fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_string()) field_error(key, "expected a string");
  const auto v = parse(it->get<std::string>());
  if (!v) field_error(key, "unknown value '" + it->get<std::string>() + "'");
  return *v;
}

}  // namespace

ProblemFile parse_problem(std::string_view text) {
  const json j = parse_json(text);
  require_object(j);
  ProblemFile out;
  QpProblem<double>& qp = out.qp;
  qp.n = read_count(j, "n");
  qp.m_eq = read_count(j, "m_eq");
  qp.p = read_count(j, "p");
  qp.Q = DenseMatrix<double>(qp.n, qp.n, read_array(j, "Q", qp.n * qp.n));
  qp.q = read_array(j, "q", qp.n);
  qp.A = DenseMatrix<double>(qp.m_eq, qp.n, read_array(j, "A", qp.m_eq * qp.n));
  qp.b = read_array(j, "b", qp.m_eq);
  qp.G = DenseMatrix<double>(qp.p, qp.n, read_array(j, "G", qp.p * qp.n));
  qp.h = read_array(j, "h", qp.p);
  if (j.contains("dl_dx")) out.dl_dx = read_array(j, "dl_dx", qp.n);
  for (const auto* v : {&qp.Q.data(), &qp.q, &qp.A.data(), &qp.b, &qp.G.data(), &qp.h})
    if (!linalg::all_finite<double>(*v)) throw Error(ErrorCode::ParseError, "problem data contains a non-finite entry");
  qp.validate();
  return out;
}

ProblemFile read_problem(const std::string& path) { return parse_problem(read_text(path)); }

std::string problem_to_json(const QpProblem<double>& qp, const std::optional<Vector<double>>& dl_dx) {
  json j;
  j["n"] = qp.n;
  j["m_eq"] = qp.m_eq;
  j["p"] = qp.p;
  j["Q"] = array(qp.Q.data());
  j["q"] = array(qp.q);
  j["A"] = array(qp.A.data());
  j["b"] = array(qp.b);
  j["G"] = array(qp.G.data());
  j["h"] = array(qp.h);
  if (dl_dx) j["dl_dx"] = array(*dl_dx);
  return j.dump(2) + "\n";
}

void write_problem(const std::string& path, const QpProblem<double>& qp, const std::optional<Vector<double>>& dl_dx) {
  write_text(path, problem_to_json(qp, dl_dx));
}

std::string solution_to_json(const SolutionFile& s) {
  json j;
  j["x"] = array(s.iterate.x);
  j["y"] = array(s.iterate.y);
  j["z"] = array(s.iterate.z);
  j["s"] = array(s.iterate.s);
  j["kappa"] = number(s.iterate.kappa);
  j["iterations"] = s.iterations;
  json r;
  r["r_t"] = array(s.residuals.r_t);
  r["r_e"] = array(s.residuals.r_e);
  r["r_i"] = array(s.residuals.r_i);
  if (!s.residuals.r_z.empty()) r["r_z"] = array(s.residuals.r_z);
  if (!s.residuals.r_s.empty()) r["r_s"] = array(s.residuals.r_s);
  if (!s.residuals.r_c.empty()) r["r_c"] = array(s.residuals.r_c);
  r["inf_norm"] = number(s.residual);
  j["residuals"] = r;
  j["status"] = to_string(s.status);
  j["nan_stage"] = to_string(s.nan_stage);
  if (!s.nan_detail.empty()) j["nan_detail"] = s.nan_detail;
  j["method"] = to_string(s.paradigm);
  j["precision"] = to_string(s.precision);
  return j.dump(2) + "\n";
}

SolutionFile parse_solution(std::string_view text) {
  const json j = parse_json(text);
  require_object(j);
  SolutionFile s;
  const auto len = [&](std::string_view key) {
    const json& v = require(j, key);
    if (!v.is_array()) field_error(key, "expected an array");
    return v.size();
  };
  s.iterate.x = read_array(j, "x", len("x"));
  s.iterate.y = read_array(j, "y", len("y"));
  s.iterate.z = read_array(j, "z", len("z"));
  s.iterate.s = read_array(j, "s", len("s"));
  if (s.iterate.z.size() != s.iterate.s.size()) throw Error(ErrorCode::DimensionMismatch, "solution: z and s lengths differ");
  s.iterate.v.resize(s.iterate.z.size());
  for (std::size_t i = 0; i < s.iterate.z.size(); ++i) s.iterate.v[i] = s.iterate.z[i] - s.iterate.s[i];
  s.iterate.kappa = read_double(require(j, "kappa"), "kappa");
  const json& it = require(j, "iterations");
  if (!it.is_number_integer()) field_error("iterations", "expected an integer");
  s.iterations = it.get<int>();
  const json& r = require(j, "residuals");
  if (!r.is_object()) field_error("residuals", "expected an object");
  s.residuals.r_t = read_optional_array(r, "r_t");
  s.residuals.r_e = read_optional_array(r, "r_e");
  s.residuals.r_i = read_optional_array(r, "r_i");
  s.residuals.r_z = read_optional_array(r, "r_z");
  s.residuals.r_s = read_optional_array(r, "r_s");
  s.residuals.r_c = read_optional_array(r, "r_c");
  if (r.contains("inf_norm")) s.residual = read_double(r["inf_norm"], "residuals.inf_norm");
  const auto status = parse_status(require(j, "status").is_string() ? j["status"].get<std::string>() : "");
  if (!status) field_error("status", "unknown value");
  s.status = *status;
  s.nan_stage = read_enum<NanStage>(j, "nan_stage", parse_nan_stage, NanStage::None);
  if (j.contains("nan_detail") && j["nan_detail"].is_string()) s.nan_detail = j["nan_detail"].get<std::string>();
  s.paradigm = read_enum<Paradigm>(j, "method", parse_paradigm, Paradigm::Implicit);
  s.precision = read_enum<Precision>(j, "precision", parse_precision, Precision::F64);
  return s;
}

std::string gradient_to_json(const GradientFile& g) {
  json j;
  j["n"] = g.n;
  j["m_eq"] = g.m_eq;
  j["p"] = g.p;
  if (g.bundle) {
    j["dQ"] = array(g.bundle->dQ.data());
    j["dq"] = array(g.bundle->dq);
    j["dA"] = array(g.bundle->dA.data());
    j["db"] = array(g.bundle->db);
    j["dG"] = array(g.bundle->dG.data());
    j["dh"] = array(g.bundle->dh);
  }
  j["kappa_relax"] = number(g.kappa_relax);
  j["status"] = to_string(g.status);
  j["nan_stage"] = to_string(g.nan_stage);
  if (!g.nan_detail.empty()) j["nan_detail"] = g.nan_detail;
  j["method"] = to_string(g.paradigm);
  j["precision"] = to_string(g.precision);
  return j.dump(2) + "\n";
}

GradientFile parse_gradient(std::string_view text) {
  const json j = parse_json(text);
  require_object(j);
  GradientFile g;
  g.n = read_count(j, "n");
  g.m_eq = read_count(j, "m_eq");
  g.p = read_count(j, "p");
  if (j.contains("dq")) {
    GradientBundle<double> b;
    b.dQ = DenseMatrix<double>(g.n, g.n, read_array(j, "dQ", g.n * g.n));
    b.dq = read_array(j, "dq", g.n);
    b.dA = DenseMatrix<double>(g.m_eq, g.n, read_array(j, "dA", g.m_eq * g.n));
    b.db = read_array(j, "db", g.m_eq);
    b.dG = DenseMatrix<double>(g.p, g.n, read_array(j, "dG", g.p * g.n));
    b.dh = read_array(j, "dh", g.p);
    g.bundle = std::move(b);
  }
  if (j.contains("kappa_relax")) g.kappa_relax = read_double(j["kappa_relax"], "kappa_relax");
  const auto status = parse_status(require(j, "status").is_string() ? j["status"].get<std::string>() : "");
  if (!status) field_error("status", "unknown value");
  g.status = *status;
  g.nan_stage = read_enum<NanStage>(j, "nan_stage", parse_nan_stage, NanStage::None);
  if (j.contains("nan_detail") && j["nan_detail"].is_string()) g.nan_detail = j["nan_detail"].get<std::string>();
  g.paradigm = read_enum<Paradigm>(j, "method", parse_paradigm, Paradigm::Implicit);
  g.precision = read_enum<Precision>(j, "precision", parse_precision, Precision::F64);
  return g;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::Io, "error reading '" + path + "'");
  return ss.str();
}

void write_text(const std::string& path, std::string_view text) {
  if (path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "error writing '" + path + "'");
}

}  // namespace iqp::io
