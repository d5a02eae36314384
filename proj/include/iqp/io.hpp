#pragma once

// JSON encodings for problems, solutions and gradient bundles. Matrices are
// row-major flat arrays; doubles are written in shortest round-trip form and
// non-finite values as null.

#include <optional>
#include <string>
#include <string_view>

#include "iqp/qp_model.hpp"

namespace iqp::io {

struct ProblemFile {
  QpProblem<double> qp;
  std::optional<Vector<double>> dl_dx;  ///< loss gradient for `grad`, if present
};

/// Throws ParseError (with line and column, or the offending field) and
/// DimensionMismatch.
ProblemFile parse_problem(std::string_view json);
ProblemFile read_problem(const std::string& path);

std::string problem_to_json(const QpProblem<double>& qp, const std::optional<Vector<double>>& dl_dx = std::nullopt);
void write_problem(const std::string& path, const QpProblem<double>& qp,
                   const std::optional<Vector<double>>& dl_dx = std::nullopt);

struct SolutionFile {
  Iterate<double> iterate;
  Residuals<double> residuals;
  Status status = Status::Converged;
  int iterations = 0;
  double residual = 0;
  NanStage nan_stage = NanStage::None;
  std::string nan_detail;
  Paradigm paradigm = Paradigm::Implicit;
  Precision precision = Precision::F64;
};

std::string solution_to_json(const SolutionFile& s);
SolutionFile parse_solution(std::string_view json);

struct GradientFile {
  std::size_t n = 0;
  std::size_t m_eq = 0;
  std::size_t p = 0;
  std::optional<GradientBundle<double>> bundle;  ///< absent when differentiation failed
  Status status = Status::Converged;
  NanStage nan_stage = NanStage::None;
  std::string nan_detail;
  double kappa_relax = 0;
  Paradigm paradigm = Paradigm::Implicit;
  Precision precision = Precision::F64;
};

std::string gradient_to_json(const GradientFile& g);
GradientFile parse_gradient(std::string_view json);

/// Reads a whole file; throws Io.
std::string read_text(const std::string& path);
/// Writes a whole file, or standard output for "-"; throws Io.
void write_text(const std::string& path, std::string_view text);

}  // namespace iqp::io
