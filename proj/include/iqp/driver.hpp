#pragma once

// Precision and paradigm dispatch for whole solve and differentiate runs.
// Problems come in as double and are cast to the working precision; results
// are widened back to double.

#include <optional>
#include <span>

#include "iqp/explicit_ipm.hpp"
#include "iqp/io.hpp"
#include "iqp/qp_model.hpp"

namespace iqp::driver {

struct RunOptions {
  Paradigm paradigm = Paradigm::Implicit;
  SolverConfig config;  ///< config.precision selects the working precision
  explicit_ipm::Factorization explicit_factorization = explicit_ipm::Factorization::CondensedCholesky;

  static RunOptions defaults(Precision precision);
};

/// Runs the solver and evaluates the final residuals. Throws only on
/// malformed input (DimensionMismatch, InvalidArgument).
io::SolutionFile solve(const QpProblem<double>& qp, const RunOptions& opts);

/// Solve, relax to opts.config.kappa_relax, and differentiate with loss
/// gradient dl_dx. A failure in any stage is reported in the result with
/// bundle left empty; MaxIter in solve or relax still yields a bundle.
io::GradientFile differentiate(const QpProblem<double>& qp, std::span<const double> dl_dx, const RunOptions& opts);

}  // namespace iqp::driver
