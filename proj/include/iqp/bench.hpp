#pragma once

// Polytope-projection benchmark: Pi(x) = argmin_y 1/2 ||y - x||^2 s.t. G y <= h,
// i.e. Q = I, q = -x. Instances are built so the projection of x_query is a
// known point y0 with a known active set, which gives an exact reference
// Jacobian to compare differentiated solvers against.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "iqp/explicit_ipm.hpp"
#include "iqp/linalg.hpp"
#include "iqp/qp_model.hpp"

namespace iqp::bench {

struct ProjectionInstance {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t m = 0;
  DenseMatrix<double> G;
  Vector<double> h;
  Vector<double> x_query;
  Vector<double> y0;
  std::vector<std::size_t> active_rows;  ///< sorted
  Vector<double> v_probe;
  double d = 0;
  std::uint64_t seed = 0;

  /// Q = I, q = -x_query, no equalities.
  QpProblem<double> to_qp() const;
  /// Rows of G in active_rows.
  DenseMatrix<double> active_normals() const;
};

/// Deterministic in (n, p, m, d, seed). The geometry (G, h, y0, active set,
/// probe, xi) depends only on (n, p, m, seed), so a sweep over d moves the
/// query point along a fixed ray. Throws InvalidArgument on bad sizes and
/// RankDeficient if no full-rank active set turns up in 100 draws.
ProjectionInstance generate_instance(std::size_t n, std::size_t p, std::size_t m, double d, std::uint64_t seed);

/// (I - G_A^T (G_A G_A^T)^{-1} G_A) v. Throws RankDeficient.
Vector<double> hard_jacobian_gradient(const DenseMatrix<double>& g_active, std::span<const double> v);

/// The projector itself, for property checks.
DenseMatrix<double> hard_jacobian(const DenseMatrix<double>& g_active);

/// ||g - g_hard||_2 / max(||g_hard||_2, 1e-12); NaN if g has a non-finite entry.
double gradient_error(std::span<const double> g, std::span<const double> g_hard);

struct SweepRecord {
  Paradigm paradigm = Paradigm::Implicit;
  Precision precision = Precision::F32;
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t m = 0;
  double d = 0;
  double kappa_relax = 0;
  double grad_err = 0;
  NanStage nan_stage = NanStage::None;
  int iterations = 0;
  Status status = Status::Converged;
  std::string detail;  ///< failure message, not written to CSV
};

struct CellOptions {
  double kappa_relax = 1e-4;
  double tol = 1e-4;
  int max_iter = 100;
  double sigma = 0.1;
  double tau_frac = 0.99;
  int refine_steps = -1;
  explicit_ipm::Factorization explicit_factorization = explicit_ipm::Factorization::CondensedCholesky;
};

/// Solve, relax and differentiate one instance; never throws on numerical
/// failure, which is recorded instead.
SweepRecord run_cell(const ProjectionInstance& inst, Paradigm paradigm, Precision precision,
                     const CellOptions& opts);

struct SweepConfig {
  std::vector<Paradigm> paradigms{Paradigm::Implicit, Paradigm::Explicit};
  std::vector<Precision> precisions{Precision::F32};
  std::vector<std::size_t> sizes{2, 6, 10, 14, 18, 22, 26, 30, 34, 38};
  std::vector<double> m_ratios{0.2, 0.6, 0.8};
  std::size_t kappa_n = 20;
  std::size_t kappa_p = 25;
  std::vector<std::size_t> kappa_ms{10, 12, 15};
  std::vector<double> kappas{1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9};
  std::vector<double> displacements = logspace(-2.0, 2.0, 21);
  std::vector<std::uint64_t> seeds{0, 1, 2};
  double kappa_relax = 1e-4;  ///< size sweep
  double tol = 1e-4;          ///< size sweep; the kappa sweep uses min(kappa_relax, 1e-4)
  int max_iter = 100;
  double sigma = 0.1;
  double tau_frac = 0.99;
  int refine_steps = -1;
  explicit_ipm::Factorization explicit_factorization = explicit_ipm::Factorization::CondensedCholesky;
  unsigned threads = 0;  ///< 0: hardware concurrency

  static std::vector<double> logspace(double lo, double hi, std::size_t count);
};

/// p = floor(1.25 n), m = clamp(round(m_ratio n), 1, n - 1).
std::size_t size_sweep_p(std::size_t n);
std::size_t size_sweep_m(std::size_t n, double m_ratio);

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

std::vector<SweepRecord> run_size_sweep(const SweepConfig& cfg, const ProgressFn& progress = {});
std::vector<SweepRecord> run_kappa_sweep(const SweepConfig& cfg, const ProgressFn& progress = {});

/// Sorted by (paradigm, precision, n, m, kappa_relax, d, seed).
void sort_records(std::vector<SweepRecord>& records);

NanStage nan_first_hit_trace(const SolveReport& report);

void write_csv(std::ostream& os, const std::vector<SweepRecord>& records);
std::vector<SweepRecord> read_csv(std::istream& is);

struct GroupSummary {
  Paradigm paradigm = Paradigm::Implicit;
  Precision precision = Precision::F32;
  std::size_t n = 0;
  std::size_t m = 0;
  double kappa_relax = 0;
  std::size_t count = 0;
  std::size_t nan_count = 0;
  double median_err = 0;  ///< over finite errors; NaN when every record failed

  double nan_rate() const { return count ? double(nan_count) / double(count) : 0.0; }
};

/// One group per (paradigm, precision, n, m, kappa_relax), in sort order.
std::vector<GroupSummary> summarize(const std::vector<SweepRecord>& records);

void print_summary(std::ostream& os, const std::vector<GroupSummary>& groups);

}  // namespace iqp::bench
