#include "iqp/bench.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

#include "iqp/implicit_ipm.hpp"

namespace iqp::bench {

namespace {

constexpr int kMaxRankRetries = 100;

// Cholesky of the Gram matrix G_A G_A^T; rejects pivots below 1e-10 of the
// largest diagonal entry.
std::optional<DenseMatrix<double>> gram_cholesky(const DenseMatrix<double>& ga) {
  const std::size_t m = ga.rows(), n = ga.cols();
  DenseMatrix<double> gram(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = 0;
      for (std::size_t k = 0; k < n; ++k) acc += ga(i, k) * ga(j, k);
      gram(i, j) = gram(j, i) = acc;
    }
  const double scale = gram.max_abs_diagonal();
  DenseMatrix<double> l = linalg::cholesky_nan_on_failure<double>(gram);
  for (std::size_t i = 0; i < m; ++i) {
    const double piv = l(i, i) * l(i, i);
    if (!std::isfinite(piv) || piv <= 1e-10 * scale) return std::nullopt;
  }
  return l;
}

Vector<double> normal_vector(std::mt19937_64& rng, std::size_t len) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector<double> out(len);
  for (double& x : out) x = normal(rng);
  return out;
}

void normalize(std::span<double> v) {
  const double nrm = linalg::norm2<double>(v);
  for (double& x : v) x /= nrm;
}

}  // namespace

QpProblem<double> ProjectionInstance::to_qp() const {
  QpProblem<double> qp;
  qp.n = n;
  qp.m_eq = 0;
  qp.p = p;
  qp.Q = DenseMatrix<double>::identity(n);
  qp.q.resize(n);
  for (std::size_t i = 0; i < n; ++i) qp.q[i] = -x_query[i];
  qp.A = DenseMatrix<double>(0, n);
  qp.G = G;
  qp.h = h;
  return qp;
}

DenseMatrix<double> ProjectionInstance::active_normals() const {
  DenseMatrix<double> ga(active_rows.size(), n);
  for (std::size_t r = 0; r < active_rows.size(); ++r)
    std::copy_n(G.row(active_rows[r]).begin(), n, ga.row(r).begin());
  return ga;
}

ProjectionInstance generate_instance(std::size_t n, std::size_t p, std::size_t m, double d, std::uint64_t seed) {
  if (n == 0 || m == 0 || m > std::min(n, p))
    throw Error(ErrorCode::InvalidArgument, "generate_instance: need 1 <= m <= min(n, p), got n=" +
                                                std::to_string(n) + " p=" + std::to_string(p) +
                                                " m=" + std::to_string(m));
  if (!(d > 0.0) || !std::isfinite(d)) throw Error(ErrorCode::InvalidArgument, "generate_instance: d must be positive");

  std::seed_seq seq{std::uint64_t(seed), std::uint64_t(n), std::uint64_t(p), std::uint64_t(m)};
  std::mt19937_64 rng(seq);

  ProjectionInstance inst;
  inst.n = n;
  inst.p = p;
  inst.m = m;
  inst.d = d;
  inst.seed = seed;
  inst.y0 = normal_vector(rng, n);

  bool full_rank = false;
  for (int attempt = 0; attempt < kMaxRankRetries && !full_rank; ++attempt) {
    inst.G = DenseMatrix<double>(p, n);
    for (std::size_t r = 0; r < p; ++r) {
      const Vector<double> row = normal_vector(rng, n);
      std::copy(row.begin(), row.end(), inst.G.row(r).begin());
      normalize(inst.G.row(r));
    }
    std::vector<std::size_t> idx(p);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), rng);
    inst.active_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(inst.active_rows.begin(), inst.active_rows.end());
    full_rank = gram_cholesky(inst.active_normals()).has_value();
  }
  if (!full_rank)
    throw Error(ErrorCode::RankDeficient, "generate_instance: no full-rank active set in " +
                                              std::to_string(kMaxRankRetries) + " draws");

  std::uniform_real_distribution<double> margin(0.5, 1.5);
  const Vector<double> gy = linalg::matvec<double>(inst.G, inst.y0);
  inst.h = gy;
  std::vector<bool> active(p, false);
  for (std::size_t r : inst.active_rows) active[r] = true;
  for (std::size_t r = 0; r < p; ++r)
    if (!active[r]) inst.h[r] += margin(rng);

  Vector<double> lambda(m);
  for (double& l : lambda) l = d * margin(rng);
  inst.x_query = inst.y0;
  const Vector<double> push = linalg::matvec_transposed<double>(inst.active_normals(), lambda);
  for (std::size_t i = 0; i < n; ++i) inst.x_query[i] += push[i];

  inst.v_probe = normal_vector(rng, n);
  normalize(inst.v_probe);
  return inst;
}

Vector<double> hard_jacobian_gradient(const DenseMatrix<double>& g_active, std::span<const double> v) {
  if (v.size() != g_active.cols()) throw Error(ErrorCode::DimensionMismatch, "hard_jacobian_gradient: probe length");
  Vector<double> out(v.begin(), v.end());
  if (g_active.rows() == 0) return out;
  const auto l = gram_cholesky(g_active);
  if (!l) throw Error(ErrorCode::RankDeficient, "hard_jacobian_gradient: active normals are rank deficient");
  const Vector<double> w = linalg::cholesky_solve<double>(*l, linalg::matvec<double>(g_active, v));
  const Vector<double> back = linalg::matvec_transposed<double>(g_active, w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= back[i];
  return out;
}

DenseMatrix<double> hard_jacobian(const DenseMatrix<double>& g_active) {
  const std::size_t n = g_active.cols();
  DenseMatrix<double> j(n, n);
  Vector<double> e(n, 0.0);
  for (std::size_t c = 0; c < n; ++c) {
    e[c] = 1.0;
    const Vector<double> col = hard_jacobian_gradient(g_active, e);
    for (std::size_t r = 0; r < n; ++r) j(r, c) = col[r];
    e[c] = 0.0;
  }
  return j;
}

double gradient_error(std::span<const double> g, std::span<const double> g_hard) {
  if (g.size() != g_hard.size()) throw Error(ErrorCode::DimensionMismatch, "gradient_error: length mismatch");
  if (!linalg::all_finite<double>(g)) return std::numeric_limits<double>::quiet_NaN();
  double diff = 0;
  for (std::size_t i = 0; i < g.size(); ++i) diff += (g[i] - g_hard[i]) * (g[i] - g_hard[i]);
  return std::sqrt(diff) / std::max(linalg::norm2<double>(g_hard), 1e-12);
}

namespace {

template <typename Real>
SweepRecord run_typed(const ProjectionInstance& inst, Paradigm paradigm, Precision precision,
                      const CellOptions& opts) {
  SweepRecord rec;
  rec.paradigm = paradigm;
  rec.precision = precision;
  rec.seed = inst.seed;
  rec.n = inst.n;
  rec.p = inst.p;
  rec.m = inst.m;
  rec.d = inst.d;
  rec.kappa_relax = opts.kappa_relax;

  SolverConfig cfg;
  cfg.tol = opts.tol;
  cfg.max_iter = opts.max_iter;
  cfg.sigma = opts.sigma;
  cfg.kappa_relax = opts.kappa_relax;
  cfg.tau_frac = opts.tau_frac;
  cfg.refine_steps = opts.refine_steps;
  cfg.precision = precision;

  const QpProblem<Real> qp = inst.to_qp().template cast<Real>();
  const Real kappa_relax = static_cast<Real>(opts.kappa_relax);
  const Vector<Real> probe = linalg::convert<Real>(inst.v_probe);

  auto fail = [&](const SolveReport& report) {
    rec.status = Status::NumericalFailure;
    rec.nan_stage = nan_first_hit_trace(report);
    if (rec.nan_stage == NanStage::None) rec.nan_stage = NanStage::Backward;
    rec.detail = report.nan_detail;
    rec.grad_err = std::numeric_limits<double>::quiet_NaN();
    return rec;
  };
  auto merge = [&](const SolveReport& report) {
    rec.iterations += report.iterations;
    if (report.status == Status::MaxIter) rec.status = Status::MaxIter;
  };

  GradientBundle<Real> bundle;
  SolveReport backward;
  backward.status = Status::Converged;
  if (paradigm == Paradigm::Implicit) {
    auto solved = implicit_ipm::solve_qp(qp, cfg);
    if (solved.report.status == Status::NumericalFailure) return fail(solved.report);
    merge(solved.report);
    auto relaxed = implicit_ipm::relax_qp<Real>(qp, solved.iterate, kappa_relax,
                                                solved.factor ? &*solved.factor : nullptr, cfg);
    if (relaxed.report.status == Status::NumericalFailure) return fail(relaxed.report);
    merge(relaxed.report);
    try {
      bundle = implicit_ipm::compute_qp_gradients<Real>(qp, relaxed.iterate, kappa_relax, probe, relaxed.factor);
    } catch (const Error& e) {
      backward.scan<double>(NanStage::Backward, std::numeric_limits<double>::quiet_NaN(), e.what());
      return fail(backward);
    }
  } else {
    auto solved = explicit_ipm::explicit_solve_qp(qp, cfg, opts.explicit_factorization);
    if (solved.report.status == Status::NumericalFailure) return fail(solved.report);
    merge(solved.report);
    auto relaxed = explicit_ipm::explicit_relax_qp<Real>(qp, solved.iterate, kappa_relax, cfg,
                                                         opts.explicit_factorization);
    if (relaxed.report.status == Status::NumericalFailure || !relaxed.factor) return fail(relaxed.report);
    merge(relaxed.report);
    try {
      bundle = explicit_ipm::explicit_compute_gradients<Real>(qp, relaxed.iterate, kappa_relax, probe,
                                                              *relaxed.factor);
    } catch (const Error& e) {
      backward.scan<double>(NanStage::Backward, std::numeric_limits<double>::quiet_NaN(), e.what());
      return fail(backward);
    }
  }

  // q = -x_query, so the gradient with respect to the query point is -dq.
  Vector<double> g(inst.n);
  for (std::size_t i = 0; i < inst.n; ++i) g[i] = -static_cast<double>(bundle.dq[i]);
  const Vector<double> g_hard = hard_jacobian_gradient(inst.active_normals(), inst.v_probe);
  rec.grad_err = gradient_error(g, g_hard);
  if (std::isnan(rec.grad_err)) {
    backward.scan<double>(NanStage::Backward, rec.grad_err, "gradient");
    return fail(backward);
  }
  return rec;
}

struct Task {
  std::size_t n, p, m;
  double d;
  std::uint64_t seed;
  Paradigm paradigm;
  Precision precision;
  CellOptions opts;
};

std::vector<SweepRecord> run_tasks(const std::vector<Task>& tasks, unsigned threads, const ProgressFn& progress) {
  std::vector<SweepRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& t = tasks[i];
      try {
        const ProjectionInstance inst = generate_instance(t.n, t.p, t.m, t.d, t.seed);
        out[i] = run_cell(inst, t.paradigm, t.precision, t.opts);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(tasks.size());
        return;
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, tasks.size());
      }
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(tasks.size(), 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  sort_records(out);
  return out;
}

CellOptions cell_options(const SweepConfig& cfg, double kappa_relax, double tol) {
  CellOptions o;
  o.kappa_relax = kappa_relax;
  o.tol = tol;
  o.max_iter = cfg.max_iter;
  o.sigma = cfg.sigma;
  o.tau_frac = cfg.tau_frac;
  o.refine_steps = cfg.refine_steps;
  o.explicit_factorization = cfg.explicit_factorization;
  return o;
}

}  // namespace

SweepRecord run_cell(const ProjectionInstance& inst, Paradigm paradigm, Precision precision,
                     const CellOptions& opts) {
  return precision == Precision::F32 ? run_typed<float>(inst, paradigm, precision, opts)
                                     : run_typed<double>(inst, paradigm, precision, opts);
}

std::vector<double> SweepConfig::logspace(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double e = count == 1 ? lo : lo + (hi - lo) * double(i) / double(count - 1);
    out[i] = std::pow(10.0, e);
  }
  return out;
}

std::size_t size_sweep_p(std::size_t n) { return (5 * n) / 4; }

std::size_t size_sweep_m(std::size_t n, double m_ratio) {
  const auto m = static_cast<long long>(std::llround(m_ratio * double(n)));
  const long long hi = std::max<long long>(1, static_cast<long long>(n) - 1);
  return static_cast<std::size_t>(std::clamp<long long>(m, 1, hi));
}

std::vector<SweepRecord> run_size_sweep(const SweepConfig& cfg, const ProgressFn& progress) {
  std::vector<Task> tasks;
  const CellOptions opts = cell_options(cfg, cfg.kappa_relax, cfg.tol);
  for (Paradigm paradigm : cfg.paradigms)
    for (Precision precision : cfg.precisions)
      for (std::size_t n : cfg.sizes)
        for (double ratio : cfg.m_ratios)
          for (double d : cfg.displacements)
            for (std::uint64_t seed : cfg.seeds)
              tasks.push_back({n, size_sweep_p(n), size_sweep_m(n, ratio), d, seed, paradigm, precision, opts});
  return run_tasks(tasks, cfg.threads, progress);
}

std::vector<SweepRecord> run_kappa_sweep(const SweepConfig& cfg, const ProgressFn& progress) {
  std::vector<Task> tasks;
  for (Paradigm paradigm : cfg.paradigms)
    for (Precision precision : cfg.precisions)
      for (double kappa : cfg.kappas) {
        const CellOptions opts = cell_options(cfg, kappa, std::min(kappa, 1e-4));
        for (std::size_t m : cfg.kappa_ms)
          for (double d : cfg.displacements)
            for (std::uint64_t seed : cfg.seeds)
              tasks.push_back({cfg.kappa_n, cfg.kappa_p, m, d, seed, paradigm, precision, opts});
      }
  return run_tasks(tasks, cfg.threads, progress);
}

void sort_records(std::vector<SweepRecord>& records) {
  auto key = [](const SweepRecord& r) {
    return std::make_tuple(int(r.paradigm), int(r.precision), r.n, r.m, -r.kappa_relax, r.d, r.seed);
  };
  std::stable_sort(records.begin(), records.end(),
                   [&](const SweepRecord& a, const SweepRecord& b) { return key(a) < key(b); });
}

NanStage nan_first_hit_trace(const SolveReport& report) { return report.nan_stage; }

namespace {

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* name) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size())
    throw Error(ErrorCode::ParseError, "csv line " + std::to_string(line) + ": bad " + name + " '" +
                                           std::string(field) + "'");
  return value;
}

constexpr const char* kCsvHeader = "paradigm,precision,seed,n,p,m,d,kappa_relax,grad_err,nan_stage,iterations,status";

}  // namespace

void write_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  os << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << to_string(r.paradigm) << ',' << to_string(r.precision) << ',' << r.seed << ',' << r.n << ',' << r.p
       << ',' << r.m << ',' << format_double(r.d) << ',' << format_double(r.kappa_relax) << ','
       << format_double(r.grad_err) << ',' << to_string(r.nan_stage) << ',' << r.iterations << ','
       << to_string(r.status) << '\n';
  }
}

std::vector<SweepRecord> read_csv(std::istream& is) {
  std::vector<SweepRecord> out;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line) || line != kCsvHeader)
    throw Error(ErrorCode::ParseError, "csv line 1: unexpected header");
  ++lineno;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> f;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      f.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (f.size() != 12) throw Error(ErrorCode::ParseError, "csv line " + std::to_string(lineno) + ": expected 12 fields");
    SweepRecord r;
    const auto paradigm = parse_paradigm(f[0]);
    const auto precision = parse_precision(f[1]);
    const auto stage = parse_nan_stage(f[9]);
    const auto status = parse_status(f[11]);
    if (!paradigm || !precision || !stage || !status)
      throw Error(ErrorCode::ParseError, "csv line " + std::to_string(lineno) + ": bad enum field");
    r.paradigm = *paradigm;
    r.precision = *precision;
    r.seed = parse_number<std::uint64_t>(f[2], lineno, "seed");
    r.n = parse_number<std::size_t>(f[3], lineno, "n");
    r.p = parse_number<std::size_t>(f[4], lineno, "p");
    r.m = parse_number<std::size_t>(f[5], lineno, "m");
    r.d = parse_number<double>(f[6], lineno, "d");
    r.kappa_relax = parse_number<double>(f[7], lineno, "kappa_relax");
    r.grad_err = parse_number<double>(f[8], lineno, "grad_err");
    r.nan_stage = *stage;
    r.iterations = parse_number<int>(f[10], lineno, "iterations");
    r.status = *status;
    out.push_back(r);
  }
  return out;
}

std::vector<GroupSummary> summarize(const std::vector<SweepRecord>& records) {
  std::vector<SweepRecord> sorted = records;
  sort_records(sorted);
  std::vector<GroupSummary> out;
  std::vector<double> errs;
  auto flush = [&] {
    if (out.empty()) return;
    GroupSummary& g = out.back();
    if (errs.empty()) {
      g.median_err = std::numeric_limits<double>::quiet_NaN();
    } else {
      std::sort(errs.begin(), errs.end());
      const std::size_t k = errs.size();
      g.median_err = k % 2 ? errs[k / 2] : 0.5 * (errs[k / 2 - 1] + errs[k / 2]);
    }
    errs.clear();
  };
  for (const auto& r : sorted) {
    const bool same = !out.empty() && out.back().paradigm == r.paradigm && out.back().precision == r.precision &&
                      out.back().n == r.n && out.back().m == r.m && out.back().kappa_relax == r.kappa_relax;
    if (!same) {
      flush();
      GroupSummary g;
      g.paradigm = r.paradigm;
      g.precision = r.precision;
      g.n = r.n;
      g.m = r.m;
      g.kappa_relax = r.kappa_relax;
      out.push_back(g);
    }
    GroupSummary& g = out.back();
    ++g.count;
    if (r.nan_stage != NanStage::None) ++g.nan_count;
    if (std::isfinite(r.grad_err)) errs.push_back(r.grad_err);
  }
  flush();
  return out;
}

void print_summary(std::ostream& os, const std::vector<GroupSummary>& groups) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-9s %-4s %4s %4s %11s %6s %9s %12s\n", "paradigm", "prec", "n", "m",
                "kappa_relax", "count", "nan_rate", "median_err");
  os << buf;
  for (const auto& g : groups) {
    std::snprintf(buf, sizeof(buf), "%-9s %-4s %4zu %4zu %11.1e %6zu %9.3f %12.4e\n", to_string(g.paradigm),
                  to_string(g.precision), g.n, g.m, g.kappa_relax, g.count, g.nan_rate(), g.median_err);
    os << buf;
  }
  for (Paradigm pd : {Paradigm::Implicit, Paradigm::Explicit})
    for (Precision pr : {Precision::F32, Precision::F64}) {
      std::size_t count = 0, nans = 0;
      for (const auto& g : groups)
        if (g.paradigm == pd && g.precision == pr) {
          count += g.count;
          nans += g.nan_count;
        }
      if (!count) continue;
      std::snprintf(buf, sizeof(buf), "total %-9s %-4s %6zu records, nan_rate %.3f\n", to_string(pd), to_string(pr),
                    count, double(nans) / double(count));
      os << buf;
    }
}

}  // namespace iqp::bench
