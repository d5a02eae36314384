#include "iqp/iqp.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <string>

#include "iqp/bench.hpp"
#include "iqp/driver.hpp"
#include "iqp/io.hpp"
#include "iqp/selftest.hpp"

struct iqp_problem {
  iqp::io::ProblemFile file;
};

struct iqp_solution {
  iqp::io::SolutionFile result;
};

struct iqp_gradient {
  iqp::io::GradientFile result;
};

struct iqp_sweep {
  std::vector<iqp::bench::SweepRecord> records;
};

namespace {

thread_local std::string last_error;

int code_of(iqp::ErrorCode c) {
  using iqp::ErrorCode;
  switch (c) {
    case ErrorCode::DimensionMismatch: return IQP_ERR_DIMENSION_MISMATCH;
    case ErrorCode::SingularMatrix: return IQP_ERR_SINGULAR_MATRIX;
    case ErrorCode::ParseError: return IQP_ERR_PARSE;
    case ErrorCode::InvalidKappa: return IQP_ERR_INVALID_KAPPA;
    case ErrorCode::NonFiniteStep: return IQP_ERR_NON_FINITE_STEP;
    case ErrorCode::RankDeficient: return IQP_ERR_RANK_DEFICIENT;
    case ErrorCode::MaxIter: return IQP_ERR_MAX_ITER;
    case ErrorCode::InvalidArgument: return IQP_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return IQP_ERR_IO;
  }
  return IQP_ERR_INTERNAL;
}

int fail(int code, std::string msg) {
  last_error = std::move(msg);
  return code;
}

template <typename F>
int guard(F&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const iqp::Error& e) {
    return fail(code_of(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(IQP_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(IQP_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(IQP_ERR_INTERNAL, "unknown exception");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

#define IQP_REQUIRE(cond, what) \
  if (!(cond)) return fail(IQP_ERR_INVALID_ARGUMENT, what)

iqp::driver::RunOptions to_run_options(const iqp_options* o) {
  using namespace iqp;
  if (o->precision != IQP_F32 && o->precision != IQP_F64) throw Error(ErrorCode::InvalidArgument, "unknown precision");
  if (o->method != IQP_IMPLICIT && o->method != IQP_EXPLICIT) throw Error(ErrorCode::InvalidArgument, "unknown method");
  if (o->factorization != IQP_CONDENSED_CHOLESKY && o->factorization != IQP_AUGMENTED_LDLT)
    throw Error(ErrorCode::InvalidArgument, "unknown factorization");
  driver::RunOptions r;
  r.paradigm = o->method == IQP_IMPLICIT ? Paradigm::Implicit : Paradigm::Explicit;
  r.explicit_factorization = o->factorization == IQP_CONDENSED_CHOLESKY
                                 ? explicit_ipm::Factorization::CondensedCholesky
                                 : explicit_ipm::Factorization::AugmentedLdlt;
  r.config.precision = o->precision == IQP_F32 ? Precision::F32 : Precision::F64;
  r.config.tol = o->tol;
  r.config.max_iter = o->max_iter;
  r.config.sigma = o->sigma;
  r.config.kappa_relax = o->kappa_relax;
  r.config.tau_frac = o->tau_frac;
  r.config.refine_steps = o->refine_steps;
  r.config.validate();
  return r;
}

int status_code(iqp::Status s) {
  switch (s) {
    case iqp::Status::Converged: return IQP_CONVERGED;
    case iqp::Status::MaxIter: return IQP_MAX_ITER;
    case iqp::Status::NumericalFailure: return IQP_NUMERICAL_FAILURE;
  }
  return IQP_NUMERICAL_FAILURE;
}

iqp::Vector<double> copy_in(const double* p, std::size_t len) {
  return p ? iqp::Vector<double>(p, p + len) : iqp::Vector<double>(len, 0.0);
}

int copy_out(const iqp::Vector<double>& v, double* out, std::size_t len) {
  if (len != v.size())
    return fail(IQP_ERR_DIMENSION_MISMATCH,
                "buffer length " + std::to_string(len) + ", expected " + std::to_string(v.size()));
  if (len) std::memcpy(out, v.data(), len * sizeof(double));
  return IQP_OK;
}

}  // namespace

extern "C" {

void iqp_options_default(iqp_options* opts, int precision) {
  if (!opts) return;
  const auto cfg = iqp::SolverConfig::defaults(precision == IQP_F32 ? iqp::Precision::F32 : iqp::Precision::F64);
  opts->precision = precision == IQP_F32 ? IQP_F32 : IQP_F64;
  opts->method = IQP_IMPLICIT;
  opts->factorization = IQP_CONDENSED_CHOLESKY;
  opts->tol = cfg.tol;
  opts->max_iter = cfg.max_iter;
  opts->sigma = cfg.sigma;
  opts->kappa_relax = cfg.kappa_relax;
  opts->tau_frac = cfg.tau_frac;
  opts->refine_steps = cfg.refine_steps;
}

const char* iqp_last_error(void) { return last_error.c_str(); }

const char* iqp_error_name(int code) {
  switch (code) {
    case IQP_OK: return "ok";
    case IQP_ERR_DIMENSION_MISMATCH: return "DimensionMismatch";
    case IQP_ERR_SINGULAR_MATRIX: return "SingularMatrix";
    case IQP_ERR_PARSE: return "ParseError";
    case IQP_ERR_INVALID_KAPPA: return "InvalidKappa";
    case IQP_ERR_NON_FINITE_STEP: return "NonFiniteStep";
    case IQP_ERR_RANK_DEFICIENT: return "RankDeficient";
    case IQP_ERR_MAX_ITER: return "MaxIter";
    case IQP_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case IQP_ERR_IO: return "Io";
    default: return "Internal";
  }
}

const char* iqp_status_name(int status) {
  switch (status) {
    case IQP_CONVERGED: return iqp::to_string(iqp::Status::Converged);
    case IQP_MAX_ITER: return iqp::to_string(iqp::Status::MaxIter);
    default: return iqp::to_string(iqp::Status::NumericalFailure);
  }
}

const char* iqp_nan_stage_name(int stage) {
  if (stage < IQP_STAGE_NONE || stage > IQP_STAGE_BACKWARD) return "unknown";
  return iqp::to_string(static_cast<iqp::NanStage>(stage));
}

void iqp_string_free(char* s) { std::free(s); }

int iqp_problem_load(const char* path, iqp_problem** out) {
  IQP_REQUIRE(path && out, "iqp_problem_load: null argument");
  return guard([&]() -> int {
    *out = new iqp_problem{iqp::io::read_problem(path)};
    return IQP_OK;
  });
}

int iqp_problem_parse(const char* json, iqp_problem** out) {
  IQP_REQUIRE(json && out, "iqp_problem_parse: null argument");
  return guard([&]() -> int {
    *out = new iqp_problem{iqp::io::parse_problem(json)};
    return IQP_OK;
  });
}

int iqp_problem_create(size_t n, size_t m_eq, size_t p, const double* Q, const double* q, const double* A,
                       const double* b, const double* G, const double* h, iqp_problem** out) {
  IQP_REQUIRE(out && Q && q, "iqp_problem_create: null argument");
  IQP_REQUIRE((m_eq == 0 || (A && b)) && (p == 0 || (G && h)), "iqp_problem_create: missing constraint data");
  return guard([&]() -> int {
    using iqp::DenseMatrix;
    iqp::io::ProblemFile f;
    f.qp.n = n;
    f.qp.m_eq = m_eq;
    f.qp.p = p;
    f.qp.Q = DenseMatrix<double>(n, n, copy_in(Q, n * n));
    f.qp.q = copy_in(q, n);
    f.qp.A = DenseMatrix<double>(m_eq, n, copy_in(A, m_eq * n));
    f.qp.b = copy_in(b, m_eq);
    f.qp.G = DenseMatrix<double>(p, n, copy_in(G, p * n));
    f.qp.h = copy_in(h, p);
    f.qp.validate();
    *out = new iqp_problem{std::move(f)};
    return IQP_OK;
  });
}

int iqp_problem_dims(const iqp_problem* problem, size_t* n, size_t* m_eq, size_t* p) {
  IQP_REQUIRE(problem, "iqp_problem_dims: null problem");
  if (n) *n = problem->file.qp.n;
  if (m_eq) *m_eq = problem->file.qp.m_eq;
  if (p) *p = problem->file.qp.p;
  return IQP_OK;
}

int iqp_problem_set_dl_dx(iqp_problem* problem, const double* dl_dx, size_t len) {
  IQP_REQUIRE(problem && dl_dx, "iqp_problem_set_dl_dx: null argument");
  if (len != problem->file.qp.n) return fail(IQP_ERR_DIMENSION_MISMATCH, "iqp_problem_set_dl_dx: length mismatch");
  problem->file.dl_dx = iqp::Vector<double>(dl_dx, dl_dx + len);
  return IQP_OK;
}

int iqp_problem_has_dl_dx(const iqp_problem* problem, int* has) {
  IQP_REQUIRE(problem && has, "iqp_problem_has_dl_dx: null argument");
  *has = problem->file.dl_dx.has_value();
  return IQP_OK;
}

int iqp_problem_to_json(const iqp_problem* problem, char** out) {
  IQP_REQUIRE(problem && out, "iqp_problem_to_json: null argument");
  return guard([&]() -> int {
    *out = dup_string(iqp::io::problem_to_json(problem->file.qp, problem->file.dl_dx));
    return IQP_OK;
  });
}

void iqp_problem_free(iqp_problem* problem) { delete problem; }

int iqp_solve(const iqp_problem* problem, const iqp_options* opts, iqp_solution** out) {
  IQP_REQUIRE(problem && opts && out, "iqp_solve: null argument");
  return guard([&]() -> int {
    *out = new iqp_solution{iqp::driver::solve(problem->file.qp, to_run_options(opts))};
    return IQP_OK;
  });
}

int iqp_solution_status(const iqp_solution* sol, int* status, int* iterations, double* residual) {
  IQP_REQUIRE(sol, "iqp_solution_status: null solution");
  if (status) *status = status_code(sol->result.status);
  if (iterations) *iterations = sol->result.iterations;
  if (residual) *residual = sol->result.residual;
  return IQP_OK;
}

int iqp_solution_nan_stage(const iqp_solution* sol, int* stage) {
  IQP_REQUIRE(sol && stage, "iqp_solution_nan_stage: null argument");
  *stage = static_cast<int>(sol->result.nan_stage);
  return IQP_OK;
}

int iqp_solution_kappa(const iqp_solution* sol, double* kappa) {
  IQP_REQUIRE(sol && kappa, "iqp_solution_kappa: null argument");
  *kappa = sol->result.iterate.kappa;
  return IQP_OK;
}

int iqp_solution_vector(const iqp_solution* sol, char which, double* out, size_t len) {
  IQP_REQUIRE(sol && (out || len == 0), "iqp_solution_vector: null argument");
  const auto& it = sol->result.iterate;
  switch (which) {
    case 'x': return copy_out(it.x, out, len);
    case 'y': return copy_out(it.y, out, len);
    case 'z': return copy_out(it.z, out, len);
    case 's': return copy_out(it.s, out, len);
    default: return fail(IQP_ERR_INVALID_ARGUMENT, std::string("iqp_solution_vector: unknown vector '") + which + "'");
  }
}

int iqp_solution_to_json(const iqp_solution* sol, char** out) {
  IQP_REQUIRE(sol && out, "iqp_solution_to_json: null argument");
  return guard([&]() -> int {
    *out = dup_string(iqp::io::solution_to_json(sol->result));
    return IQP_OK;
  });
}

int iqp_solution_write(const iqp_solution* sol, const char* path) {
  IQP_REQUIRE(sol && path, "iqp_solution_write: null argument");
  return guard([&]() -> int {
    iqp::io::write_text(path, iqp::io::solution_to_json(sol->result));
    return IQP_OK;
  });
}

void iqp_solution_free(iqp_solution* sol) { delete sol; }

int iqp_gradient_compute(const iqp_problem* problem, const double* dl_dx, size_t len, const iqp_options* opts,
                         iqp_gradient** out) {
  IQP_REQUIRE(problem && opts && out, "iqp_gradient_compute: null argument");
  return guard([&]() -> int {
    iqp::Vector<double> g;
    if (dl_dx) {
      g.assign(dl_dx, dl_dx + len);
    } else if (problem->file.dl_dx) {
      g = *problem->file.dl_dx;
    } else {
      return fail(IQP_ERR_INVALID_ARGUMENT, "iqp_gradient_compute: no dl_dx given and none stored with the problem");
    }
    *out = new iqp_gradient{iqp::driver::differentiate(problem->file.qp, g, to_run_options(opts))};
    return IQP_OK;
  });
}

int iqp_gradient_status(const iqp_gradient* grad, int* status, int* nan_stage) {
  IQP_REQUIRE(grad, "iqp_gradient_status: null gradient");
  if (status) *status = status_code(grad->result.status);
  if (nan_stage) *nan_stage = static_cast<int>(grad->result.nan_stage);
  return IQP_OK;
}

int iqp_gradient_field(const iqp_gradient* grad, const char* field, double* out, size_t len) {
  IQP_REQUIRE(grad && field && (out || len == 0), "iqp_gradient_field: null argument");
  if (!grad->result.bundle) return fail(IQP_ERR_NON_FINITE_STEP, "iqp_gradient_field: differentiation failed");
  const auto& b = *grad->result.bundle;
  const std::string f(field);
  if (f == "dQ") return copy_out(b.dQ.data(), out, len);
  if (f == "dq") return copy_out(b.dq, out, len);
  if (f == "dA") return copy_out(b.dA.data(), out, len);
  if (f == "db") return copy_out(b.db, out, len);
  if (f == "dG") return copy_out(b.dG.data(), out, len);
  if (f == "dh") return copy_out(b.dh, out, len);
  return fail(IQP_ERR_INVALID_ARGUMENT, "iqp_gradient_field: unknown field '" + f + "'");
}

int iqp_gradient_to_json(const iqp_gradient* grad, char** out) {
  IQP_REQUIRE(grad && out, "iqp_gradient_to_json: null argument");
  return guard([&]() -> int {
    *out = dup_string(iqp::io::gradient_to_json(grad->result));
    return IQP_OK;
  });
}

int iqp_gradient_write(const iqp_gradient* grad, const char* path) {
  IQP_REQUIRE(grad && path, "iqp_gradient_write: null argument");
  return guard([&]() -> int {
    iqp::io::write_text(path, iqp::io::gradient_to_json(grad->result));
    return IQP_OK;
  });
}

void iqp_gradient_free(iqp_gradient* grad) { delete grad; }

void iqp_sweep_options_default(iqp_sweep_options* opts) {
  if (!opts) return;
  const iqp::bench::SweepConfig cfg;
  opts->method_mask = 3;
  opts->precision_mask = 1;
  opts->seeds = nullptr;
  opts->seed_count = 0;
  opts->threads = 0;
  opts->max_iter = cfg.max_iter;
  opts->sigma = cfg.sigma;
  opts->tau_frac = cfg.tau_frac;
  opts->refine_steps = cfg.refine_steps;
  opts->factorization = IQP_CONDENSED_CHOLESKY;
  opts->kappa_relax = cfg.kappa_relax;
  opts->tol = cfg.tol;
  opts->progress = nullptr;
  opts->progress_user = nullptr;
}

int iqp_sweep_run(int kind, const iqp_sweep_options* opts, iqp_sweep** out) {
  IQP_REQUIRE(opts && out, "iqp_sweep_run: null argument");
  IQP_REQUIRE(kind == IQP_SWEEP_SIZE || kind == IQP_SWEEP_KAPPA, "iqp_sweep_run: unknown sweep kind");
  IQP_REQUIRE(opts->method_mask & 3u, "iqp_sweep_run: no method selected");
  IQP_REQUIRE(opts->precision_mask & 3u, "iqp_sweep_run: no precision selected");
  IQP_REQUIRE(opts->seeds || opts->seed_count == 0, "iqp_sweep_run: seed_count without seeds");
  return guard([&]() -> int {
    using namespace iqp;
    bench::SweepConfig cfg;
    cfg.paradigms.clear();
    if (opts->method_mask & 1u) cfg.paradigms.push_back(Paradigm::Implicit);
    if (opts->method_mask & 2u) cfg.paradigms.push_back(Paradigm::Explicit);
    cfg.precisions.clear();
    if (opts->precision_mask & 1u) cfg.precisions.push_back(Precision::F32);
    if (opts->precision_mask & 2u) cfg.precisions.push_back(Precision::F64);
    if (opts->seeds) cfg.seeds.assign(opts->seeds, opts->seeds + opts->seed_count);
    cfg.threads = opts->threads;
    cfg.max_iter = opts->max_iter;
    cfg.sigma = opts->sigma;
    cfg.tau_frac = opts->tau_frac;
    cfg.refine_steps = opts->refine_steps;
    cfg.explicit_factorization = opts->factorization == IQP_AUGMENTED_LDLT
                                     ? explicit_ipm::Factorization::AugmentedLdlt
                                     : explicit_ipm::Factorization::CondensedCholesky;
    cfg.kappa_relax = opts->kappa_relax;
    cfg.tol = opts->tol;
    SolverConfig check;
    check.tol = cfg.tol;
    check.max_iter = cfg.max_iter;
    check.sigma = cfg.sigma;
    check.kappa_relax = cfg.kappa_relax;
    check.tau_frac = cfg.tau_frac;
    check.validate();

    bench::ProgressFn progress;
    if (opts->progress) {
      const auto fn = opts->progress;
      void* user = opts->progress_user;
      progress = [fn, user](std::size_t done, std::size_t total) { fn(done, total, user); };
    }
    auto records = kind == IQP_SWEEP_SIZE ? bench::run_size_sweep(cfg, progress) : bench::run_kappa_sweep(cfg, progress);
    *out = new iqp_sweep{std::move(records)};
    return IQP_OK;
  });
}

int iqp_sweep_record_count(const iqp_sweep* sweep, size_t* count) {
  IQP_REQUIRE(sweep && count, "iqp_sweep_record_count: null argument");
  *count = sweep->records.size();
  return IQP_OK;
}

int iqp_sweep_failure_count(const iqp_sweep* sweep, size_t* failures, size_t* untraced) {
  IQP_REQUIRE(sweep, "iqp_sweep_failure_count: null sweep");
  std::size_t f = 0, u = 0;
  for (const auto& r : sweep->records) {
    if (std::isfinite(r.grad_err)) continue;
    ++f;
    if (r.nan_stage == iqp::NanStage::None) ++u;
  }
  if (failures) *failures = f;
  if (untraced) *untraced = u;
  return IQP_OK;
}

int iqp_sweep_write_csv(const iqp_sweep* sweep, const char* path) {
  IQP_REQUIRE(sweep && path, "iqp_sweep_write_csv: null argument");
  return guard([&]() -> int {
    std::ostringstream os;
    iqp::bench::write_csv(os, sweep->records);
    iqp::io::write_text(path, os.str());
    return IQP_OK;
  });
}

int iqp_sweep_summary(const iqp_sweep* sweep, char** out) {
  IQP_REQUIRE(sweep && out, "iqp_sweep_summary: null argument");
  return guard([&]() -> int {
    std::ostringstream os;
    iqp::bench::print_summary(os, iqp::bench::summarize(sweep->records));
    *out = dup_string(os.str());
    return IQP_OK;
  });
}

void iqp_sweep_free(iqp_sweep* sweep) { delete sweep; }

void iqp_selftest_options_default(iqp_selftest_options* opts) {
  if (!opts) return;
  const iqp::selftest::Options o;
  opts->tau_frac = o.tau_frac;
  opts->naive_softplus = o.naive_softplus ? 1 : 0;
}

int iqp_selftest(const iqp_selftest_options* opts, int* all_passed, char** report) {
  IQP_REQUIRE(opts && all_passed, "iqp_selftest: null argument");
  return guard([&]() -> int {
    iqp::selftest::Options o;
    o.tau_frac = opts->tau_frac;
    o.naive_softplus = opts->naive_softplus != 0;
    const auto checks = iqp::selftest::run(o);
    bool ok = true;
    std::ostringstream os;
    for (const auto& c : checks) {
      ok = ok && c.passed;
      os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    }
    *all_passed = ok ? 1 : 0;
    if (report) *report = dup_string(os.str());
    return IQP_OK;
  });
}

}  // extern "C"
