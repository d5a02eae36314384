// iqp: solve, differentiate and benchmark QPs from the command line.
// Everything here goes through the C interface in iqp.h.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "iqp/iqp.h"

namespace {

enum Exit { kOk = 0, kIoError = 1, kMaxIter = 2, kNumerical = 3 };

struct Flags {
  std::string method = "implicit";
  std::string precision = "f64";
  std::string factorization = "condensed_cholesky";
  std::optional<double> tol;
  int max_iter = 100;
  double sigma = 0.1;
  double kappa_relax = 1e-4;
  double tau_frac = 0.99;
  int refine_steps = -1;
  std::string input;
  std::string output = "-";
  std::vector<std::uint64_t> seeds;
  unsigned threads = 0;
  bool naive_softplus = false;
  bool quiet = false;
};

int report_error(int code) {
  std::cerr << "iqp: " << iqp_error_name(code) << ": " << iqp_last_error() << '\n';
  return kIoError;
}

int exit_for_status(int status) {
  switch (status) {
    case IQP_CONVERGED: return kOk;
    case IQP_MAX_ITER: return kMaxIter;
    default: return kNumerical;
  }
}

iqp_options solver_options(const Flags& f) {
  iqp_options o;
  iqp_options_default(&o, f.precision == "f32" ? IQP_F32 : IQP_F64);
  o.method = f.method == "explicit" ? IQP_EXPLICIT : IQP_IMPLICIT;
  o.factorization = f.factorization == "augmented_ldlt" ? IQP_AUGMENTED_LDLT : IQP_CONDENSED_CHOLESKY;
  if (f.tol) o.tol = *f.tol;
  o.max_iter = f.max_iter;
  o.sigma = f.sigma;
  o.kappa_relax = f.kappa_relax;
  o.tau_frac = f.tau_frac;
  o.refine_steps = f.refine_steps;
  return o;
}

int cmd_solve(const Flags& f) {
  iqp_problem* problem = nullptr;
  if (int rc = iqp_problem_load(f.input.c_str(), &problem)) return report_error(rc);
  const iqp_options opts = solver_options(f);
  iqp_solution* sol = nullptr;
  int rc = iqp_solve(problem, &opts, &sol);
  iqp_problem_free(problem);
  if (rc) return report_error(rc);

  int status = 0, iterations = 0, stage = 0;
  double residual = 0;
  iqp_solution_status(sol, &status, &iterations, &residual);
  iqp_solution_nan_stage(sol, &stage);
  rc = iqp_solution_write(sol, f.output.c_str());
  iqp_solution_free(sol);
  if (rc) return report_error(rc);

  if (!f.quiet || status != IQP_CONVERGED) {
    std::fprintf(stderr, "%s after %d iterations, residual %.3e", iqp_status_name(status), iterations, residual);
    if (status == IQP_NUMERICAL_FAILURE) std::fprintf(stderr, ", nan_stage %s", iqp_nan_stage_name(stage));
    std::fputc('\n', stderr);
  }
  return exit_for_status(status);
}

int cmd_grad(const Flags& f) {
  iqp_problem* problem = nullptr;
  if (int rc = iqp_problem_load(f.input.c_str(), &problem)) return report_error(rc);
  int has = 0;
  iqp_problem_has_dl_dx(problem, &has);
  if (!has) {
    iqp_problem_free(problem);
    std::cerr << "iqp: InvalidArgument: " << f.input << " has no \"dl_dx\" field\n";
    return kIoError;
  }
  const iqp_options opts = solver_options(f);
  iqp_gradient* grad = nullptr;
  int rc = iqp_gradient_compute(problem, nullptr, 0, &opts, &grad);
  iqp_problem_free(problem);
  if (rc) return report_error(rc);

  int status = 0, stage = 0;
  iqp_gradient_status(grad, &status, &stage);
  rc = iqp_gradient_write(grad, f.output.c_str());
  iqp_gradient_free(grad);
  if (rc) return report_error(rc);
  if (status != IQP_CONVERGED) {
    std::fprintf(stderr, "%s", iqp_status_name(status));
    if (status == IQP_NUMERICAL_FAILURE) std::fprintf(stderr, ", nan_stage %s", iqp_nan_stage_name(stage));
    std::fputc('\n', stderr);
  }
  return exit_for_status(status);
}

void print_progress(size_t done, size_t total, void*) {
  if (done == total || done % 100 == 0) std::fprintf(stderr, "\r%zu/%zu cells", done, total);
  if (done == total) std::fputc('\n', stderr);
}

int cmd_sweep(const Flags& f, int kind) {
  iqp_sweep_options o;
  iqp_sweep_options_default(&o);
  o.method_mask = f.method == "both" ? 3u : f.method == "explicit" ? 2u : 1u;
  o.precision_mask = f.precision == "both" ? 3u : f.precision == "f64" ? 2u : 1u;
  if (!f.seeds.empty()) {
    o.seeds = f.seeds.data();
    o.seed_count = f.seeds.size();
  }
  o.threads = f.threads;
  o.max_iter = f.max_iter;
  o.sigma = f.sigma;
  o.tau_frac = f.tau_frac;
  o.refine_steps = f.refine_steps;
  o.factorization = f.factorization == "augmented_ldlt" ? IQP_AUGMENTED_LDLT : IQP_CONDENSED_CHOLESKY;
  o.kappa_relax = f.kappa_relax;
  if (f.tol) o.tol = *f.tol;
  if (!f.quiet) o.progress = print_progress;

  iqp_sweep* sweep = nullptr;
  if (int rc = iqp_sweep_run(kind, &o, &sweep)) return report_error(rc);
  int rc = f.output.empty() ? IQP_OK : iqp_sweep_write_csv(sweep, f.output.c_str());
  char* summary = nullptr;
  if (!rc) rc = iqp_sweep_summary(sweep, &summary);
  size_t count = 0, failures = 0;
  iqp_sweep_record_count(sweep, &count);
  iqp_sweep_failure_count(sweep, &failures, nullptr);
  iqp_sweep_free(sweep);
  if (rc) return report_error(rc);
  // keep stdout clean when the CSV itself goes there
  std::FILE* sink = f.output == "-" ? stderr : stdout;
  std::fputs(summary, sink);
  std::fprintf(sink, "%zu records, %zu with non-finite gradient error\n", count, failures);
  iqp_string_free(summary);
  return kOk;
}

int cmd_selftest(const Flags& f) {
  iqp_selftest_options o;
  iqp_selftest_options_default(&o);
  o.tau_frac = f.tau_frac;
  o.naive_softplus = f.naive_softplus;
  int passed = 0;
  char* report = nullptr;
  if (int rc = iqp_selftest(&o, &passed, &report)) return report_error(rc);
  std::fputs(report, stdout);
  iqp_string_free(report);
  return passed ? kOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differentiable QP solver with implicit complementarity"};
  app.require_subcommand(1);
  Flags f;

  auto solver_flags = [&f](CLI::App* sub, bool sweep) {
    const std::vector<std::string> methods = sweep ? std::vector<std::string>{"implicit", "explicit", "both"}
                                                   : std::vector<std::string>{"implicit", "explicit"};
    const std::vector<std::string> precisions = sweep ? std::vector<std::string>{"f32", "f64", "both"}
                                                      : std::vector<std::string>{"f32", "f64"};
    sub->add_option("--method", f.method, "Solver paradigm")->check(CLI::IsMember(methods))->capture_default_str();
    sub->add_option("--precision", f.precision, "Floating-point precision")
        ->check(CLI::IsMember(precisions))
        ->capture_default_str();
    sub->add_option("--factorization", f.factorization, "Explicit-method KKT factorization")
        ->check(CLI::IsMember({"condensed_cholesky", "augmented_ldlt"}))
        ->capture_default_str();
    sub->add_option("--tol", f.tol, "Convergence tolerance (default 1e-8 in f64, 1e-4 in f32)");
    sub->add_option("--max-iter", f.max_iter, "Iteration cap")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--sigma", f.sigma, "Centering parameter")->capture_default_str();
    sub->add_option("--kappa-relax", f.kappa_relax, "Central-path value for gradients")->capture_default_str();
    sub->add_option("--tau-frac", f.tau_frac, "Fraction-to-boundary factor")->capture_default_str();
    sub->add_option("--refine-steps", f.refine_steps, "Iterative refinement rounds (-1: precision default)")
        ->capture_default_str();
    sub->add_flag("-q,--quiet", f.quiet, "Suppress status and progress output");
  };

  auto* solve = app.add_subcommand("solve", "Solve a QP read from a JSON problem file");
  solver_flags(solve, false);
  solve->add_option("-i,--input", f.input, "Problem JSON")->required();
  solve->add_option("-o,--output", f.output, "Solution JSON ('-' for stdout)")->capture_default_str();

  auto* grad = app.add_subcommand("grad", "Differentiate x*(theta) against the file's dl_dx");
  solver_flags(grad, false);
  grad->add_option("-i,--input", f.input, "Problem JSON with a dl_dx field")->required();
  grad->add_option("-o,--output", f.output, "Gradient JSON ('-' for stdout)")->capture_default_str();

  auto* sweep_size = app.add_subcommand("sweep-size", "Gradient-error sweep over problem size");
  auto* sweep_kappa = app.add_subcommand("sweep-kappa", "Gradient-error sweep over kappa_relax");
  for (auto* sub : {sweep_size, sweep_kappa}) {
    solver_flags(sub, true);
    sub->add_option("--seeds", f.seeds, "Instance seeds (default 0 1 2)");
    sub->add_option("--threads", f.threads, "Worker threads (0: hardware concurrency)")->capture_default_str();
    sub->add_option("-o,--output", f.output, "CSV output path ('-' for stdout, empty to skip)");
  }

  auto* selftest = app.add_subcommand("selftest", "Run the embedded invariant checks");
  selftest->add_option("--tau-frac", f.tau_frac, "Fraction-to-boundary factor")->capture_default_str();
  selftest->add_flag("--naive-softplus", f.naive_softplus, "Use the one-branch retraction in the cancellation check");

  // sweeps compare both paradigms in single precision unless told otherwise
  sweep_size->preparse_callback([&f](std::size_t) {
    f.method = "both";
    f.precision = "f32";
    f.output.clear();
  });
  sweep_kappa->preparse_callback([&f](std::size_t) {
    f.method = "both";
    f.precision = "f32";
    f.output.clear();
  });

  CLI11_PARSE(app, argc, argv);

  if (solve->parsed()) return cmd_solve(f);
  if (grad->parsed()) return cmd_grad(f);
  if (sweep_size->parsed()) return cmd_sweep(f, IQP_SWEEP_SIZE);
  if (sweep_kappa->parsed()) return cmd_sweep(f, IQP_SWEEP_KAPPA);
  return cmd_selftest(f);
}
