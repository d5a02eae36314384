#ifndef IQP_IQP_H
#define IQP_IQP_H

/* C interface to the iqp quadratic-programming solver.
 *
 * Every function returning int returns IQP_OK or an error code; the message
 * for the most recent failure on the calling thread is available from
 * iqp_last_error(). Handles are opaque and released with the matching
 * *_free function. Strings returned through char** are released with
 * iqp_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(IQP_BUILDING_LIBRARY)
#    define IQP_API __declspec(dllexport)
#  else
#    define IQP_API __declspec(dllimport)
#  endif
#else
#  define IQP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

enum iqp_error {
  IQP_OK = 0,
  IQP_ERR_DIMENSION_MISMATCH = 1,
  IQP_ERR_SINGULAR_MATRIX = 2,
  IQP_ERR_PARSE = 3,
  IQP_ERR_INVALID_KAPPA = 4,
  IQP_ERR_NON_FINITE_STEP = 5,
  IQP_ERR_RANK_DEFICIENT = 6,
  IQP_ERR_MAX_ITER = 7,
  IQP_ERR_INVALID_ARGUMENT = 8,
  IQP_ERR_IO = 9,
  IQP_ERR_INTERNAL = 10
};

enum iqp_precision { IQP_F32 = 0, IQP_F64 = 1 };
enum iqp_method { IQP_IMPLICIT = 0, IQP_EXPLICIT = 1 };
enum iqp_factorization { IQP_CONDENSED_CHOLESKY = 0, IQP_AUGMENTED_LDLT = 1 };
enum iqp_status { IQP_CONVERGED = 0, IQP_MAX_ITER = 1, IQP_NUMERICAL_FAILURE = 2 };

enum iqp_nan_stage {
  IQP_STAGE_NONE = 0,
  IQP_STAGE_SCALING = 1,
  IQP_STAGE_PREDICTOR = 2,
  IQP_STAGE_CENTERING = 3,
  IQP_STAGE_CORRECTOR = 4,
  IQP_STAGE_LINESEARCH = 5,
  IQP_STAGE_RELAXATION = 6,
  IQP_STAGE_BACKWARD = 7
};

typedef struct iqp_problem iqp_problem;
typedef struct iqp_solution iqp_solution;
typedef struct iqp_gradient iqp_gradient;
typedef struct iqp_sweep iqp_sweep;

typedef struct iqp_options {
  int precision;      /* enum iqp_precision */
  int method;         /* enum iqp_method */
  int factorization;  /* enum iqp_factorization, explicit method only */
  double tol;
  int max_iter;
  double sigma;
  double kappa_relax;
  double tau_frac;
  int refine_steps;   /* -1: one round in f32, none in f64 */
} iqp_options;

/* Defaults for the given precision: tol 1e-8 (f64) or 1e-4 (f32), max_iter
 * 100, sigma 0.1, kappa_relax 1e-4, tau_frac 0.99, implicit method. */
IQP_API void iqp_options_default(iqp_options* opts, int precision);

IQP_API const char* iqp_last_error(void);
IQP_API const char* iqp_error_name(int code);
IQP_API const char* iqp_status_name(int status);
IQP_API const char* iqp_nan_stage_name(int stage);
IQP_API void iqp_string_free(char* s);

/* Problems. Matrices are row-major; A, b may be NULL when m_eq = 0 and
 * G, h may be NULL when p = 0. */
IQP_API int iqp_problem_load(const char* path, iqp_problem** out);
IQP_API int iqp_problem_parse(const char* json, iqp_problem** out);
IQP_API int iqp_problem_create(size_t n, size_t m_eq, size_t p, const double* Q, const double* q,
                               const double* A, const double* b, const double* G, const double* h,
                               iqp_problem** out);
IQP_API int iqp_problem_dims(const iqp_problem* problem, size_t* n, size_t* m_eq, size_t* p);
/* Loss gradient stored with the problem; used by iqp_gradient_compute when
 * it is passed no dl_dx. */
IQP_API int iqp_problem_set_dl_dx(iqp_problem* problem, const double* dl_dx, size_t len);
IQP_API int iqp_problem_has_dl_dx(const iqp_problem* problem, int* has);
IQP_API int iqp_problem_to_json(const iqp_problem* problem, char** out);
IQP_API void iqp_problem_free(iqp_problem* problem);

/* Solves. A numerical failure is not an error: it is reported through
 * iqp_solution_status and iqp_solution_nan_stage. */
IQP_API int iqp_solve(const iqp_problem* problem, const iqp_options* opts, iqp_solution** out);
IQP_API int iqp_solution_status(const iqp_solution* sol, int* status, int* iterations, double* residual);
IQP_API int iqp_solution_nan_stage(const iqp_solution* sol, int* stage);
IQP_API int iqp_solution_kappa(const iqp_solution* sol, double* kappa);
/* Copies x, y, z or s (which = 'x', 'y', 'z', 's') into out[0..len). */
IQP_API int iqp_solution_vector(const iqp_solution* sol, char which, double* out, size_t len);
IQP_API int iqp_solution_to_json(const iqp_solution* sol, char** out);
IQP_API int iqp_solution_write(const iqp_solution* sol, const char* path);
IQP_API void iqp_solution_free(iqp_solution* sol);

/* Solve, relax to opts->kappa_relax and differentiate. dl_dx may be NULL to
 * use the vector stored with the problem. */
IQP_API int iqp_gradient_compute(const iqp_problem* problem, const double* dl_dx, size_t len,
                                 const iqp_options* opts, iqp_gradient** out);
IQP_API int iqp_gradient_status(const iqp_gradient* grad, int* status, int* nan_stage);
/* field is one of "dQ", "dq", "dA", "db", "dG", "dh"; fails with
 * IQP_ERR_NON_FINITE_STEP if differentiation failed. */
IQP_API int iqp_gradient_field(const iqp_gradient* grad, const char* field, double* out, size_t len);
IQP_API int iqp_gradient_to_json(const iqp_gradient* grad, char** out);
IQP_API int iqp_gradient_write(const iqp_gradient* grad, const char* path);
IQP_API void iqp_gradient_free(iqp_gradient* grad);

/* Benchmark sweeps over generated polytope projections. */
enum iqp_sweep_kind { IQP_SWEEP_SIZE = 0, IQP_SWEEP_KAPPA = 1 };

typedef void (*iqp_progress_fn)(size_t done, size_t total, void* user);

typedef struct iqp_sweep_options {
  unsigned method_mask;     /* bit 0 implicit, bit 1 explicit */
  unsigned precision_mask;  /* bit 0 f32, bit 1 f64 */
  const uint64_t* seeds;    /* NULL: {0, 1, 2} */
  size_t seed_count;
  unsigned threads;         /* 0: hardware concurrency */
  int max_iter;
  double sigma;
  double tau_frac;
  int refine_steps;
  int factorization;
  double kappa_relax;       /* size sweep only */
  double tol;               /* size sweep only; the kappa sweep uses min(kappa_relax, 1e-4) */
  iqp_progress_fn progress; /* optional */
  void* progress_user;
} iqp_sweep_options;

IQP_API void iqp_sweep_options_default(iqp_sweep_options* opts);
IQP_API int iqp_sweep_run(int kind, const iqp_sweep_options* opts, iqp_sweep** out);
IQP_API int iqp_sweep_record_count(const iqp_sweep* sweep, size_t* count);
/* Records with a non-finite gradient error, and those among them whose
 * first-hit stage is unset (always 0 for a consistent run). */
IQP_API int iqp_sweep_failure_count(const iqp_sweep* sweep, size_t* failures, size_t* untraced);
IQP_API int iqp_sweep_write_csv(const iqp_sweep* sweep, const char* path);
IQP_API int iqp_sweep_summary(const iqp_sweep* sweep, char** out);
IQP_API void iqp_sweep_free(iqp_sweep* sweep);

/* Embedded invariant suite. report receives one line per check. */
typedef struct iqp_selftest_options {
  double tau_frac;
  int naive_softplus;
} iqp_selftest_options;

IQP_API void iqp_selftest_options_default(iqp_selftest_options* opts);
IQP_API int iqp_selftest(const iqp_selftest_options* opts, int* all_passed, char** report);

#ifdef __cplusplus
}
#endif

#endif
