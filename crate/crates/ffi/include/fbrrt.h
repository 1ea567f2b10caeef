#ifndef FBRRT_H
#define FBRRT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FbrrtStatus {
  FBRRT_STATUS_OK = 0,
  FBRRT_STATUS_NULL_POINTER = 1,
  FBRRT_STATUS_INVALID_ARGUMENT = 2,
  FBRRT_STATUS_UNKNOWN_PROBLEM = 3,
  FBRRT_STATUS_SOLVER = 4,
  FBRRT_STATUS_PANIC = 5,
} FbrrtStatus;

/**
 * Sampling mode of the forward pass.
 */
typedef enum FbrrtMode {
  FBRRT_MODE_RRT = 0,
  FBRRT_MODE_PARALLEL = 1,
} FbrrtMode;

/**
 * Opaque problem handle.
 */
typedef struct FbrrtProblem FbrrtProblem;

/**
 * Opaque solution handle.
 */
typedef struct FbrrtSolution FbrrtSolution;

/**
 * Solver settings. Fill with `fbrrt_params_default` and adjust.
 *
 * `roi_min`/`roi_max` may be null to use the problem's default region; otherwise
 * both must point to `state_dim` values that stay valid during `fbrrt_solve`.
 */
typedef struct FbrrtParams {
  size_t particles;
  size_t erode_width;
  size_t steps;
  size_t iterations;
  size_t rollouts;
  uint64_t seed;
  double eps_rrt;
  double eps_opt;
  double lambda;
  /**
   * Ridge used when an unregularised fit is rank deficient.
   */
  double ridge;
  enum FbrrtMode mode;
  const double *roi_min;
  const double *roi_max;
} FbrrtParams;

/**
 * One row of the per-iteration report.
 */
typedef struct FbrrtReport {
  size_t iteration;
  double policy_cost;
  double std_error;
  double best_cost;
  double lambda;
  double wall_time;
  size_t excluded_rollouts;
  size_t regularized_steps;
} FbrrtReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays valid
 * until the next fbrrt call on the same thread.
 */
const char *fbrrt_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *fbrrt_version(void);

/**
 * Build one of the benchmark problems: `lqr1d`, `double_integrator`,
 * `double_pendulum` or `quadcopter`.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum FbrrtStatus fbrrt_problem_new(const char *name, struct FbrrtProblem **out);

/**
 * # Safety
 * `problem` must come from `fbrrt_problem_new` and not be used afterwards. Null is
 * ignored.
 */
void fbrrt_problem_free(struct FbrrtProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle or null.
 */
size_t fbrrt_problem_state_dim(const struct FbrrtProblem *problem);

/**
 * # Safety
 * `problem` must be a live handle or null.
 */
size_t fbrrt_problem_control_dim(const struct FbrrtProblem *problem);

/**
 * Default settings for the named problem.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum FbrrtStatus fbrrt_params_default(const char *name, struct FbrrtParams *out);

/**
 * Run the solver. On success `*out` receives a solution handle.
 *
 * # Safety
 * `problem` must be a live handle, `params` and `out` valid pointers.
 */
enum FbrrtStatus fbrrt_solve(const struct FbrrtProblem *problem,
                             const struct FbrrtParams *params,
                             struct FbrrtSolution **out);

/**
 * # Safety
 * `solution` must come from `fbrrt_solve` and not be used afterwards. Null is ignored.
 */
void fbrrt_solution_free(struct FbrrtSolution *solution);

/**
 * Number of iterations in the report, or 0 for null.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
size_t fbrrt_solution_iterations(const struct FbrrtSolution *solution);

/**
 * Iteration (1-based) whose model is used by the value and policy queries.
 *
 * # Safety
 * `solution` must be a live handle or null.
 */
size_t fbrrt_solution_best_iteration(const struct FbrrtSolution *solution);

/**
 * Report of iteration `index` (0-based).
 *
 * # Safety
 * `solution` must be a live handle and `out` a valid pointer.
 */
enum FbrrtStatus fbrrt_solution_report(const struct FbrrtSolution *solution,
                                       size_t index,
                                       struct FbrrtReport *out);

/**
 * Best-model value `V_i(x)` at time index `time_index` in `0..=steps`.
 *
 * # Safety
 * `solution` must be a live handle, `x` must point to `len` values and `out` be valid.
 */
enum FbrrtStatus fbrrt_solution_value(const struct FbrrtSolution *solution,
                                      size_t time_index,
                                      const double *x,
                                      size_t len,
                                      double *out);

/**
 * Best-model gradient at time index `time_index`, written to `out[0..len]`.
 *
 * # Safety
 * `x` and `out` must each point to `len` values.
 */
enum FbrrtStatus fbrrt_solution_gradient(const struct FbrrtSolution *solution,
                                         size_t time_index,
                                         const double *x,
                                         size_t len,
                                         double *out);

/**
 * Feedback control of the best model at step `step` in `0..steps`, written to
 * `u[0..u_len]`; `u_len` must equal the control dimension.
 *
 * # Safety
 * `x` must point to `x_len` values and `u` to `u_len` values.
 */
enum FbrrtStatus fbrrt_solution_policy(const struct FbrrtSolution *solution,
                                       size_t step,
                                       const double *x,
                                       size_t x_len,
                                       double *u,
                                       size_t u_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FBRRT_H */
