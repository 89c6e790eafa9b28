#ifndef SMOOTHOPT_H
#define SMOOTHOPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a call.
 */
typedef enum SmoothoptStatus {
  SMOOTHOPT_STATUS_OK = 0,
  SMOOTHOPT_STATUS_NULL_POINTER = 1,
  SMOOTHOPT_STATUS_INVALID_ARGUMENT = 2,
  SMOOTHOPT_STATUS_CONFIG = 3,
  /**
   * The objective returned NaN or an infinity.
   */
  SMOOTHOPT_STATUS_EVALUATION = 4,
  /**
   * A projection produced an infeasible point.
   */
  SMOOTHOPT_STATUS_CONTRACT_VIOLATION = 5,
  SMOOTHOPT_STATUS_IO = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  SMOOTHOPT_STATUS_PANIC = 7,
} SmoothoptStatus;

/**
 * Smoothing kernel selector.
 */
typedef enum SmoothoptKernel {
  SMOOTHOPT_KERNEL_BALL = 0,
  SMOOTHOPT_KERNEL_GAUSSIAN = 1,
} SmoothoptKernel;

/**
 * A registered problem.
 */
typedef struct SmoothoptProblem SmoothoptProblem;

/**
 * Outcome of a minimization.
 */
typedef struct SmoothoptResult SmoothoptResult;

/**
 * A feasible set (box, ball or box cut by a half-space).
 */
typedef struct SmoothoptSet SmoothoptSet;

/**
 * Geometric smoothing plan: `stages` widths from `h0` with ratio `decay`,
 * `iterations` steps of batch `batch` per stage.
 */
typedef struct SmoothoptPlanParams {
  double h0;
  double decay;
  size_t stages;
  size_t iterations;
  size_t batch;
  /**
   * Ravine extrapolation coefficient.
   */
  double beta;
  enum SmoothoptKernel kernel;
  /**
   * Step rule constants; zero means the diameter of the region and 1.
   */
  double d;
  double l;
} SmoothoptPlanParams;

/**
 * Objective callback: value at `x[0..n]`.
 */
typedef double (*SmoothoptObjective)(const double *x, size_t n, void *user);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *smoothopt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *smoothopt_version(void);

/**
 * Axis-aligned box `[lower, upper]` of dimension `dim`.
 *
 * # Safety
 * `lower` and `upper` must point to `dim` doubles; `out` must be writable.
 */
enum SmoothoptStatus smoothopt_set_box(size_t dim,
                                       const double *lower,
                                       const double *upper,
                                       struct SmoothoptSet **out);

/**
 * Euclidean ball of dimension `dim`.
 *
 * # Safety
 * `center` must point to `dim` doubles; `out` must be writable.
 */
enum SmoothoptStatus smoothopt_set_ball(size_t dim,
                                        const double *center,
                                        double radius,
                                        struct SmoothoptSet **out);

/**
 * Box intersected with the half-space `normal · x ≤ offset`.
 *
 * # Safety
 * `lower`, `upper` and `normal` must point to `dim` doubles; `out` must be writable.
 */
enum SmoothoptStatus smoothopt_set_box_halfspace(size_t dim,
                                                 const double *lower,
                                                 const double *upper,
                                                 const double *normal,
                                                 double offset,
                                                 struct SmoothoptSet **out);

/**
 * # Safety
 * `set` must come from a `smoothopt_set_*` constructor, or be null.
 */
void smoothopt_set_free(struct SmoothoptSet *set);

/**
 * Dimension of `set`, or 0 for null.
 *
 * # Safety
 * `set` must be a live handle or null.
 */
size_t smoothopt_set_dim(const struct SmoothoptSet *set);

/**
 * Euclidean projection of `x` onto `set`, written to `out`.
 *
 * # Safety
 * `x` and `out` must point to `dim` doubles; `set` must be a live handle.
 */
enum SmoothoptStatus smoothopt_set_project(const struct SmoothoptSet *set,
                                           const double *x,
                                           size_t dim,
                                           double *out);

/**
 * Looks up a registered problem: `polygon` (with `n` vertices) or a
 * calibration function (`l1-norm`, `max-coordinate`, `two-well-1d`,
 * `lsc-step-1d`) of dimension `n`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum SmoothoptStatus smoothopt_problem_new(const char *name,
                                           size_t n,
                                           struct SmoothoptProblem **out);

/**
 * # Safety
 * `problem` must come from [`smoothopt_problem_new`], or be null.
 */
void smoothopt_problem_free(struct SmoothoptProblem *problem);

/**
 * Length of the problem's decision vector, or 0 for null.
 *
 * # Safety
 * `problem` must be a live handle or null.
 */
size_t smoothopt_problem_dim(const struct SmoothoptProblem *problem);

/**
 * Objective value at `x` in the problem's own sense (the polygon's
 * penalized area, the calibration value otherwise).
 *
 * # Safety
 * `x` must point to `dim` doubles; `out` must be writable.
 */
enum SmoothoptStatus smoothopt_problem_eval(const struct SmoothoptProblem *problem,
                                            const double *x,
                                            size_t dim,
                                            double *out);

/**
 * Defaults: 11 halving stages from `h0 = 1`, 1000 iterations of batch 4,
 * ravine coefficient 1, ball kernel.
 */
struct SmoothoptPlanParams smoothopt_plan_default(void);

/**
 * Minimizes a C callback over `region` (a box or a ball), starting from
 * `start`. If `constraint` is non-null the callback is only evaluated on
 * it, through the distance penalty with multiplier `multiplier`.
 *
 * # Safety
 * `start` must point to `dim` doubles, handles must be live, `out` writable.
 */
enum SmoothoptStatus smoothopt_minimize(SmoothoptObjective objective,
                                        void *user,
                                        const struct SmoothoptSet *region,
                                        const struct SmoothoptSet *constraint,
                                        double multiplier,
                                        const double *start,
                                        size_t dim,
                                        const struct SmoothoptPlanParams *params,
                                        uint64_t seed,
                                        struct SmoothoptResult **out);

/**
 * Minimizes (or, for the polygon, maximizes) a registered problem over its
 * default region from its default start.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SmoothoptStatus smoothopt_minimize_problem(const struct SmoothoptProblem *problem,
                                                const struct SmoothoptPlanParams *params,
                                                uint64_t seed,
                                                struct SmoothoptResult **out);

/**
 * # Safety
 * `result` must come from a minimizer, or be null.
 */
void smoothopt_result_free(struct SmoothoptResult *result);

/**
 * Best value found, in the problem's own sense; NaN for null.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
double smoothopt_result_best_value(const struct SmoothoptResult *result);

/**
 * Objective evaluations spent; 0 for null.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
uint64_t smoothopt_result_evaluations(const struct SmoothoptResult *result);

/**
 * Length of the best point; 0 for null.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t smoothopt_result_dim(const struct SmoothoptResult *result);

/**
 * Copies the best point into `out`, which holds `len` doubles.
 *
 * # Safety
 * `out` must point to `len` writable doubles.
 */
enum SmoothoptStatus smoothopt_result_best_point(const struct SmoothoptResult *result,
                                                 double *out,
                                                 size_t len);

/**
 * Executes a run configuration file, writing its summary and run records.
 * `threads` of 0 uses every core (still capped by `SMOOTHOPT_THREADS`).
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum SmoothoptStatus smoothopt_run_config(const char *path, size_t threads);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMOOTHOPT_H */
