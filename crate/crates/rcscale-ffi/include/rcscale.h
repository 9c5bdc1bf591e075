#ifndef RCSCALE_H
#define RCSCALE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver selector mirroring the CLI methods.
 */
typedef enum ScaleMethod {
  Ras = 0,
  Scaling0 = 1,
  Scaling1 = 2,
  Scaling2 = 3,
  Scaling3 = 4,
  Auto = 5,
} ScaleMethod;

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum ScaleStatus {
  Ok = 0,
  InvalidArgument = 1,
  Infeasible = 2,
  IterationCapReached = 3,
  NumericalError = 4,
  InternalPanic = 5,
} ScaleStatus;

/**
 * Opaque validated problem instance.
 */
typedef struct scale_instance scale_instance;

/**
 * Opaque solve result.
 */
typedef struct scale_solution scale_solution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message (NUL-terminated, truncated to `cap`).
 * Returns the full length of the message in bytes.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null (then only the
 * length is returned).
 */
uintptr_t rcscale_last_error(char *buf, uintptr_t cap);

/**
 * Build an instance from triplet data (0-based indices). `r` has length
 * `d`, `c` length `n`; rows are normalized internally.
 *
 * # Safety
 * All pointers must be valid for the stated lengths; `out` must be a
 * valid location for one pointer.
 */
enum ScaleStatus rcscale_instance_new(uintptr_t d,
                                      uintptr_t n,
                                      uintptr_t nnz,
                                      const uintptr_t *row_idx,
                                      const uintptr_t *col_idx,
                                      const double *values,
                                      const uint64_t *r,
                                      const uint64_t *c,
                                      struct scale_instance **out);

/**
 * # Safety
 * `handle` must come from `rcscale_instance_new` and not be freed twice.
 */
void rcscale_instance_free(struct scale_instance *handle);

/**
 * Asymptotic (r,c)-scalability; writes 1 or 0 into `out_scalable`.
 *
 * # Safety
 * `handle` and `out_scalable` must be valid pointers.
 */
enum ScaleStatus rcscale_check_feasible(const struct scale_instance *handle, int32_t *out_scalable);

/**
 * Solve to accuracy `eps` with the chosen method. `n_bound <= 0` selects
 * the automatic diameter bound.
 *
 * # Safety
 * `handle` and `out` must be valid pointers.
 */
enum ScaleStatus rcscale_solve(const struct scale_instance *handle,
                               enum ScaleMethod method,
                               double eps,
                               double n_bound,
                               struct scale_solution **out);

/**
 * # Safety
 * `sol` must come from `rcscale_solve` and not be freed twice.
 */
void rcscale_solution_free(struct scale_solution *sol);

/**
 * Length of the scaling vector x.
 *
 * # Safety
 * `sol` must be a valid solution handle.
 */
uintptr_t rcscale_solution_dim(const struct scale_solution *sol);

/**
 * Copy the log-domain column scaling vector into `buf`.
 *
 * # Safety
 * `buf` must hold at least `len` doubles.
 */
enum ScaleStatus rcscale_solution_x(const struct scale_solution *sol, double *buf, uintptr_t len);

/**
 * # Safety
 * `sol` must be a valid solution handle.
 */
double rcscale_solution_objective(const struct scale_solution *sol);

/**
 * Gradient potential ||grad f||^2_{c^-1} at the solution.
 *
 * # Safety
 * `sol` must be a valid solution handle.
 */
double rcscale_solution_potential(const struct scale_solution *sol);

/**
 * Maximum row-sum error of the scaled matrix.
 *
 * # Safety
 * `sol` must be a valid solution handle.
 */
double rcscale_solution_row_err(const struct scale_solution *sol);

/**
 * # Safety
 * `sol` must be a valid solution handle.
 */
uintptr_t rcscale_solution_iterations(const struct scale_solution *sol);

/**
 * 1 when the run met its potential threshold.
 *
 * # Safety
 * `sol` must be a valid solution handle.
 */
int32_t rcscale_solution_converged(const struct scale_solution *sol);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RCSCALE_H */
