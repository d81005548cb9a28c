/* C interface for the wolfront free-boundary solver. */

#ifndef WOLFRONT_H
#define WOLFRONT_H

/* Generated by cbindgen from wolfront-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verdict of a free-boundary run.
 */
typedef enum {
  WF_CLASSIFICATION_SPREADING = 0,
  WF_CLASSIFICATION_VANISHING = 1,
  WF_CLASSIFICATION_UNDECIDED = 2,
} WfClassification;

/**
 * Column selector for `wf_run_series_column`.
 */
typedef enum {
  /**
   * Sample time t.
   */
  WF_SERIES_COLUMN_TIME = 0,
  /**
   * Front position h(t).
   */
  WF_SERIES_COLUMN_FRONT = 1,
  /**
   * Front speed h'(t).
   */
  WF_SERIES_COLUMN_FRONT_SPEED = 2,
  /**
   * sup of the invading density u.
   */
  WF_SERIES_COLUMN_SUP_U = 3,
  /**
   * sup of the resident density v.
   */
  WF_SERIES_COLUMN_SUP_V = 4,
  /**
   * ∫ u dx over [0, h(t)].
   */
  WF_SERIES_COLUMN_MASS_U = 5,
} WfSeriesColumn;

/**
 * Result of every fallible call in this interface.
 */
typedef enum {
  /**
   * Success; output arguments are valid.
   */
  WF_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  WF_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration or argument values.
   */
  WF_STATUS_INVALID_INPUT = 2,
  /**
   * The solver failed on a valid configuration.
   */
  WF_STATUS_NUMERICAL = 3,
  /**
   * Internal error (caught panic); outputs untouched.
   */
  WF_STATUS_PANIC = 4,
} WfStatus;

/**
 * Opaque: model parameters plus birth-rate fields.
 */
typedef struct WfModel WfModel;

/**
 * Opaque: completed simulation (series + verdict).
 */
typedef struct WfRun WfRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Identifier of the numerical scheme, e.g. for manifest comparisons.
 * The returned pointer is static; do not free it.
 */
const char *wf_scheme_version(void);

/**
 * Returns the error message of the most recent failed call on this thread,
 * or NULL if the last call succeeded. The caller owns the string and must
 * release it with `wf_string_free`.
 */
char *wf_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be a pointer previously returned by `wf_last_error_message`
 * (or NULL) and must not be used afterwards.
 */
void wf_string_free(char *s);

/**
 * Builds a model from a JSON document with keys
 * `d1, d2, delta1, delta2, mu, h0, b1, b2`, where the birth rates are
 * `{"kind": "constant", "value": ...}`, `{"kind": "expression", ...}`, or
 * `{"kind": "tabulated", ...}`. On success writes a handle to `out`.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` to writable memory.
 */
WfStatus wf_model_new_json(const char *json, WfModel **out);

/**
 * Builds a model with constant birth rates from scalar parameters.
 *
 * # Safety
 * `out` must point to writable memory.
 */
WfStatus wf_model_new(double d1,
                      double d2,
                      double delta1,
                      double delta2,
                      double mu,
                      double h0,
                      double b1,
                      double b2,
                      WfModel **out);

/**
 * Releases a model handle. NULL is a no-op.
 *
 * # Safety
 * `model` must come from `wf_model_new`/`wf_model_new_json` and must not be
 * used afterwards.
 */
void wf_model_free(WfModel *model);

/**
 * Critical initial front position h0*: fronts released at h0 ≥ h0* always
 * spread (constant birth rates, fitness-benefit regime).
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
WfStatus wf_model_critical_h0(const WfModel *model, double *out);

/**
 * Principal eigenvalue of `-d1 φ'' − b1(x) φ` on `[0, h]` with a Neumann
 * condition at 0 and a Dirichlet condition at `h`, discretized with `n`
 * cells (`n = 0` selects 2048). Negative values indicate net growth.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
WfStatus wf_model_lambda1(const WfModel *model, double h, size_t n, double *out);

/**
 * Principal eigenvalue for a constant birth rate `b`, matching the closed
 * form `d (π/(2 h0))² − b` as the grid refines. `n = 0` selects 2048 cells.
 *
 * # Safety
 * `out` must point to writable memory.
 */
WfStatus wf_eigen_lambda1(double d, double b, double h0, size_t n, double *out);

/**
 * Semi-wave spreading speed β0 for `d U'' − β U' + U(a − δ U) = 0` with the
 * free-boundary closure `β = μ U'(0)`. Writes the speed and, when the
 * remaining pointers are non-NULL, the boundary slope `U'(0)` and the
 * defect of the closure at the returned speed.
 *
 * # Safety
 * `out_beta0` must be valid; `out_uprime0`/`out_residual` may be NULL.
 */
WfStatus wf_semiwave_beta0(double d,
                           double a,
                           double delta,
                           double mu,
                           double *out_beta0,
                           double *out_uprime0,
                           double *out_residual);

/**
 * Integrates the free-boundary system up to `horizon` and returns a run
 * handle. Zero grid arguments select defaults (`n_u = 256`, `n_v = 1024`,
 * `xmax = 4 h0`); the time step adapts to the stability limits. Initial
 * data is the default compatible hump for u and the fitted equilibrium
 * level for v.
 *
 * # Safety
 * `model` and `out` must be valid pointers.
 */
WfStatus wf_simulate(const WfModel *model,
                     size_t n_u,
                     size_t n_v,
                     double xmax,
                     double horizon,
                     WfRun **out);

/**
 * Releases a run handle. NULL is a no-op.
 *
 * # Safety
 * `run` must come from `wf_simulate` and must not be used afterwards.
 */
void wf_run_free(WfRun *run);

/**
 * Verdict of the run: did the front escape, stall, or remain undecided
 * within the horizon?
 *
 * # Safety
 * `run` and `out` must be valid pointers.
 */
WfStatus wf_run_classification(const WfRun *run, WfClassification *out);

/**
 * Front position at the end of the run.
 *
 * # Safety
 * `run` and `out` must be valid pointers.
 */
WfStatus wf_run_h_final(const WfRun *run, double *out);

/**
 * Number of samples in the recorded time series.
 *
 * # Safety
 * `run` and `out` must be valid pointers.
 */
WfStatus wf_run_series_len(const WfRun *run, size_t *out);

/**
 * Copies one column of the time series into `buf`, which must hold exactly
 * `wf_run_series_len` elements (pass that value as `len`).
 *
 * # Safety
 * `run` must be valid and `buf` must point to `len` writable doubles.
 */
WfStatus wf_run_series_column(const WfRun *run, WfSeriesColumn column, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WOLFRONT_H */
