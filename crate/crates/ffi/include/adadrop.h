#ifndef ADADROP_H
#define ADADROP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Mask family selector for [`AdSolverConfig::mask`].
 */
#define AD_MASK_NONE -1

#define AD_MASK_BINARY 0

#define AD_MASK_GAUSSIAN 1

#define AD_MASK_BERNOULLI 2

/**
 * Step schedule selector for [`AdSolverConfig::schedule`].
 */
#define AD_SCHEDULE_CONSTANT 0

#define AD_SCHEDULE_LINEAR_DECAY 1

typedef enum AdStatus {
  AD_STATUS_OK = 0,
  AD_STATUS_NULL_POINTER = 1,
  AD_STATUS_INVALID_ARGUMENT = 2,
  AD_STATUS_PARSE = 3,
  AD_STATUS_NUMERICAL = 4,
  AD_STATUS_UNSUPPORTED = 5,
  AD_STATUS_PANIC = 6,
} AdStatus;

typedef struct AdPenalty AdPenalty;

typedef struct AdProblem AdProblem;

typedef struct AdTrace AdTrace;

typedef struct AdSolverConfig {
  double lambda;
  double step;
  size_t iters;
  uint64_t seed;
  size_t log_every;
  int32_t mask;
  int32_t schedule;
  double zero_tol;
} AdSolverConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ad_version(void);

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into the library from the same thread.
 */
const char *ad_last_error_message(void);

/**
 * Parses a penalty such as `"logsum:eps=2"`.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdStatus ad_penalty_parse(const char *spec, struct AdPenalty **out);

/**
 * # Safety
 * `p` must come from [`ad_penalty_parse`] and not be used afterwards.
 */
void ad_penalty_free(struct AdPenalty *p);

/**
 * `Omega(w)` for a vector of length `len`.
 *
 * # Safety
 * `w` must hold `len` doubles.
 */
enum AdStatus ad_penalty_omega(const struct AdPenalty *p, const double *w, size_t len, double *out);

/**
 * Dual `f(eta)`; `+inf` outside its domain.
 *
 * # Safety
 * `eta` must hold `len` doubles.
 */
enum AdStatus ad_penalty_f_dual(const struct AdPenalty *p,
                                const double *eta,
                                size_t len,
                                double *out);

/**
 * Writes `eta_hat(w)` (entries may be `+inf`) to `eta_out`.
 *
 * # Safety
 * `w` and `eta_out` must each hold `len` doubles.
 */
enum AdStatus ad_penalty_eta_hat(const struct AdPenalty *p,
                                 const double *w,
                                 size_t len,
                                 double *eta_out);

/**
 * Dawson's integral.
 */
double ad_dawson(double u);

/**
 * VariationalDropout dual `f(eta)` for keep scale `lambda`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum AdStatus ad_vardrop_f(double eta, double lambda, double *out);

/**
 * Effective penalty of a dropout method (`"vardrop:lambda=1"`,
 * `"hardconcrete:lambda=1"`, `"standout:lambda=1,w2=1"`) at magnitude `w`.
 *
 * # Safety
 * `method` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdStatus ad_effective_penalty(const char *method, double w, double *out);

/**
 * Defaults matching the command-line `solve` command.
 */
struct AdSolverConfig ad_solver_config_default(void);

/**
 * Builds a least-squares problem from row-major `x` (`n * d`) and `y`
 * (`n`). With `standardize != 0` the columns are rescaled to unit mean
 * square first; otherwise they must already be.
 *
 * # Safety
 * `x` must hold `n * d` doubles, `y` `n` doubles, `out` a valid pointer.
 */
enum AdStatus ad_problem_new(const double *x,
                             const double *y,
                             size_t n,
                             size_t d,
                             int32_t standardize_columns,
                             struct AdProblem **out);

/**
 * Column scales applied by [`ad_problem_new`] (all 1 without
 * standardization).
 *
 * # Safety
 * `scales_out` must hold `d` doubles.
 */
enum AdStatus ad_problem_scales(const struct AdProblem *p, double *scales_out);

/**
 * # Safety
 * `p` must come from [`ad_problem_new`] and not be used afterwards.
 */
void ad_problem_free(struct AdProblem *p);

/**
 * Runs `solver` (`"irls"`, `"ada-prox"`, `"iht"`, ...) with `penalty`
 * (`"l1"`, `"vardrop:lambda=1"`, `"hardthresh:k=5"` for iht, ...).
 * A NULL `config` uses [`ad_solver_config_default`].
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be a valid pointer.
 */
enum AdStatus ad_solve(const struct AdProblem *problem,
                       const char *solver,
                       const char *penalty,
                       const struct AdSolverConfig *config,
                       struct AdTrace **out);

/**
 * Number of logged records; 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live trace.
 */
size_t ad_trace_len(const struct AdTrace *t);

/**
 * Dimension of the iterates; 0 for NULL.
 *
 * # Safety
 * `t` must be NULL or a live trace.
 */
size_t ad_trace_dim(const struct AdTrace *t);

/**
 * Iteration number, risk and objective of record `i`. Any output pointer
 * may be NULL.
 *
 * # Safety
 * `t` must be a live trace; non-NULL outputs must be valid.
 */
enum AdStatus ad_trace_record(const struct AdTrace *t,
                              size_t i,
                              size_t *iter,
                              double *risk,
                              double *objective);

/**
 * Copies the iterate of record `i` into `w_out` (`ad_trace_dim` doubles).
 *
 * # Safety
 * `w_out` must hold `ad_trace_dim(t)` doubles.
 */
enum AdStatus ad_trace_iterate(const struct AdTrace *t, size_t i, double *w_out);

/**
 * # Safety
 * `t` must come from [`ad_solve`] and not be used afterwards.
 */
void ad_trace_free(struct AdTrace *t);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADADROP_H */
