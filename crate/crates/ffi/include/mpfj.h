#ifndef MPFJ_H
#define MPFJ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by all functions.
 */
typedef enum MpfjStatus {
  MPFJ_STATUS_OK = 0,
  MPFJ_STATUS_NULL_POINTER = 1,
  MPFJ_STATUS_INVALID_CONFIG = 2,
  MPFJ_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Unbounded queues with `μ_j τ ≤ 1` have no stationary law.
   */
  MPFJ_STATUS_UNSTABLE = 4,
  MPFJ_STATUS_ANALYSIS_FAILED = 5,
  MPFJ_STATUS_SIMULATION_FAILED = 6,
  /**
   * The requested metric is not available for this result.
   */
  MPFJ_STATUS_UNAVAILABLE = 7,
  MPFJ_STATUS_PANIC = 8,
} MpfjStatus;

/**
 * System configuration handle.
 */
typedef struct MpfjConfig MpfjConfig;

/**
 * Metrics produced by [`mpfj_analyze`] or [`mpfj_simulate`].
 */
typedef struct MpfjResult MpfjResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 *
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *mpfj_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mpfj_version(void);

/**
 * Creates a configuration with `n_paths` paths, code dimension `k_data`,
 * buffer size `queue_cap` (0 means unbounded) and inter-arrival time `tau`.
 * `service_rates` and `erasure_probs` each point to `n_paths` values.
 *
 * # Safety
 * The rate arrays must hold `n_paths` readable doubles and `out` must be writable.
 */
enum MpfjStatus mpfj_config_new(size_t n_paths,
                                size_t k_data,
                                size_t queue_cap,
                                double tau,
                                const double *service_rates,
                                const double *erasure_probs,
                                struct MpfjConfig **out);

/**
 * Releases a configuration. Null is ignored.
 *
 * # Safety
 * `cfg` must come from [`mpfj_config_new`] and not have been freed.
 */
void mpfj_config_free(struct MpfjConfig *cfg);

/**
 * Runs the analytic engine. `cells_per_period` sets the integration grid
 * (0 selects the default of 400).
 *
 * # Safety
 * `cfg` must be a live handle and `out` must be writable.
 */
enum MpfjStatus mpfj_analyze(const struct MpfjConfig *cfg,
                             size_t cells_per_period,
                             struct MpfjResult **out);

/**
 * Runs the Monte Carlo engine for `n_blocks` blocks, discarding the first
 * `warmup_blocks`.
 *
 * # Safety
 * `cfg` must be a live handle and `out` must be writable.
 */
enum MpfjStatus mpfj_simulate(const struct MpfjConfig *cfg,
                              size_t n_blocks,
                              size_t warmup_blocks,
                              uint64_t seed,
                              struct MpfjResult **out);

/**
 * Releases a result. Null is ignored.
 *
 * # Safety
 * `res` must come from [`mpfj_analyze`] or [`mpfj_simulate`] and not have been freed.
 */
void mpfj_result_free(struct MpfjResult *res);

/**
 * Block decoding probability.
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum MpfjStatus mpfj_result_success_prob(const struct MpfjResult *res, double *out);

/**
 * Latency CDF at `t` seconds (improper: tends to the success probability).
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum MpfjStatus mpfj_result_latency_cdf(const struct MpfjResult *res, double t, double *out);

/**
 * PAoI CDF at `t` seconds; `Unavailable` when the engine produced no PAoI law.
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum MpfjStatus mpfj_result_paoi_cdf(const struct MpfjResult *res, double t, double *out);

/**
 * PAoI percentile at `level ∈ (0, 1)`; `+inf` when the level is never reached.
 *
 * # Safety
 * `res` must be a live handle and `out` writable.
 */
enum MpfjStatus mpfj_result_paoi_percentile(const struct MpfjResult *res,
                                            double level,
                                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPFJ_H */
