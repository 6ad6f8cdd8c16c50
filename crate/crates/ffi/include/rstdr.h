#ifndef RSTDR_H
#define RSTDR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RstdrStatus {
  RSTDR_STATUS_OK = 0,
  RSTDR_STATUS_NULL_POINTER = 1,
  RSTDR_STATUS_CONFIG = 2,
  RSTDR_STATUS_NUMERICAL = 3,
  RSTDR_STATUS_SCHEMA = 4,
  RSTDR_STATUS_IO = 5,
  RSTDR_STATUS_DIMENSION = 6,
  RSTDR_STATUS_OUT_OF_RANGE = 7,
  RSTDR_STATUS_PANIC = 8,
} RstdrStatus;

typedef enum RstdrModel {
  RSTDR_MODEL_BIB = 0,
  RSTDR_MODEL_BN = 1,
} RstdrModel;

/**
 * Panel of binomial counts with covariates `(1, x)`.
 */
typedef struct RstdrDataset RstdrDataset;

/**
 * Posterior draws of one chain.
 */
typedef struct RstdrFit RstdrFit;

/**
 * Seeded random stream.
 */
typedef struct RstdrRng RstdrRng;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rstdr_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *rstdr_last_error_message(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum RstdrStatus rstdr_rng_new(uint64_t seed, uint64_t stream, struct RstdrRng **out);

/**
 * # Safety
 * `rng` must come from [`rstdr_rng_new`] and not be used afterwards. NULL is ignored.
 */
void rstdr_rng_free(struct RstdrRng *rng);

/**
 * One `PG(b, c)` draw.
 *
 * # Safety
 * `rng` must be a live handle and `out` writable.
 */
enum RstdrStatus rstdr_pg_draw(struct RstdrRng *rng, uint32_t b, double c, double *out);

/**
 * Closed-form mean and variance of `PG(b, c)`; either output may be NULL.
 *
 * # Safety
 * Non-NULL outputs must be writable.
 */
enum RstdrStatus rstdr_pg_moments(double b, double c, double *mean, double *variance);

/**
 * Builds a dataset from parallel arrays of length `n`; `period` is zero-based.
 *
 * # Safety
 * Each array must hold `n` readable elements; `out` must be writable.
 */
enum RstdrStatus rstdr_dataset_new(uintptr_t n,
                                   uintptr_t periods,
                                   const uintptr_t *period,
                                   const uintptr_t *site,
                                   const double *s1,
                                   const double *s2,
                                   const double *x,
                                   const uint32_t *trials,
                                   const uint32_t *successes,
                                   struct RstdrDataset **out);

/**
 * # Safety
 * `data` must come from [`rstdr_dataset_new`] and not be used afterwards. NULL is ignored.
 */
void rstdr_dataset_free(struct RstdrDataset *data);

/**
 * Runs one chain with default priors. `sampler_toml` may be NULL for the
 * default sampler settings; otherwise it is a TOML table of sampler keys
 * (`iterations`, `burn_in`, `num_knots`, `seed`, ...). `model` overrides
 * any `model` key.
 *
 * # Safety
 * `data` must be live, `sampler_toml` NULL or NUL-terminated, `out` writable.
 */
enum RstdrStatus rstdr_fit(const struct RstdrDataset *data,
                           const char *sampler_toml,
                           enum RstdrModel model,
                           struct RstdrFit **out);

/**
 * # Safety
 * `fit` must come from [`rstdr_fit`] and not be used afterwards. NULL is ignored.
 */
void rstdr_fit_free(struct RstdrFit *fit);

/**
 * Retained draws and observations of a fit.
 *
 * # Safety
 * `fit` must be live; non-NULL outputs writable.
 */
enum RstdrStatus rstdr_fit_dims(const struct RstdrFit *fit,
                                uintptr_t *draws,
                                uintptr_t *observations);

/**
 * Posterior mean and equal-tailed 95% band of the CDF value of observation `obs`.
 *
 * # Safety
 * `fit` must be live; the three outputs writable.
 */
enum RstdrStatus rstdr_fit_cdf_summary(const struct RstdrFit *fit,
                                       uintptr_t obs,
                                       double *mean,
                                       double *lo95,
                                       double *hi95);

/**
 * Copies every CDF draw of observation `obs` into `buf` (capacity `len`).
 *
 * # Safety
 * `fit` must be live; `buf` must hold `len` writable doubles.
 */
enum RstdrStatus rstdr_fit_cdf_draws(const struct RstdrFit *fit,
                                     uintptr_t obs,
                                     double *buf,
                                     uintptr_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RSTDR_H */
