#ifndef AFTGOF_H
#define AFTGOF_H

/* Generated by cbindgen from the aftgof-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes; everything except `Ok` leaves a message in
// `aftgof_last_error`.
typedef enum AftgofStatus {
  // Success.
  AFTGOF_STATUS_OK = 0,
  // NULL handle, bad enum value, or otherwise malformed arguments.
  AFTGOF_STATUS_INVALID_ARGUMENT = 1,
  // Data failed validation (wrong sizes, non-positive times, ...).
  AFTGOF_STATUS_BAD_INPUT = 2,
  // Numerical failure: non-convergence, singular system, degenerate
  // resampling.
  AFTGOF_STATUS_NUMERICAL = 3,
  // A panic crossed the boundary; state may be inconsistent.
  AFTGOF_STATUS_PANIC = 4,
} AftgofStatus;

// Opaque survival dataset handle.
typedef struct AftgofDataset AftgofDataset;

// Opaque fitted-model handle.
typedef struct AftgofFit AftgofFit;

// Opaque diagnostic-test report handle.
typedef struct AftgofReport AftgofReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent non-OK status on this thread. The pointer
// stays valid until the next fallible call on the same thread; never
// free it.
const char *aftgof_last_error(void);

// Build a dataset from parallel arrays: `time` and `status` of length
// `n`, covariates row-major `n * p`. Column names default to
// "z0", "z1", ... On success writes a handle through `out`.
//
// # Safety
// `time`, `status`, `covariates`, and `out` must point to readable
// (resp. writable) memory of the stated lengths.
enum AftgofStatus aftgof_dataset_new(const double *time,
                                     const uint8_t *status,
                                     const double *covariates,
                                     size_t n,
                                     size_t p,
                                     struct AftgofDataset **out);

// Release a dataset handle.
//
// # Safety
// `handle` must come from `aftgof_dataset_new` and not be used again.
void aftgof_dataset_free(struct AftgofDataset *handle);

// Number of subjects in the dataset, or 0 on NULL.
//
// # Safety
// `handle` must be a live dataset handle or NULL.
size_t aftgof_dataset_n(const struct AftgofDataset *handle);

// Number of covariates in the dataset, or 0 on NULL.
//
// # Safety
// `handle` must be a live dataset handle or NULL.
size_t aftgof_dataset_p(const struct AftgofDataset *handle);

// Fit the model. `estimator`: 0 = non-smooth rank, 1 = induced-smoothed
// rank, 2 = iterative least squares. Writes a fit handle through `out`.
//
// # Safety
// `dataset` must be a live dataset handle; `out` must be writable.
enum AftgofStatus aftgof_fit(const struct AftgofDataset *dataset,
                             int32_t estimator,
                             struct AftgofFit **out);

// Release a fit handle.
//
// # Safety
// `handle` must come from `aftgof_fit` and not be used again.
void aftgof_fit_free(struct AftgofFit *handle);

// Copy the fitted coefficients into `beta_out` (length `p`).
//
// # Safety
// `fit` must be a live fit handle; `beta_out` must hold `p` doubles.
enum AftgofStatus aftgof_fit_beta(const struct AftgofFit *fit, double *beta_out, size_t p);

// 1 when the solver converged, 0 otherwise (or on NULL).
//
// # Safety
// `fit` must be a live fit handle or NULL.
int32_t aftgof_fit_converged(const struct AftgofFit *fit);

// Run one diagnostic test. `test`: 0 = omnibus, 1 = link, 2 =
// functional form of covariate `form_column` (ignored otherwise).
// `standardized` is a boolean. `paths` resampled paths are drawn from
// `seed`. Writes a report handle through `out`.
//
// # Safety
// `dataset` must be a live dataset handle; `out` must be writable.
enum AftgofStatus aftgof_run_test(const struct AftgofDataset *dataset,
                                  int32_t estimator,
                                  int32_t test,
                                  size_t form_column,
                                  int32_t standardized,
                                  size_t paths,
                                  uint64_t seed,
                                  struct AftgofReport **out);

// Release a report handle.
//
// # Safety
// `handle` must come from `aftgof_run_test` and not be used again.
void aftgof_report_free(struct AftgofReport *handle);

// Resampling p-value of the test, or NaN on NULL.
//
// # Safety
// `report` must be a live report handle or NULL.
double aftgof_report_p_value(const struct AftgofReport *report);

// Observed supremum statistic, or NaN on NULL.
//
// # Safety
// `report` must be a live report handle or NULL.
double aftgof_report_statistic(const struct AftgofReport *report);

// Number of resampled paths that converged, or 0 on NULL.
//
// # Safety
// `report` must be a live report handle or NULL.
size_t aftgof_report_paths_effective(const struct AftgofReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFTGOF_H */
