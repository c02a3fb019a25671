#ifndef HOMOG_H
#define HOMOG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HomogStatus {
  HOMOG_STATUS_OK = 0,
  HOMOG_STATUS_NULL_POINTER = 1,
  HOMOG_STATUS_INVALID_ARGUMENT = 2,
  HOMOG_STATUS_CONFIG = 3,
  HOMOG_STATUS_ELLIPTICITY = 4,
  HOMOG_STATUS_NON_CONVERGENCE = 5,
  HOMOG_STATUS_UNDERRESOLVED = 6,
  HOMOG_STATUS_RESOURCE = 7,
  HOMOG_STATUS_IO = 8,
  /**
   * The suite or sweep ran but reported failures.
   */
  HOMOG_STATUS_CHECK_FAILED = 9,
  HOMOG_STATUS_INTERNAL = 10,
} HomogStatus;

/**
 * Which homogenized tensor [`homog_cell_tensor`] copies out.
 */
typedef enum HomogTensor {
  /**
   * `a_ij^{ab}` at `((i * d + j) * m + a) * m + b`.
   */
  HOMOG_TENSOR_A = 0,
  /**
   * `V_i^{ab}` at `(i * m + a) * m + b`.
   */
  HOMOG_TENSOR_V = 1,
  HOMOG_TENSOR_B = 2,
  /**
   * `c^{ab}` at `a * m + b`.
   */
  HOMOG_TENSOR_C = 3,
} HomogTensor;

typedef enum HomogModel {
  HOMOG_MODEL_POWER = 0,
  HOMOG_MODEL_POWER_LOG = 1,
} HomogModel;

/**
 * Opaque cell data: correctors, flux correctors and homogenized tensors.
 */
typedef struct HomogCell HomogCell;

/**
 * Opaque coefficient set.
 */
typedef struct HomogCoefficients HomogCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length, 0 if none.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t homog_last_error(char *buf, size_t len);

/**
 * Builds a named preset (`laminate`, `smooth-trig`, ...).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HomogStatus homog_coefficients_preset(const char *name,
                                           uint64_t seed,
                                           struct HomogCoefficients **out);

/**
 * Builds the coefficients described by a TOML configuration text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HomogStatus homog_coefficients_from_config(const char *toml, struct HomogCoefficients **out);

/**
 * Observed ellipticity constant and largest lower-order coefficient
 * (`V`, `B`, `c`) on an `n^d` grid.
 *
 * # Safety
 * `coeffs` must come from this library; `mu` and `kappa` must be valid.
 */
enum HomogStatus homog_coefficients_validate(const struct HomogCoefficients *coeffs,
                                             size_t n,
                                             double *mu,
                                             double *kappa);

/**
 * # Safety
 * `coeffs` must be null or come from this library, and not be used again.
 */
void homog_coefficients_free(struct HomogCoefficients *coeffs);

/**
 * Solves every cell problem on an `n^d` grid.
 *
 * # Safety
 * `coeffs` must come from this library and `out` be a valid pointer.
 */
enum HomogStatus homog_cell_compute(const struct HomogCoefficients *coeffs,
                                    size_t n,
                                    struct HomogCell **out);

/**
 * Dimension and system size of the cell data.
 *
 * # Safety
 * All pointers must be valid.
 */
enum HomogStatus homog_cell_layout(const struct HomogCell *cell, size_t *d, size_t *m);

/**
 * Copies a homogenized tensor into `buf`. `needed` receives the entry
 * count; a short `buf` copies nothing and returns `INVALID_ARGUMENT`.
 *
 * # Safety
 * `buf` must point to `len` doubles (or be null with `len = 0`); `needed`
 * must be valid.
 */
enum HomogStatus homog_cell_tensor(const struct HomogCell *cell,
                                   enum HomogTensor which,
                                   double *buf,
                                   size_t len,
                                   size_t *needed);

/**
 * # Safety
 * `cell` must be null or come from this library, and not be used again.
 */
void homog_cell_free(struct HomogCell *cell);

/**
 * Least-squares fit of `e = C eps^s` (`POWER`) or `e = C eps ln(scale/eps)`
 * (`POWER_LOG`) over `n` rows.
 *
 * # Safety
 * `eps` and `err` must point to `n` doubles; the outputs must be valid.
 */
enum HomogStatus homog_fit_rate(const double *eps,
                                const double *err,
                                size_t n,
                                enum HomogModel model,
                                double scale,
                                double *slope,
                                double *coefficient,
                                double *residual);

/**
 * Runs the verification suite for a TOML configuration (empty text for the
 * defaults). `json` receives the report; the status is `CHECK_FAILED` when
 * any stage failed.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `json` a valid pointer.
 */
enum HomogStatus homog_verify(const char *toml, char **json);

/**
 * Runs the eps sweep of a TOML configuration and writes `rates.csv`,
 * `rates.dat` and `report.json` into `out_dir`. `json` (optional) receives
 * the report.
 *
 * # Safety
 * `toml` and `out_dir` must be NUL-terminated strings; `json` may be null.
 */
enum HomogStatus homog_run_plan(const char *toml, const char *out_dir, char **json);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void homog_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMOG_H */
