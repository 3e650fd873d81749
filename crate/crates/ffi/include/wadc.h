#ifndef WADC_H
#define WADC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WadcStatus {
  WADC_STATUS_OK = 0,
  WADC_STATUS_NULL_POINTER = 1,
  WADC_STATUS_INVALID_ARGUMENT = 2,
  WADC_STATUS_DIMENSION_MISMATCH = 3,
  WADC_STATUS_PARSE = 4,
  WADC_STATUS_NUMERICAL = 5,
  WADC_STATUS_DELAY_RANGE = 6,
  WADC_STATUS_NO_STABLE_DELAY = 7,
  WADC_STATUS_TOO_FEW_PEAKS = 8,
  WADC_STATUS_PANIC = 99,
} WadcStatus;

typedef enum WadcVerdictKind {
  WADC_VERDICT_KIND_STABLE = 0,
  WADC_VERDICT_KIND_UNSTABLE = 1,
  WADC_VERDICT_KIND_UNDETERMINED = 2,
} WadcVerdictKind;

typedef enum WadcLmiKind {
  WADC_LMI_KIND_FEASIBLE = 0,
  WADC_LMI_KIND_UNDETERMINED = 1,
  WADC_LMI_KIND_NECESSARY_FAIL = 2,
} WadcLmiKind;

/**
 * Opaque switched closed-loop family.
 */
typedef struct WadcSystem WadcSystem;

/**
 * Swing mode of one switching state.
 */
typedef struct WadcModePoint {
  size_t n;
  double mu_re;
  double mu_im;
  double lambda_re;
  double lambda_im;
  double zeta;
  double spectral_radius;
} WadcModePoint;

typedef struct WadcDampingBounds {
  double zeta_min;
  double zeta_max;
  double mu_abs_min;
  double mu_abs_max;
  size_t argmin_delay;
  size_t argmax_delay;
} WadcDampingBounds;

typedef struct WadcVerdict {
  enum WadcVerdictKind kind;
  /**
   * Offending delay when unstable, 0 otherwise.
   */
  size_t witness_delay;
  double spectral_radius;
  double max_misalignment;
} WadcVerdict;

typedef struct WadcLmiResult {
  enum WadcLmiKind kind;
  /**
   * Smallest certified margin (feasible) or final residual (undetermined).
   */
  double margin;
  double epsilon;
  size_t iterations;
  /**
   * Unstable state index for NecessaryFail.
   */
  size_t witness;
} WadcLmiResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Single-machine infinite-bus plant with scalar speed-feedback `gain`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum WadcStatus wadc_system_smib(double h,
                                 double gain,
                                 size_t n_min,
                                 size_t n_max,
                                 struct WadcSystem **out);

/**
 * Second-order modal surrogate with open-loop mode `lambda_re ± j lambda_im`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum WadcStatus wadc_system_surrogate(double lambda_re,
                                      double lambda_im,
                                      double h,
                                      double gain,
                                      size_t n_min,
                                      size_t n_max,
                                      struct WadcSystem **out);

/**
 * Plant from a JSON model document. `gain` is row-major `m x p` with
 * `gain_len == m * p`.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `gain` must point to `gain_len`
 * doubles and `out` to writable storage for one handle.
 */
enum WadcStatus wadc_system_from_model_json(const char *json,
                                            double h,
                                            const double *gain,
                                            size_t gain_len,
                                            size_t n_min,
                                            size_t n_max,
                                            struct WadcSystem **out);

/**
 * # Safety
 * `system` must come from a `wadc_system_*` constructor and not be used
 * afterwards. Null is ignored.
 */
void wadc_system_free(struct WadcSystem *system);

/**
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_state_count(const struct WadcSystem *system, size_t *out);

/**
 * Stacked state dimension (plant plus delay chain).
 *
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_dimension(const struct WadcSystem *system, size_t *out);

/**
 * Swing mode at delay `n` (in steps).
 *
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_swing_mode(const struct WadcSystem *system,
                                       size_t n,
                                       struct WadcModePoint *out);

/**
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_damping_bounds(const struct WadcSystem *system,
                                           struct WadcDampingBounds *out);

/**
 * Eigenvalue-modulus verdict. `constancy_tol <= 0` selects the default.
 *
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_simplified_verdict(const struct WadcSystem *system,
                                               double constancy_tol,
                                               struct WadcVerdict *out);

/**
 * Lyapunov LMI test: one shared `P` when `common != 0`, otherwise one `P`
 * per state. `epsilon <= 0` selects the scale-aware default.
 *
 * # Safety
 * `system` must be a live handle and `out` writable.
 */
enum WadcStatus wadc_system_lmi(const struct WadcSystem *system,
                                int common,
                                double epsilon,
                                struct WadcLmiResult *out);

/**
 * Closed-loop response to a swing-mode kick of `magnitude` at step 0 under
 * the delay sequence `delays[0..len]`. Writes output channel 0 for steps
 * `0..=len` into `y` (capacity `y_len >= len + 1`).
 *
 * # Safety
 * `system` must be a live handle, `delays` must point to `len` entries and
 * `y` to `y_len` writable doubles.
 */
enum WadcStatus wadc_system_simulate(const struct WadcSystem *system,
                                     const size_t *delays,
                                     size_t len,
                                     double magnitude,
                                     double *y,
                                     size_t y_len);

/**
 * Gain giving the modal surrogate a delay margin of `target` steps.
 *
 * # Safety
 * `out` must be writable.
 */
enum WadcStatus wadc_calibrate_surrogate_gain(double lambda_re,
                                              double lambda_im,
                                              double h,
                                              size_t target,
                                              double *out);

/**
 * Copies the calling thread's last error into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes). Returns the full message length; pass a
 * null `buf` to query it.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t wadc_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WADC_H */
