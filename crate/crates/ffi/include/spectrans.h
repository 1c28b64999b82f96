#ifndef SPECTRANS_H
#define SPECTRANS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every exported function.
 */
typedef enum SpectransStatus {
  SPECTRANS_STATUS_OK = 0,
  SPECTRANS_STATUS_NULL_POINTER = 1,
  SPECTRANS_STATUS_INVALID_INPUT = 2,
  SPECTRANS_STATUS_NUMERICAL = 3,
  SPECTRANS_STATUS_DIVERGENT = 4,
  SPECTRANS_STATUS_AT_TRANSITION = 5,
  SPECTRANS_STATUS_BUFFER_TOO_SMALL = 6,
  SPECTRANS_STATUS_PANIC = 7,
} SpectransStatus;

/**
 * Opaque Bloch Hamiltonian handle.
 */
typedef struct SpectransModel SpectransModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Hatano–Nelson chain; `t_l` multiplies `β`, `t_r` multiplies `1/β`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum SpectransStatus spectrans_model_hatano_nelson(double t_l,
                                                   double t_r,
                                                   struct SpectransModel **out);

/**
 * Non-reciprocal SSH chain.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum SpectransStatus spectrans_model_ssh(double t1,
                                         double t2,
                                         double t3,
                                         double gamma,
                                         struct SpectransModel **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from a constructor and not have been freed.
 */
void spectrans_model_free(struct SpectransModel *model);

/**
 * Number of bands of the model.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SpectransStatus spectrans_model_bands(const struct SpectransModel *model, size_t *out);

/**
 * Thermodynamic metric `G_W(μ)` on `k_grid` momenta.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SpectransStatus spectrans_gw_thermo(const struct SpectransModel *model,
                                         double mu,
                                         size_t k_grid,
                                         double *out);

/**
 * Finite-difference metric of the `sites`-cell ring.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SpectransStatus spectrans_metric_fd(const struct SpectransModel *model,
                                         double mu,
                                         double dmu,
                                         size_t sites,
                                         double *out);

/**
 * Finite-size excess `N (G_W^N - G_W)`.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SpectransStatus spectrans_n_delta_gw(const struct SpectransModel *model,
                                          double mu,
                                          double dmu,
                                          size_t sites,
                                          size_t k_grid,
                                          double *out);

/**
 * Ring spectrum at gauge μ. Writes up to `capacity` values into `re`/`im` and
 * the full count into `len`; returns `BUFFER_TOO_SMALL` when it does not fit.
 *
 * # Safety
 * `re` and `im` must hold `capacity` doubles; `len` must be valid for writes.
 */
enum SpectransStatus spectrans_ring_spectrum(const struct SpectransModel *model,
                                             size_t sites,
                                             double mu,
                                             double *re,
                                             double *im,
                                             size_t capacity,
                                             size_t *len);

/**
 * Squared 2-Wasserstein distance between two equal-size point clouds.
 *
 * # Safety
 * Each of the four buffers must hold `n` doubles; `out` must be valid for writes.
 */
enum SpectransStatus spectrans_wasserstein2(const double *re_a,
                                            const double *im_a,
                                            const double *re_b,
                                            const double *im_b,
                                            size_t n,
                                            double *out);

/**
 * Non-Bloch winding number of a chiral two-band model with circular GBZ
 * radius `radius`; `AT_TRANSITION` when a zero lies on the GBZ.
 *
 * # Safety
 * `model` must be a live handle and `out` valid for writes.
 */
enum SpectransStatus spectrans_winding_nonbloch(const struct SpectransModel *model,
                                                double radius,
                                                double *out);

/**
 * h-space metric of the single-harmonic quasiperiodic ring.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SpectransStatus spectrans_quasi_gw_h(double lambda,
                                          double omega,
                                          double phi,
                                          double g,
                                          size_t sites,
                                          double h,
                                          double dh,
                                          double *out);

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to `capacity`) and returns its full length in bytes without the NUL.
 *
 * # Safety
 * `buf` must be valid for `capacity` bytes or null with `capacity = 0`.
 */
size_t spectrans_last_error(char *buf, size_t capacity);

/**
 * Static description of a status code.
 */
const char *spectrans_status_string(enum SpectransStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPECTRANS_H */
