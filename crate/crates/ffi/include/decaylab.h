#ifndef DECAYLAB_H
#define DECAYLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DlConvOp {
  DL_CONV_OP_ADD = 0,
  DL_CONV_OP_SUB = 1,
  DL_CONV_OP_MUL = 2,
} DlConvOp;

typedef enum DlStatus {
  DL_STATUS_OK = 0,
  DL_STATUS_NULL_POINTER = 1,
  DL_STATUS_INVALID_ARGUMENT = 2,
  DL_STATUS_PRECONDITION = 3,
  DL_STATUS_BUFFER_TOO_SMALL = 4,
  DL_STATUS_OVERFLOW = 5,
  DL_STATUS_IO = 6,
  DL_STATUS_PARSE = 7,
  DL_STATUS_PANIC = 8,
} DlStatus;

/**
 * Opaque measure handle.
 */
typedef struct DlMeasure DlMeasure;

/**
 * Opaque 1-D dyadic set handle.
 */
typedef struct DlSet DlSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *dl_last_error(void);

/**
 * Library version as a static string.
 */
const char *dl_version(void);

/**
 * Uniform probability measure on `[a, b]` at grid level `level`.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum DlStatus dl_measure_uniform(double a, double b, uint32_t level, struct DlMeasure **out);

/**
 * Measure from `len` cell masses starting at cell index `offset`.
 *
 * # Safety
 * `masses` must point to `len` readable doubles; `out` must be writable.
 */
enum DlStatus dl_measure_from_masses(uint32_t level,
                                     int64_t offset,
                                     const double *masses,
                                     size_t len,
                                     struct DlMeasure **out);

/**
 * Frees a measure; null is ignored.
 *
 * # Safety
 * `m` must come from this library and not be used afterwards.
 */
void dl_measure_free(struct DlMeasure *m);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum DlStatus dl_measure_total(const struct DlMeasure *m, double *out);

/**
 * Number of cells in the measure's window.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum DlStatus dl_measure_len(const struct DlMeasure *m, size_t *out);

/**
 * # Safety
 * `m` must be a live handle; `level` and `offset` writable.
 */
enum DlStatus dl_measure_grid(const struct DlMeasure *m, uint32_t *level, int64_t *offset);

/**
 * Copies cell masses into `buf`. `written` always receives the number of
 * cells; when `cap` is too small nothing is copied and
 * `DL_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `buf` must hold `cap` doubles; `written` must be writable.
 */
enum DlStatus dl_measure_copy_masses(const struct DlMeasure *m,
                                     double *buf,
                                     size_t cap,
                                     size_t *written);

/**
 * Additive, difference or multiplicative convolution.
 *
 * # Safety
 * `mu`, `nu` must be live handles; `out` writable.
 */
enum DlStatus dl_convolve(const struct DlMeasure *mu,
                          const struct DlMeasure *nu,
                          enum DlConvOp op,
                          struct DlMeasure **out);

/**
 * Regularization at dyadic scale `delta`.
 *
 * # Safety
 * `mu` must be a live handle; `out` writable.
 */
enum DlStatus dl_regularize(const struct DlMeasure *mu, double delta, struct DlMeasure **out);

/**
 * Fourier transform at `xi`, as real and imaginary parts.
 *
 * # Safety
 * `mu` must be a live handle; `re`, `im` writable.
 */
enum DlStatus dl_fourier_at(const struct DlMeasure *mu, double xi, double *re, double *im);

/**
 * Transform of the multiplicative convolution at `xi`.
 *
 * # Safety
 * `mu`, `nu` must be live handles; `re`, `im` writable.
 */
enum DlStatus dl_product_fourier(const struct DlMeasure *mu,
                                 const struct DlMeasure *nu,
                                 double xi,
                                 double *re,
                                 double *im);

/**
 * s-energy of the regularization at `delta`.
 *
 * # Safety
 * `mu` must be a live handle; `out` writable.
 */
enum DlStatus dl_energy_spatial(const struct DlMeasure *mu, double s, double delta, double *out);

/**
 * L2 norm of the regularization at `delta`.
 *
 * # Safety
 * `mu` must be a live handle; `out` writable.
 */
enum DlStatus dl_l2_at_scale(const struct DlMeasure *mu, double delta, double *out);

/**
 * Serializes a measure to the text format. Free the string with
 * [`dl_string_free`].
 *
 * # Safety
 * `mu` must be a live handle; `out` writable.
 */
enum DlStatus dl_measure_to_text(const struct DlMeasure *mu, char **out);

/**
 * Parses the text format back into a measure.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` writable.
 */
enum DlStatus dl_measure_from_text(const char *text, struct DlMeasure **out);

/**
 * Frees a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void dl_string_free(char *s);

/**
 * 1-D set from `len` cell indices at `level`; duplicates are merged.
 *
 * # Safety
 * `cells` must point to `len` readable integers; `out` writable.
 */
enum DlStatus dl_set_from_cells(uint32_t level,
                                const int64_t *cells,
                                size_t len,
                                struct DlSet **out);

/**
 * Frees a set; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void dl_set_free(struct DlSet *s);

/**
 * # Safety
 * `s` must be a live handle; `out` writable.
 */
enum DlStatus dl_set_len(const struct DlSet *s, size_t *out);

/**
 * Number of dyadic r-cells meeting the set.
 *
 * # Safety
 * `s` must be a live handle; `out` writable.
 */
enum DlStatus dl_covering_number(const struct DlSet *s, double r, size_t *out);

/**
 * Quadruple count `a1 - b1 = a2 - b2`. Overflow past 64 bits is reported.
 *
 * # Safety
 * `a`, `b` must be live handles; `out` writable.
 */
enum DlStatus dl_additive_energy(const struct DlSet *a, const struct DlSet *b, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DECAYLAB_H */
