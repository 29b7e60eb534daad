#ifndef SGEXTREMES_H
#define SGEXTREMES_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum SgxStatus {
  SGX_STATUS_OK = 0,
  SGX_STATUS_NULL_POINTER = 1,
  SGX_STATUS_INVALID_PARAMETER = 2,
  SGX_STATUS_NUMERICAL = 3,
  SGX_STATUS_IO = 4,
  SGX_STATUS_FORMAT = 5,
  SGX_STATUS_BUFFER_TOO_SMALL = 6,
  SGX_STATUS_PANIC = 7,
} SgxStatus;

/**
 * Opaque lattice field.
 */
typedef struct SgxField SgxField;

/**
 * Opaque extremal point process sample.
 */
typedef struct SgxPoints SgxPoints;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t sgx_last_error_message(char *buf, size_t len);

/**
 * `m_eps` for lattice spacing `epsilon`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SgxStatus sgx_centering(double epsilon, double *out);

/**
 * Spectral GFF sample `index` of the run with root `seed` on the `n x n`
 * torus. The handle is written to `*out`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum SgxStatus sgx_gff_sample(size_t n,
                              double mass_sq,
                              uint64_t seed,
                              size_t index,
                              struct SgxField **out);

/**
 * Field from `n * n` row-major values.
 *
 * # Safety
 * `values` must be valid for `n * n` reads and `out` for writes.
 */
enum SgxStatus sgx_field_from_values(size_t n, const double *values, struct SgxField **out);

/**
 * Side length of the field's lattice, or 0 for a null handle.
 *
 * # Safety
 * `field` must be null or a live handle.
 */
size_t sgx_field_n(const struct SgxField *field);

/**
 * Copies the row-major values into `buf`, which must hold `n * n` doubles.
 *
 * # Safety
 * `field` must be a live handle and `buf` valid for `len` writes.
 */
enum SgxStatus sgx_field_values(const struct SgxField *field, double *buf, size_t len);

/**
 * Writes the field in the binary `FLD1` format.
 *
 * # Safety
 * `field` must be a live handle and `path` a NUL-terminated string.
 */
enum SgxStatus sgx_field_write(const struct SgxField *field, const char *path);

/**
 * Reads a `FLD1` file into a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum SgxStatus sgx_field_read(const char *path, struct SgxField **out);

/**
 * Releases a field handle. Null is ignored.
 *
 * # Safety
 * `field` must be null or a handle not yet freed.
 */
void sgx_field_free(struct SgxField *field);

/**
 * Extremal process of the field: r-local maxima with radius
 * `r_lattice * epsilon`, heights centered by `m_eps`.
 *
 * # Safety
 * `field` must be a live handle and `out` valid for writes.
 */
enum SgxStatus sgx_extremal_process(const struct SgxField *field,
                                    double r_lattice,
                                    struct SgxPoints **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `points` must be null or a live handle.
 */
size_t sgx_points_len(const struct SgxPoints *points);

/**
 * Location `(x, y)` in `[0,1)^2` and centered height of point `i`.
 *
 * # Safety
 * `points` must be a live handle; the output pointers valid for writes.
 */
enum SgxStatus sgx_points_get(const struct SgxPoints *points,
                              size_t i,
                              double *x,
                              double *y,
                              double *h);

/**
 * Releases a point handle. Null is ignored.
 *
 * # Safety
 * `points` must be null or a handle not yet freed.
 */
void sgx_points_free(struct SgxPoints *points);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SGEXTREMES_H */
