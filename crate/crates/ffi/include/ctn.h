#ifndef CTN_H
#define CTN_H

/* Generated by cbindgen from ctn-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum CtnStatus {
  CTN_OK = 0,
  /**
   * A required pointer argument was null.
   */
  CTN_NULL_ARGUMENT = 1,
  /**
   * An argument value violates the documented contract.
   */
  CTN_INVALID_ARGUMENT = 2,
  CTN_IO_ERROR = 3,
  CTN_PARSE_ERROR = 4,
  /**
   * A panic was caught at the boundary; the handle state is unchanged.
   */
  CTN_PANIC = 5,
} CtnStatus;

/**
 * Opaque density-map handle.
 */
typedef struct CtnDensity CtnDensity;

/**
 * Opaque model handle.
 */
typedef struct CtnModel CtnModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread. Never null.
 */
const char *ctn_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *ctn_version(void);

/**
 * Creates a freshly initialized model.
 *
 * `variant` is one of `full`, `local`, `nonlocal`, `mha`. `width` must be
 * divisible by `heads`; `input` is the nominal training size (multiple of
 * 8). Pass 0 for `width`, `heads`, or `input` to take the defaults
 * (240 / 12 / 384). On success writes a handle to `out`.
 *
 * # Safety
 * `variant` must be a valid NUL-terminated string and `out` a valid
 * pointer to writable storage.
 */
enum CtnStatus ctn_model_create(const char *variant,
                                uint32_t width,
                                uint32_t heads,
                                uint32_t context_m,
                                uint32_t input,
                                uint64_t seed,
                                struct CtnModel **out);

/**
 * Loads a model from a checkpoint file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum CtnStatus ctn_model_load(const char *path, struct CtnModel **out);

/**
 * Writes the model to a checkpoint file.
 *
 * # Safety
 * `model` must be a live handle from this library; `path` a valid string.
 */
enum CtnStatus ctn_model_save(const struct CtnModel *model, const char *path);

/**
 * Frees a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be a handle returned by this library, not yet freed.
 */
void ctn_model_free(struct CtnModel *model);

/**
 * Predicts a density map from an interleaved 8-bit RGB buffer of
 * `height * width * 3` bytes. `tile` is the tiling size for large inputs
 * (0 for the default); tiles are processed independently and stitched.
 *
 * # Safety
 * `rgb` must point to at least `height * width * 3` readable bytes;
 * `model` must be a live handle; `out` a valid pointer.
 */
enum CtnStatus ctn_predict_rgb8(const struct CtnModel *model,
                                const uint8_t *rgb,
                                uint32_t height,
                                uint32_t width,
                                uint32_t tile,
                                struct CtnDensity **out);

/**
 * Predicts a density map for an image file (binary PPM P6 or PGM P5).
 *
 * # Safety
 * `model` must be a live handle; `path` a valid string; `out` a valid
 * pointer.
 */
enum CtnStatus ctn_predict_image_file(const struct CtnModel *model,
                                      const char *path,
                                      uint32_t tile,
                                      struct CtnDensity **out);

/**
 * Estimated person count (sum of per-tile counts). Returns NaN for null.
 *
 * # Safety
 * `density` must be a live handle or null.
 */
double ctn_density_count(const struct CtnDensity *density);

/**
 * Map height in pixels (0 for null).
 *
 * # Safety
 * `density` must be a live handle or null.
 */
uint32_t ctn_density_height(const struct CtnDensity *density);

/**
 * Map width in pixels (0 for null).
 *
 * # Safety
 * `density` must be a live handle or null.
 */
uint32_t ctn_density_width(const struct CtnDensity *density);

/**
 * Copies the row-major density values into `dst` (length `len` doubles,
 * which must be at least `height * width`).
 *
 * # Safety
 * `dst` must point to `len` writable doubles; `density` must be live.
 */
enum CtnStatus ctn_density_values(const struct CtnDensity *density, double *dst, size_t len);

/**
 * Frees a density handle. Null is ignored.
 *
 * # Safety
 * `density` must be a handle returned by this library, not yet freed.
 */
void ctn_density_free(struct CtnDensity *density);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CTN_H */
