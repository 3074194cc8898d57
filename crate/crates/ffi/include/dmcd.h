#ifndef DMCD_H
#define DMCD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DmcdStatus {
  DMCD_STATUS_OK = 0,
  DMCD_STATUS_NULL_ARGUMENT = 1,
  DMCD_STATUS_INVALID_ARGUMENT = 2,
  DMCD_STATUS_CONTRACT = 3,
  DMCD_STATUS_REGISTRATION = 4,
  DMCD_STATUS_INSUFFICIENT_SAMPLES = 5,
  DMCD_STATUS_DEGENERATE = 6,
  DMCD_STATUS_ARCHIVE = 7,
  DMCD_STATUS_FORMAT = 8,
  DMCD_STATUS_CONFIG = 9,
  DMCD_STATUS_IO = 10,
  DMCD_STATUS_NON_FINITE_LOSS = 11,
  DMCD_STATUS_UNDEFINED_AUC = 12,
  DMCD_STATUS_PANIC = 13,
} DmcdStatus;

/**
 * Engine configuration; starts at the defaults.
 */
typedef struct DmcdConfig DmcdConfig;

/**
 * Multi-band image with values in `[0, 1]`.
 */
typedef struct DmcdImage DmcdImage;

/**
 * Output of [`dmcd_run`].
 */
typedef struct DmcdResult DmcdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Text of the most recent failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dmcd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dmcd_version(void);

/**
 * Writes a new configuration holding the defaults to `*out`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum DmcdStatus dmcd_config_new(struct DmcdConfig **out);

/**
 * # Safety
 * `config` must be null or a pointer from [`dmcd_config_new`] not yet freed.
 */
void dmcd_config_free(struct DmcdConfig *config);

/**
 * Sets one `key=value` configuration entry, using the keys of the
 * configuration file format.
 *
 * # Safety
 * `config` must be live; `key` and `value` must be NUL-terminated strings.
 */
enum DmcdStatus dmcd_config_set(struct DmcdConfig *config, const char *key, const char *value);

/**
 * Applies a file of `key=value` lines.
 *
 * # Safety
 * `config` must be live; `path` must be a NUL-terminated string.
 */
enum DmcdStatus dmcd_config_load(struct DmcdConfig *config, const char *path);

/**
 * Copies `height * width * bands` pixel-interleaved values in `[0, 1]`.
 *
 * # Safety
 * `values` must point to that many floats; `out` must be writable.
 */
enum DmcdStatus dmcd_image_new(size_t height,
                               size_t width,
                               size_t bands,
                               const float *values,
                               struct DmcdImage **out);

/**
 * Loads a PNG or raw raster with its default normalization.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DmcdStatus dmcd_image_load(const char *path, struct DmcdImage **out);

/**
 * # Safety
 * `image` must be null or a live image pointer.
 */
void dmcd_image_free(struct DmcdImage *image);

/**
 * # Safety
 * `image` must be live; the out pointers must be writable or null.
 */
enum DmcdStatus dmcd_image_dims(const struct DmcdImage *image,
                                size_t *height,
                                size_t *width,
                                size_t *bands);

/**
 * Runs the full optimization for one pair.
 *
 * # Safety
 * `config`, `pre` and `post` must be live; `out` must be writable.
 */
enum DmcdStatus dmcd_run(const struct DmcdConfig *config,
                         const struct DmcdImage *pre,
                         const struct DmcdImage *post,
                         struct DmcdResult **out);

/**
 * # Safety
 * `result` must be null or a live result pointer.
 */
void dmcd_result_free(struct DmcdResult *result);

/**
 * # Safety
 * `result` must be live; the out pointers must be writable or null.
 */
enum DmcdStatus dmcd_result_dims(const struct DmcdResult *result, size_t *height, size_t *width);

/**
 * Row-major change probabilities, `height * width` floats owned by `result`.
 *
 * # Safety
 * `result` must be live; null yields null.
 */
const float *dmcd_result_probability(const struct DmcdResult *result);

/**
 * Row-major thresholded map, 1 for change and 0 otherwise, owned by `result`.
 *
 * # Safety
 * `result` must be live; null yields null.
 */
const uint8_t *dmcd_result_mask(const struct DmcdResult *result);

/**
 * Number of completed iterations.
 *
 * # Safety
 * `result` must be live; null yields 0.
 */
size_t dmcd_result_iterations(const struct DmcdResult *result);

/**
 * Loss terms of iteration `t` (0-based) as `img, feat, ctx, sparse, total`.
 *
 * # Safety
 * `result` must be live; `out` must point to 5 writable doubles.
 */
enum DmcdStatus dmcd_result_loss(const struct DmcdResult *result, size_t t, double *out);

/**
 * Area under the ROC curve against a `height * width` reference mask
 * (nonzero = change), from a 256-threshold sweep, or the exact pairwise
 * count when `exact` is nonzero.
 *
 * # Safety
 * `result` must be live; `reference` must point to `height * width` bytes.
 */
enum DmcdStatus dmcd_result_auc(const struct DmcdResult *result,
                                const uint8_t *reference,
                                int32_t exact,
                                double *auc);

/**
 * Writes the output files into `dir`; `reference` may be null.
 *
 * # Safety
 * `result` must be live; `dir` must be a NUL-terminated string; a non-null
 * `reference` must point to `height * width` bytes.
 */
enum DmcdStatus dmcd_result_write(const struct DmcdResult *result,
                                  const char *dir,
                                  const uint8_t *reference);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DMCD_H */
