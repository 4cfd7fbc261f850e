#ifndef IAD_H
#define IAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. The first four match the exit codes of the `iad` tool.
 */
typedef enum IadStatus {
  IAD_STATUS_OK = 0,
  /**
   * Invalid argument or parameter.
   */
  IAD_STATUS_USAGE = 1,
  /**
   * Unreadable, malformed or mismatched data.
   */
  IAD_STATUS_DATA = 2,
  /**
   * Time step over the stability bound or non-finite values.
   */
  IAD_STATUS_NUMERICAL = 3,
  IAD_STATUS_NULL_POINTER = 4,
  /**
   * A bug inside the library; the handle arguments are left untouched.
   */
  IAD_STATUS_PANIC = 5,
} IadStatus;

typedef enum IadModelKind {
  IAD_MODEL_KIND_PM = 0,
  IAD_MODEL_KIND_EED = 1,
  IAD_MODEL_KIND_IID = 2,
  IAD_MODEL_KIND_IAD = 3,
} IadModelKind;

/**
 * A grey-value image.
 */
typedef struct IadImage IadImage;

/**
 * A model with its step count and time-step policy.
 */
typedef struct IadModel IadModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next library call on the same thread.
 */
const char *iad_last_error(void);

/**
 * Static, NUL-terminated name of a status code.
 */
const char *iad_status_name(enum IadStatus status);

/**
 * Creates an image from `width * height` row-major values.
 *
 * # Safety
 * `data` must point to `width * height` readable doubles; `out` must be
 * writable.
 */
enum IadStatus iad_image_new(size_t width,
                             size_t height,
                             const double *data,
                             struct IadImage **out);

/**
 * Reads a PGM (P2/P5) or PFM file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IadStatus iad_image_read(const char *path, struct IadImage **out);

/**
 * Writes an image; the format follows the extension (`.pgm` or `.pfm`).
 *
 * # Safety
 * `image` must be a live handle and `path` a NUL-terminated string.
 */
enum IadStatus iad_image_write(const struct IadImage *image, const char *path);

/**
 * Width of an image, 0 for NULL.
 *
 * # Safety
 * `image` must be NULL or a live handle.
 */
size_t iad_image_width(const struct IadImage *image);

/**
 * Height of an image, 0 for NULL.
 *
 * # Safety
 * `image` must be NULL or a live handle.
 */
size_t iad_image_height(const struct IadImage *image);

/**
 * Copies the pixel values into `dst`, which holds `len` doubles.
 *
 * # Safety
 * `image` must be a live handle and `dst` must have room for `len` values.
 */
enum IadStatus iad_image_copy_data(const struct IadImage *image, double *dst, size_t len);

/**
 * Releases an image. NULL is ignored.
 *
 * # Safety
 * `image` must be NULL or a handle not yet freed.
 */
void iad_image_free(struct IadImage *image);

/**
 * Adds seeded Gaussian noise of standard deviation `stddev`.
 *
 * # Safety
 * `image` must be a live handle; `out` must be writable.
 */
enum IadStatus iad_add_noise(const struct IadImage *image,
                             double stddev,
                             uint64_t seed,
                             struct IadImage **out);

/**
 * Mean squared error of two images of equal size.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum IadStatus iad_mse(const struct IadImage *a, const struct IadImage *b, double *out);

/**
 * PSNR in dB for peak 255; identical images give `IAD_STATUS_DATA`.
 *
 * # Safety
 * `a` and `b` must be live handles; `out` must be writable.
 */
enum IadStatus iad_psnr(const struct IadImage *a, const struct IadImage *b, double *out);

/**
 * Perona-Malik model with contrast `lambda`, 10 steps and automatic time
 * steps.
 *
 * # Safety
 * `out` must be writable.
 */
enum IadStatus iad_model_pm(double lambda, struct IadModel **out);

/**
 * Edge-enhancing diffusion with contrast `lambda` and presmoothing `sigma`.
 *
 * # Safety
 * `out` must be writable.
 */
enum IadStatus iad_model_eed(double lambda, double sigma, struct IadModel **out);

/**
 * IID or IAD from the reduced parameters at noise level `stddev`, with
 * `n` scales sampled geometrically in `[sigma_min, sigma_max]`.
 *
 * # Safety
 * `out` must be writable.
 */
enum IadStatus iad_model_reduced(enum IadModelKind kind,
                                 double alpha,
                                 double beta,
                                 double lambda0,
                                 double stddev,
                                 size_t n,
                                 double sigma_min,
                                 double sigma_max,
                                 struct IadModel **out);

/**
 * Model from parameter-file text (`key = value` lines). `stddev` selects
 * per-level values and evaluates reduced parameters; pass NaN when the
 * text needs no level.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum IadStatus iad_model_parse(const char *text, double stddev, struct IadModel **out);

/**
 * Model from a parameter file; see `iad_model_parse`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum IadStatus iad_model_read(const char *path, double stddev, struct IadModel **out);

/**
 * Sets the number of explicit steps (at least 1).
 *
 * # Safety
 * `model` must be a live handle.
 */
enum IadStatus iad_model_set_steps(struct IadModel *model, size_t steps);

/**
 * Uses a fixed time step; evolution fails with `IAD_STATUS_NUMERICAL` if it
 * exceeds the stability bound.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum IadStatus iad_model_set_tau(struct IadModel *model, double tau);

/**
 * Chooses every time step as `safety` times the largest stable step.
 *
 * # Safety
 * `model` must be a live handle.
 */
enum IadStatus iad_model_set_tau_auto(struct IadModel *model, double safety);

/**
 * Kind of a model. NULL gives `IAD_MODEL_KIND_PM`.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
enum IadModelKind iad_model_kind(const struct IadModel *model);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void iad_model_free(struct IadModel *model);

/**
 * Runs the model on `image` and returns the result as a new image.
 *
 * # Safety
 * `model` and `image` must be live handles; `out` must be writable.
 */
enum IadStatus iad_denoise(const struct IadModel *model,
                           const struct IadImage *image,
                           struct IadImage **out);

/**
 * Library version, NUL-terminated.
 */
const char *iad_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IAD_H */
