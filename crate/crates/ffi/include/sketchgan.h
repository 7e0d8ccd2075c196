#ifndef SKETCHGAN_H
#define SKETCHGAN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SkgStatus {
  SKG_STATUS_OK = 0,
  SKG_STATUS_NULL_POINTER = 1,
  SKG_STATUS_INVALID_ARGUMENT = 2,
  SKG_STATUS_SHAPE = 3,
  SKG_STATUS_CONFIG = 4,
  SKG_STATUS_DATA = 5,
  SKG_STATUS_IO = 6,
  SKG_STATUS_CHECKPOINT = 7,
  SKG_STATUS_VERSION = 8,
  SKG_STATUS_NUMERIC = 9,
  SKG_STATUS_INTERNAL = 10,
  SKG_STATUS_PANIC = 11,
} SkgStatus;

// Loaded sample corpus.
typedef struct SkgDataset SkgDataset;

// Trained networks restored from a checkpoint.
typedef struct SkgModel SkgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call on the same thread.
const char *skg_last_error(void);

// Procedural toy corpus.
//
// # Safety
// `out` must be a valid pointer.
enum SkgStatus skg_dataset_toy(size_t classes,
                               size_t painters,
                               size_t samples_per_pair,
                               size_t resolution,
                               uint64_t seed,
                               struct SkgDataset **out);

// Corpus from a directory; `resolution` 0 keeps the stored resolution.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SkgStatus skg_dataset_load(const char *path, size_t resolution, struct SkgDataset **out);

// # Safety
// `ds` must come from this library; each output may be null.
enum SkgStatus skg_dataset_info(const struct SkgDataset *ds,
                                size_t *len,
                                size_t *resolution,
                                size_t *classes,
                                size_t *painters);

// Copies sample `index`: its sketch and its class icon (each
// `resolution²` floats), and labels. Any output may be null.
//
// # Safety
// Non-null buffers must hold `resolution²` floats.
enum SkgStatus skg_dataset_sample(const struct SkgDataset *ds,
                                  size_t index,
                                  float *sketch,
                                  float *icon,
                                  size_t *class_label,
                                  size_t *painter_label);

// # Safety
// `ds` must come from this library or be null; it is invalid afterwards.
void skg_dataset_free(struct SkgDataset *ds);

// Restores the networks of a training checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SkgStatus skg_model_load(const char *path, struct SkgModel **out);

// # Safety
// `model` must come from this library and `resolution` be valid.
enum SkgStatus skg_model_resolution(const struct SkgModel *model, size_t *resolution);

// One sketch of `icon` in a random style. Identical seeds give identical
// output.
//
// # Safety
// `icon` and `out` must hold the model's `resolution²` floats.
enum SkgStatus skg_generate_random(const struct SkgModel *model,
                                   const float *icon,
                                   uint64_t seed,
                                   float *out);

// One sketch of `icon` in the style of `style_image`.
//
// # Safety
// `icon`, `style_image` and `out` must hold `resolution²` floats.
enum SkgStatus skg_generate_reference(const struct SkgModel *model,
                                      const float *icon,
                                      const float *style_image,
                                      uint64_t seed,
                                      float *out);

// `steps` frames of `icon` along the style path from `style_a` to
// `style_b`, written consecutively to `out`.
//
// # Safety
// Inputs hold `resolution²` floats, `out` holds `steps * resolution²`.
enum SkgStatus skg_interpolate(const struct SkgModel *model,
                               const float *icon,
                               const float *style_a,
                               const float *style_b,
                               size_t steps,
                               uint64_t seed,
                               float *out);

// # Safety
// `model` must come from this library or be null; it is invalid afterwards.
void skg_model_free(struct SkgModel *model);

// PSNR in dB between two buffers of `len` values with peak `max_value`.
//
// # Safety
// `a` and `b` hold `len` floats; `out` is valid.
enum SkgStatus skg_psnr(const float *a, const float *b, size_t len, double max_value, double *out);

// Fréchet distance between the Gaussian fits of two row-major feature
// matrices `[n_real, dim]` and `[n_fake, dim]`.
//
// # Safety
// Buffers hold `n * dim` doubles; `out` is valid.
enum SkgStatus skg_fid(const double *real,
                       size_t n_real,
                       const double *fake,
                       size_t n_fake,
                       size_t dim,
                       double *out);

// Kernel inception distance over random subsets drawn with `seed`.
//
// # Safety
// Buffers hold `n * dim` doubles; `out` is valid.
enum SkgStatus skg_kid(const double *real,
                       size_t n_real,
                       const double *fake,
                       size_t n_fake,
                       size_t dim,
                       uint64_t seed,
                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKETCHGAN_H */
