#ifndef INFPOS_H
#define INFPOS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InfposStatus {
  INFPOS_STATUS_OK = 0,
  INFPOS_STATUS_NULL_POINTER = 1,
  INFPOS_STATUS_INVALID_ARGUMENT = 2,
  INFPOS_STATUS_IO = 3,
  INFPOS_STATUS_FORMAT = 4,
  INFPOS_STATUS_SHAPE = 5,
  INFPOS_STATUS_DIVERGENCE = 6,
  INFPOS_STATUS_PANIC = 7,
} InfposStatus;

/**
 * A labeled fingerprint dataset.
 */
typedef struct InfposDataset InfposDataset;

/**
 * A factory realization: geometry, clutter and every spatial field.
 */
typedef struct InfposFactory InfposFactory;

/**
 * A positioning network with its input/label normalization.
 */
typedef struct InfposModel InfposModel;

/**
 * Training hyperparameters. Obtain defaults from
 * [`infpos_train_options_default`].
 */
typedef struct InfposTrainOptions {
  size_t epochs;
  /**
   * Extra epochs are added until at least this many optimizer steps run
   * (0 = exactly `epochs`).
   */
  size_t min_steps;
  size_t batch_size;
  double learning_rate;
  uint64_t seed;
} InfposTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *infpos_last_error_message(void);

/**
 * Builds a factory from `key=value` configuration text (empty text gives the
 * defaults).
 *
 * # Safety
 * `config_text` must be a NUL-terminated string; `out` must be writable.
 */
enum InfposStatus infpos_factory_new(const char *config_text, struct InfposFactory **out);

/**
 * # Safety
 * `factory` must be NULL or a handle from [`infpos_factory_new`] not yet freed.
 */
void infpos_factory_free(struct InfposFactory *factory);

/**
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_factory_n_bs(const struct InfposFactory *factory, size_t *out);

/**
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_factory_seed(const struct InfposFactory *factory, uint64_t *out);

/**
 * Path gain (dB, shadow fading included) from BS `bs` to the UE at `(x, y)`.
 *
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_path_gain_db(const struct InfposFactory *factory,
                                      size_t bs,
                                      double x,
                                      double y,
                                      double *out);

/**
 * Writes 1 for a line-of-sight link, 0 otherwise.
 *
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_los_state(const struct InfposFactory *factory,
                                   size_t bs,
                                   double x,
                                   double y,
                                   int32_t *out);

/**
 * Cell-centered grid with the given spacing (meters).
 *
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_dataset_generate_grid(const struct InfposFactory *factory,
                                               uint8_t signal_code,
                                               double spacing,
                                               struct InfposDataset **out);

/**
 * `n` uniform random positions drawn with `seed`.
 *
 * # Safety
 * `factory` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_dataset_generate_random(const struct InfposFactory *factory,
                                                 uint8_t signal_code,
                                                 size_t n,
                                                 uint64_t seed,
                                                 struct InfposDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum InfposStatus infpos_dataset_load(const char *path, struct InfposDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle; `path` a NUL-terminated string.
 */
enum InfposStatus infpos_dataset_save(const struct InfposDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
void infpos_dataset_free(struct InfposDataset *dataset);

/**
 * Sample count, BS count, taps per BS (1 for PG), f32 values per sample
 * and signal code. Any out-pointer may be NULL to skip it.
 *
 * # Safety
 * `dataset` must be a live handle; non-NULL out-pointers must be writable.
 */
enum InfposStatus infpos_dataset_dims(const struct InfposDataset *dataset,
                                      size_t *n_samples,
                                      size_t *n_bs,
                                      size_t *n_taps,
                                      size_t *feature_len,
                                      uint8_t *signal_code);

/**
 * New dataset keeping the columns `ids[0..n_ids]` (indices into the current
 * columns).
 *
 * # Safety
 * `dataset` must be a live handle, `ids` must point to `n_ids` values and
 * `out` must be writable.
 */
enum InfposStatus infpos_dataset_select_bs(const struct InfposDataset *dataset,
                                           const size_t *ids,
                                           size_t n_ids,
                                           struct InfposDataset **out);

/**
 * Copies all features (`n_samples * feature_len` f32, sample-major).
 *
 * # Safety
 * `dataset` must be a live handle; `buf` must hold `len` floats.
 */
enum InfposStatus infpos_dataset_copy_features(const struct InfposDataset *dataset,
                                               float *buf,
                                               size_t len);

/**
 * Copies labels as `x0, y0, x1, y1, ...` (`2 * n_samples` f32).
 *
 * # Safety
 * `dataset` must be a live handle; `buf` must hold `len` floats.
 */
enum InfposStatus infpos_dataset_copy_labels(const struct InfposDataset *dataset,
                                             float *buf,
                                             size_t len);

/**
 * Default hyperparameters for a signal (learning rate, epochs, batch size).
 */
struct InfposTrainOptions infpos_train_options_default(uint8_t signal_code);

/**
 * Untrained network sized for `dataset`. `cir_scale` multiplies the CIR
 * network widths (1.0 = full size; ignored for PG).
 *
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_model_new(const struct InfposDataset *dataset,
                                   double cir_scale,
                                   uint64_t seed,
                                   struct InfposModel **out);

/**
 * Trains in place. `final_loss` (may be NULL) receives the last epoch's loss.
 *
 * # Safety
 * `model` and `dataset` must be live handles; `opts` must be readable.
 */
enum InfposStatus infpos_model_train(struct InfposModel *model,
                                     const struct InfposDataset *dataset,
                                     const struct InfposTrainOptions *opts,
                                     double *final_loss);

/**
 * Continues training a trained model on new data, keeping its normalization.
 *
 * # Safety
 * `model` and `dataset` must be live handles; `opts` must be readable.
 */
enum InfposStatus infpos_model_fine_tune(struct InfposModel *model,
                                         const struct InfposDataset *dataset,
                                         const struct InfposTrainOptions *opts);

/**
 * Predicts `(x, y)` for `n` samples. `features` holds `n * feature_len`
 * floats; `out` receives `2 * n` doubles.
 *
 * # Safety
 * `model` must be a live handle; the buffers must have the stated sizes.
 */
enum InfposStatus infpos_model_predict(const struct InfposModel *model,
                                       const float *features,
                                       size_t n,
                                       double *out);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum InfposStatus infpos_model_n_params(const struct InfposModel *model, size_t *out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum InfposStatus infpos_model_save(const struct InfposModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum InfposStatus infpos_model_load(const char *path, struct InfposModel **out);

/**
 * # Safety
 * `model` must be NULL or a live handle.
 */
void infpos_model_free(struct InfposModel *model);

/**
 * Linear-interpolation empirical quantile of `errors[0..n]`.
 *
 * # Safety
 * `errors` must point to `n` doubles; `out` must be writable.
 */
enum InfposStatus infpos_quantile(const double *errors, size_t n, double q, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFPOS_H */
