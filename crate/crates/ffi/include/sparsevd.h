#ifndef SPARSEVD_H
#define SPARSEVD_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SvdStatus {
  SVD_STATUS_OK = 0,
  SVD_STATUS_NULL_ARGUMENT = 1,
  SVD_STATUS_INVALID = 2,
  SVD_STATUS_CONFIG = 3,
  SVD_STATUS_DATA = 4,
  SVD_STATUS_DIVERGED = 5,
  SVD_STATUS_FORMAT = 6,
  SVD_STATUS_IO = 7,
  SVD_STATUS_BUFFER_TOO_SMALL = 8,
  SVD_STATUS_PANIC = 9,
} SvdStatus;

typedef enum SvdTask {
  SVD_TASK_CHAR_LM = 0,
  SVD_TASK_SENTIMENT = 1,
} SvdTask;

/*
 A pruned model with CSR weights.
 */
typedef struct SvdCompressed SvdCompressed;

/*
 Training configuration.
 */
typedef struct SvdConfig SvdConfig;

/*
 A trained model with its run metadata.
 */
typedef struct SvdModel SvdModel;

typedef struct SvdModelInfo {
  uint32_t task;
  size_t vocab_size;
  size_t hidden_size;
  size_t output_size;
  size_t epoch;
} SvdModelInfo;

/*
 Percent of pruned weights; `y` is NaN when the output layer is not sparsified.
 */
typedef struct SvdSparsity {
  double x;
  double h;
  double y;
} SvdSparsity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version, a static NUL-terminated string.
 */
const char *svd_version(void);

/*
 Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *svd_last_error(void);

/*
 KL divergence approximation for one weight at the given log α.
 */
double svd_kl_per_weight(double log_alpha);

/*
 Default configuration.

 # Safety
 `out` must be a valid pointer.
 */
enum SvdStatus svd_config_new(struct SvdConfig **out);

/*
 Parse flat `key = value` config text.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SvdStatus svd_config_parse(const char *text, struct SvdConfig **out);

/*
 Set one key; unknown keys and unparsable values fail with `SVD_STATUS_CONFIG`.

 # Safety
 `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum SvdStatus svd_config_set(struct SvdConfig *cfg, const char *key, const char *value);

/*
 # Safety
 `cfg` must be NULL or a handle from this library, not yet freed.
 */
void svd_config_free(struct SvdConfig *cfg);

/*
 Train per `cfg`. Metrics lines are appended to `metrics_path` when it is
 not NULL. On divergence the status is `SVD_STATUS_DIVERGED` and `out` still
 receives the last good model.

 # Safety
 `cfg` must be a live handle, `metrics_path` NULL or NUL-terminated, `out` valid.
 */
enum SvdStatus svd_train(const struct SvdConfig *cfg,
                         const char *metrics_path,
                         struct SvdModel **out);

/*
 # Safety
 `path` must be NUL-terminated and `out` valid.
 */
enum SvdStatus svd_model_load(const char *path, struct SvdModel **out);

/*
 # Safety
 `model` must be a live handle and `path` NUL-terminated.
 */
enum SvdStatus svd_model_save(const struct SvdModel *model, const char *path);

/*
 # Safety
 `model` must be NULL or a handle from this library, not yet freed.
 */
void svd_model_free(struct SvdModel *model);

/*
 # Safety
 `model` must be a live handle and `out` valid.
 */
enum SvdStatus svd_model_info(const struct SvdModel *model, struct SvdModelInfo *out);

/*
 Sparsity at `threshold` of the matrices trained under Sparse VD.

 # Safety
 `model` must be a live handle and `out` valid.
 */
enum SvdStatus svd_model_sparsity(const struct SvdModel *model,
                                  double threshold,
                                  struct SvdSparsity *out);

/*
 Mean-weight forward pass.

 # Safety
 `tokens` must hold `batch·len` values, `last` NULL or `batch` values,
 `out` NULL or `cap` writable values, `written` valid.
 */
enum SvdStatus svd_model_forward(const struct SvdModel *model,
                                 const size_t *tokens,
                                 const size_t *last,
                                 size_t batch,
                                 size_t len,
                                 double *out,
                                 size_t cap,
                                 size_t *written);

/*
 Prune at `threshold` and pack into CSR.

 # Safety
 `model` must be a live handle and `out` valid.
 */
enum SvdStatus svd_compress(const struct SvdModel *model,
                            double threshold,
                            struct SvdCompressed **out);

/*
 # Safety
 `path` must be NUL-terminated and `out` valid.
 */
enum SvdStatus svd_compressed_load(const char *path, struct SvdCompressed **out);

/*
 # Safety
 `model` must be a live handle and `path` NUL-terminated.
 */
enum SvdStatus svd_compressed_save(const struct SvdCompressed *model, const char *path);

/*
 Stored nonzeros across the CSR matrices, or 0 for NULL.

 # Safety
 `model` must be NULL or a live handle.
 */
size_t svd_compressed_nnz(const struct SvdCompressed *model);

/*
 Forward pass on CSR weights; same layout contract as [`svd_model_forward`].

 # Safety
 As for [`svd_model_forward`].
 */
enum SvdStatus svd_compressed_forward(const struct SvdCompressed *model,
                                      const size_t *tokens,
                                      const size_t *last,
                                      size_t batch,
                                      size_t len,
                                      double *out,
                                      size_t cap,
                                      size_t *written);

/*
 # Safety
 `model` must be NULL or a handle from this library, not yet freed.
 */
void svd_compressed_free(struct SvdCompressed *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSEVD_H */
