#ifndef DSAL_H
#define DSAL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsalActivation {
  DSAL_ACTIVATION_RELU = 0,
  DSAL_ACTIVATION_TANH = 1,
  DSAL_ACTIVATION_MISH = 2,
  DSAL_ACTIVATION_HARDSWISH = 3,
  DSAL_ACTIVATION_SIGMOID = 4,
  DSAL_ACTIVATION_IDENTITY = 5,
} DsalActivation;

typedef enum DsalStatus {
  DSAL_STATUS_OK = 0,
  DSAL_STATUS_INVALID_ARGUMENT = 1,
  DSAL_STATUS_NULL_POINTER = 2,
  DSAL_STATUS_DIMENSION = 3,
  DSAL_STATUS_CLASS_OVERLAP = 4,
  DSAL_STATUS_UNKNOWN_LABEL = 5,
  DSAL_STATUS_NUMERICAL = 6,
  DSAL_STATUS_IO = 7,
  DSAL_STATUS_FORMAT = 8,
  DSAL_STATUS_BUFFER_TOO_SMALL = 9,
  DSAL_STATUS_PANIC = 10,
} DsalStatus;

/**
 * Opaque learner handle.
 */
typedef struct DsalLearner DsalLearner;

/**
 * Learner settings. Start from `dsal_config_default` and override fields.
 */
typedef struct DsalConfig {
  double gamma;
  /**
   * Compensation-stream regularization; 0 means use `gamma`.
   */
  double comp_gamma;
  size_t buffer_dim;
  uint64_t seed;
  enum DsalActivation sigma_main;
  enum DsalActivation sigma_comp;
  double comp_ratio;
  size_t chunk_rows;
  bool enable_dac;
  bool enable_plc;
} DsalConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

struct DsalConfig dsal_config_default(void);

/**
 * Fits the base phase and returns a new learner in `*out`.
 *
 * # Safety
 * `embeddings` holds `rows * cols` doubles, `labels` holds `rows` ids and
 * `classes` holds `num_classes` ids. Pointers may be null when their
 * length is 0. `config` and `out` must be valid.
 */
enum DsalStatus dsal_learner_new(const struct DsalConfig *config,
                                 const double *embeddings,
                                 size_t rows,
                                 size_t cols,
                                 const uint32_t *labels,
                                 const uint32_t *classes,
                                 size_t num_classes,
                                 struct DsalLearner **out);

/**
 * Learns one incremental phase. The learner is unchanged on failure.
 *
 * # Safety
 * Same buffer contract as [`dsal_learner_new`]; `handle` must be live.
 */
enum DsalStatus dsal_learner_learn_phase(struct DsalLearner *handle,
                                         const double *embeddings,
                                         size_t rows,
                                         size_t cols,
                                         const uint32_t *labels,
                                         const uint32_t *classes,
                                         size_t num_classes);

/**
 * Combined scores, row-major `rows x dsal_learner_num_classes`, written to
 * `scores`. Columns follow `dsal_learner_class_ids`.
 *
 * # Safety
 * `embeddings` holds `rows * cols` doubles; `scores` has room for
 * `scores_len` doubles.
 */
enum DsalStatus dsal_learner_predict(const struct DsalLearner *handle,
                                     const double *embeddings,
                                     size_t rows,
                                     size_t cols,
                                     double *scores,
                                     size_t scores_len);

/**
 * Predicted class id per row, written to `predictions`.
 *
 * # Safety
 * `embeddings` holds `rows * cols` doubles; `predictions` has room for
 * `predictions_len` ids.
 */
enum DsalStatus dsal_learner_classify(const struct DsalLearner *handle,
                                      const double *embeddings,
                                      size_t rows,
                                      size_t cols,
                                      uint32_t *predictions,
                                      size_t predictions_len);

/**
 * # Safety
 * `handle` must be live.
 */
enum DsalStatus dsal_learner_set_comp_ratio(struct DsalLearner *handle, double ratio);

/**
 * Number of classes learned so far; 0 for a null handle.
 *
 * # Safety
 * `handle` is null or live.
 */
size_t dsal_learner_num_classes(const struct DsalLearner *handle);

/**
 * Phases learned, base included; 0 for a null handle.
 *
 * # Safety
 * `handle` is null or live.
 */
size_t dsal_learner_phases_seen(const struct DsalLearner *handle);

/**
 * Embedding width the learner expects; 0 for a null handle.
 *
 * # Safety
 * `handle` is null or live.
 */
size_t dsal_learner_input_dim(const struct DsalLearner *handle);

/**
 * Class ids in score-column order.
 *
 * # Safety
 * `out` has room for `out_len` ids.
 */
enum DsalStatus dsal_learner_class_ids(const struct DsalLearner *handle,
                                       uint32_t *out,
                                       size_t out_len);

/**
 * Copies the active configuration into `*out`.
 *
 * # Safety
 * `handle` and `out` must be valid.
 */
enum DsalStatus dsal_learner_config(const struct DsalLearner *handle, struct DsalConfig *out);

/**
 * Writes a checkpoint directory.
 *
 * # Safety
 * `dir` is a NUL-terminated UTF-8 path.
 */
enum DsalStatus dsal_learner_save(const struct DsalLearner *handle, const char *dir);

/**
 * Restores a learner from a checkpoint directory into `*out`.
 *
 * # Safety
 * `dir` is a NUL-terminated UTF-8 path; `out` must be valid.
 */
enum DsalStatus dsal_learner_load(const char *dir, struct DsalLearner **out);

/**
 * Releases a learner. Null is ignored.
 *
 * # Safety
 * `handle` is null or a pointer from this library not yet freed.
 */
void dsal_learner_free(struct DsalLearner *handle);

/**
 * Message of the last failed call on this thread, or null after a
 * successful one. Valid until the next call on the same thread.
 */
const char *dsal_last_error_message(void);

/**
 * Short static name for a status code.
 */
const char *dsal_status_name(enum DsalStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSAL_H */
