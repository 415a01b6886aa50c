#ifndef SEMIFORGE_H
#define SEMIFORGE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SfStatus {
  SF_OK = 0,
  /**
   * A required pointer argument was null.
   */
  SF_NULL_POINTER = 1,
  /**
   * Argument out of range, bad UTF-8, or inconsistent shapes.
   */
  SF_INVALID_ARGUMENT = 2,
  SF_CONFIG_ERROR = 3,
  SF_PARSE_ERROR = 4,
  SF_IO_ERROR = 5,
  /**
   * Training produced a non-finite or exploding loss.
   */
  SF_DIVERGED = 6,
  SF_INTERNAL_ERROR = 7,
  SF_PANIC = 8,
} SfStatus;

/**
 * Which dataset split a query refers to.
 */
typedef enum SfSplit {
  SF_SPLIT_LABELED = 0,
  SF_SPLIT_UNLABELED = 1,
  SF_SPLIT_TEST = 2,
} SfSplit;

/**
 * Which parameters of a finished run.
 */
typedef enum SfWhich {
  SF_PARAMS_FINAL = 0,
  SF_PARAMS_BEST = 1,
} SfWhich;

/**
 * Which classifier head to use.
 */
typedef enum SfHead {
  SF_HEAD_STANDARD = 0,
  SF_HEAD_BALANCED = 1,
} SfHead;

/**
 * Training configuration.
 */
typedef struct SfConfig SfConfig;

/**
 * Synthetic dataset.
 */
typedef struct SfDataset SfDataset;

/**
 * Model parameters.
 */
typedef struct SfModel SfModel;

/**
 * Finished training run: metrics plus final and best parameters.
 */
typedef struct SfRun SfRun;

/**
 * Scalar fields of one epoch's metrics.
 */
typedef struct SfEpochMetrics {
  size_t epoch;
  double acc_std;
  double acc_bal;
  double acc_headline;
  double mask_prob;
  double used_acc;
  double mean_weight;
  double gamma_u_est;
  double loss_s;
  double loss_u;
  double loss_ea;
  double loss_bs;
  double loss_bu;
} SfEpochMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *sf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Generates a synthetic imbalanced dataset.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum SfStatus sf_dataset_generate(size_t k,
                                  size_t n1,
                                  size_t m1,
                                  double gamma_l,
                                  double gamma_u,
                                  size_t d,
                                  double class_sep,
                                  size_t test_per_class,
                                  uint64_t seed,
                                  struct SfDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid handle slot.
 */
enum SfStatus sf_dataset_load(const char *path, struct SfDataset **out);

/**
 * # Safety
 * `ds` must be a live dataset handle; `path` a NUL-terminated string.
 */
enum SfStatus sf_dataset_save(const struct SfDataset *ds, const char *path);

/**
 * Number of classes and feature dimension.
 *
 * # Safety
 * `ds` must be a live dataset handle; non-null outputs must be writable.
 */
enum SfStatus sf_dataset_shape(const struct SfDataset *ds, size_t *out_k, size_t *out_d);

/**
 * Writes the per-class counts of `split` into `counts[0..K]`.
 *
 * # Safety
 * `ds` must be a live handle; `counts` must hold `len` elements.
 */
enum SfStatus sf_dataset_class_counts(const struct SfDataset *ds,
                                      enum SfSplit split,
                                      size_t *counts,
                                      size_t len);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void sf_dataset_free(struct SfDataset *ds);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid handle slot.
 */
enum SfStatus sf_config_new(struct SfConfig **out);

/**
 * Parses `key = value` text on top of the defaults.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` a valid handle slot.
 */
enum SfStatus sf_config_parse(const char *text, struct SfConfig **out);

/**
 * Sets one key from its textual value. The full configuration is
 * validated when training starts.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated.
 */
enum SfStatus sf_config_set(struct SfConfig *cfg, const char *key, const char *value);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void sf_config_free(struct SfConfig *cfg);

/**
 * Trains on `ds` with `cfg`.
 *
 * # Safety
 * `cfg` and `ds` must be live handles; `out` a valid handle slot.
 */
enum SfStatus sf_train(const struct SfConfig *cfg, const struct SfDataset *ds, struct SfRun **out);

/**
 * Number of evaluated epochs.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum SfStatus sf_run_num_epochs(const struct SfRun *run, size_t *out);

/**
 * Index of the best epoch; fails with `SF_INVALID_ARGUMENT` for a run
 * without epochs.
 *
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum SfStatus sf_run_best_epoch(const struct SfRun *run, size_t *out);

/**
 * # Safety
 * `run` must be a live handle and `out` writable.
 */
enum SfStatus sf_run_epoch_metrics(const struct SfRun *run,
                                   size_t index,
                                   struct SfEpochMetrics *out);

/**
 * Per-class accuracy of the headline head at epoch `index`.
 *
 * # Safety
 * `run` must be a live handle; `acc` must hold `len` doubles.
 */
enum SfStatus sf_run_per_class(const struct SfRun *run, size_t index, double *acc, size_t len);

/**
 * Writes the metrics stream (one JSON object per line).
 *
 * # Safety
 * `run` must be a live handle; `path` NUL-terminated.
 */
enum SfStatus sf_run_save_metrics(const struct SfRun *run, const char *path);

/**
 * Copies the final or best parameters into a new model handle.
 *
 * # Safety
 * `run` must be a live handle; `out` a valid handle slot.
 */
enum SfStatus sf_run_model(const struct SfRun *run, enum SfWhich which, struct SfModel **out);

/**
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void sf_run_free(struct SfRun *run);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` a valid handle slot.
 */
enum SfStatus sf_model_load(const char *path, struct SfModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` NUL-terminated.
 */
enum SfStatus sf_model_save(const struct SfModel *model, const char *path);

/**
 * Predicted class of one feature vector of length `d`.
 *
 * # Safety
 * `model` must be a live handle; `x` must hold `d` doubles; `out_class`
 * must be writable.
 */
enum SfStatus sf_model_predict(const struct SfModel *model,
                               const double *x,
                               size_t d,
                               enum SfHead head,
                               size_t *out_class);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sf_model_free(struct SfModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMIFORGE_H */
