#ifndef NYSTROM_ERM_H
#define NYSTROM_ERM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NyStatus {
  NY_STATUS_OK = 0,
  NY_STATUS_INVALID_INPUT = 1,
  NY_STATUS_PARSE = 2,
  NY_STATUS_NUMERICAL_DOMAIN = 3,
  NY_STATUS_DIVERGENCE = 4,
  NY_STATUS_INSUFFICIENT_DATA = 5,
  NY_STATUS_IO = 6,
  NY_STATUS_FORMAT = 7,
  NY_STATUS_NULL_POINTER = 8,
  NY_STATUS_PANIC = 9,
} NyStatus;

typedef enum NyKernel {
  NY_KERNEL_GAUSSIAN = 0,
  NY_KERNEL_LINEAR = 1,
} NyKernel;

typedef enum NySampling {
  NY_SAMPLING_UNIFORM = 0,
  NY_SAMPLING_LEVERAGE = 1,
} NySampling;

typedef enum NyLoss {
  NY_LOSS_HINGE = 0,
  NY_LOSS_LOGISTIC = 1,
} NyLoss;

/*
 Opaque labelled dataset.
 */
typedef struct NyDataset NyDataset;

/*
 Opaque trained model.
 */
typedef struct NyModel NyModel;

/*
 Training parameters. Fill with `ny_train_params_default` first.
 */
typedef struct NyTrainParams {
  enum NyKernel kernel;
  /*
   Gaussian width.
   */
  double sigma;
  double lambda;
  /*
   Number of landmarks.
   */
  size_t m;
  enum NySampling sampling;
  /*
   Ridge level for leverage scores; `<= 0` uses `lambda`.
   */
  double alpha;
  /*
   Pilot landmarks for approximate scores; 0 uses `m`.
   */
  size_t pilot_size;
  enum NyLoss loss;
  /*
   Clipping level; `<= 0` uses the loss default.
   */
  double clip;
  size_t epochs;
  uint64_t seed;
  /*
   Return the averaged iterate.
   */
  bool average;
  /*
   Solve the norm-constrained problem when `> 0`.
   */
  double constrained_radius;
} NyTrainParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until
 the next call into the library from the same thread.
 */
const char *ny_last_error_message(void);

/*
 Library version as a static nul-terminated string.
 */
const char *ny_version(void);

/*
 # Safety
 `path` is a nul-terminated string; `out` is writable.
 */
enum NyStatus ny_dataset_load_libsvm(const char *path, struct NyDataset **out);

/*
 Dataset from `n x d` row-major features and `n` labels in {-1, +1}.

 # Safety
 `features` holds `n * d` values, `labels` holds `n`; `out` is writable.
 */
enum NyStatus ny_dataset_from_dense(size_t n,
                                    size_t d,
                                    const double *features,
                                    const double *labels,
                                    struct NyDataset **out);

/*
 # Safety
 `ds` is a live dataset handle; outputs are writable.
 */
enum NyStatus ny_dataset_shape(const struct NyDataset *ds, size_t *n, size_t *d);

/*
 # Safety
 `ds` is null or a handle not yet freed.
 */
void ny_dataset_free(struct NyDataset *ds);

/*
 # Safety
 `out` is writable.
 */
enum NyStatus ny_train_params_default(struct NyTrainParams *out);

/*
 # Safety
 `ds` is a live dataset handle, `params` is readable, `out` is writable.
 */
enum NyStatus ny_train(const struct NyDataset *ds,
                       const struct NyTrainParams *params,
                       struct NyModel **out);

/*
 Scores of `n x d` row-major points, clipped when `clip` is set.

 # Safety
 `features` holds `n * d` values and `scores` has room for `n`.
 */
enum NyStatus ny_model_predict(const struct NyModel *model,
                               size_t n,
                               size_t d,
                               const double *features,
                               bool clip,
                               double *scores);

/*
 # Safety
 `model` is a live handle and `path` a nul-terminated string.
 */
enum NyStatus ny_model_save(const struct NyModel *model, const char *path);

/*
 # Safety
 `path` is a nul-terminated string; `out` is writable.
 */
enum NyStatus ny_model_load(const char *path, struct NyModel **out);

/*
 Embedding rank and expected input dimension.

 # Safety
 `model` is a live handle; outputs are writable.
 */
enum NyStatus ny_model_shape(const struct NyModel *model, size_t *rank, size_t *input_dim);

/*
 # Safety
 `model` is null or a handle not yet freed.
 */
void ny_model_free(struct NyModel *model);

/*
 Exact ridge leverage scores of an `n x n` Gram matrix.

 # Safety
 `gram` holds `n * n` values and `scores` has room for `n`.
 */
enum NyStatus ny_leverage_scores(size_t n, const double *gram, double alpha, double *scores);

/*
 `d_{alpha,2}` and `d_{alpha,inf}` of an `n x n` Gram matrix.

 # Safety
 `gram` holds `n * n` values; outputs are writable.
 */
enum NyStatus ny_effective_dimensions(size_t n,
                                      const double *gram,
                                      double alpha,
                                      double *d2,
                                      double *d_inf);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NYSTROM_ERM_H */
