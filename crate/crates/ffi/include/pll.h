#ifndef PLL_H
#define PLL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum PllStatus {
  PLL_STATUS_OK = 0,
  PLL_STATUS_NULL_POINTER = 1,
  PLL_STATUS_INVALID_STRING = 2,
  PLL_STATUS_INVALID_ARGUMENT = 3,
  PLL_STATUS_IO = 4,
  PLL_STATUS_PARSE = 5,
  PLL_STATUS_NON_FINITE = 6,
  PLL_STATUS_BUFFER_TOO_SMALL = 7,
  PLL_STATUS_PANIC = 8,
} PllStatus;

// Training hyper-parameters.
typedef struct PllConfig PllConfig;

// A feature matrix with candidate sets and optional true labels.
typedef struct PllDataset PllDataset;

// The three trained networks.
typedef struct PllModel PllModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the next failing call.
const char *pll_last_error(void);

// Library version as a static NUL-terminated string.
const char *pll_version(void);

// Loads a dataset CSV (`f0..,candidates[,true]`).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PllStatus pll_dataset_load(const char *path, bool standardize, struct PllDataset **out);

// # Safety
// `ds` must come from this library and not be used afterwards.
void pll_dataset_free(struct PllDataset *ds);

// Writes rows, features and classes; any of the out-pointers may be null.
//
// # Safety
// `ds` must be a live handle; non-null out-pointers must be valid.
enum PllStatus pll_dataset_shape(const struct PllDataset *ds,
                                 size_t *rows,
                                 size_t *features,
                                 size_t *classes);

// Uniform candidate corruption of a dataset with true labels, as a new handle.
//
// # Safety
// `ds` must be a live handle and `out` a valid pointer.
enum PllStatus pll_dataset_corrupt_uniform(const struct PllDataset *ds,
                                           double xi,
                                           uint64_t seed,
                                           struct PllDataset **out);

// Default training configuration.
struct PllConfig *pll_config_new(void);

// # Safety
// `cfg` must come from [`pll_config_new`] and not be used afterwards.
void pll_config_free(struct PllConfig *cfg);

// Sets one numeric field. Keys: `seed`, `total_epochs`, `warmup_epochs`, `batch_size`, `k`,
// `mc_samples`, `lambda`, `epsilon`, `lr`, `weight_decay` (the last two apply to all three models).
//
// # Safety
// `cfg` must be a live handle and `key` a NUL-terminated string.
enum PllStatus pll_config_set(struct PllConfig *cfg, const char *key, double value);

// Trains on `train`, with label enhancement unless `ablate_no_le`.
//
// # Safety
// `train` and `cfg` must be live handles and `out` a valid pointer.
enum PllStatus pll_train(const struct PllDataset *train,
                         const struct PllConfig *cfg,
                         bool ablate_no_le,
                         struct PllModel **out);

// # Safety
// `model` must come from this library and not be used afterwards.
void pll_model_free(struct PllModel *model);

// Saves `models.bin` and `models.json` into an existing directory.
//
// # Safety
// `model` must be a live handle and `dir` a NUL-terminated string.
enum PllStatus pll_model_save(const struct PllModel *model, const char *dir);

// # Safety
// `dir` must be a NUL-terminated string and `out` a valid pointer.
enum PllStatus pll_model_load(const char *dir, struct PllModel **out);

// Writes class probabilities row-major into `buf`, which must hold rows × classes values.
//
// # Safety
// `model` and `ds` must be live handles and `buf` must point to `len` writable doubles.
enum PllStatus pll_model_predict(const struct PllModel *model,
                                 const struct PllDataset *ds,
                                 double *buf,
                                 size_t len);

// Accuracy against the true labels of `ds`.
//
// # Safety
// `model` and `ds` must be live handles and `out` a valid pointer.
enum PllStatus pll_model_accuracy(const struct PllModel *model,
                                  const struct PllDataset *ds,
                                  double *out);

// KL divergence from `Dir(alpha)` to the symmetric `Dir(epsilon)`.
//
// # Safety
// `alpha` must point to `len` readable doubles and `out` must be valid.
enum PllStatus pll_kl_dirichlet(const double *alpha, size_t len, double epsilon, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLL_H */
