#ifndef MRCAST_H
#define MRCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MrcastStatus {
  MRCAST_STATUS_OK = 0,
  MRCAST_STATUS_INVALID_ARGUMENT = 1,
  MRCAST_STATUS_NULL_POINTER = 2,
  MRCAST_STATUS_BUFFER_TOO_SMALL = 3,
  MRCAST_STATUS_DATA_ERROR = 4,
  MRCAST_STATUS_NUMERIC_ERROR = 5,
  MRCAST_STATUS_IO_ERROR = 6,
  MRCAST_STATUS_PANIC = 7,
} MrcastStatus;

// A forecaster: configuration plus parameters.
typedef struct MrcastModel MrcastModel;

// Random-hyperplane hasher over fixed-length feature vectors.
typedef struct MrcastSimHasher MrcastSimHasher;

// Geometry of a model.
typedef struct MrcastModelInfo {
  size_t context_len;
  size_t input_patch_len;
  size_t output_patch_len;
  size_t num_quantiles;
  size_t num_parameters;
} MrcastModelInfo;

// Input window for [`mrcast_forecast`]. Each context holds `context_len`
// values; masks use 1 for padded entries and padding must be a prefix.
typedef struct MrcastWindow {
  const double *coarse;
  const uint8_t *coarse_mask;
  const double *fine;
  const uint8_t *fine_mask;
  size_t context_len;
  // Fine points per coarse point.
  size_t ratio;
} MrcastWindow;

// Raw metrics of one horizon. Undefined scaled metrics are NaN.
typedef struct MrcastMetrics {
  double mse;
  double mae;
  double mase;
  double smape;
  double msis;
  double crps;
  double ncrps;
} MrcastMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. Valid until the next call.
const char *mrcast_last_error(void);

// Library version as a static NUL-terminated string.
const char *mrcast_version(void);

// Loads a checkpoint directory.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum MrcastStatus mrcast_model_load(const char *path, struct MrcastModel **out);

// Creates a freshly initialized model from a JSON model configuration.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out` a valid pointer.
enum MrcastStatus mrcast_model_init(const char *config_json,
                                    uint64_t seed,
                                    struct MrcastModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must come from `mrcast_model_load` or `mrcast_model_init` and not be used afterwards.
void mrcast_model_free(struct MrcastModel *model);

// # Safety
// `model` must be a live handle and `info` a valid pointer.
enum MrcastStatus mrcast_model_info(const struct MrcastModel *model, struct MrcastModelInfo *info);

// Writes the quantile levels of `model` into `levels` (`capacity` entries).
//
// # Safety
// `model` must be a live handle; `levels` must hold `capacity` doubles.
enum MrcastStatus mrcast_model_quantile_levels(const struct MrcastModel *model,
                                               double *levels,
                                               size_t capacity);

// Decodes `steps` output patches. `mean` receives `steps * output_patch_len`
// values; `quantiles` receives `num_quantiles` rows of that length, row-major.
//
// # Safety
// All pointers must be valid for the lengths described above.
enum MrcastStatus mrcast_forecast(const struct MrcastModel *model,
                                  const struct MrcastWindow *window,
                                  size_t steps,
                                  double *mean,
                                  double *quantiles,
                                  size_t capacity);

// Scores a forecast. `quantiles` holds `num_levels` rows of `horizon` values.
//
// # Safety
// All pointers must be valid for the stated lengths; `out` must be valid.
enum MrcastStatus mrcast_compute_metrics(const double *mean,
                                         const double *quantiles,
                                         const double *levels,
                                         size_t num_levels,
                                         const double *actual,
                                         size_t horizon,
                                         const double *context,
                                         size_t context_len,
                                         size_t season,
                                         struct MrcastMetrics *out);

// # Safety
// `out` must be a valid pointer.
enum MrcastStatus mrcast_simhash_new(size_t bits,
                                     size_t dim,
                                     uint64_t seed,
                                     struct MrcastSimHasher **out);

// # Safety
// `hasher` must come from `mrcast_simhash_new` and not be used afterwards.
void mrcast_simhash_free(struct MrcastSimHasher *hasher);

// Hashes `feature` (`dim` values) into `ceil(bits / 64)` little-endian words;
// bit `b` lives in word `b / 64` at position `b % 64`.
//
// # Safety
// `feature` must hold `dim` doubles and `words` `capacity` u64 slots.
enum MrcastStatus mrcast_simhash_code(const struct MrcastSimHasher *hasher,
                                      const double *feature,
                                      size_t dim,
                                      uint64_t *words,
                                      size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MRCAST_H */
