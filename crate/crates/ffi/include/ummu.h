#ifndef UMMU_H
#define UMMU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

#define UMMU_VARIANT_FULL 0

#define UMMU_VARIANT_NO_U 1

#define UMMU_VARIANT_NO_MMU 2

#define UMMU_VARIANT_NO_M 3

typedef enum UmmuStatus {
  UMMU_STATUS_OK = 0,
  UMMU_STATUS_NULL_POINTER = 1,
  UMMU_STATUS_INVALID_ARGUMENT = 2,
  UMMU_STATUS_DOMAIN = 3,
  UMMU_STATUS_PARSE = 4,
  UMMU_STATUS_CONFIG = 5,
  UMMU_STATUS_DATA = 6,
  UMMU_STATUS_IO = 7,
  UMMU_STATUS_INCOMPATIBLE_CHECKPOINT = 8,
  UMMU_STATUS_TRAINING = 9,
  UMMU_STATUS_PANIC = 10,
} UmmuStatus;

/**
 * Opaque time-sorted event stream.
 */
typedef struct UmmuEventStream UmmuEventStream;

/**
 * Opaque seeded random stream.
 */
typedef struct UmmuRng UmmuRng;

/**
 * Augmentation settings; `variant` is one of the `UMMU_VARIANT_*` values.
 */
typedef struct UmmuAugmentConfig {
  double alpha;
  double apply_prob;
  double sigma_floor;
  uint32_t variant;
} UmmuAugmentConfig;

typedef struct UmmuSynthSpec {
  size_t n_src;
  size_t n_dst;
  size_t n_events;
  size_t feature_dim;
  size_t n_regimes;
  double drift_rate;
  double noise_std;
  uint64_t seed;
} UmmuSynthSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ummu_last_error(void);

/**
 * Creates the named sub-stream of `seed` (for example "augment").
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum UmmuStatus ummu_rng_new(uint64_t seed, const char *name, struct UmmuRng **out);

/**
 * # Safety
 * `rng` must come from [`ummu_rng_new`] and not be used afterwards. NULL is ignored.
 */
void ummu_rng_free(struct UmmuRng *rng);

/**
 * Training-mode augmentation of a row-major `rows x cols` batch. `z_out`
 * may alias `z_in`.
 *
 * # Safety
 * `z_in` and `z_out` must each hold `rows * cols` doubles; `rng` and
 * `config` must be valid.
 */
enum UmmuStatus ummu_augment(struct UmmuRng *rng,
                             const struct UmmuAugmentConfig *config,
                             const double *z_in,
                             size_t rows,
                             size_t cols,
                             double *z_out);

/**
 * Average precision of `n` scores with 0/1 `labels`.
 *
 * # Safety
 * `scores` and `labels` must hold `n` elements; `out` must be writable.
 */
enum UmmuStatus ummu_average_precision(const double *scores,
                                       const uint8_t *labels,
                                       size_t n,
                                       double *out);

/**
 * Mean reciprocal rank over `n_sets` candidate sets, each one positive
 * score and `k_neg` negatives stored row-major in `negatives`.
 *
 * # Safety
 * `positives` must hold `n_sets` doubles and `negatives` `n_sets * k_neg`.
 */
enum UmmuStatus ummu_mrr(const double *positives,
                         const double *negatives,
                         size_t n_sets,
                         size_t k_neg,
                         double *out);

/**
 * Loads an event CSV.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum UmmuStatus ummu_stream_load(const char *path, struct UmmuEventStream **out);

/**
 * Generates a synthetic drifting stream.
 *
 * # Safety
 * `spec` must be valid; `out` must be writable.
 */
enum UmmuStatus ummu_stream_synth(const struct UmmuSynthSpec *spec, struct UmmuEventStream **out);

/**
 * Default generator settings.
 */
struct UmmuSynthSpec ummu_synth_spec_default(void);

/**
 * Number of events, or 0 for NULL.
 *
 * # Safety
 * `stream` must be NULL or a live handle.
 */
size_t ummu_stream_len(const struct UmmuEventStream *stream);

/**
 * Feature dimension, or 0 for NULL.
 *
 * # Safety
 * `stream` must be NULL or a live handle.
 */
size_t ummu_stream_feature_dim(const struct UmmuEventStream *stream);

/**
 * # Safety
 * `stream` must come from this library and not be used afterwards. NULL is ignored.
 */
void ummu_stream_free(struct UmmuEventStream *stream);

/**
 * Same as `ummu train --config <config_path> --out <out_dir>`. A NULL
 * `config_path` uses the defaults.
 *
 * # Safety
 * Both arguments must be NULL or NUL-terminated strings; `out_dir` is required.
 */
enum UmmuStatus ummu_train(const char *config_path, const char *out_dir);

/**
 * Same as `ummu eval`; writes the report files into `out_dir` and stores
 * overall test AP and MRR in `ap` and `mrr` when they are not NULL.
 *
 * # Safety
 * String arguments must be NUL-terminated; `ap` and `mrr` may be NULL.
 */
enum UmmuStatus ummu_eval(const char *config_path,
                          const char *out_dir,
                          const char *checkpoint,
                          double *ap,
                          double *mrr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UMMU_H */
