#ifndef DEEPPRIOR_H
#define DEEPPRIOR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum DpStatus {
  DP_STATUS_OK = 0,
  DP_STATUS_NULL_ARGUMENT = 1,
  DP_STATUS_IO = 2,
  DP_STATUS_FORMAT = 3,
  DP_STATUS_VERSION = 4,
  DP_STATUS_TRUNCATED = 5,
  DP_STATUS_CHECKSUM = 6,
  DP_STATUS_ARCHITECTURE_MISMATCH = 7,
  DP_STATUS_INVALID_INPUT = 8,
  DP_STATUS_NO_HAND = 9,
  DP_STATUS_BUFFER_TOO_SMALL = 10,
  DP_STATUS_INTERNAL = 11,
} DpStatus;

typedef struct DpDataset DpDataset;

/**
 * A loaded network (pose network or refiner).
 */
typedef struct DpModel DpModel;

/**
 * Pinhole intrinsics in pixels.
 */
typedef struct DpIntrinsics {
  double fx;
  double fy;
  double cx;
  double cy;
} DpIntrinsics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *dp_last_error_message(void);

/**
 * Loads a model file written by the toolkit.
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum DpStatus dp_model_load(const char *path, struct DpModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`dp_model_load`] and not be used afterwards.
 */
void dp_model_free(struct DpModel *model);

/**
 * Number of network outputs (3J for a pose network, 3 for a refiner); 0 for null.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t dp_model_output_dim(const struct DpModel *model);

/**
 * 1 for a pose network, 0 otherwise.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
int32_t dp_model_is_posenet(const struct DpModel *model);

/**
 * Centre of mass of the nearest depth segment; writes `x, y, z` mm to `out_xyz`.
 * `extent` <= 0 selects the default 250 mm.
 *
 * # Safety
 * `depth` must hold `width * height` values, `k` and `out_xyz` (3 doubles) must be valid.
 */
enum DpStatus dp_localize_com(const uint16_t *depth,
                              size_t width,
                              size_t height,
                              const struct DpIntrinsics *k,
                              double extent,
                              double *out_xyz);

/**
 * One refinement step of `center_xyz` with a refiner model.
 *
 * # Safety
 * As [`dp_localize_com`]; `center_xyz` must point to 3 doubles.
 */
enum DpStatus dp_refine(const struct DpModel *refiner,
                        const uint16_t *depth,
                        size_t width,
                        size_t height,
                        const struct DpIntrinsics *k,
                        const double *center_xyz,
                        double *out_xyz);

/**
 * Predicts 3J joint coordinates (mm) for a crop centred at `center_xyz`.
 * `out_len` must be at least the model output dimension.
 *
 * # Safety
 * As [`dp_refine`]; `out_joints` must hold `out_len` doubles.
 */
enum DpStatus dp_predict(const struct DpModel *posenet,
                         const uint16_t *depth,
                         size_t width,
                         size_t height,
                         const struct DpIntrinsics *k,
                         const double *center_xyz,
                         double *out_joints,
                         size_t out_len);

/**
 * Loads a dataset container (and its annotation sidecar).
 *
 * # Safety
 * `path` must be a valid C string and `out` a valid pointer.
 */
enum DpStatus dp_dataset_load(const char *path, struct DpDataset **out);

/**
 * # Safety
 * `ds` must come from [`dp_dataset_load`] and not be used afterwards.
 */
void dp_dataset_free(struct DpDataset *ds);

/**
 * Number of frames; 0 for null.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t dp_dataset_len(const struct DpDataset *ds);

/**
 * Frame size and intrinsics of the dataset.
 *
 * # Safety
 * `ds` must be a live handle; the outputs must be valid pointers.
 */
enum DpStatus dp_dataset_camera(const struct DpDataset *ds,
                                size_t *width,
                                size_t *height,
                                struct DpIntrinsics *k);

/**
 * Borrowed pointer to the depth pixels of frame `index` (valid while the
 * dataset lives), or null when out of range.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
const uint16_t *dp_dataset_frame(const struct DpDataset *ds, size_t index);

/**
 * Copies the annotated joints of frame `index` (3J doubles, mm).
 *
 * # Safety
 * `ds` must be a live handle and `out` must hold `out_len` doubles.
 */
enum DpStatus dp_dataset_annotation(const struct DpDataset *ds,
                                    size_t index,
                                    double *out,
                                    size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPPRIOR_H */
