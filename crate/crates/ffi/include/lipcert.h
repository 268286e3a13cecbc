/* Copyright 2026 The lipcert Authors
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef LIPCERT_H
#define LIPCERT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum LipcertStatus {
  LIPCERT_STATUS_OK = 0,
  LIPCERT_STATUS_NULL_POINTER = 1,
  LIPCERT_STATUS_INVALID_ARGUMENT = 2,
  LIPCERT_STATUS_IO = 3,
  LIPCERT_STATUS_FORMAT = 4,
  LIPCERT_STATUS_ORTHOGONALITY = 5,
  LIPCERT_STATUS_DIMENSION_MISMATCH = 6,
  LIPCERT_STATUS_NUMERIC = 7,
  LIPCERT_STATUS_PANIC = 8,
} LipcertStatus;

/**
 * Opaque model handle.
 */
typedef struct LipcertModel LipcertModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lipcert_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *lipcert_last_error(void);

/**
 * Loads a checkpoint. On success `*out` owns a new handle.
 */
enum LipcertStatus lipcert_model_load(const char *path, struct LipcertModel **out);

/**
 * A freshly initialized model with the default architecture for the given input.
 */
enum LipcertStatus lipcert_model_init(size_t depth,
                                      size_t width,
                                      size_t patch,
                                      size_t in_h,
                                      size_t in_w,
                                      size_t in_c,
                                      size_t n_classes,
                                      uint64_t seed,
                                      struct LipcertModel **out);

/**
 * Writes the model as a checkpoint (without optimizer state).
 */
enum LipcertStatus lipcert_model_save(const struct LipcertModel *model, const char *path);

/**
 * Releases a handle; null is ignored.
 */
void lipcert_model_free(struct LipcertModel *model);

/**
 * Input height, width and channels expected by the model.
 */
enum LipcertStatus lipcert_model_input_shape(const struct LipcertModel *model,
                                             size_t *h,
                                             size_t *w,
                                             size_t *c);

/**
 * Number of output classes, or 0 for a null handle.
 */
size_t lipcert_model_num_classes(const struct LipcertModel *model);

/**
 * Writes `batch × n_classes` logits to `out`.
 */
enum LipcertStatus lipcert_model_logits(const struct LipcertModel *model,
                                        const double *images,
                                        size_t batch,
                                        double *out);

/**
 * Prediction and certified ℓ₂ radius for each of `batch` images.
 *
 * A radius of 0 means the top logit is shared and nothing is certified.
 */
enum LipcertStatus lipcert_model_certify(const struct LipcertModel *model,
                                         const double *images,
                                         size_t batch,
                                         size_t *predicted,
                                         double *radius);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIPCERT_H */
