#ifndef TNKDE_H
#define TNKDE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TnkdeKernel {
  TNKDE_KERNEL_TRIANGULAR = 0,
  TNKDE_KERNEL_EPANECHNIKOV = 1,
  TNKDE_KERNEL_EXPONENTIAL = 2,
  TNKDE_KERNEL_COSINE = 3,
  TNKDE_KERNEL_CONSTANT = 4,
} TnkdeKernel;

typedef enum TnkdeMethod {
  TNKDE_METHOD_SPS = 0,
  TNKDE_METHOD_ADA = 1,
  TNKDE_METHOD_RFS = 2,
  TNKDE_METHOD_DRFS = 3,
} TnkdeMethod;

typedef enum TnkdeStatus {
  TNKDE_STATUS_OK = 0,
  TNKDE_STATUS_NULL_POINTER = 1,
  /**
   * Bad parameter, kernel or method.
   */
  TNKDE_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Malformed graph or event data.
   */
  TNKDE_STATUS_INVALID_INPUT = 3,
  TNKDE_STATUS_IO = 4,
  /**
   * `capacity` is smaller than the result; `written` holds the size needed.
   */
  TNKDE_STATUS_BUFFER_TOO_SMALL = 5,
  TNKDE_STATUS_PANIC = 6,
} TnkdeStatus;

/**
 * Opaque handle holding a loaded network and its events.
 */
typedef struct TnkdeContext TnkdeContext;

/**
 * One density query. `depth` and `quantize` of 0 mean unset.
 */
typedef struct TnkdeQuery {
  int64_t t;
  double b_s;
  double b_t;
  double lixel_length;
  enum TnkdeMethod method;
  enum TnkdeKernel spatial;
  enum TnkdeKernel temporal;
  bool lixel_sharing;
  uint32_t depth;
  uint32_t quantize;
  /**
   * Worker threads; 0 uses all cores.
   */
  uint32_t threads;
} TnkdeQuery;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Loads a graph CSV and an event CSV. The handle must be released with
 * [`tnkde_context_free`].
 */
enum TnkdeStatus tnkde_context_open(const char *graph_path,
                                    const char *events_path,
                                    struct TnkdeContext **out);

void tnkde_context_free(struct TnkdeContext *ctx);

size_t tnkde_edge_count(const struct TnkdeContext *ctx);

size_t tnkde_event_count(const struct TnkdeContext *ctx);

/**
 * Number of lixels of length `lixel_length`.
 */
enum TnkdeStatus tnkde_lixel_count(const struct TnkdeContext *ctx,
                                   double lixel_length,
                                   size_t *count);

/**
 * Edge index and center offset of every lixel. Either output may be null.
 */
enum TnkdeStatus tnkde_lixels(const struct TnkdeContext *ctx,
                              double lixel_length,
                              uint32_t *edges,
                              double *centers,
                              size_t capacity,
                              size_t *written);

/**
 * Writes one density per lixel into `out`.
 */
enum TnkdeStatus tnkde_compute(const struct TnkdeContext *ctx,
                               const struct TnkdeQuery *query,
                               double *out,
                               size_t capacity,
                               size_t *written);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call from the same thread.
 */
const char *tnkde_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tnkde_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TNKDE_H */
