#ifndef FLOWLAG_H
#define FLOWLAG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FLOWLAG_PATH_LINEAR 0

#define FLOWLAG_PATH_VP 1

#define FLOWLAG_PATH_GVP 2

#define FLOWLAG_SHAPE_CONSTANT_ONE 0

#define FLOWLAG_SHAPE_LINEAR 1

#define FLOWLAG_SHAPE_COSINE 2

#define FLOWLAG_SHAPE_QUAD_IN 3

#define FLOWLAG_SHAPE_QUAD_OUT 4

#define FLOWLAG_METHOD_EULER 0

#define FLOWLAG_METHOD_HEUN 1

#define FLOWLAG_METHOD_EULER_MARUYAMA 2

typedef enum FlowlagStatus {
  FLOWLAG_STATUS_OK = 0,
  FLOWLAG_STATUS_NULL_POINTER = 1,
  /**
   * Invalid configuration or enumerated code.
   */
  FLOWLAG_STATUS_CONFIG = 2,
  FLOWLAG_STATUS_ASSERTION = 3,
  /**
   * Numerical or I/O failure.
   */
  FLOWLAG_STATUS_RUNTIME = 4,
  /**
   * Bad dimensions or an argument outside its domain.
   */
  FLOWLAG_STATUS_INVALID_ARGUMENT = 5,
  FLOWLAG_STATUS_PANIC = 6,
} FlowlagStatus;

/**
 * A network loaded from a checkpoint file.
 */
typedef struct FlowlagNet FlowlagNet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *flowlag_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next flowlag call on the same thread.
 */
const char *flowlag_last_error(void);

/**
 * Closed-form optimal velocity for a centred Gaussian target with standard
 * deviation `data_std` in every coordinate.
 *
 * # Safety
 * `x` and `out` must point to `n * dim` doubles.
 */
enum FlowlagStatus flowlag_oracle_velocity(int32_t path,
                                           size_t dim,
                                           double data_std,
                                           const double *x,
                                           size_t n,
                                           double t,
                                           double *out);

/**
 * Velocity multiplier gamma(t) of a scale schedule.
 *
 * # Safety
 * `out` must point to one double.
 */
enum FlowlagStatus flowlag_schedule_gamma(int32_t shape,
                                          double s_start,
                                          double s_end,
                                          double t,
                                          double *out);

/**
 * The `s_start` giving the schedule the requested area for a fixed `s_end`.
 *
 * # Safety
 * `out` must point to one double.
 */
enum FlowlagStatus flowlag_schedule_calibrate(int32_t shape,
                                              double s_end,
                                              double area,
                                              double *out);

/**
 * Loads a checkpoint file. Release the handle with [`flowlag_net_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FlowlagStatus flowlag_net_load(const char *path, struct FlowlagNet **out);

/**
 * State dimension of a loaded network, or 0 for NULL.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t flowlag_net_dim(const struct FlowlagNet *net);

/**
 * # Safety
 * `net` must be a live handle; `x` and `out` must hold `n * dim` doubles.
 */
enum FlowlagStatus flowlag_net_forward(const struct FlowlagNet *net,
                                       const double *x,
                                       size_t n,
                                       double t,
                                       double *out);

/**
 * Integrates `n_particles` from noise to t = 1 and writes the terminal
 * states. The SDE method uses the path the network was trained on.
 *
 * # Safety
 * `net` must be a live handle and `out` must hold `n_particles * dim`
 * doubles.
 */
enum FlowlagStatus flowlag_sample(const struct FlowlagNet *net,
                                  int32_t method,
                                  size_t nfe,
                                  int32_t shape,
                                  double s_start,
                                  double s_end,
                                  size_t n_particles,
                                  uint64_t seed,
                                  double *out);

/**
 * Releases a network handle. NULL is ignored.
 *
 * # Safety
 * `net` must be NULL or a handle from [`flowlag_net_load`] not yet freed.
 */
void flowlag_net_free(struct FlowlagNet *net);

/**
 * Frechet distance between two Gaussians given by mean vectors and
 * row-major `dim x dim` covariances.
 *
 * # Safety
 * Means must hold `dim` doubles, covariances `dim * dim`, `out` one.
 */
enum FlowlagStatus flowlag_frechet(size_t dim,
                                   const double *mean_a,
                                   const double *cov_a,
                                   const double *mean_b,
                                   const double *cov_b,
                                   double *out);

/**
 * Frechet distance between the Gaussian fits of two sample sets.
 *
 * # Safety
 * `x` must hold `n_x * dim` doubles, `y` `n_y * dim`, `out` one.
 */
enum FlowlagStatus flowlag_frechet_samples(size_t dim,
                                           const double *x,
                                           size_t n_x,
                                           const double *y,
                                           size_t n_y,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWLAG_H */
