#ifndef LINEMARK_H
#define LINEMARK_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LmStatus {
  LM_STATUS_OK = 0,
  LM_STATUS_NULL_POINTER = 1,
  LM_STATUS_INVALID_ARGUMENT = 2,
  LM_STATUS_GEOMETRY = 3,
  LM_STATUS_MASK = 4,
  LM_STATUS_FILTER = 5,
  /**
   * The output buffer was too small; the required length was written.
   */
  LM_STATUS_BUFFER_TOO_SMALL = 6,
  LM_STATUS_PANIC = 7,
} LmStatus;

typedef enum LmKind {
  LM_KIND_LANE = 0,
  LM_KIND_PARKING = 1,
  LM_KIND_MEDIAN = 2,
  LM_KIND_BOUNDARY = 3,
} LmKind;

typedef struct LmHomography LmHomography;

typedef struct LmRig LmRig;

typedef struct LmTracker LmTracker;

/**
 * A line `u = beta * v + theta` in BEV cell coordinates. `kind` holds an
 * [`LmKind`] value.
 */
typedef struct LmLine {
  uint32_t kind;
  double beta;
  double theta;
  double phi;
  double center_u;
  double center_v;
  double confidence;
} LmLine;

/**
 * Vehicle detection box; `camera` is 0 front, 1 rear, 2 left, 3 right.
 */
typedef struct LmBox {
  uint32_t camera;
  double u;
  double v;
  double w;
  double h;
  double score;
} LmBox;

/**
 * The tunable subset of the temporal filter.
 */
typedef struct LmFilterConfig {
  double lambda[3];
  double sigma_max;
  uint32_t max_misses;
  double association_radius;
  bool gate_only;
  bool filter_boundary;
} LmFilterConfig;

/**
 * Ego motion between two frames, meters and radians.
 */
typedef struct LmPose {
  double x;
  double y;
  double yaw;
} LmPose;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lm_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`) and returns the full message length without the NUL.
 * Returns 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t lm_last_error_message(char *buf, size_t len);

/**
 * `1 - md - fd`.
 */
double lm_accuracy(double md, double fd);

/**
 * Solves the ground-to-image homography through four correspondences.
 * `ground_xy` and `image_uv` each hold four interleaved pairs.
 *
 * # Safety
 * `ground_xy` and `image_uv` must point to 8 doubles; `out` must be writable.
 */
enum LmStatus lm_homography_solve(const double *ground_xy,
                                  const double *image_uv,
                                  struct LmHomography **out);

/**
 * Builds a homography from its 8 coefficients (row-major, `h33 = 1`).
 *
 * # Safety
 * `coeffs` must point to 8 doubles; `out` must be writable.
 */
enum LmStatus lm_homography_from_coefficients(const double *coeffs, struct LmHomography **out);

/**
 * # Safety
 * `h` must be a live handle; `out` must point to 8 writable doubles.
 */
enum LmStatus lm_homography_coefficients(const struct LmHomography *h, double *out);

/**
 * Ground point to pixel.
 *
 * # Safety
 * `h` must be a live handle; `u` and `v` must be writable.
 */
enum LmStatus lm_homography_project(const struct LmHomography *h,
                                    double x,
                                    double y,
                                    double *u,
                                    double *v);

/**
 * Pixel to ground point. Fails outside the default working area.
 *
 * # Safety
 * `h` must be a live handle; `x` and `y` must be writable.
 */
enum LmStatus lm_homography_ipm(const struct LmHomography *h,
                                double u,
                                double v,
                                double *x,
                                double *y);

/**
 * # Safety
 * `h` must be null or a handle not yet freed.
 */
void lm_homography_free(struct LmHomography *h);

/**
 * The built-in four-camera rig.
 *
 * # Safety
 * `out` must be writable.
 */
enum LmStatus lm_rig_default(struct LmRig **out);

/**
 * Loads a rig from a calibration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LmStatus lm_rig_load(const char *path, struct LmRig **out);

/**
 * BEV raster size of the rig.
 *
 * # Safety
 * `rig` must be a live handle; `rows` and `cols` must be writable.
 */
enum LmStatus lm_rig_bev_size(const struct LmRig *rig, size_t *rows, size_t *cols);

/**
 * # Safety
 * `rig` must be null or a handle not yet freed.
 */
void lm_rig_free(struct LmRig *rig);

/**
 * Fits lane, median and parking lines in a BEV class mask (one byte per
 * cell, row-major, sized to the rig's raster). Classes without a usable fit
 * are skipped. On return `n_out` holds the number of lines found; if it
 * exceeds `cap`, nothing is written and `BufferTooSmall` is returned.
 *
 * # Safety
 * `cells` must point to `rows * cols` bytes and `out` to `cap` writable lines.
 */
enum LmStatus lm_fit_mask(const struct LmRig *rig,
                          const uint8_t *cells,
                          size_t rows,
                          size_t cols,
                          struct LmLine *out,
                          size_t cap,
                          size_t *n_out);

/**
 * Boundary lines from one frame of vehicle detection boxes.
 *
 * # Safety
 * `boxes` must point to `n` boxes and `out` to `cap` writable lines.
 */
enum LmStatus lm_boundary_from_boxes(const struct LmRig *rig,
                                     const struct LmBox *boxes,
                                     size_t n,
                                     struct LmLine *out,
                                     size_t cap,
                                     size_t *n_out);

/**
 * Default filter settings.
 */
struct LmFilterConfig lm_filter_config_default(void);

/**
 * Creates a tracker on the rig's BEV raster. `cfg` may be null for defaults.
 *
 * # Safety
 * `rig` must be a live handle; `cfg` null or valid; `out` writable.
 */
enum LmStatus lm_tracker_new(const struct LmRig *rig,
                             const struct LmFilterConfig *cfg,
                             struct LmTracker **out);

/**
 * Runs one frame: predicts tracks through `ego_delta`, gates and fuses the
 * detections, and writes the emitted landmarks. `n_rejected` may be null.
 * If more than `cap` landmarks are emitted, the step still happens, `n_out`
 * holds the count and `BufferTooSmall` is returned.
 *
 * # Safety
 * `tracker` must be a live handle, `dets` must point to `n` lines and `out`
 * to `cap` writable lines.
 */
enum LmStatus lm_tracker_step(struct LmTracker *tracker,
                              const struct LmLine *dets,
                              size_t n,
                              struct LmPose ego_delta,
                              struct LmLine *out,
                              size_t cap,
                              size_t *n_out,
                              size_t *n_rejected);

/**
 * Number of live tracks.
 *
 * # Safety
 * `tracker` must be a live handle; `n` must be writable.
 */
enum LmStatus lm_tracker_len(const struct LmTracker *tracker, size_t *n);

/**
 * # Safety
 * `tracker` must be null or a handle not yet freed.
 */
void lm_tracker_free(struct LmTracker *tracker);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINEMARK_H */
