#ifndef CADEVAL_H
#define CADEVAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CadevalStatus {
  CADEVAL_STATUS_OK = 0,
  CADEVAL_STATUS_NULL_POINTER = 1,
  CADEVAL_STATUS_INVALID_INPUT = 2,
  CADEVAL_STATUS_DEGENERATE = 3,
  CADEVAL_STATUS_CONFIG = 4,
  CADEVAL_STATUS_VALIDATION = 5,
  CADEVAL_STATUS_IO = 6,
  CADEVAL_STATUS_IMAGE = 7,
  CADEVAL_STATUS_INVALID_UTF8 = 8,
  CADEVAL_STATUS_OUT_OF_RANGE = 9,
  CADEVAL_STATUS_BUFFER_TOO_SMALL = 10,
  CADEVAL_STATUS_PANIC = 11,
} CadevalStatus;

// Scored cases with binary truth, for ROC analysis.
typedef struct CadevalCaseSet CadevalCaseSet;

// Detections of one image.
typedef struct CadevalDetections CadevalDetections;

// Images with lesions and detections, for FROC analysis.
typedef struct CadevalFrocSet CadevalFrocSet;

typedef struct CadevalBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
} CadevalBox;

typedef struct CadevalDetection {
  struct CadevalBox bbox;
  double score;
  // Nonzero for malignant, zero for benign.
  int32_t malignant;
} CadevalDetection;

typedef struct CadevalInterval {
  double estimate;
  double lo;
  double hi;
} CadevalInterval;

typedef struct CadevalOperatingPoint {
  double target_fp_per_image;
  double fp_per_image;
  double sensitivity;
  double threshold;
} CadevalOperatingPoint;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *cadeval_last_error(void);

// Library version, static storage.
const char *cadeval_version(void);

// Intersection over union of two boxes.
//
// # Safety
// `a`, `b` and `out` must be valid pointers.
enum CadevalStatus cadeval_iou(const struct CadevalBox *a, const struct CadevalBox *b, double *out);

// # Safety
// `image_id` must be a valid C string and `out` a valid pointer.
enum CadevalStatus cadeval_detections_new(const char *image_id, struct CadevalDetections **out);

// # Safety
// `set` must come from `cadeval_detections_new` or be null.
void cadeval_detections_free(struct CadevalDetections *set);

// # Safety
// `set` must be a live handle and `det` a valid pointer.
enum CadevalStatus cadeval_detections_push(struct CadevalDetections *set,
                                           const struct CadevalDetection *det);

// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_detections_len(const struct CadevalDetections *set, size_t *out);

// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_detections_get(const struct CadevalDetections *set,
                                          size_t index,
                                          struct CadevalDetection *out);

// Greedy class-wise NMS into a new handle, survivors in descending score order.
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_detections_nms(const struct CadevalDetections *set,
                                          double iou_threshold,
                                          struct CadevalDetections **out);

// Maximum malignant score, 0 when there is none.
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_detections_image_score(const struct CadevalDetections *set, double *out);

// # Safety
// `out` must be a valid pointer.
enum CadevalStatus cadeval_cases_new(struct CadevalCaseSet **out);

// # Safety
// `set` must come from `cadeval_cases_new` or be null.
void cadeval_cases_free(struct CadevalCaseSet *set);

// # Safety
// `set` must be a live handle.
enum CadevalStatus cadeval_cases_push(struct CadevalCaseSet *set, double score, int32_t positive);

// Trapezoidal area under the ROC curve.
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_cases_auc(const struct CadevalCaseSet *set, double *out);

// AUC with a seeded percentile-bootstrap interval (`interval` in percent).
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_cases_auc_bootstrap(const struct CadevalCaseSet *set,
                                               size_t replicates,
                                               double interval,
                                               uint64_t seed,
                                               struct CadevalInterval *out);

// # Safety
// `out` must be a valid pointer.
enum CadevalStatus cadeval_froc_new(struct CadevalFrocSet **out);

// # Safety
// `set` must come from `cadeval_froc_new` or be null.
void cadeval_froc_free(struct CadevalFrocSet *set);

// Adds an image without lesions or detections. Image ids are unique.
//
// # Safety
// `set` must be a live handle and `image_id` a valid C string.
enum CadevalStatus cadeval_froc_add_image(struct CadevalFrocSet *set, const char *image_id);

// # Safety
// `set` must be a live handle, the strings valid C strings and `bbox` a valid pointer.
enum CadevalStatus cadeval_froc_add_lesion(struct CadevalFrocSet *set,
                                           const char *image_id,
                                           const char *lesion_id,
                                           const struct CadevalBox *bbox);

// # Safety
// `set` must be a live handle, `image_id` a valid C string and `det` a valid pointer.
enum CadevalStatus cadeval_froc_add_detection(struct CadevalFrocSet *set,
                                              const char *image_id,
                                              const struct CadevalDetection *det);

// Highest sensitivity with at most `target_fp_per_image` false positives per image.
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_froc_operating_point(const struct CadevalFrocSet *set,
                                                double target_fp_per_image,
                                                struct CadevalOperatingPoint *out);

// Sensitivity at `fp_per_image` with an image-resampled bootstrap interval.
//
// # Safety
// `set` must be a live handle and `out` a valid pointer.
enum CadevalStatus cadeval_froc_sensitivity_band(const struct CadevalFrocSet *set,
                                                 double fp_per_image,
                                                 size_t replicates,
                                                 double interval,
                                                 uint64_t seed,
                                                 struct CadevalInterval *out);

// Mode windowing of a row-major grayscale image into 0..255. `out` receives
// `width * height` values; `out_mode` (optional) the histogram mode.
//
// # Safety
// `pixels` must hold `width * height` values and `out` `capacity` values.
enum CadevalStatus cadeval_window(const uint16_t *pixels,
                                  uint32_t width,
                                  uint32_t height,
                                  uint8_t bit_depth,
                                  uint32_t lower_offset,
                                  uint32_t upper_offset,
                                  uint32_t background_threshold,
                                  uint16_t *out,
                                  size_t capacity,
                                  uint16_t *out_mode);

// Output size of the isotropic downscale.
//
// # Safety
// `out_width` and `out_height` must be valid pointers.
enum CadevalStatus cadeval_resize_dims(uint32_t width,
                                       uint32_t height,
                                       uint32_t max_long,
                                       uint32_t max_short,
                                       uint32_t *out_width,
                                       uint32_t *out_height);

// Isotropic area-average downscale. Size `out` with [`cadeval_resize_dims`].
//
// # Safety
// `pixels` must hold `width * height` values and `out` `capacity` values.
enum CadevalStatus cadeval_resize(const uint16_t *pixels,
                                  uint32_t width,
                                  uint32_t height,
                                  uint8_t bit_depth,
                                  uint32_t max_long,
                                  uint32_t max_short,
                                  uint16_t *out,
                                  size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CADEVAL_H */
