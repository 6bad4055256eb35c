#ifndef UGMCS_H
#define UGMCS_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UgmcsStatus {
  UGMCS_STATUS_OK = 0,
  UGMCS_STATUS_INVALID_INPUT = 1,
  UGMCS_STATUS_DEGENERATE = 2,
  UGMCS_STATUS_NUMERIC_FAULT = 3,
  UGMCS_STATUS_CONFIG = 4,
  UGMCS_STATUS_DATA = 5,
  UGMCS_STATUS_IO = 6,
  UGMCS_STATUS_NULL_POINTER = 7,
  UGMCS_STATUS_PANIC = 8,
} UgmcsStatus;

// Samples loaded from a manifest or generated synthetically.
typedef struct UgmcsDataset UgmcsDataset;

// Network configuration and parameters.
typedef struct UgmcsNet UgmcsNet;

// Mean segmentation metrics over a dataset.
typedef struct UgmcsScores {
  double dsc;
  double iou;
  double nsd;
} UgmcsScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *ugmcs_last_error(void);

// Process exit code the command-line tool uses for `status`.
int32_t ugmcs_status_exit_code(enum UgmcsStatus status);

// Generates `count` synthetic samples with `annotators` masks each.
//
// # Safety
// `out` must be valid for writes.
enum UgmcsStatus ugmcs_dataset_synth(uintptr_t count,
                                     uintptr_t annotators,
                                     uint64_t seed,
                                     struct UgmcsDataset **out);

// Loads a manifest file or a directory containing `manifest.json`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum UgmcsStatus ugmcs_dataset_load(const char *path, struct UgmcsDataset **out);

// Writes the dataset as a manifest directory.
//
// # Safety
// `ds` must be a live handle and `dir` a NUL-terminated string.
enum UgmcsStatus ugmcs_dataset_save(const struct UgmcsDataset *ds, const char *dir);

// Number of samples; 0 for a null handle.
//
// # Safety
// `ds` must be null or a live handle.
uintptr_t ugmcs_dataset_len(const struct UgmcsDataset *ds);

// Patch height, width and annotation count of sample `index`.
//
// # Safety
// `ds` must be a live handle; the out pointers must be valid for writes.
enum UgmcsStatus ugmcs_dataset_sample_shape(const struct UgmcsDataset *ds,
                                            uintptr_t index,
                                            uintptr_t *height,
                                            uintptr_t *width,
                                            uintptr_t *annotators);

// Copies annotation `annotation` of sample `index` into `out` (`len` = height·width bytes, 0/1).
//
// # Safety
// `ds` must be a live handle and `out` valid for `len` writes.
enum UgmcsStatus ugmcs_dataset_annotation(const struct UgmcsDataset *ds,
                                          uintptr_t index,
                                          uintptr_t annotation,
                                          uint8_t *out,
                                          uintptr_t len);

// # Safety
// `ds` must be null or a handle not yet freed.
void ugmcs_dataset_free(struct UgmcsDataset *ds);

// Initializes a network from the `net` section of a run-config JSON
// document; null `config_json` selects the default architecture.
//
// # Safety
// `config_json` must be null or NUL-terminated; `out` valid for writes.
enum UgmcsStatus ugmcs_net_init(const char *config_json, uint64_t seed, struct UgmcsNet **out);

// # Safety
// `path` must be NUL-terminated; `out` valid for writes.
enum UgmcsStatus ugmcs_net_load(const char *path, struct UgmcsNet **out);

// # Safety
// `net` must be a live handle and `path` NUL-terminated.
enum UgmcsStatus ugmcs_net_save(const struct UgmcsNet *net, const char *path);

// Input side length the network expects.
//
// # Safety
// `net` must be null or a live handle.
uintptr_t ugmcs_net_input_size(const struct UgmcsNet *net);

// Number of learnable scalars.
//
// # Safety
// `net` must be null or a live handle.
uintptr_t ugmcs_net_num_params(const struct UgmcsNet *net);

// Trains a network on every sample of `ds` using the run-config JSON
// document `config_json` (its `net`, `train` and `loss` sections).
//
// # Safety
// `ds` must be a live handle, `config_json` NUL-terminated, `out` valid for writes.
enum UgmcsStatus ugmcs_net_train(const struct UgmcsDataset *ds,
                                 const char *config_json,
                                 struct UgmcsNet **out);

// Runs the network on a normalized `channels × size × size` image
// (`image_len` values, channel-major) and writes the segmentation
// probabilities `X_S` (`size × size` values) into `out`.
//
// # Safety
// `net` must be a live handle; `image` readable for `image_len` values and
// `out` writable for `out_len` values.
enum UgmcsStatus ugmcs_net_forward(const struct UgmcsNet *net,
                                   const double *image,
                                   uintptr_t image_len,
                                   double *out,
                                   uintptr_t out_len);

// Binary segmentation of sample `index` at its native resolution
// (`len` = height·width bytes, 0/1).
//
// # Safety
// `net` and `ds` must be live handles; `out` writable for `len` bytes.
enum UgmcsStatus ugmcs_net_predict(const struct UgmcsNet *net,
                                   const struct UgmcsDataset *ds,
                                   uintptr_t index,
                                   uint8_t *out,
                                   uintptr_t len);

// Mean DSC, IoU and NSD of the network over `ds` against annotation `annotation`.
//
// # Safety
// `net` and `ds` must be live handles; `out` valid for writes.
enum UgmcsStatus ugmcs_net_score(const struct UgmcsNet *net,
                                 const struct UgmcsDataset *ds,
                                 uintptr_t annotation,
                                 double nsd_tolerance,
                                 struct UgmcsScores *out);

// # Safety
// `net` must be null or a handle not yet freed.
void ugmcs_net_free(struct UgmcsNet *net);

// DSC, IoU and NSD of two `height × width` binary masks (bytes 0/1).
//
// # Safety
// `pred` and `gt` must be readable for `height·width` bytes; `out` valid for writes.
enum UgmcsStatus ugmcs_metrics(const uint8_t *pred,
                               const uint8_t *gt,
                               uintptr_t height,
                               uintptr_t width,
                               double nsd_tolerance,
                               struct UgmcsScores *out);

// Otsu threshold of `len` values over a `bins`-bin histogram.
//
// # Safety
// `values` must be readable for `len` values; `out` valid for writes.
enum UgmcsStatus ugmcs_otsu_threshold(const double *values,
                                      uintptr_t len,
                                      uintptr_t bins,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UGMCS_H */
