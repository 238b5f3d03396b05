#ifndef HOMON_H
#define HOMON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum HomonStatus {
  HOMON_STATUS_OK = 0,
  // A null pointer, non-UTF-8 string or out-of-range argument.
  HOMON_STATUS_INVALID_ARGUMENT = 1,
  // A file could not be read or written.
  HOMON_STATUS_IO = 2,
  // An input file is not a valid IDX file.
  HOMON_STATUS_FORMAT = 3,
  // The requested split needs more images than the file holds.
  HOMON_STATUS_INSUFFICIENT_SAMPLES = 4,
  // Array shapes do not agree.
  HOMON_STATUS_SHAPE_MISMATCH = 5,
  // A checkpoint could not be parsed or is inconsistent.
  HOMON_STATUS_PARSE = 6,
  // A numerical precondition failed, e.g. an all-zero image.
  HOMON_STATUS_NUMERICAL = 7,
  // The library panicked; this is a bug.
  HOMON_STATUS_INTERNAL = 8,
} HomonStatus;

// Dataset selector for [`homon_dataset_load`].
typedef enum HomonDatasetKind {
  HOMON_DATASET_KIND_MNIST = 0,
  HOMON_DATASET_KIND_FASHION = 1,
} HomonDatasetKind;

// Binary-labelled image subset.
typedef struct HomonDataset HomonDataset;

// Trained network together with its activation shape.
typedef struct HomonParams HomonParams;

// Optimiser settings and network width.
typedef struct HomonTrainConfig HomonTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null after a
// success. Valid until the next call into the library on this thread.
const char *homon_last_error(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void homon_string_free(char *s);

// Loads a seeded train/test subset of two classes from `data_dir`.
//
// # Safety
// `data_dir` must be a NUL-terminated string; the out-pointers must be
// writable.
enum HomonStatus homon_dataset_load(const char *data_dir,
                                    enum HomonDatasetKind dataset,
                                    uint8_t class_a,
                                    uint8_t class_b,
                                    size_t n_train,
                                    size_t n_test,
                                    uint64_t seed,
                                    struct HomonDataset **out_train,
                                    struct HomonDataset **out_test);

// Number of samples, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t homon_dataset_len(const struct HomonDataset *ds);

// Image side length, or 0 for a null handle.
//
// # Safety
// `ds` must be null or a live dataset handle.
size_t homon_dataset_resolution(const struct HomonDataset *ds);

// Copies sample `index` (row-major, `resolution²` values) into `image` and
// its 0/1 label into `label`.
//
// # Safety
// `image` must have room for `image_len` doubles.
enum HomonStatus homon_dataset_sample(const struct HomonDataset *ds,
                                      size_t index,
                                      double *image,
                                      size_t image_len,
                                      uint8_t *label);

// # Safety
// `ds` must be null or a handle not yet freed.
void homon_dataset_free(struct HomonDataset *ds);

// Creates a configuration from a named preset such as `table1-qon-mnist`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` writable.
enum HomonStatus homon_train_config_preset(const char *name, struct HomonTrainConfig **out);

// Creates the default configuration for `neurons` neurons on `dataset`.
//
// # Safety
// `out` must be writable.
enum HomonStatus homon_train_config_new(enum HomonDatasetKind dataset,
                                        size_t neurons,
                                        size_t epochs,
                                        struct HomonTrainConfig **out);

// Sets the seed used for initialisation and readout noise.
//
// # Safety
// `cfg` must be a live configuration handle.
enum HomonStatus homon_train_config_set_seed(struct HomonTrainConfig *cfg, uint64_t seed);

// Switches to photon-counting readout. A non-positive `mean_signal_cc`
// restores exact visibilities.
//
// # Safety
// `cfg` must be a live configuration handle.
enum HomonStatus homon_train_config_set_noise(struct HomonTrainConfig *cfg,
                                              double mean_signal_cc,
                                              double eta_vis,
                                              double background_rate);

// # Safety
// `cfg` must be null or a handle not yet freed.
void homon_train_config_free(struct HomonTrainConfig *cfg);

// Trains a network and reports the final test accuracy.
//
// # Safety
// All handles must be live; `out_params` and `out_test_accuracy` writable.
enum HomonStatus homon_train(const struct HomonTrainConfig *cfg,
                             const struct HomonDataset *train,
                             const struct HomonDataset *test,
                             struct HomonParams **out_params,
                             double *out_test_accuracy);

// Number of neurons, or 0 for a null handle.
//
// # Safety
// `p` must be null or a live parameter handle.
size_t homon_params_neurons(const struct HomonParams *p);

// Class-1 probability for one row-major `rows × cols` image.
//
// # Safety
// `image` must point to `rows * cols` doubles.
enum HomonStatus homon_params_forward(const struct HomonParams *p,
                                      const double *image,
                                      size_t rows,
                                      size_t cols,
                                      double *out_probability);

// Fills `out_counts` (4 values, row-major `[actual][predicted]`) with the
// confusion matrix on `test`.
//
// # Safety
// `out_counts` must have room for 4 values.
enum HomonStatus homon_params_confusion(const struct HomonParams *p,
                                        const struct HomonDataset *test,
                                        uint64_t *out_counts);

// Serialises parameters as checkpoint JSON; free with [`homon_string_free`].
//
// # Safety
// `p` must be live and `out_json` writable.
enum HomonStatus homon_params_to_json(const struct HomonParams *p, char **out_json);

// Parses checkpoint JSON into a parameter handle.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum HomonStatus homon_params_from_json(const char *json, struct HomonParams **out);

// # Safety
// `p` must be null or a handle not yet freed.
void homon_params_free(struct HomonParams *p);

// Ideal HOM visibility of two images after normalising each to unit norm.
//
// # Safety
// `a` and `b` must each point to `len` doubles.
enum HomonStatus homon_overlap(const double *a, const double *b, size_t len, double *out);

// Photons needed so a visibility estimate lies within `eps` of the truth
// with probability at least `1 − delta`.
//
// # Safety
// `out` must be writable.
enum HomonStatus homon_hoeffding_shots(double eps, double delta, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMON_H */
