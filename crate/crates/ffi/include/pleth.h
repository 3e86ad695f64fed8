#ifndef PLETH_H
#define PLETH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PlethStatus {
  PLETH_STATUS_OK = 0,
  PLETH_STATUS_NULL_POINTER = 1,
  PLETH_STATUS_INVALID_ARGUMENT = 2,
  PLETH_STATUS_FORMAT = 3,
  PLETH_STATUS_CHANNEL_NOT_FOUND = 4,
  PLETH_STATUS_TRUNCATED = 5,
  PLETH_STATUS_INSUFFICIENT_DATA = 6,
  PLETH_STATUS_RANGE = 7,
  PLETH_STATUS_UTF8 = 8,
  // A Rust panic was caught at the boundary.
  PLETH_STATUS_INTERNAL = 9,
} PlethStatus;

// Opaque list of segmented breaths with their metrics.
typedef struct PlethBreaths PlethBreaths;

// Opaque single-channel recording.
typedef struct PlethRecording PlethRecording;

// Processing parameters. Obtain defaults from [`pleth_config_default`].
typedef struct PlethConfig {
  double sap_threshold;
  bool sap_symmetric;
  // Test `s[i+1] - s[i]` instead of `s[i] - s[i-1]`.
  bool sap_outgoing;
  double duration_min_s;
  // When true `min_dev_value` is the level itself; otherwise the level is
  // `-min_dev_value * std(signal)`.
  bool min_dev_absolute;
  double min_dev_value;
  // Average blocks of ten samples instead of keeping every tenth.
  bool downsample_block_mean;
} PlethConfig;

typedef struct PlethBreathInfo {
  size_t breath_number;
  double start_time_s;
  double end_time_s;
  size_t native_length;
  double duration_s;
  double ti_s;
  double te_s;
  double tr_s;
  double pip;
  double pep;
  double pause;
  double penh;
  // `ApEn(m)` for m = 0..4; NaN when the breath was too short.
  double entropy[5];
} PlethBreathInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or an empty string.
// The pointer stays valid until the next call into this library on the same
// thread.
const char *pleth_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pleth_version(void);

struct PlethConfig pleth_config_default(void);

// Reads channel `channel` from an in-memory EDF file. Subject labels in the
// header are kept when present.
//
// # Safety
// `bytes` must be valid for `len` reads, `channel` a NUL-terminated string
// and `out` a writable pointer.
enum PlethStatus pleth_recording_from_edf(const uint8_t *bytes,
                                          size_t len,
                                          const char *channel,
                                          struct PlethRecording **out);

// Copies `len` samples in physical units into a new recording.
//
// # Safety
// `samples` must be valid for `len` reads and `out` writable.
enum PlethStatus pleth_recording_from_samples(const double *samples,
                                              size_t len,
                                              double sample_rate_hz,
                                              struct PlethRecording **out);

// Sample count, or 0 for a null handle.
//
// # Safety
// `rec` must be null or a live handle.
size_t pleth_recording_len(const struct PlethRecording *rec);

// Sample rate in Hz, or 0 for a null handle.
//
// # Safety
// `rec` must be null or a live handle.
double pleth_recording_sample_rate(const struct PlethRecording *rec);

// Copies up to `cap` samples into `dst` and stores the count in `written`.
//
// # Safety
// `rec` must be a live handle, `dst` valid for `cap` writes, `written`
// writable.
enum PlethStatus pleth_recording_copy_samples(const struct PlethRecording *rec,
                                              double *dst,
                                              size_t cap,
                                              size_t *written);

// # Safety
// `rec` must be null or a handle not yet freed.
void pleth_recording_free(struct PlethRecording *rec);

// Removes positive spikes from `samples` in place and stores the number of
// altered samples in `replacements`.
//
// # Safety
// `samples` must be valid for `len` reads and writes; `config` and
// `replacements` must be valid pointers.
enum PlethStatus pleth_sap_filter(double *samples,
                                  size_t len,
                                  const struct PlethConfig *config,
                                  size_t *replacements);

// Runs the full pipeline on a copy of `rec` and returns the breaths.
//
// # Safety
// `rec` must be a live handle, `config` valid, `out` writable.
enum PlethStatus pleth_process_recording(const struct PlethRecording *rec,
                                         const struct PlethConfig *config,
                                         struct PlethBreaths **out);

// Breath count, or 0 for a null handle.
//
// # Safety
// `b` must be null or a live handle.
size_t pleth_breaths_count(const struct PlethBreaths *b);

// # Safety
// `b` must be a live handle and `out` writable.
enum PlethStatus pleth_breaths_get(const struct PlethBreaths *b,
                                   size_t index,
                                   struct PlethBreathInfo *out);

// Copies the zero-padded 400-sample waveform of breath `index` into `dst`.
//
// # Safety
// `b` must be a live handle and `dst` valid for 400 writes.
enum PlethStatus pleth_breaths_waveform(const struct PlethBreaths *b, size_t index, double *dst);

// # Safety
// `b` must be null or a handle not yet freed.
void pleth_breaths_free(struct PlethBreaths *b);

// Approximate entropy of `samples` with embedding `m` (0..=4) and
// tolerance `r`.
//
// # Safety
// `samples` must be valid for `len` reads and `out` writable.
enum PlethStatus pleth_approx_entropy(const double *samples,
                                      size_t len,
                                      size_t m,
                                      double r,
                                      double *out);

// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
//
// # Safety
// `a`/`b` must be valid for `na`/`nb` reads; `d` and `p` writable.
enum PlethStatus pleth_ks_two_sample(const double *a,
                                     size_t na,
                                     const double *b,
                                     size_t nb,
                                     double *d,
                                     double *p);

// Two-sample t-test, Welch unless `pooled`.
//
// # Safety
// `a`/`b` must be valid for `na`/`nb` reads; `t`, `df` and `p` writable.
enum PlethStatus pleth_t_test(const double *a,
                              size_t na,
                              const double *b,
                              size_t nb,
                              bool pooled,
                              double *t,
                              double *df,
                              double *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PLETH_H */
