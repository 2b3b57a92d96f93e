#ifndef PHASEKIT_H
#define PHASEKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result of every fallible call.
 */
typedef enum PkStatus {
  PK_STATUS_OK = 0,
  PK_STATUS_NULL_POINTER = 1,
  PK_STATUS_INVALID_ARGUMENT = 2,
  PK_STATUS_FORMAT = 3,
  PK_STATUS_IO = 4,
  PK_STATUS_NUMERIC = 5,
  PK_STATUS_PANIC = 6,
} PkStatus;

/*
 Coherence map in [0, 1].
 */
typedef struct PkCoherence PkCoherence;

/*
 Trained filter network.
 */
typedef struct PkModel PkModel;

/*
 Wrapped phase image.
 */
typedef struct PkPhase PkPhase;

/*
 Scalar evaluation results.
 */
typedef struct PkMetrics {
  double phase_rmse;
  double phase_cosine_error;
  /*
   Residue reduction percentage; NaN when the noisy image has no residues.
   */
  double residue_reduction;
  uint64_t residues_before;
  uint64_t residues_after;
} PkMetrics;

/*
 Library version as a static NUL-terminated string.
 */
const char *pk_version(void);

/*
 Message for the last failed call on this thread; empty after a success.
 Valid until the next `pk_*` call on the same thread.
 */
const char *pk_last_error(void);

/*
 Copies `width * height` row-major phase values (radians, wrapped on
 input) into a new handle.

 # Safety
 `data` must point to `width * height` readable floats; `out` must be valid
 for a write.
 */
enum PkStatus pk_phase_new(size_t width, size_t height, const float *data, struct PkPhase **out);

/*
 Reads a single-channel `.igrd` phase raster.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PkStatus pk_phase_read(const char *path, struct PkPhase **out);

/*
 # Safety
 `phase` must be a live handle; `path` a NUL-terminated string.
 */
enum PkStatus pk_phase_write(const struct PkPhase *phase, const char *path);

/*
 # Safety
 `phase` must be a live handle or NULL (returns 0).
 */
size_t pk_phase_width(const struct PkPhase *phase);

/*
 # Safety
 `phase` must be a live handle or NULL (returns 0).
 */
size_t pk_phase_height(const struct PkPhase *phase);

/*
 Copies the row-major values into `out`, which holds `len` floats.

 # Safety
 `phase` must be a live handle; `out` must be writable for `len` floats.
 */
enum PkStatus pk_phase_copy(const struct PkPhase *phase, float *out, size_t len);

/*
 # Safety
 `phase` must be NULL or a handle not yet freed.
 */
void pk_phase_free(struct PkPhase *phase);

/*
 # Safety
 `coh` must be a live handle or NULL (returns 0).
 */
size_t pk_coherence_width(const struct PkCoherence *coh);

/*
 # Safety
 `coh` must be a live handle or NULL (returns 0).
 */
size_t pk_coherence_height(const struct PkCoherence *coh);

/*
 # Safety
 `coh` must be a live handle; `out` must be writable for `len` floats.
 */
enum PkStatus pk_coherence_copy(const struct PkCoherence *coh, float *out, size_t len);

/*
 # Safety
 `coh` must be a live handle; `path` a NUL-terminated string.
 */
enum PkStatus pk_coherence_write(const struct PkCoherence *coh, const char *path);

/*
 # Safety
 `coh` must be NULL or a handle not yet freed.
 */
void pk_coherence_free(struct PkCoherence *coh);

/*
 Adds Gaussian phase noise calibrated to coherence `gamma` in (0, 1].

 # Safety
 `phase` must be a live handle; `out` must be valid for a write.
 */
enum PkStatus pk_add_noise(const struct PkPhase *phase,
                           double gamma,
                           uint64_t seed,
                           struct PkPhase **out);

/*
 Boxcar filter with a `window`×`window` complex mean. `out_coh` may be NULL.

 # Safety
 `phase` must be a live handle; `out_phase` valid for a write; `out_coh`
 NULL or valid for a write.
 */
enum PkStatus pk_boxcar(const struct PkPhase *phase,
                        size_t window,
                        struct PkPhase **out_phase,
                        struct PkCoherence **out_coh);

/*
 Goldstein spectral filter (phase only).

 # Safety
 `phase` must be a live handle; `out` must be valid for a write.
 */
enum PkStatus pk_goldstein(const struct PkPhase *phase,
                           size_t patch,
                           size_t overlap,
                           double alpha,
                           struct PkPhase **out);

/*
 Loads an `IMDN` checkpoint.

 # Safety
 `path` must be a NUL-terminated string; `out` must be valid for a write.
 */
enum PkStatus pk_model_load(const char *path, struct PkModel **out);

/*
 # Safety
 `model` must be NULL or a handle not yet freed.
 */
void pk_model_free(struct PkModel *model);

/*
 Network filter: filtered phase and, if `out_coh` is not NULL, coherence.

 # Safety
 `model` and `phase` must be live handles; `out_phase` valid for a write;
 `out_coh` NULL or valid for a write.
 */
enum PkStatus pk_model_filter(const struct PkModel *model,
                              const struct PkPhase *phase,
                              struct PkPhase **out_phase,
                              struct PkCoherence **out_coh);

/*
 Phase metrics of `filtered` against `truth`, with residues counted on
 `noisy` and `filtered`.

 # Safety
 All handles must be live; `out` must be valid for a write.
 */
enum PkStatus pk_metrics(const struct PkPhase *truth,
                         const struct PkPhase *noisy,
                         const struct PkPhase *filtered,
                         struct PkMetrics *out);

#endif  /* PHASEKIT_H */
