#ifndef NLI_FSL_H
#define NLI_FSL_H

/* Generated by cbindgen from nli-fsl-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit-code contract, plus
 * `InvalidArgument` for null/UTF-8 violations at the boundary.
 */
typedef enum NliFslStatus {
  NliFslStatus_Ok = 0,
  NliFslStatus_ConfigError = 1,
  NliFslStatus_DataError = 2,
  NliFslStatus_TrainingError = 3,
  NliFslStatus_IntegrityError = 4,
  NliFslStatus_InvalidArgument = 5,
} NliFslStatus;

/**
 * Opaque scorer handle.
 */
typedef struct NliFslScorer NliFslScorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *nli_fsl_version(void);

/**
 * Message for the calling thread's most recent failure. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *nli_fsl_last_error(void);

/**
 * Load a saved scorer artifact (any backend). On success `*out` owns the
 * handle; release it with [`nli_fsl_scorer_free`].
 *
 * # Safety
 *
 * `artifact_dir` must be a NUL-terminated string and `out` a valid
 * pointer-to-pointer.
 */
enum NliFslStatus nli_fsl_scorer_load(const char *artifact_dir, struct NliFslScorer **out);

/**
 * Release a handle returned by [`nli_fsl_scorer_load`]. Null is a no-op.
 *
 * # Safety
 *
 * `scorer` must be a pointer previously returned by this library and not
 * already freed.
 */
void nli_fsl_scorer_free(struct NliFslScorer *scorer);

/**
 * Entailment probabilities for `len` premise/hypothesis pairs, written to
 * `out_scores[0..len]`.
 *
 * # Safety
 *
 * `premises` and `hypotheses` must each point to `len` NUL-terminated
 * strings; `out_scores` must have room for `len` doubles.
 */
enum NliFslStatus nli_fsl_scorer_score(const struct NliFslScorer *scorer,
                                       const char *const *premises,
                                       const char *const *hypotheses,
                                       uintptr_t len,
                                       double *out_scores);

/**
 * Argmax intent prediction for one utterance over `n_labels` candidate
 * label texts. Writes the winning index to `*out_index` and, when
 * `out_scores` is non-null, all per-label probabilities to
 * `out_scores[0..n_labels]`. Ties go to the lexicographically smallest
 * label text.
 *
 * # Safety
 *
 * Pointer arguments must satisfy the same contracts as
 * [`nli_fsl_scorer_score`]; `out_index` must be a valid pointer.
 */
enum NliFslStatus nli_fsl_scorer_predict(const struct NliFslScorer *scorer,
                                         const char *utterance,
                                         const char *const *labels,
                                         uintptr_t n_labels,
                                         uintptr_t *out_index,
                                         double *out_scores);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NLI_FSL_H */
