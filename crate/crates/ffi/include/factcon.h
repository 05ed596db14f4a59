#ifndef FACTCON_H
#define FACTCON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FcStatus {
  FC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FC_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FC_STATUS_INVALID_UTF8 = 2,
  /**
   * An argument was out of range or inconsistent.
   */
  FC_STATUS_INVALID_ARGUMENT = 3,
  /**
   * A file could not be read or parsed.
   */
  FC_STATUS_IO = 4,
  /**
   * Index past the end of a collection.
   */
  FC_STATUS_OUT_OF_RANGE = 5,
  /**
   * Internal failure; the message says where.
   */
  FC_STATUS_PANIC = 6,
} FcStatus;

/**
 * A trained n-gram scorer.
 */
typedef struct FcModel FcModel;

/**
 * Negatives built for one corpus and epoch.
 */
typedef struct FcNegatives FcNegatives;

/**
 * Negative construction settings; start from [`fc_lfn_options_default`].
 */
typedef struct FcLfnOptions {
  uint32_t max_iterations;
  uint32_t max_span_length;
  uint32_t rank_topk;
  uint32_t replace_topk;
  double replacement_ratio;
  uint64_t seed;
  bool dynamic;
} FcLfnOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string.
 */
const char *fc_version(void);

/**
 * Message of the last failed call on this thread, or "" after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *fc_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void fc_string_free(char *s);

/**
 * Trains an add-k n-gram model on every sentence of a JSONL corpus.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum FcStatus fc_model_train(const char *corpus_path,
                             uint32_t order,
                             double k,
                             struct FcModel **out);

/**
 * Loads a model written by `factcon train-lm`.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must be writable.
 */
enum FcStatus fc_model_load(const char *lm_path, struct FcModel **out);

/**
 * # Safety
 * `model` must be null or come from `fc_model_train`/`fc_model_load`.
 */
void fc_model_free(struct FcModel *model);

/**
 * Total natural-log probability of `text`.
 *
 * # Safety
 * Pointers must be valid as described in the crate docs.
 */
enum FcStatus fc_model_logprob(const struct FcModel *model, const char *text, double *out);

/**
 * Log-probability of `target` continuing `condition`.
 *
 * # Safety
 * Pointers must be valid as described in the crate docs.
 */
enum FcStatus fc_model_conditional_logprob(const struct FcModel *model,
                                           const char *target,
                                           const char *condition,
                                           double *out);

/**
 * Number of distinct compressions of `sentence` reachable with at most
 * `max_iterations` deletions of at most `max_span_length` adjacent tokens.
 *
 * # Safety
 * Pointers must be valid as described in the crate docs.
 */
enum FcStatus fc_candidate_count(const char *sentence,
                                 uint32_t max_iterations,
                                 uint32_t max_span_length,
                                 size_t *out);

/**
 * Fills `out` with the library defaults.
 *
 * # Safety
 * `out` must be writable.
 */
enum FcStatus fc_lfn_options_default(struct FcLfnOptions *out);

/**
 * Builds one negative per summary sentence of the corpus, scored by
 * `model`. Sentences without a negative are only counted.
 *
 * # Safety
 * Pointers must be valid as described in the crate docs.
 */
enum FcStatus fc_negatives_build(const struct FcModel *model,
                                 const char *corpus_path,
                                 const char *embeddings_path,
                                 const struct FcLfnOptions *options,
                                 uint64_t epoch,
                                 struct FcNegatives **out);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `negs` must be null or a live handle.
 */
size_t fc_negatives_len(const struct FcNegatives *negs);

/**
 * Number of sentences that produced no negative; 0 for a null handle.
 *
 * # Safety
 * `negs` must be null or a live handle.
 */
size_t fc_negatives_failed(const struct FcNegatives *negs);

/**
 * Sample `index` as one JSON object, in the `negatives.jsonl` record
 * format. Free the result with [`fc_string_free`].
 *
 * # Safety
 * Pointers must be valid as described in the crate docs.
 */
enum FcStatus fc_negatives_get_json(const struct FcNegatives *negs, size_t index, char **out);

/**
 * # Safety
 * `negs` must be null or come from `fc_negatives_build`.
 */
void fc_negatives_free(struct FcNegatives *negs);

/**
 * Position-masked max-margin loss over per-token log-probabilities of a
 * gold and a negative summary of equal length `len`.
 *
 * # Safety
 * Arrays must hold the stated number of elements.
 */
enum FcStatus fc_loss_codec_pm(const double *gold,
                               const double *negative,
                               size_t len,
                               const size_t *positions,
                               size_t n_positions,
                               double eta,
                               double *out);

/**
 * Encoder contrastive loss of one source against a positive and
 * `n_negatives` negatives, all `dim`-vectors; negatives are row-major.
 * `literal` non-zero leaves the positive out of the denominator.
 *
 * # Safety
 * Arrays must hold the stated number of elements.
 */
enum FcStatus fc_loss_coenc(const double *source,
                            const double *positive,
                            const double *negatives,
                            size_t dim,
                            size_t n_negatives,
                            double gamma,
                            int32_t literal,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTCON_H */
