#ifndef MTLAB_H
#define MTLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MtlabStatus {
  MTLAB_STATUS_OK = 0,
  MTLAB_STATUS_NULL_POINTER = 1,
  MTLAB_STATUS_INVALID_UTF8 = 2,
  MTLAB_STATUS_INVALID_ARGUMENT = 3,
  MTLAB_STATUS_IO = 4,
  MTLAB_STATUS_PARSE = 5,
  MTLAB_STATUS_UNKNOWN_LANGUAGE = 6,
  MTLAB_STATUS_CHECKPOINT = 7,
  MTLAB_STATUS_MODEL = 8,
  MTLAB_STATUS_PANIC = 9,
} MtlabStatus;

/**
 * A loaded checkpoint and its vocabulary.
 */
typedef struct MtlabTranslator MtlabTranslator;

/**
 * The languages of a corpus manifest.
 */
typedef struct MtlabWorld MtlabWorld;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mtlab_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * Valid until the next call on the same thread.
 */
const char *mtlab_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void mtlab_string_free(char *s);

/**
 * Corpus BLEU over `n` whitespace-tokenized hypothesis/reference pairs.
 *
 * # Safety
 * `hyps` and `refs` must point to `n` valid NUL-terminated strings and
 * `score` to writable memory.
 */
enum MtlabStatus mtlab_bleu(const char *const *hyps,
                            const char *const *refs,
                            size_t n,
                            bool smooth,
                            double *score);

/**
 * Corpus chrF with character n-grams up to 6 and the given beta.
 *
 * # Safety
 * As for `mtlab_bleu`.
 */
enum MtlabStatus mtlab_chrf(const char *const *hyps,
                            const char *const *refs,
                            size_t n,
                            double beta,
                            double *score);

/**
 * Build the languages of a TOML corpus manifest file.
 *
 * # Safety
 * `manifest_path` must be a valid string and `world` writable.
 */
enum MtlabStatus mtlab_world_open(const char *manifest_path, struct MtlabWorld **world);

/**
 * # Safety
 * `world` must be null or a handle from `mtlab_world_open`, not yet freed.
 */
void mtlab_world_free(struct MtlabWorld *world);

/**
 * Exact translation of `text` between two languages of the world.
 *
 * # Safety
 * Pointers must be valid; `*result` receives a string to free with
 * `mtlab_string_free`.
 */
enum MtlabStatus mtlab_ground_truth(const struct MtlabWorld *world,
                                    const char *text_in,
                                    const char *from,
                                    const char *to,
                                    char **result);

/**
 * Load a checkpoint directory together with the vocabulary it was
 * trained with.
 *
 * # Safety
 * Paths must be valid strings and `translator` writable.
 */
enum MtlabStatus mtlab_translator_open(const char *checkpoint_dir,
                                       const char *vocab_dir,
                                       struct MtlabTranslator **translator);

/**
 * # Safety
 * `translator` must be null or a handle from `mtlab_translator_open`,
 * not yet freed.
 */
void mtlab_translator_free(struct MtlabTranslator *translator);

/**
 * Translate one sentence into `tgt_lang`. `beam` of 0 or 1 decodes
 * greedily; larger values run beam search with length penalty `alpha`.
 *
 * # Safety
 * Pointers must be valid; `*result` receives a string to free with
 * `mtlab_string_free`.
 */
enum MtlabStatus mtlab_translate(const struct MtlabTranslator *translator,
                                 const char *source,
                                 const char *tgt_lang,
                                 size_t beam,
                                 double alpha,
                                 char **result);

/**
 * Vocabulary size of a loaded translator, or 0 for a null handle.
 *
 * # Safety
 * `translator` must be null or a live handle.
 */
size_t mtlab_translator_vocab_size(const struct MtlabTranslator *translator);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTLAB_H */
