#ifndef TEC_H
#define TEC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum TecStatus {
  TEC_STATUS_OK = 0,
  TEC_STATUS_NULL_POINTER = 1,
  TEC_STATUS_INVALID_UTF8 = 2,
  TEC_STATUS_INVALID_ARGUMENT = 3,
  TEC_STATUS_IO = 4,
  TEC_STATUS_PARSE = 5,
  TEC_STATUS_CHECKPOINT = 6,
  TEC_STATUS_SEQUENCE_TOO_LONG = 7,
  TEC_STATUS_PANIC = 8,
} TecStatus;

// Opaque loaded corrector with its vocabulary.
typedef struct TecModel TecModel;

// Opaque subword vocabulary.
typedef struct TecVocab TecVocab;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into this library on the same thread.
const char *tec_last_error(void);

// Library version as a static string.
const char *tec_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void tec_string_free(char *s);

// Punctuation-normalized copy of `input`.
//
// # Safety
// `input` must be a NUL-terminated string; `out` must be writable.
enum TecStatus tec_normalize(const char *input, char **out);

// Token-level edits turning `original` into `corrected`, as a JSON array of
// `[start, end, "original tokens", "replacement tokens"]`.
//
// # Safety
// Both inputs must be NUL-terminated strings; `out` must be writable.
enum TecStatus tec_align_edits(const char *original, const char *corrected, char **out);

// Weighted harmonic mean of precision and recall; 0 when both are 0.
//
// # Safety
// `out` must be writable.
enum TecStatus tec_f_beta(double precision, double recall, double beta, double *out);

// Two-sided Mann-Whitney U test of `x` against `y`.
//
// # Safety
// `x` and `y` must point to `nx` and `ny` doubles; outputs must be writable.
enum TecStatus tec_mann_whitney(const double *x,
                                size_t nx,
                                const double *y,
                                size_t ny,
                                double *out_u,
                                double *out_p);

// Loads a vocabulary file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum TecStatus tec_vocab_load(const char *path, struct TecVocab **out);

// Number of symbols including specials.
//
// # Safety
// `vocab` must be a live handle or null (returns 0).
size_t tec_vocab_len(const struct TecVocab *vocab);

// # Safety
// `vocab` must come from [`tec_vocab_load`] and not have been freed.
void tec_vocab_free(struct TecVocab *vocab);

// Loads a checkpoint trained with `vocab`. The handle keeps its own copy of
// the vocabulary.
//
// # Safety
// `path` must be a NUL-terminated string, `vocab` a live handle and `out`
// writable.
enum TecStatus tec_model_load(const char *path,
                              const struct TecVocab *vocab,
                              struct TecModel **out);

// Greedy correction of `original` given `source`.
//
// # Safety
// `model` must be a live handle, inputs NUL-terminated strings and `out`
// writable. A handle may be used from several threads at once.
enum TecStatus tec_model_correct(const struct TecModel *model,
                                 const char *source,
                                 const char *original,
                                 char **out);

// # Safety
// `model` must come from [`tec_model_load`] and not have been freed.
void tec_model_free(struct TecModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TEC_H */
