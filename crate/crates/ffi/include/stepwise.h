#ifndef STEPWISE_H
#define STEPWISE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum StepwiseStatus {
  STEPWISE_STATUS_OK = 0,
  STEPWISE_STATUS_NULL_POINTER = 1,
  STEPWISE_STATUS_INVALID_UTF8 = 2,
  STEPWISE_STATUS_INVALID_ARGUMENT = 3,
  STEPWISE_STATUS_IO = 4,
  STEPWISE_STATUS_DATA = 5,
  STEPWISE_STATUS_NO_STEPS = 6,
  STEPWISE_STATUS_PANIC = 7,
} StepwiseStatus;

/**
 * A loaded task directory.
 */
typedef struct StepwiseCorpus StepwiseCorpus;

/**
 * Parsed numbered steps.
 */
typedef struct StepwiseSteps StepwiseSteps;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into this library on the same thread.
 */
const char *stepwise_last_error(void);

/**
 * Library version, static storage.
 */
const char *stepwise_version(void);

/**
 * # Safety
 * `s` must come from this library (or be NULL) and not be freed twice.
 */
void stepwise_string_free(char *s);

/**
 * ROUGE-L F-measure of `candidate` against the best of `n_refs` references.
 *
 * # Safety
 * `candidate` must be a valid C string; `refs` must point to `n_refs` valid
 * C strings; `out` must be writable.
 */
enum StepwiseStatus stepwise_rouge_l(const char *candidate,
                                     const char *const *refs,
                                     size_t n_refs,
                                     double *out);

/**
 * Fleiss's kappa over a row-major `n_items` × `n_categories` count table.
 *
 * # Safety
 * `counts` must point to `n_items * n_categories` readable values and `out`
 * must be writable.
 */
enum StepwiseStatus stepwise_fleiss_kappa(const uint64_t *counts,
                                          size_t n_items,
                                          size_t n_categories,
                                          double *out);

/**
 * Parse numbered steps out of `text`.
 *
 * # Safety
 * `text` must be a valid C string and `out` writable. Free the handle with
 * [`stepwise_steps_free`].
 */
enum StepwiseStatus stepwise_steps_parse(const char *text, struct StepwiseSteps **out);

/**
 * Number of steps; 0 for NULL.
 *
 * # Safety
 * `steps` must be NULL or a live handle.
 */
size_t stepwise_steps_len(const struct StepwiseSteps *steps);

/**
 * Borrowed text of step `index` (0-based), or NULL when out of range.
 *
 * # Safety
 * `steps` must be NULL or a live handle; the result lives as long as the handle.
 */
const char *stepwise_steps_get(const struct StepwiseSteps *steps, size_t index);

/**
 * Seeded shuffle into a new handle, using the same permutation as the
 * `shuffle` command for an instruction-level seed.
 *
 * # Safety
 * `steps` must be a live handle and `out` writable.
 */
enum StepwiseStatus stepwise_steps_shuffle(const struct StepwiseSteps *steps,
                                           uint64_t seed,
                                           struct StepwiseSteps **out);

/**
 * Steps renumbered `1. ...` one per line; caller frees with [`stepwise_string_free`].
 *
 * # Safety
 * `steps` must be NULL or a live handle.
 */
char *stepwise_steps_join(const struct StepwiseSteps *steps);

/**
 * # Safety
 * `steps` must be NULL or a handle from this library, freed once.
 */
void stepwise_steps_free(struct StepwiseSteps *steps);

/**
 * The step-generation prompt for a task category and definition.
 *
 * # Safety
 * Inputs must be valid C strings and `out` writable; free the result with
 * [`stepwise_string_free`].
 */
enum StepwiseStatus stepwise_generation_prompt(const char *task_category,
                                               const char *task_definition,
                                               char **out);

/**
 * Load every task file in `dir`.
 *
 * # Safety
 * `dir` must be a valid C string and `out` writable. Free the handle with
 * [`stepwise_corpus_free`].
 */
enum StepwiseStatus stepwise_corpus_open(const char *dir, struct StepwiseCorpus **out);

/**
 * Number of tasks; 0 for NULL.
 *
 * # Safety
 * `corpus` must be NULL or a live handle.
 */
size_t stepwise_corpus_len(const struct StepwiseCorpus *corpus);

/**
 * Score a prediction file against the corpus; writes the macro ROUGE-L
 * (task mean, in [0, 1]) and the number of missing predictions.
 *
 * # Safety
 * `corpus` must be a live handle, `predictions_path` a valid C string and
 * both outputs writable (`missing_out` may be NULL).
 */
enum StepwiseStatus stepwise_corpus_evaluate(const struct StepwiseCorpus *corpus,
                                             const char *predictions_path,
                                             size_t instances_per_task,
                                             double *macro_out,
                                             size_t *missing_out);

/**
 * # Safety
 * `corpus` must be NULL or a handle from this library, freed once.
 */
void stepwise_corpus_free(struct StepwiseCorpus *corpus);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STEPWISE_H */
