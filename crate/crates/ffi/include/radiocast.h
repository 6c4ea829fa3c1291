#ifndef RADIOCAST_H
#define RADIOCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  RC_STATUS_INVALID_CONFIG = 3,
  RC_STATUS_IO = 4,
  /**
   * A run finished but at least one row failed its correctness check.
   */
  RC_STATUS_INCORRECT = 5,
  RC_STATUS_OUT_OF_RANGE = 6,
  RC_STATUS_PANIC = 7,
} RcStatus;

/**
 * A validated experiment config.
 */
typedef struct RcExperiment RcExperiment;

/**
 * Rows of a finished sweep.
 */
typedef struct RcResult RcResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into this library on the same thread.
 */
const char *rc_last_error(void);

/**
 * Library version as a static string.
 */
const char *rc_version(void);

/**
 * Parses and validates a JSON experiment config.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum RcStatus rc_experiment_from_json(const char *json, struct RcExperiment **out);

/**
 * Runs the experiment. On `Ok` and on `Incorrect` a result handle is
 * written to `out`.
 *
 * # Safety
 * `exp` must come from [`rc_experiment_from_json`]; `out` must be valid.
 */
enum RcStatus rc_experiment_run(const struct RcExperiment *exp, struct RcResult **out);

/**
 * # Safety
 * `exp` must come from [`rc_experiment_from_json`] or be null.
 */
void rc_experiment_free(struct RcExperiment *exp);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `res` must come from [`rc_experiment_run`] or be null.
 */
size_t rc_result_len(const struct RcResult *res);

/**
 * Termination round count and correctness of row `index`.
 *
 * # Safety
 * `res` must come from [`rc_experiment_run`]; the out pointers must be valid.
 */
enum RcStatus rc_result_row(const struct RcResult *res,
                            size_t index,
                            uint64_t *rounds,
                            bool *correct);

/**
 * Writes the result as a JSON string; free it with [`rc_string_free`].
 *
 * # Safety
 * `res` must come from [`rc_experiment_run`]; `out` must be valid.
 */
enum RcStatus rc_result_to_json(const struct RcResult *res, char **out);

/**
 * Writes the result as CSV; free it with [`rc_string_free`].
 *
 * # Safety
 * `res` must come from [`rc_experiment_run`]; `out` must be valid.
 */
enum RcStatus rc_result_to_csv(const struct RcResult *res, char **out);

/**
 * # Safety
 * `res` must come from [`rc_experiment_run`] or be null.
 */
void rc_result_free(struct RcResult *res);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void rc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADIOCAST_H */
