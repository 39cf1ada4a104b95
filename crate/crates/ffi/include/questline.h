#ifndef QUESTLINE_H
#define QUESTLINE_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point. The run-outcome
 * values mirror the CLI exit codes (halted = 2, completed with skips = 3,
 * configuration error = 4).
 */
typedef enum QlStatus {
  QL_STATUS_OK = 0,
  QL_STATUS_INVALID_ARG = 1,
  QL_STATUS_HALTED = 2,
  QL_STATUS_COMPLETED_WITH_SKIPS = 3,
  QL_STATUS_CONFIG_ERROR = 4,
  QL_STATUS_IO_ERROR = 5,
  QL_STATUS_PARSE_ERROR = 6,
  QL_STATUS_LINT_ERRORS = 7,
} QlStatus;

/**
 * Opaque pipeline configuration handle.
 */
typedef struct QlConfig QlConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Create a configuration with library defaults and a fresh run id.
 * Never returns null.
 */
struct QlConfig *ql_config_new(void);

/**
 * Release a configuration handle. Null is a no-op.
 */
void ql_config_free(struct QlConfig *config);

/**
 * Set the run identifier.
 */
enum QlStatus ql_config_set_run_id(struct QlConfig *config, const char *run_id);

/**
 * Set the artifact store root directory.
 */
enum QlStatus ql_config_set_out_dir(struct QlConfig *config, const char *out_dir);

/**
 * Set requested roster and quest-set sizes.
 */
enum QlStatus ql_config_set_counts(struct QlConfig *config, uintptr_t npcs, uintptr_t quests);

/**
 * Set content retries per stage (attempts = retries + 1).
 */
enum QlStatus ql_config_set_retries(struct QlConfig *config, uint32_t retries);

/**
 * Escalate roster/quest-set count mismatches from warning to error.
 */
enum QlStatus ql_config_set_strict_counts(struct QlConfig *config, bool strict);

/**
 * Execute a full pipeline run against a scripted fixture file. On return,
 * `*manifest_json` (when non-null) holds the run manifest as JSON; release
 * it with [`ql_string_free`]. Returns `QL_STATUS_OK`, `_HALTED`,
 * `_COMPLETED_WITH_SKIPS`, or an error status.
 */
enum QlStatus ql_run_fixture(const struct QlConfig *config,
                             const char *fixture_path,
                             char **manifest_json);

/**
 * Lint a persisted run. `*findings_json` receives the findings array as
 * JSON. Returns `QL_STATUS_LINT_ERRORS` when any error-severity finding
 * exists, `QL_STATUS_OK` when clean.
 */
enum QlStatus ql_lint_run(const char *out_dir, const char *run_id, char **findings_json);

/**
 * Aggregate a Likert score file (.csv or .jsonl) into the category table.
 * `*table_json` receives the table as JSON.
 */
enum QlStatus ql_eval_scores(const char *scores_path, char **table_json);

/**
 * The last error message recorded on this thread, or null. The returned
 * string must be released with [`ql_string_free`].
 */
char *ql_last_error_message(void);

/**
 * Release a string returned by this library. Null is a no-op.
 */
void ql_string_free(char *text);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUESTLINE_H */
