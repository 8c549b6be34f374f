#ifndef DNSSEC_MODEL_H
#define DNSSEC_MODEL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DmStatus {
  DM_STATUS_OK = 0,
  DM_STATUS_NULL_ARGUMENT = 1,
  DM_STATUS_INVALID_UTF8 = 2,
  /**
   * The scenario file could not be read or did not validate.
   */
  DM_STATUS_SCENARIO = 3,
  /**
   * A property list or seed range did not parse, or named an unknown id.
   */
  DM_STATUS_USAGE = 4,
  /**
   * Checked verdicts differ from the scenario's expectations.
   */
  DM_STATUS_DEVIATION = 5,
  DM_STATUS_PANIC = 6,
} DmStatus;

/**
 * A verdict for one property.
 */
typedef enum DmVerdict {
  DM_VERDICT_HOLDS = 0,
  DM_VERDICT_FALSIFIED = 1,
} DmVerdict;

/**
 * The outcome of one seeded run.
 */
typedef struct DmRun DmRun;

/**
 * A loaded scenario.
 */
typedef struct DmScenario DmScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message left by the last call on this thread, or null. Valid until the next call.
 */
const char *dm_last_error(void);

/**
 * Library version as a static string.
 */
const char *dm_version(void);

/**
 * Loads a scenario file. Zone paths in it resolve against its directory.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum DmStatus dm_scenario_load(const char *path, struct DmScenario **out);

/**
 * Parses scenario TOML held in memory; `base` is the file it stands for.
 *
 * # Safety
 * `toml` and `base` must be nul-terminated strings; `out` must be writable.
 */
enum DmStatus dm_scenario_parse(const char *toml, const char *base, struct DmScenario **out);

/**
 * # Safety
 * `s` must come from `dm_scenario_load` or `dm_scenario_parse`, or be null.
 */
void dm_scenario_free(struct DmScenario *s);

/**
 * Runs the scenario once under `seed`.
 *
 * # Safety
 * `s` must be a live scenario handle; `out` must be writable.
 */
enum DmStatus dm_scenario_run(const struct DmScenario *s, uint64_t seed, struct DmRun **out);

/**
 * # Safety
 * `r` must come from `dm_scenario_run`, or be null.
 */
void dm_run_free(struct DmRun *r);

/**
 * Number of events in the run's trace.
 *
 * # Safety
 * `r` must be a live run handle; `out` must be writable.
 */
enum DmStatus dm_run_event_count(const struct DmRun *r, size_t *out);

/**
 * The run's trace as JSON lines. Free the result with `dm_string_free`.
 *
 * # Safety
 * `r` must be a live run handle; `out` must be writable.
 */
enum DmStatus dm_run_trace_json(const struct DmRun *r, char **out);

/**
 * Checks one property over seeds `[seed_start, seed_end)`. When the verdict is
 * `DM_VERDICT_FALSIFIED`, `dm_last_error` holds the counterexample's reason.
 *
 * # Safety
 * `s` must be a live scenario handle; `out` must be writable.
 */
enum DmStatus dm_check_property(const struct DmScenario *s,
                                uint8_t property,
                                uint64_t seed_start,
                                uint64_t seed_end,
                                enum DmVerdict *out);

/**
 * Checks `props` (e.g. `"1-12,14"`, or null for the scenario's own list) over
 * `seeds` (`"500"` or `"A..B"`, or null for its default) and writes the report as
 * JSON lines to `out`. Returns `DM_STATUS_DEVIATION` when a verdict differs from
 * the expected one; the report is written either way.
 *
 * # Safety
 * `s` must be a live scenario handle; `props` and `seeds` must be null or
 * nul-terminated strings; `out` must be writable.
 */
enum DmStatus dm_check_report(const struct DmScenario *s,
                              const char *props,
                              const char *seeds,
                              char **out);

/**
 * # Safety
 * `p` must come from this library, or be null.
 */
void dm_string_free(char *p);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DNSSEC_MODEL_H */
