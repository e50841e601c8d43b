#ifndef HUBRAIL_H
#define HUBRAIL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum HrStatus {
  HR_STATUS_OK = 0,
  HR_STATUS_NULL_POINTER = 1,
  HR_STATUS_INVALID_UTF8 = 2,
  HR_STATUS_MALFORMED = 3,
  HR_STATUS_INFEASIBLE = 4,
  HR_STATUS_INVARIANT = 5,
  HR_STATUS_OVER_CONSTRAINED = 6,
  HR_STATUS_IO = 7,
  HR_STATUS_OUT_OF_RANGE = 8,
  HR_STATUS_PANIC = 9,
} HrStatus;

/**
 * The scored result of one plan evaluation.
 */
typedef struct HrEvaluation HrEvaluation;

/**
 * A loaded scenario: line, bounds, period and demand.
 */
typedef struct HrScenario HrScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *hr_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void hr_string_free(char *s);

/**
 * Loads the bundled beijing9 scenario.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum HrStatus hr_scenario_bundled(struct HrScenario **out);

/**
 * Loads a scenario from config JSON. Demand CSV paths, if any, are taken
 * relative to the working directory.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HrStatus hr_scenario_from_json(const char *json, struct HrScenario **out);

/**
 * # Safety
 * `sc` must come from this library and not have been freed already.
 */
void hr_scenario_free(struct HrScenario *sc);

/**
 * Number of stations, or 0 for a null handle.
 *
 * # Safety
 * `sc` must be null or a live handle.
 */
size_t hr_scenario_n_stations(const struct HrScenario *sc);

/**
 * Fleet size, or 0 for a null handle.
 *
 * # Safety
 * `sc` must be null or a live handle.
 */
size_t hr_scenario_n_trains(const struct HrScenario *sc);

/**
 * Samples a feeder delay scenario and returns it as JSON.
 *
 * # Safety
 * `sc` must be a live handle and `out` a valid pointer.
 */
enum HrStatus hr_sample_delays(const struct HrScenario *sc, uint64_t seed, char **out);

/**
 * Optimizes formations and timetable against scheduled demand and returns
 * the plan as JSON. `generations` of 0 keeps the configured value.
 *
 * # Safety
 * `sc` must be a live handle and `out` a valid pointer.
 */
enum HrStatus hr_optimize_plan(const struct HrScenario *sc,
                               uint64_t seed,
                               size_t generations,
                               char **out);

/**
 * Optimizes holding for a plan and returns the holding plan as JSON.
 * `delays_json` may be null for scheduled demand.
 *
 * # Safety
 * `sc` must be a live handle, `plan_json` a NUL-terminated string,
 * `delays_json` null or NUL-terminated, and `out` a valid pointer.
 */
enum HrStatus hr_optimize_holding(const struct HrScenario *sc,
                                  const char *plan_json,
                                  const char *delays_json,
                                  uint64_t seed,
                                  size_t generations,
                                  char **out);

/**
 * Evaluates a plan. `holding_json` and `delays_json` may be null.
 *
 * # Safety
 * `sc` must be a live handle, the strings null or NUL-terminated as noted,
 * and `out` a valid pointer.
 */
enum HrStatus hr_evaluate(const struct HrScenario *sc,
                          const char *plan_json,
                          const char *holding_json,
                          const char *delays_json,
                          struct HrEvaluation **out);

/**
 * # Safety
 * `ev` must come from this library and not have been freed already.
 */
void hr_evaluation_free(struct HrEvaluation *ev);

/**
 * Total spare capacity. NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double hr_evaluation_spare(const struct HrEvaluation *ev);

/**
 * Waiting for the first train, passenger-minutes. NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double hr_evaluation_first_wait(const struct HrEvaluation *ev);

/**
 * Extra waiting caused by being left behind. NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double hr_evaluation_extra_wait(const struct HrEvaluation *ev);

/**
 * Passengers left behind by two consecutive trains. NaN for a null handle.
 *
 * # Safety
 * `ev` must be null or a live handle.
 */
double hr_evaluation_violation(const struct HrEvaluation *ev);

/**
 * Passengers left behind by train `train` at station `station`, both
 * zero-based.
 *
 * # Safety
 * `ev` must be a live handle and `out` a valid pointer.
 */
enum HrStatus hr_evaluation_left_behind(const struct HrEvaluation *ev,
                                        size_t train,
                                        size_t station,
                                        double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* HUBRAIL_H */
