#ifndef IMPSIM_H
#define IMPSIM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ImpsimStatus {
  IMPSIM_STATUS_OK = 0,
  IMPSIM_STATUS_NULL_POINTER = 1,
  IMPSIM_STATUS_INVALID_ARGUMENT = 2,
  IMPSIM_STATUS_CONFIG = 3,
  IMPSIM_STATUS_IO = 4,
  IMPSIM_STATUS_ILL_POSED = 5,
  IMPSIM_STATUS_OUT_OF_RANGE = 6,
  IMPSIM_STATUS_PANIC = 7,
} ImpsimStatus;

/**
 * Opaque campaign configuration.
 */
typedef struct ImpsimConfig ImpsimConfig;

/**
 * Opaque list of result rows.
 */
typedef struct ImpsimResults ImpsimResults;

/**
 * One result row. `scheme` is 0 for single-pilot, 1 for multi-pilot.
 */
typedef struct ImpsimRow {
  uint32_t scheme;
  uint32_t w;
  double snr_db;
  uint32_t n_ue;
  double bler;
  double bler_ci95;
  double avg_attempts_per_ue;
  double collision_rate;
  double miss_rate;
  double false_alarm_rate;
  uint64_t n_drops;
} ImpsimRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *impsim_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *impsim_version(void);

/**
 * New configuration holding the desk preset.
 */
enum ImpsimStatus impsim_config_new(struct ImpsimConfig **out);

/**
 * Parses configuration text in the `key = value` format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum ImpsimStatus impsim_config_parse(const char *text, struct ImpsimConfig **out);

/**
 * Loads a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ImpsimStatus impsim_config_from_file(const char *path, struct ImpsimConfig **out);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum ImpsimStatus impsim_config_set_seed(struct ImpsimConfig *config, uint64_t seed);

/**
 * # Safety
 * `config` must be a live handle.
 */
enum ImpsimStatus impsim_config_set_drops(struct ImpsimConfig *config, uint64_t n_drops);

/**
 * # Safety
 * `config` must be null or a handle not yet freed.
 */
void impsim_config_free(struct ImpsimConfig *config);

/**
 * Runs the full campaign. `threads == 0` uses all cores.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum ImpsimStatus impsim_run_campaign(const struct ImpsimConfig *config,
                                      uint32_t threads,
                                      struct ImpsimResults **out);

/**
 * Number of rows, or 0 for a null handle.
 *
 * # Safety
 * `results` must be null or a live handle.
 */
size_t impsim_results_len(const struct ImpsimResults *results);

/**
 * Copies row `index` into `row`.
 *
 * # Safety
 * `results` must be a live handle; `row` must be writable.
 */
enum ImpsimStatus impsim_results_get(const struct ImpsimResults *results,
                                     size_t index,
                                     struct ImpsimRow *row);

/**
 * Writes the rows as CSV, same format as the command-line tool.
 *
 * # Safety
 * `results` must be a live handle; `path` a NUL-terminated string.
 */
enum ImpsimStatus impsim_results_write_csv(const struct ImpsimResults *results, const char *path);

/**
 * # Safety
 * `results` must be null or a handle not yet freed.
 */
void impsim_results_free(struct ImpsimResults *results);

/**
 * Probability that at least two of `n_users` share a pilot from a pool of
 * `pool_size`.
 */
double impsim_tsp_collision_probability(uint32_t pool_size, uint32_t n_users);

/**
 * Union-bound probability that some pair collides on all `w` pilots.
 */
double impsim_imp_collision_probability(uint32_t pool_size, uint32_t w, uint32_t n_users);

/**
 * Exact counterpart of [`impsim_imp_collision_probability`].
 */
double impsim_imp_collision_probability_exact(uint32_t pool_size, uint32_t w, uint32_t n_users);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPSIM_H */
