#ifndef ESC_FFI_H
#define ESC_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of values in one trajectory row.
 */
#define ESC_COLUMNS 18

/**
 * Measurement model override for filter-driven scenarios.
 */
typedef enum EscMeasurementModel {
  ESC_MEASUREMENT_MODEL_DERIVED = 0,
  ESC_MEASUREMENT_MODEL_PAPER_LITERAL = 1,
} EscMeasurementModel;

/**
 * Status codes. Values 0 to 2 match the exit codes of the `esc` binary.
 */
typedef enum EscStatus {
  ESC_STATUS_OK = 0,
  ESC_STATUS_CONFIG_ERROR = 1,
  ESC_STATUS_NUMERICAL_ABORT = 2,
  ESC_STATUS_INVALID_ARGUMENT = 3,
  ESC_STATUS_IO_ERROR = 4,
  ESC_STATUS_PANIC = 5,
} EscStatus;

/**
 * Parsed and validated set of scenarios.
 */
typedef struct EscConfig EscConfig;

/**
 * Trajectory of one run, complete or cut short by a numerical abort.
 */
typedef struct EscRecord EscRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *esc_last_error(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *esc_version(void);

/**
 * Loads a TOML config file. With `force`, invalid scenarios are kept.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum EscStatus esc_config_from_path(const char *path, bool force, struct EscConfig **out);

/**
 * Parses a TOML config held in memory.
 *
 * # Safety
 * `text` must be a nul-terminated string and `out` a valid pointer.
 */
enum EscStatus esc_config_from_str(const char *text, bool force, struct EscConfig **out);

/**
 * Loads one of the bundled configs by name.
 *
 * # Safety
 * `name` must be a nul-terminated string and `out` a valid pointer.
 */
enum EscStatus esc_config_from_preset(const char *name, struct EscConfig **out);

/**
 * # Safety
 * `config` must come from an `esc_config_from_*` call, or be null.
 */
void esc_config_free(struct EscConfig *config);

/**
 * Number of scenarios in `config`, 0 if it is null.
 *
 * # Safety
 * `config` must be a live handle or null.
 */
size_t esc_config_scenario_count(const struct EscConfig *config);

/**
 * Name of scenario `index` in sorted order, or null when out of range.
 * Owned by the config.
 *
 * # Safety
 * `config` must be a live handle or null.
 */
const char *esc_config_scenario_name(const struct EscConfig *config, size_t index);

/**
 * Replaces the seed of every scenario.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum EscStatus esc_config_set_seed(struct EscConfig *config, uint64_t seed);

/**
 * Replaces the measurement model of every filter-driven scenario.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum EscStatus esc_config_set_measurement_model(struct EscConfig *config,
                                                enum EscMeasurementModel model);

/**
 * Runs scenario `name`. On a numerical abort the partial record is still
 * returned through `out` together with `EscStatus::NumericalAbort`.
 *
 * # Safety
 * `config` must be a live handle, `name` a nul-terminated string and
 * `out` a valid pointer.
 */
enum EscStatus esc_run(const struct EscConfig *config, const char *name, struct EscRecord **out);

/**
 * # Safety
 * `record` must come from [`esc_run`], or be null.
 */
void esc_record_free(struct EscRecord *record);

/**
 * Number of rows in `record`, 0 if it is null.
 *
 * # Safety
 * `record` must be a live handle or null.
 */
size_t esc_record_len(const struct EscRecord *record);

/**
 * Header name of column `index`, or null when out of range.
 */
const char *esc_column_name(size_t index);

/**
 * Copies row `index` into `buf`, which must hold `ESC_COLUMNS` values.
 * Missing filter quantities are NaN.
 *
 * # Safety
 * `record` must be a live handle and `buf` valid for `len` writes.
 */
enum EscStatus esc_record_row(const struct EscRecord *record,
                              size_t index,
                              double *buf,
                              size_t len);

/**
 * Copies column `column` into `buf`, which must hold `esc_record_len`
 * values.
 *
 * # Safety
 * `record` must be a live handle and `buf` valid for `len` writes.
 */
enum EscStatus esc_record_column(const struct EscRecord *record,
                                 size_t column,
                                 double *buf,
                                 size_t len);

/**
 * Writes the record as a trajectory CSV.
 *
 * # Safety
 * `record` must be a live handle and `path` a nul-terminated string.
 */
enum EscStatus esc_record_write_csv(const struct EscRecord *record, const char *path);

/**
 * Run metrics as a JSON object. The string is written to `out` and must
 * be released with [`esc_string_free`].
 *
 * # Safety
 * `record` must be a live handle and `out` a valid pointer.
 */
enum EscStatus esc_record_metrics_json(const struct EscRecord *record, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void esc_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ESC_FFI_H */
