#ifndef CHARGED_POLYMER_H
#define CHARGED_POLYMER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpStatus {
  CP_STATUS_OK = 0,
  CP_STATUS_NULL_POINTER = 1,
  CP_STATUS_INVALID_UTF8 = 2,
  CP_STATUS_INVALID_ARGUMENT = 3,
  CP_STATUS_OUT_OF_RANGE = 4,
  CP_STATUS_ENVIRONMENT_TOO_SHORT = 5,
  CP_STATUS_TABLE_TOO_SHALLOW = 6,
  CP_STATUS_CONFIG = 7,
  CP_STATUS_IO = 8,
  CP_STATUS_PANIC = 9,
  CP_STATUS_INTERNAL = 10,
} CpStatus;

typedef enum CpSigma2Variant {
  /**
   * d = 2 annealed constant.
   */
  CP_SIGMA2_VARIANT_ANNEALED_D2 = 0,
  /**
   * d >= 3, conditional on the walk.
   */
  CP_SIGMA2_VARIANT_FCLT_GIVEN_S = 1,
  /**
   * d >= 3, quenched and recentred.
   */
  CP_SIGMA2_VARIANT_QUENCHED_RECENTRED = 2,
} CpSigma2Variant;

typedef struct CpEnergyState CpEnergyState;

typedef struct CpEnvironment CpEnvironment;

typedef struct CpOracleTable CpOracleTable;

typedef struct CpStepLaw CpStepLaw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from this thread.
 */
const char *cp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cp_version(void);

/**
 * Step law from `kind` (`"srw"` or `"lazy_srw"`), dimension and holding
 * probability (ignored for `srw`).
 *
 * # Safety
 * `kind` must be a NUL-terminated string; `out` must be writable.
 */
enum CpStatus cp_step_law_new(const char *kind,
                              size_t dim,
                              double lazy_weight,
                              struct CpStepLaw **out);

/**
 * # Safety
 * `law` must come from [`cp_step_law_new`] or be null.
 */
void cp_step_law_free(struct CpStepLaw *law);

/**
 * `len` i.i.d. charges from `law` (`"rademacher"`, `"gaussian"` or
 * `"student_like:<gamma>"`), reproducible from `seed`.
 *
 * # Safety
 * `law` must be a NUL-terminated string; `out` must be writable.
 */
enum CpStatus cp_environment_new(const char *law,
                                 uint64_t seed,
                                 size_t len,
                                 struct CpEnvironment **out);

/**
 * Number of charges; 0 for a null handle.
 *
 * # Safety
 * `env` must be a live handle or null.
 */
size_t cp_environment_len(const struct CpEnvironment *env);

/**
 * Copy the first `min(len, cp_environment_len(env))` charges into `buf`.
 *
 * # Safety
 * `env` must be a live handle; `buf` must hold `len` doubles.
 */
enum CpStatus cp_environment_values(const struct CpEnvironment *env, double *buf, size_t len);

/**
 * # Safety
 * `env` must come from [`cp_environment_new`] or be null.
 */
void cp_environment_free(struct CpEnvironment *env);

/**
 * Energy tracker for a `dim`-dimensional walk over `env`. The state keeps
 * its own reference to the charges; `env` may be freed afterwards.
 *
 * # Safety
 * `env` must be a live handle; `out` must be writable.
 */
enum CpStatus cp_energy_state_new(const struct CpEnvironment *env,
                                  size_t dim,
                                  struct CpEnergyState **out);

/**
 * Move by `step` (length `dim`) and write the energy increment to `delta`
 * (may be null).
 *
 * # Safety
 * `state` must be a live handle; `step` must hold `dim` integers.
 */
enum CpStatus cp_energy_state_apply_step(struct CpEnergyState *state,
                                         const int64_t *step,
                                         size_t dim,
                                         double *delta);

/**
 * Take `steps` steps from `law`, drawn from stream 0 of `seed`.
 *
 * # Safety
 * `state` and `law` must be live handles.
 */
enum CpStatus cp_energy_state_run(struct CpEnergyState *state,
                                  const struct CpStepLaw *law,
                                  uint64_t seed,
                                  uint64_t steps);

/**
 * Current energy `K_n`; NaN for a null handle.
 *
 * # Safety
 * `state` must be a live handle or null.
 */
double cp_energy_state_energy(const struct CpEnergyState *state);

/**
 * Steps taken so far; 0 for a null handle.
 *
 * # Safety
 * `state` must be a live handle or null.
 */
uint64_t cp_energy_state_steps(const struct CpEnergyState *state);

/**
 * # Safety
 * `state` must come from [`cp_energy_state_new`] or be null.
 */
void cp_energy_state_free(struct CpEnergyState *state);

/**
 * Return probabilities `P(S_m = 0)` for `m <= max_m`.
 *
 * # Safety
 * `law` must be a live handle; `out` must be writable.
 */
enum CpStatus cp_oracle_new(const struct CpStepLaw *law, size_t max_m, struct CpOracleTable **out);

/**
 * `P(S_m = 0)`; `m = 0` gives 1.
 *
 * # Safety
 * `table` must be a live handle; `out` must be writable.
 */
enum CpStatus cp_oracle_return_probability(const struct CpOracleTable *table,
                                           size_t m,
                                           double *out);

/**
 * Limiting variance constant of the requested kind.
 *
 * # Safety
 * `table` must be a live handle; `out` must be writable.
 */
enum CpStatus cp_oracle_sigma2(const struct CpOracleTable *table,
                               enum CpSigma2Variant variant,
                               double *out);

/**
 * # Safety
 * `table` must come from [`cp_oracle_new`] or be null.
 */
void cp_oracle_free(struct CpOracleTable *table);

/**
 * Run the TOML config at `config_path`, writing results into `out_dir`.
 * `passed` receives whether every gated check passed; a failed gate is
 * not an error.
 *
 * # Safety
 * Both paths must be NUL-terminated strings; `passed` must be writable.
 */
enum CpStatus cp_run_config(const char *config_path,
                            const char *out_dir,
                            size_t workers,
                            bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHARGED_POLYMER_H */
