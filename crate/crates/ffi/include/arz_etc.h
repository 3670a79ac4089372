#ifndef ARZ_ETC_H
#define ARZ_ETC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum ArzStatus {
  ARZ_STATUS_OK = 0,
  ARZ_STATUS_NULL_POINTER = 1,
  ARZ_STATUS_INVALID_UTF8 = 2,
  ARZ_STATUS_CONFIG = 3,
  ARZ_STATUS_PARSE = 4,
  ARZ_STATUS_SOLVER = 5,
  ARZ_STATUS_COMPOSITION = 6,
  ARZ_STATUS_SIMULATION = 7,
  ARZ_STATUS_INVARIANT = 8,
  ARZ_STATUS_IO = 9,
  ARZ_STATUS_DOMAIN = 10,
  ARZ_STATUS_SHAPE = 11,
  ARZ_STATUS_INSUFFICIENT_DATA = 12,
  ARZ_STATUS_BUFFER_TOO_SMALL = 13,
  ARZ_STATUS_PANIC = 14,
} ArzStatus;

// Run configuration handle.
typedef struct ArzConfig ArzConfig;

// Completed run.
typedef struct ArzResult ArzResult;

// Solved kernels and derived constants for one configuration.
typedef struct ArzSetup ArzSetup;

// Trigger design constants of a setup.
typedef struct ArzConstants {
  double kappa1;
  double kappa2;
  double kappa3;
  double theta_m;
  double tau_d;
  double b;
  double b_star;
  double rho_star;
} ArzConstants;

// Headline numbers of a run.
typedef struct ArzSummary {
  // Number of control updates, the one at `t = 0` included.
  uint64_t n_t;
  // Mean time between updates [min].
  double mean_dwell_min;
  // Shortest time between updates [min].
  double min_dwell_min;
  double j_ttt;
  double j_fuel;
  double j_d;
  // Final over initial `‖w̄‖ + ‖v̄‖`.
  double norm_ratio;
  // Whether every closed-loop property check passed.
  bool invariants_ok;
  double wall_clock_s;
} ArzSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *arz_last_error(void);

// Library version as a static nul-terminated string.
const char *arz_version(void);

// Loads a preset by name or a TOML file by path.
//
// # Safety
// `spec` must be a nul-terminated string and `out` a valid pointer.
enum ArzStatus arz_config_load(const char *spec, struct ArzConfig **out);

// Releases a configuration; null is ignored.
//
// # Safety
// `cfg` must come from [`arz_config_load`] and not be used afterwards.
void arz_config_free(struct ArzConfig *cfg);

// Selects the controller: `open-loop`, `continuous` or a trigger kind such
// as `P-CETC`.
//
// # Safety
// `cfg` must be a live handle and `controller` a nul-terminated string.
enum ArzStatus arz_config_set_controller(struct ArzConfig *cfg, const char *controller);

// Sets the resource-aware parameter `c` of the barrier triggers.
//
// # Safety
// `cfg` must be a live handle.
enum ArzStatus arz_config_set_c(struct ArzConfig *cfg, double c);

// Sets the simulated horizon in hours.
//
// # Safety
// `cfg` must be a live handle.
enum ArzStatus arz_config_set_horizon(struct ArzConfig *cfg, double hours);

// Solves the kernels and derives the trigger constants for `cfg`.
//
// # Safety
// `cfg` must be a live handle and `out` a valid pointer.
enum ArzStatus arz_setup_new(const struct ArzConfig *cfg, struct ArzSetup **out);

// Releases a setup; null is ignored.
//
// # Safety
// `setup` must come from [`arz_setup_new`] and not be used afterwards.
void arz_setup_free(struct ArzSetup *setup);

// Copies the derived trigger constants into `out`.
//
// # Safety
// `setup` must be a live handle and `out` a valid pointer.
enum ArzStatus arz_setup_constants(const struct ArzSetup *setup, struct ArzConstants *out);

// Runs one closed loop. The setup must have been built from a
// configuration with the same model, grid and design parameters.
//
// # Safety
// `cfg` and `setup` must be live handles and `out` a valid pointer.
enum ArzStatus arz_run(const struct ArzConfig *cfg,
                       const struct ArzSetup *setup,
                       struct ArzResult **out);

// Releases a result; null is ignored.
//
// # Safety
// `result` must come from [`arz_run`] and not be used afterwards.
void arz_result_free(struct ArzResult *result);

// Copies the headline numbers of a run into `out`.
//
// # Safety
// `result` must be a live handle and `out` a valid pointer.
enum ArzStatus arz_result_summary(const struct ArzResult *result, struct ArzSummary *out);

// Copies the update times [h] into `buf`. `len` is the capacity of `buf`;
// the number of events is always stored in `written`. A null `buf` with
// zero `len` queries the count alone.
//
// # Safety
// `result` must be a live handle, `written` a valid pointer and `buf`
// valid for `len` writes.
enum ArzStatus arz_result_event_times(const struct ArzResult *result,
                                      double *buf,
                                      size_t len,
                                      size_t *written);

// Writes trace, events, summary and report files into `dir`.
//
// # Safety
// `result` must be a live handle and `dir` a nul-terminated string.
enum ArzStatus arz_result_write(const struct ArzResult *result, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ARZ_ETC_H */
