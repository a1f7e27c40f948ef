/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef NCSIM_H
#define NCSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum NcsStatus {
  NCS_STATUS_OK = 0,
  NCS_STATUS_NULL_POINTER = 1,
  NCS_STATUS_INVALID_ARGUMENT = 2,
  NCS_STATUS_CONFIG = 3,
  NCS_STATUS_NUMERIC = 4,
  NCS_STATUS_DOMAIN = 5,
  NCS_STATUS_IO = 6,
  NCS_STATUS_NOT_FOUND = 7,
  NCS_STATUS_BUFFER_TOO_SMALL = 8,
  NCS_STATUS_INTERNAL = 9,
  NCS_STATUS_PANIC = 10,
} NcsStatus;

// Plant presets.
typedef enum NcsClass {
  NCS_CLASS_EASY = 0,
  NCS_CLASS_MID = 1,
  NCS_CLASS_HARD = 2,
  NCS_CLASS_PENDULUM = 3,
} NcsClass;

// A parsed, validated experiment description.
typedef struct NcsExperiment NcsExperiment;

// Finished replications of an experiment.
typedef struct NcsResults NcsResults;

// A plant with its synthesized controller.
typedef struct NcsSystem NcsSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *ncs_last_error(void);

// Library version as a static NUL-terminated string.
const char *ncs_version(void);

// Builds a preset plant and synthesizes its LQR gain.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum NcsStatus ncs_system_preset(enum NcsClass class_, struct NcsSystem **out);

// Scalar plant `x' = a x + u + w` with unit weights and noise.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum NcsStatus ncs_system_scalar(double a, struct NcsSystem **out);

// Releases a system handle. NULL is ignored.
//
// # Safety
// `sys` must come from an `ncs_system_*` constructor and not be used after.
void ncs_system_free(struct NcsSystem *sys);

// State dimension of `sys`.
//
// # Safety
// `sys` must be a live handle and `out` a valid pointer.
enum NcsStatus ncs_system_state_dim(const struct NcsSystem *sys, size_t *out);

// Copies the feedback gain in row-major order into `buf`. `len` is the
// buffer length in elements; `required` receives the element count.
//
// # Safety
// `sys` must be a live handle; `buf` must hold `len` doubles or be NULL;
// `required` may be NULL.
enum NcsStatus ncs_system_gain(const struct NcsSystem *sys,
                               double *buf,
                               size_t len,
                               size_t *required);

// Expected squared estimation error at age `age`.
//
// # Safety
// `sys` must be a live handle and `out` a valid pointer.
enum NcsStatus ncs_mse_of_age(const struct NcsSystem *sys, uint64_t age, double *out);

// MSE at `age` divided by the MSE at age one.
//
// # Safety
// `sys` must be a live handle and `out` a valid pointer.
enum NcsStatus ncs_nmse_of_age(const struct NcsSystem *sys, uint64_t age, double *out);

// Closed-form slotted-ALOHA mean AoI.
//
// # Safety
// `out` must be a valid pointer.
enum NcsStatus ncs_sa_mean_aoi(size_t n, double p, double *out);

// Round-robin mean AoI, `(n + 1) / 2`.
//
// # Safety
// `out` must be a valid pointer.
enum NcsStatus ncs_rr_mean_aoi(size_t n, double *out);

// ADRA mean AoI at threshold `threshold` and access probability `p`.
//
// # Safety
// `out` must be a valid pointer.
enum NcsStatus ncs_adra_mean_aoi(size_t n, uint32_t threshold, double p, double *out);

// Age-optimal ADRA parameters for `n` nodes. Any out pointer may be NULL.
//
// # Safety
// Non-null out pointers must be valid.
enum NcsStatus ncs_optimize_adra(size_t n, uint32_t *threshold, double *p, double *mean_aoi);

// Parses a TOML experiment document. The document must name its scenario.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` a valid pointer.
enum NcsStatus ncs_experiment_parse(const char *toml, struct NcsExperiment **out);

// Overrides the base seed and replication count; zero replications keeps
// the parsed value.
//
// # Safety
// `exp` must be a live handle.
enum NcsStatus ncs_experiment_set_seed(struct NcsExperiment *exp,
                                       uint64_t seed,
                                       size_t replications);

// Releases an experiment handle. NULL is ignored.
//
// # Safety
// `exp` must come from [`ncs_experiment_parse`] and not be used after.
void ncs_experiment_free(struct NcsExperiment *exp);

// Runs every protocol and network size of `exp`. `jobs` of zero uses all
// cores.
//
// # Safety
// `exp` must be a live handle; `out` a valid pointer.
enum NcsStatus ncs_experiment_run(const struct NcsExperiment *exp,
                                  size_t jobs,
                                  struct NcsResults **out);

// Number of (protocol, N) result sets.
//
// # Safety
// `res` must be a live handle; `out` a valid pointer.
enum NcsStatus ncs_results_len(const struct NcsResults *res, size_t *out);

// Protocol label and network size of result set `index`. `label` receives
// a NUL-terminated string; `required` the bytes needed.
//
// # Safety
// `res` must be a live handle; `label` must hold `len` bytes or be NULL;
// `n` and `required` may be NULL.
enum NcsStatus ncs_results_describe(const struct NcsResults *res,
                                    size_t index,
                                    char *label,
                                    size_t len,
                                    size_t *required,
                                    size_t *n);

// Replication mean and 99% half-width of a summary metric such as
// `mean_aoi`, `lqg_cost`, `mean_nmse` or `fraction_hard`. The half-width
// is NaN with a single replication.
//
// # Safety
// `res` must be a live handle, `metric` a NUL-terminated string, and the
// out pointers valid or NULL.
enum NcsStatus ncs_results_metric(const struct NcsResults *res,
                                  size_t index,
                                  const char *metric,
                                  double *mean,
                                  double *half_width);

// Writes the CSV result files into directory `dir`, creating it if needed.
//
// # Safety
// `res` must be a live handle and `dir` a NUL-terminated path.
enum NcsStatus ncs_results_write_csv(const struct NcsResults *res, const char *dir);

// Releases a results handle. NULL is ignored.
//
// # Safety
// `res` must come from [`ncs_experiment_run`] and not be used after.
void ncs_results_free(struct NcsResults *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NCSIM_H */
