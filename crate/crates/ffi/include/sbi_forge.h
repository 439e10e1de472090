#ifndef SBI_FORGE_H
#define SBI_FORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of fixed reference observations per task.
#define SBI_NUM_REFERENCE_OBSERVATIONS 10

typedef enum SbiStatus {
  SBI_STATUS_OK = 0,
  SBI_STATUS_NULL_POINTER = 1,
  SBI_STATUS_INVALID_ARGUMENT = 2,
  SBI_STATUS_UNKNOWN_TASK = 3,
  SBI_STATUS_IO = 4,
  // Malformed container, manifest, JSON or CSV.
  SBI_STATUS_FORMAT = 5,
  // Simulator fault, empty posterior or diverged training.
  SBI_STATUS_NUMERICAL = 6,
  // A panic was caught at the boundary.
  SBI_STATUS_INTERNAL = 7,
} SbiStatus;

// A trained conditional flow loaded from a checkpoint.
typedef struct SbiFlow SbiFlow;

// A task from the suite.
typedef struct SbiTask SbiTask;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a
// successful one. Valid until the next call on the same thread.
const char *sbi_last_error_message(void);

// Looks up a task by name, e.g. `"ar1_ts_t50"` or
// `"gaussian_linear_distractors"`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable pointer.
enum SbiStatus sbi_task_new(const char *name, struct SbiTask **out);

// # Safety
// `task` must come from [`sbi_task_new`] and not be used afterwards. Null is
// ignored.
void sbi_task_free(struct SbiTask *task);

// # Safety
// `task` must be a live handle; `theta_dim` and `x_dim` writable.
enum SbiStatus sbi_task_dims(const struct SbiTask *task, size_t *theta_dim, size_t *x_dim);

// Draws `n` prior samples into `out` (`n * theta_dim`).
//
// # Safety
// `task` must be a live handle and `out` hold `n * theta_dim` doubles.
enum SbiStatus sbi_sample_prior(const struct SbiTask *task, size_t n, uint64_t seed, double *out);

// Simulates one observation per row of `theta` (`n * theta_dim`) into `out`
// (`n * x_dim`).
//
// # Safety
// `task` must be a live handle and the buffers sized as described.
enum SbiStatus sbi_simulate(const struct SbiTask *task,
                            const double *theta,
                            size_t n,
                            uint64_t seed,
                            double *out);

// Writes reference observation `k` (below [`SBI_NUM_REFERENCE_OBSERVATIONS`])
// into `theta_out` (`theta_dim`) and `x_out` (`x_dim`).
//
// # Safety
// `task` must be a live handle and the buffers sized as described.
enum SbiStatus sbi_reference_observations(const struct SbiTask *task,
                                          size_t k,
                                          double *theta_out,
                                          double *x_out);

// Loads a flow checkpoint (`flow.sbe` or `flow_<i>.sbe` written by the CLI).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a writable pointer.
enum SbiStatus sbi_flow_load(const char *path, struct SbiFlow **out);

// # Safety
// `flow` must come from [`sbi_flow_load`] and not be used afterwards. Null
// is ignored.
void sbi_flow_free(struct SbiFlow *flow);

// # Safety
// `flow` must be a live handle; `theta_dim` and `context_dim` writable.
enum SbiStatus sbi_flow_dims(const struct SbiFlow *flow, size_t *theta_dim, size_t *context_dim);

// Log density of `n` parameter rows (`n * theta_dim`) under one context
// (`context_dim`), written to `out` (`n`).
//
// # Safety
// `flow` must be a live handle and the buffers sized as described.
enum SbiStatus sbi_flow_log_prob(const struct SbiFlow *flow,
                                 const double *theta,
                                 size_t n,
                                 const double *context,
                                 double *out);

// Draws `n` samples given one context (`context_dim`) into `out`
// (`n * theta_dim`).
//
// # Safety
// `flow` must be a live handle and the buffers sized as described.
enum SbiStatus sbi_flow_sample(const struct SbiFlow *flow,
                               const double *context,
                               size_t n,
                               uint64_t seed,
                               double *out);

// Classifier two-sample test accuracy between `p` (`n_p * dim`) and `q`
// (`n_q * dim`) with the default classifier settings.
//
// # Safety
// The input buffers must be sized as described and `accuracy` writable.
enum SbiStatus sbi_c2st(const double *p,
                        size_t n_p,
                        const double *q,
                        size_t n_q,
                        size_t dim,
                        uint64_t seed,
                        double *accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SBI_FORGE_H */
