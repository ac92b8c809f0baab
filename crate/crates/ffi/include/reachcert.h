#ifndef REACHCERT_H
#define REACHCERT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdint.h>
#include <stddef.h>

/**
 * Problem mode: 0 keeps the system out of its target set, 1 drives it in.
 */
#define RC_MODE_AVOID 0

#define RC_MODE_REACH 1

/**
 * Status codes returned by every entry point.
 */
typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_ARGUMENT = 2,
  RC_STATUS_IO = 3,
  RC_STATUS_MALFORMED = 4,
  RC_STATUS_CONFIG = 5,
  RC_STATUS_SAMPLING_EXHAUSTED = 6,
  RC_STATUS_PANIC = 7,
} RcStatus;

/**
 * Opaque verification result.
 */
typedef struct RcCertificate RcCertificate;

/**
 * Opaque dynamical system.
 */
typedef struct RcSystem RcSystem;

/**
 * Opaque value function bound to a system.
 */
typedef struct RcValueFunction RcValueFunction;

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread. Empty if none.
 */
const char *rc_last_error(void);

/**
 * Per-iteration sample count for violation level `epsilon` and confidence
 * `1 - beta`.
 *
 * # Safety
 * `out_n` must be a valid pointer.
 */
enum RcStatus rc_required_samples(double epsilon, double beta, uint64_t *out_n);

/**
 * # Safety
 * `out_system` must be a valid pointer.
 */
enum RcStatus rc_system_dubins3d(double v,
                                 double u_min,
                                 double u_max,
                                 double radius,
                                 int32_t mode,
                                 struct RcSystem **out_system);

/**
 * Builds the system described by a run configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out_system` a valid pointer.
 */
enum RcStatus rc_system_from_config(const char *path, struct RcSystem **out_system);

/**
 * # Safety
 * `system` must come from this library; `out_dim` must be valid.
 */
enum RcStatus rc_system_state_dim(const struct RcSystem *system, uintptr_t *out_dim);

/**
 * # Safety
 * `system` must be null or come from this library, and not be used again.
 */
void rc_system_free(struct RcSystem *system);

/**
 * Loads a solved grid file.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum RcStatus rc_value_function_load_grid(const struct RcSystem *system,
                                          const char *path,
                                          struct RcValueFunction **out_vf);

/**
 * Loads a sinusoidal network weights file.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum RcStatus rc_value_function_load_weights(const struct RcSystem *system,
                                             const char *path,
                                             struct RcValueFunction **out_vf);

/**
 * Built-in closed-form value function by name (`target`,
 * `straight_line_separation`, `ballistic_landing`).
 *
 * # Safety
 * Pointers must be valid; `name` NUL-terminated.
 */
enum RcStatus rc_value_function_analytic(const struct RcSystem *system,
                                         const char *name,
                                         struct RcValueFunction **out_vf);

/**
 * A new value function equal to `base + bias`. `base` stays valid.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RcStatus rc_value_function_with_bias(const struct RcValueFunction *base,
                                          double bias,
                                          struct RcValueFunction **out_vf);

/**
 * Value at state `x` (length `len`) and time `t`.
 *
 * # Safety
 * `x` must point to `len` doubles; other pointers valid.
 */
enum RcStatus rc_value_function_value(const struct RcValueFunction *vf,
                                      const double *x,
                                      uintptr_t len,
                                      double t,
                                      double *out_value);

/**
 * # Safety
 * `vf` must be null or come from this library, and not be used again.
 */
void rc_value_function_free(struct RcValueFunction *vf);

/**
 * Runs iterative scenario verification with default iteration cap and
 * rollout step. `workers = 0` uses the global thread pool.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RcStatus rc_verify(const struct RcValueFunction *vf,
                        const struct RcSystem *system,
                        double epsilon,
                        double beta,
                        uint64_t seed,
                        uintptr_t workers,
                        struct RcCertificate **out_certificate);

/**
 * Certified level. May be infinite.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RcStatus rc_certificate_delta_hat(const struct RcCertificate *cert, double *out_delta);

/**
 * Writes 1 if a violation-free batch was reached, else 0.
 *
 * # Safety
 * Pointers must be valid.
 */
enum RcStatus rc_certificate_converged(const struct RcCertificate *cert, int32_t *out_flag);

/**
 * # Safety
 * Pointers must be valid.
 */
enum RcStatus rc_certificate_iterations(const struct RcCertificate *cert, uintptr_t *out_n);

/**
 * Writes 1 if `x` lies in the certified set, else 0.
 *
 * # Safety
 * `x` must point to `len` doubles; other pointers valid.
 */
enum RcStatus rc_certificate_contains(const struct RcCertificate *cert,
                                      const struct RcValueFunction *vf,
                                      const double *x,
                                      uintptr_t len,
                                      int32_t *out_flag);

/**
 * Writes the full result as JSON.
 *
 * # Safety
 * Pointers must be valid; `path` NUL-terminated.
 */
enum RcStatus rc_certificate_write_json(const struct RcCertificate *cert, const char *path);

/**
 * # Safety
 * `cert` must be null or come from this library, and not be used again.
 */
void rc_certificate_free(struct RcCertificate *cert);

#endif  /* REACHCERT_H */
