#ifndef LYOCERT_H
#define LYOCERT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>

// Class declared for a scalar comparison function.
typedef enum LyoClass {
  LYO_CLASS_K = 0,
  LYO_CLASS_KINF = 1,
  LYO_CLASS_L = 2,
  LYO_CLASS_POSITIVE_DEFINITE = 3,
  LYO_CLASS_NONE = 4,
} LyoClass;

// Error codes of the C API.
typedef enum LyoStatus {
  LYO_OK = 0,
  LYO_NULL_POINTER = 1,
  LYO_INVALID_ARGUMENT = 2,
  LYO_PARSE_ERROR = 3,
  LYO_CLASS_VIOLATION = 4,
  LYO_PRECONDITION = 5,
  LYO_FINITE_ESCAPE = 6,
  LYO_NUMERICAL = 7,
  LYO_CONFIG = 8,
  LYO_PANIC = 9,
} LyoStatus;

// Verdict of a certificate; the values match the CLI exit codes.
typedef enum LyoVerdict {
  LYO_SUPPORTED = 0,
  LYO_REFUTED = 1,
  LYO_INCONCLUSIVE = 3,
} LyoVerdict;

// A certificate with status, margin, witness and parameters (opaque).
typedef struct LyoEvidence LyoEvidence;

// A Lyapunov function candidate (opaque).
typedef struct LyoLyapunov LyoLyapunov;

// A scalar comparison function (opaque).
typedef struct LyoScalar LyoScalar;

// A system Σ (opaque).
typedef struct LyoSystem LyoSystem;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next call into the library from the same thread.
const char *lyo_last_error(void);

// Library version as a static NUL-terminated string.
const char *lyo_version(void);

// # Safety
// `s` must come from this library and not have been freed.
void lyo_string_free(char *s);

// Build a system from its JSON config.
//
// # Safety
// `json` is a NUL-terminated string; `out` is writable.
enum LyoStatus lyo_system_from_json(const char *json, struct LyoSystem **out);

// Built-in system by name (e.g. "scalar_stable").
//
// # Safety
// `name` is a NUL-terminated string; `out` is writable.
enum LyoStatus lyo_system_catalogue(const char *name, struct LyoSystem **out);

// # Safety
// `sys` comes from this library (or is NULL) and is not used afterwards.
void lyo_system_free(struct LyoSystem *sys);

// State and disturbance dimensions.
//
// # Safety
// Pointers are valid; `state_dim` and `disturbance_dim` may be NULL.
enum LyoStatus lyo_system_dimensions(const struct LyoSystem *sys,
                                     size_t *state_dim,
                                     size_t *disturbance_dim);

// φ(t, x, d) for the constant disturbance `d` (ignored for systems without
// disturbance input). `out` receives `n` values.
//
// # Safety
// `x` and `out` point to `n` doubles, `d` to `m` doubles (or NULL with m = 0).
enum LyoStatus lyo_system_flow(const struct LyoSystem *sys,
                               double t,
                               const double *x,
                               size_t n,
                               const double *d,
                               size_t m,
                               double *out);

// Scalar function from an expression in `r` with a declared class.
//
// # Safety
// `expr` is a NUL-terminated string; `out` is writable.
enum LyoStatus lyo_scalar_parse(const char *expr, enum LyoClass class_, struct LyoScalar **out);

// # Safety
// `f` is a valid handle; `out` is writable.
enum LyoStatus lyo_scalar_eval(const struct LyoScalar *f, double r, double *out);

// # Safety
// `f` comes from this library (or is NULL) and is not used afterwards.
void lyo_scalar_free(struct LyoScalar *f);

// ∫_{t0}^∞ α(‖φ(s, x, d)‖) ds for a constant disturbance. `value` receives the
// integral up to the horizon and `tail` the bound on the remainder (may be
// infinite).
//
// # Safety
// Handles are valid; `x` has `n` doubles and `d` has `m`; outputs are writable.
enum LyoStatus lyo_integral_transform(const struct LyoSystem *sys,
                                      const struct LyoScalar *alpha,
                                      const double *x,
                                      size_t n,
                                      const double *d,
                                      size_t m,
                                      double t0,
                                      double *value,
                                      double *tail);

// Certify a property by name ("UGAS", "iUGS", ...). `plan_json` may be NULL
// for the default plan; it has the shape of the `certify --plan` file.
//
// # Safety
// `sys` is valid, strings are NUL-terminated, `out` is writable.
enum LyoStatus lyo_certify(const struct LyoSystem *sys,
                           const char *property,
                           const char *plan_json,
                           struct LyoEvidence **out);

// # Safety
// `ev` is valid; `out` is writable.
enum LyoStatus lyo_evidence_verdict(const struct LyoEvidence *ev, enum LyoVerdict *out);

// Worst margin; `has_margin` is set to false when the check has none.
//
// # Safety
// `ev` is valid; outputs are writable.
enum LyoStatus lyo_evidence_margin(const struct LyoEvidence *ev, double *margin, bool *has_margin);

// Full certificate as JSON; free with [`lyo_string_free`].
//
// # Safety
// `ev` is valid; `out` is writable.
enum LyoStatus lyo_evidence_to_json(const struct LyoEvidence *ev, char **out);

// # Safety
// `ev` comes from this library (or is NULL) and is not used afterwards.
void lyo_evidence_free(struct LyoEvidence *ev);

// V̂(x) = max over the default ensemble of ∫₀^∞ ρ(‖φ(s, x, d)‖) ds. `rho` may
// be NULL for min(r, 1); it must be bounded and of class K.
//
// # Safety
// `sys` is valid, `rho` is valid or NULL, `out` is writable.
enum LyoStatus lyo_nclf_construct(const struct LyoSystem *sys,
                                  const struct LyoScalar *rho,
                                  struct LyoLyapunov **out);

// Closed-form V from an expression in `x1, …, xn`.
//
// # Safety
// `expr` is a NUL-terminated string; `out` is writable.
enum LyoStatus lyo_lyapunov_parse(const char *expr, size_t dimension, struct LyoLyapunov **out);

// V(x). Safe to call from several threads on the same handle.
//
// # Safety
// `v` is valid, `x` has `n` doubles, `out` is writable.
enum LyoStatus lyo_lyapunov_eval(const struct LyoLyapunov *v,
                                 const double *x,
                                 size_t n,
                                 double *out);

// # Safety
// `v` comes from this library (or is NULL) and is not used afterwards.
void lyo_lyapunov_free(struct LyoLyapunov *v);

// Closure of a comma separated list of properties under the implication
// rules, as a JSON array of names; free with [`lyo_string_free`].
//
// # Safety
// `assumptions` is a NUL-terminated string; `out` is writable.
enum LyoStatus lyo_infer_closure(const char *assumptions, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LYOCERT_H */
