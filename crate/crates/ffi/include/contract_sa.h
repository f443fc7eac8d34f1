#ifndef CONTRACT_SA_H
#define CONTRACT_SA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CsaStatus {
  CSA_STATUS_OK = 0,
  CSA_STATUS_NULL_POINTER = 1,
  CSA_STATUS_INVALID_ARGUMENT = 2,
  CSA_STATUS_DIMENSION_MISMATCH = 3,
  CSA_STATUS_NOT_CONVERGED = 4,
  // A bound's stepsize or feasibility condition does not hold.
  CSA_STATUS_PRECONDITION_VIOLATED = 5,
  CSA_STATUS_NUMERICAL = 6,
  CSA_STATUS_IO = 7,
  CSA_STATUS_PARSE = 8,
  CSA_STATUS_PANIC = 9,
} CsaStatus;

typedef struct CsaEnvelope CsaEnvelope;

typedef struct CsaMdp CsaMdp;

typedef struct CsaNorm CsaNorm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the calling thread's last error message into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length plus one,
// or 0 when the last call succeeded. `buf` may be NULL to query the size.
//
// # Safety
// `buf` must be NULL or point to `len` writable bytes.
size_t csa_last_error_message(char *buf, size_t len);

// # Safety
// `out` must be a valid pointer to a handle slot.
enum CsaStatus csa_norm_linf(struct CsaNorm **out);

// `p >= 2`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum CsaStatus csa_norm_lp(double p, struct CsaNorm **out);

// `sqrt(sum_i w_i x_i^2)` with positive weights.
//
// # Safety
// `weights` must point to `len` readable doubles; `out` to a handle slot.
enum CsaStatus csa_norm_weighted_l2(const double *weights, size_t len, struct CsaNorm **out);

// # Safety
// `x` must point to `len` readable doubles; `norm` must be a live handle.
enum CsaStatus csa_norm_eval(const struct CsaNorm *norm, const double *x, size_t len, double *out);

// # Safety
// `norm` must be NULL or a handle from `csa_norm_*` not yet freed.
void csa_norm_free(struct CsaNorm *norm);

// Envelope of `1/2 ||.||_c^2` smoothed by `1/2 ||.||_s^2 / mu`. The norms are
// copied; the caller keeps ownership of both handles.
//
// # Safety
// `c` and `s` must be live norm handles; `out` a handle slot.
enum CsaStatus csa_envelope_new(const struct CsaNorm *c,
                                const struct CsaNorm *s,
                                double mu,
                                struct CsaEnvelope **out);

// Envelope value and its duality-gap certificate at `x`. `tol <= 0` selects
// the default tolerance. `residual` may be NULL.
//
// # Safety
// `x` must point to `len` readable doubles; `value` must be writable.
enum CsaStatus csa_envelope_evaluate(const struct CsaEnvelope *env,
                                     const double *x,
                                     size_t len,
                                     double tol,
                                     double *value,
                                     double *residual);

// # Safety
// `x` must point to `len` readable doubles and `grad` to `len` writable ones.
enum CsaStatus csa_envelope_gradient(const struct CsaEnvelope *env,
                                     const double *x,
                                     size_t len,
                                     double tol,
                                     double *grad);

// # Safety
// `env` must be NULL or a handle from `csa_envelope_new` not yet freed.
void csa_envelope_free(struct CsaEnvelope *env);

// Seeded random MDP with rewards in `[0, 1]`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum CsaStatus csa_mdp_random(size_t n_states,
                              size_t n_actions,
                              double beta,
                              uint64_t seed,
                              struct CsaMdp **out);

// Loads an MDP TOML file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` a handle slot.
enum CsaStatus csa_mdp_load(const char *path, struct CsaMdp **out);

// Number of states, or 0 for NULL.
//
// # Safety
// `mdp` must be NULL or a live handle.
size_t csa_mdp_n_states(const struct CsaMdp *mdp);

// Number of actions, or 0 for NULL.
//
// # Safety
// `mdp` must be NULL or a live handle.
size_t csa_mdp_n_actions(const struct CsaMdp *mdp);

// Optimal Q-function, state-major (`q[s * n_actions + a]`); `len` must be
// `n_states * n_actions`.
//
// # Safety
// `q` must point to `len` writable doubles.
enum CsaStatus csa_mdp_q_star(const struct CsaMdp *mdp, double *q, size_t len);

// Value of the policy with row-major `[state][action]` probabilities.
//
// # Safety
// `probs` must point to `probs_len` readable doubles and `v` to `v_len`
// writable ones.
enum CsaStatus csa_mdp_policy_value(const struct CsaMdp *mdp,
                                    const double *probs,
                                    size_t probs_len,
                                    double *v,
                                    size_t v_len);

// # Safety
// `mdp` must be NULL or a handle from `csa_mdp_*` not yet freed.
void csa_mdp_free(struct CsaMdp *mdp);

// TD(n) mean-square bound at iteration `k` for constant stepsize `eps`.
//
// # Safety
// `out` must be writable.
enum CsaStatus csa_bound_tdn(double beta,
                             size_t n,
                             double eps,
                             double initial_error_sq,
                             double fixed_point_norm,
                             size_t k,
                             double *out);

// Q-learning bound at iteration `k` for constant stepsize `eps`.
//
// # Safety
// `out` must be writable.
enum CsaStatus csa_bound_qlearning_constant(double beta,
                                            size_t n_pairs,
                                            double eps,
                                            double initial_error_sq,
                                            double fixed_point_norm,
                                            size_t k,
                                            double *out);

// Q-learning bound at iteration `k` under the prescribed diminishing
// schedule.
//
// # Safety
// `out` must be writable.
enum CsaStatus csa_bound_qlearning_diminishing(double beta,
                                               size_t n_pairs,
                                               double initial_error_sq,
                                               double fixed_point_norm,
                                               size_t k,
                                               double *out);

// Runs an experiment given as TOML text and writes its CSV, SVG and summary
// files into `out_dir`. Relative MDP paths resolve against `base_dir`, which
// may be NULL for the current directory.
//
// # Safety
// `spec_toml` and `out_dir` must be NUL-terminated; `base_dir` NULL or
// NUL-terminated.
enum CsaStatus csa_run_spec(const char *spec_toml, const char *base_dir, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTRACT_SA_H */
