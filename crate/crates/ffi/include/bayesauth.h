#ifndef BAYESAUTH_H
#define BAYESAUTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>

/**
 * Decision rules available through the C interface.
 */
typedef enum BayesauthRule {
  BAYESAUTH_RULE_WORLD = 0,
  BAYESAUTH_RULE_BIAS_ALL_BUT_LAST = 1,
  BAYESAUTH_RULE_FULL_BIAS = 2,
  /**
   * Uses the `weight` argument, in (0, 1].
   */
  BAYESAUTH_RULE_PARTIAL_BIAS = 3,
  BAYESAUTH_RULE_FIRST_HALF_BIAS = 4,
} BayesauthRule;

typedef enum BayesauthStatus {
  BAYESAUTH_STATUS_OK = 0,
  BAYESAUTH_STATUS_NULL_POINTER = 1,
  BAYESAUTH_STATUS_INVALID_ARGUMENT = 2,
  BAYESAUTH_STATUS_DIMENSION_MISMATCH = 3,
  /**
   * Impossible observation, non-convergence or a special-function domain error.
   */
  BAYESAUTH_STATUS_NUMERIC = 4,
  BAYESAUTH_STATUS_INSUFFICIENT_DATA = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  BAYESAUTH_STATUS_INTERNAL = 6,
} BayesauthStatus;

/**
 * Opaque Dirichlet belief.
 */
typedef struct BayesauthBelief BayesauthBelief;

typedef struct BayesauthVerdict {
  double p_user;
  double log_odds;
  bool decided_user;
} BayesauthVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bayesauth_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated and
 * NUL-terminated when `len > 0`). Returns the full message length without
 * the terminator; 0 when there is no message.
 *
 * # Safety
 * `buf` must be valid for `len` bytes or null.
 */
size_t bayesauth_last_error_message(char *buf, size_t len);

/**
 * Creates a belief from `len` positive parameters.
 *
 * # Safety
 * `phi` must point to `len` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_belief_new(const double *phi,
                                          size_t len,
                                          struct BayesauthBelief **out);

/**
 * Releases a belief; null is ignored.
 *
 * # Safety
 * `belief` must come from this library and not be used afterwards.
 */
void bayesauth_belief_free(struct BayesauthBelief *belief);

/**
 * Number of parameters; 0 for null.
 *
 * # Safety
 * `belief` must be a live handle or null.
 */
size_t bayesauth_belief_degree(const struct BayesauthBelief *belief);

/**
 * Copies the parameters into `out`, which must hold exactly the degree.
 *
 * # Safety
 * `out` must be writable for `len` doubles.
 */
enum BayesauthStatus bayesauth_belief_phi(const struct BayesauthBelief *belief,
                                          double *out,
                                          size_t len);

/**
 * Conjugate update on a count vector; writes a new handle.
 *
 * # Safety
 * `counts` must point to `len` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_belief_update(const struct BayesauthBelief *belief,
                                             const double *counts,
                                             size_t len,
                                             struct BayesauthBelief **out);

/**
 * Log marginal likelihood of a count vector (multinomial coefficient excluded).
 *
 * # Safety
 * `counts` must point to `len` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_belief_log_marginal(const struct BayesauthBelief *belief,
                                                   const double *counts,
                                                   size_t len,
                                                   double *out);

/**
 * Gap between the marginal of `counts` under the belief conditioned on
 * `counts` and under the belief itself, in log space.
 *
 * # Safety
 * `counts` must point to `len` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_lemma_gap(const struct BayesauthBelief *belief,
                                         const double *counts,
                                         size_t len,
                                         double *out);

/**
 * Fits a population prior from `users × degree` counts in row-major order.
 * `iterations` and `converged` may be null.
 *
 * # Safety
 * `counts` must point to `users * degree` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_fit_dirichlet(const double *counts,
                                             size_t users,
                                             size_t degree,
                                             double tolerance,
                                             size_t max_iterations,
                                             struct BayesauthBelief **out,
                                             size_t *iterations,
                                             bool *converged);

/**
 * Scores a symbol sequence against a user belief with a biased adversary
 * prior. `weight` is read only for the partial rule.
 *
 * # Safety
 * `sequence` must point to `len` indices; `out` must be writable.
 */
enum BayesauthStatus bayesauth_decide_sequence(const struct BayesauthBelief *user,
                                               const struct BayesauthBelief *adversary_prior,
                                               enum BayesauthRule rule,
                                               double weight,
                                               double p_user,
                                               const size_t *sequence,
                                               size_t len,
                                               struct BayesauthVerdict *out);

/**
 * Scores a single count-vector record. Sequence-subset rules condition on
 * nothing here and match the world rule.
 *
 * # Safety
 * `counts` must point to `len` doubles; `out` must be writable.
 */
enum BayesauthStatus bayesauth_decide_record(const struct BayesauthBelief *user,
                                             const struct BayesauthBelief *adversary_prior,
                                             enum BayesauthRule rule,
                                             double weight,
                                             double p_user,
                                             const double *counts,
                                             size_t len,
                                             struct BayesauthVerdict *out);

/**
 * Bayes decision with known multinomial user and adversary models.
 *
 * # Safety
 * `user_probs`, `adversary_probs` and `counts` must each point to `degree` doubles.
 */
enum BayesauthStatus bayesauth_oracle_decide(const double *user_probs,
                                             const double *adversary_probs,
                                             size_t degree,
                                             double p_user,
                                             const double *counts,
                                             struct BayesauthVerdict *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BAYESAUTH_H */
