#ifndef MIGLMM_H
#define MIGLMM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MiglmmStatus {
  MIGLMM_STATUS_OK = 0,
  MIGLMM_STATUS_INVALID_ARGUMENT = 1,
  MIGLMM_STATUS_NULL_POINTER = 2,
  MIGLMM_STATUS_DOMAIN = 3,
  MIGLMM_STATUS_UNSUPPORTED = 4,
  MIGLMM_STATUS_CONVERGENCE = 5,
  MIGLMM_STATUS_NUMERIC = 6,
  MIGLMM_STATUS_CONFIG = 7,
  MIGLMM_STATUS_DATA = 8,
  MIGLMM_STATUS_IO = 9,
  MIGLMM_STATUS_PANIC = 10,
} MiglmmStatus;

typedef enum MiglmmLink {
  MIGLMM_LINK_IDENTITY = 0,
  MIGLMM_LINK_LOG = 1,
  MIGLMM_LINK_PROBIT = 2,
  MIGLMM_LINK_LOGIT = 3,
  MIGLMM_LINK_CLOGLOG = 4,
  MIGLMM_LINK_SQRT = 5,
  MIGLMM_LINK_RECIPROCAL = 6,
} MiglmmLink;

// Parameter blocks for acceptance queries.
typedef enum MiglmmBlock {
  MIGLMM_BLOCK_BETA = 0,
  MIGLMM_BLOCK_ALPHA = 1,
  MIGLMM_BLOCK_EFFECTS = 2,
} MiglmmBlock;

// One fitted chain with its column names.
typedef struct MiglmmFit MiglmmFit;

// Gauss-Hermite rule for the weight `exp(-x^2)`.
typedef struct MiglmmRule MiglmmRule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *miglmm_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *miglmm_version(void);

// Inverse link `h(eta)`.
//
// # Safety
// `out` must be valid for writes.
enum MiglmmStatus miglmm_link_inverse(enum MiglmmLink link, double eta, double *out);

// Logistic-normal integral `E[1 / (1 + e^W)]`, `W ~ N(mu, sigma2)`, by the hybrid method.
//
// # Safety
// `out` must be valid for writes.
enum MiglmmStatus miglmm_phi(double mu, double sigma2, double *out);

// Adjustment for a normal random effect of variance `tau2`.
//
// # Safety
// `out` must be valid for writes.
enum MiglmmStatus miglmm_adjust(enum MiglmmLink link, double kappa, double tau2, double *out);

// Builds a Gauss-Hermite rule of the given order.
//
// # Safety
// `out` must be valid for writes. Release the handle with [`miglmm_rule_free`].
enum MiglmmStatus miglmm_rule_new(size_t order, struct MiglmmRule **out);

// # Safety
// `rule` must come from [`miglmm_rule_new`] and not be used afterwards. Null is ignored.
void miglmm_rule_free(struct MiglmmRule *rule);

// # Safety
// `rule` must be a live handle.
size_t miglmm_rule_order(const struct MiglmmRule *rule);

// Copies the nodes into `out`, which holds `len >= order` values.
//
// # Safety
// `rule` must be a live handle and `out` valid for `len` writes.
enum MiglmmStatus miglmm_rule_nodes(const struct MiglmmRule *rule, double *out, size_t len);

// Copies the weights into `out`, which holds `len >= order` values.
//
// # Safety
// `rule` must be a live handle and `out` valid for `len` writes.
enum MiglmmStatus miglmm_rule_weights(const struct MiglmmRule *rule, double *out, size_t len);

// Logistic-normal integral by this rule.
//
// # Safety
// `rule` must be a live handle and `out` valid for writes.
enum MiglmmStatus miglmm_rule_phi(const struct MiglmmRule *rule,
                                  double mu,
                                  double sigma2,
                                  double *out);

// Fits a model given as TOML text to CSV text. `steps`, `burn_in` and
// `thin` follow the sampler's meaning; nonzero `consistent` moves random
// effects with each fixed-effect proposal, nonzero `correlated` couples
// the fixed-effect proposal.
//
// # Safety
// Strings must be NUL-terminated; `out` must be valid for writes. Release
// the handle with [`miglmm_fit_free`].
enum MiglmmStatus miglmm_fit_new(const char *model_toml,
                                 const char *data_csv,
                                 size_t steps,
                                 size_t burn_in,
                                 size_t thin,
                                 uint64_t seed,
                                 int32_t consistent,
                                 int32_t correlated,
                                 struct MiglmmFit **out);

// # Safety
// `fit` must come from [`miglmm_fit_new`] and not be used afterwards. Null is ignored.
void miglmm_fit_free(struct MiglmmFit *fit);

// Number of retained draws; 0 for null.
//
// # Safety
// `fit` must be a live handle or null.
size_t miglmm_fit_draw_count(const struct MiglmmFit *fit);

// Number of reported parameters (fixed effects, then random-effect SDs).
//
// # Safety
// `fit` must be a live handle or null.
size_t miglmm_fit_param_count(const struct MiglmmFit *fit);

// Name of parameter `j`, owned by the handle; null when out of range.
//
// # Safety
// `fit` must be a live handle or null.
const char *miglmm_fit_param_name(const struct MiglmmFit *fit, size_t j);

// Copies the draws of parameter `j` into `out`, which holds `len` values.
//
// # Safety
// `fit` must be a live handle and `out` valid for `len` writes.
enum MiglmmStatus miglmm_fit_draws(const struct MiglmmFit *fit, size_t j, double *out, size_t len);

// Post-burn-in acceptance rate of one block.
//
// # Safety
// `fit` must be a live handle and `out` valid for writes.
enum MiglmmStatus miglmm_fit_acceptance(const struct MiglmmFit *fit,
                                        enum MiglmmBlock block,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIGLMM_H */
