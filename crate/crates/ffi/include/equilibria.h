#ifndef EQUILIBRIA_H
#define EQUILIBRIA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum EqStatus {
  EQ_STATUS_OK = 0,
  EQ_STATUS_NULL_POINTER = 1,
  /**
   * Index out of range, wrong array length or non-UTF-8 text.
   */
  EQ_STATUS_INVALID_ARGUMENT = 2,
  EQ_STATUS_IO = 3,
  EQ_STATUS_PARSE = 4,
  /**
   * Model or input failed validation.
   */
  EQ_STATUS_VALIDATION = 5,
  EQ_STATUS_ARBITRAGE = 6,
  /**
   * A standing market or preference assumption fails.
   */
  EQ_STATUS_ASSUMPTION = 7,
  EQ_STATUS_PRICE_OUTSIDE_RANGE = 8,
  EQ_STATUS_DOMAIN_VIOLATION = 9,
  EQ_STATUS_NON_CONVERGENCE = 10,
  /**
   * The operation is not available for this model.
   */
  EQ_STATUS_UNSUPPORTED = 11,
  /**
   * Internal failure; the library caught a panic.
   */
  EQ_STATUS_PANIC = 12,
} EqStatus;

/**
 * A loaded and validated model.
 */
typedef struct EqModel EqModel;

/**
 * An equilibrium price and allocation.
 */
typedef struct EqPepa EqPepa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after a
 * success. Valid until the next call into the library on the same thread.
 */
const char *eq_last_error(void);

/**
 * Library version as a static string.
 */
const char *eq_version(void);

/**
 * Parses and validates a model from JSON text.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum EqStatus eq_model_load_json(const char *json, struct EqModel **out);

/**
 * Reads, parses and validates a model file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum EqStatus eq_model_load_file(const char *path, struct EqModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from a load function and not be used afterwards.
 */
void eq_model_free(struct EqModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t eq_model_num_states(const struct EqModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t eq_model_num_assets(const struct EqModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t eq_model_num_agents(const struct EqModel *model);

/**
 * # Safety
 * `model` must be a live handle or null (which yields 0).
 */
size_t eq_model_num_claims(const struct EqModel *model);

/**
 * Capital requirement of `agent` for a claim with one payoff per state.
 *
 * # Safety
 * `claim` must point to `len` doubles and `out` to one.
 */
enum EqStatus eq_rho(const struct EqModel *model,
                     size_t agent,
                     const double *claim,
                     size_t len,
                     double *out);

/**
 * Demand of `agent` for the model's bundle at `price`.
 *
 * # Safety
 * `price` and `out` must each point to `len` doubles, one per claim.
 */
enum EqStatus eq_demand(const struct EqModel *model,
                        size_t agent,
                        const double *price,
                        size_t len,
                        double *out);

/**
 * Whether the agents' optimizer measures at zero coincide.
 *
 * # Safety
 * `out` must point to one `bool`.
 */
enum EqStatus eq_pareto_check(const struct EqModel *model, bool *out);

/**
 * Solves for the equilibrium of the model's bundle.
 *
 * # Safety
 * `out` must be a valid pointer; on success it receives a handle to release
 * with [`eq_pepa_free`].
 */
enum EqStatus eq_solve_pepa(const struct EqModel *model, struct EqPepa **out);

/**
 * Releases an equilibrium; null is ignored.
 *
 * # Safety
 * `pepa` must come from [`eq_solve_pepa`] and not be used afterwards.
 */
void eq_pepa_free(struct EqPepa *pepa);

/**
 * # Safety
 * `pepa` must be a live handle or null (which yields 0).
 */
size_t eq_pepa_num_agents(const struct EqPepa *pepa);

/**
 * # Safety
 * `pepa` must be a live handle or null (which yields 0).
 */
size_t eq_pepa_num_claims(const struct EqPepa *pepa);

/**
 * Copies the price vector, one entry per claim.
 *
 * # Safety
 * `out` must point to `len` doubles.
 */
enum EqStatus eq_pepa_price(const struct EqPepa *pepa, double *out, size_t len);

/**
 * Copies the allocation row-major: agent `i`, claim `k` at `i * claims + k`.
 *
 * # Safety
 * `out` must point to `len` doubles.
 */
enum EqStatus eq_pepa_allocation(const struct EqPepa *pepa, double *out, size_t len);

/**
 * `|sum_i Z_i(p)|_inf` with demands recomputed at the price; NaN for a
 * null handle.
 *
 * # Safety
 * `pepa` must be a live handle or null.
 */
double eq_pepa_clearing_residual(const struct EqPepa *pepa);

/**
 * Largest deviation of an agent's marginal price from the equilibrium
 * price; NaN for a null handle.
 *
 * # Safety
 * `pepa` must be a live handle or null.
 */
double eq_pepa_foc_residual(const struct EqPepa *pepa);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EQUILIBRIA_H */
