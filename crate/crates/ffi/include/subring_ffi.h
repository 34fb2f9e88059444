#ifndef SUBRING_FFI_H
#define SUBRING_FFI_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stdint.h>
#include <stddef.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum SubringStatus {
  SUBRING_STATUS_OK = 0,
  SUBRING_STATUS_NULL_POINTER = 1,
  SUBRING_STATUS_INVALID_ARGUMENT = 2,
  SUBRING_STATUS_NOT_PRIME = 3,
  SUBRING_STATUS_BUDGET_EXCEEDED = 4,
  SUBRING_STATUS_MALFORMED_INPUT = 5,
  /**
   * An internal consistency check failed or the library panicked.
   */
  SUBRING_STATUS_INTERNAL = 6,
} SubringStatus;

/**
 * Opaque handle; create with [`subring_context_new`].
 */
typedef struct SubringContext SubringContext;

/**
 * Creates a context. A zero `budget` (volume search nodes) or `ceiling`
 * (lattice search nodes) selects the library default.
 */
struct SubringContext *subring_context_new(uint64_t budget, uint64_t ceiling);

/**
 * Destroys a context; null is ignored.
 *
 * # Safety
 * `ctx` must come from [`subring_context_new`] and not be used afterwards.
 */
void subring_context_free(struct SubringContext *ctx);

/**
 * Message of the most recent failure on this context, or an empty string.
 * The returned copy must be released with [`subring_string_free`].
 *
 * # Safety
 * `ctx` must be null or a live context.
 */
char *subring_last_error(const struct SubringContext *ctx);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void subring_string_free(char *s);

/**
 * The p-adic valuation of `x`. For `x = 0` sets `*infinite` and leaves
 * `*out` at 0.
 *
 * # Safety
 * `ctx` must be a live context; `out` and `infinite` must be valid for writes.
 */
enum SubringStatus subring_valuation(const struct SubringContext *ctx,
                                     uint64_t p,
                                     int64_t x,
                                     uint32_t *out,
                                     bool *infinite);

/**
 * Number of multiplicative sublattices of `Z^n` of index `k`, as decimal.
 *
 * # Safety
 * `ctx` must be a live context and `out` valid for writes.
 */
enum SubringStatus subring_t_count(const struct SubringContext *ctx,
                                   uint32_t n,
                                   uint64_t k,
                                   char **out);

/**
 * Number of subrings of `Z^n` of index `k`, as decimal.
 *
 * # Safety
 * `ctx` must be a live context and `out` valid for writes.
 */
enum SubringStatus subring_f_count(const struct SubringContext *ctx,
                                   uint32_t n,
                                   uint64_t k,
                                   char **out);

/**
 * Domain volume for the diagonal exponents `exponents[0..len]` at `p`,
 * written as `"m/p^e"`.
 *
 * # Safety
 * `ctx` must be a live context, `exponents` must point to `len` values,
 * and `out` must be valid for writes.
 */
enum SubringStatus subring_mu(const struct SubringContext *ctx,
                              const uint32_t *exponents,
                              size_t len,
                              uint64_t p,
                              char **out);

/**
 * The local coefficient `a_n(k; p)` assembled from domain volumes
 * (`1 <= n <= 4`), as decimal.
 *
 * # Safety
 * `ctx` must be a live context and `out` valid for writes.
 */
enum SubringStatus subring_local_coefficient(const struct SubringContext *ctx,
                                             uint32_t n,
                                             uint32_t k,
                                             uint64_t p,
                                             char **out);

/**
 * Volume of the solution set of a constraint system given as JSON
 * (`{"variables": [...], "constraints": [{"poly": "...", "threshold": t}]}`),
 * written as `"m/p^e"`.
 *
 * # Safety
 * `ctx` must be a live context, `system_json` a NUL-terminated string and
 * `out` valid for writes.
 */
enum SubringStatus subring_solution_volume_json(const struct SubringContext *ctx,
                                                const char *system_json,
                                                uint64_t p,
                                                char **out);

#endif  /* SUBRING_FFI_H */
