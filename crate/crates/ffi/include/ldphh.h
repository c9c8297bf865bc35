/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef LDPHH_H
#define LDPHH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LdphhStatus {
  LDPHH_STATUS_OK = 0,
  LDPHH_STATUS_INVALID_ARGUMENT = 1,
  LDPHH_STATUS_OUT_OF_DOMAIN = 2,
  LDPHH_STATUS_INFEASIBLE = 3,
  LDPHH_STATUS_IO = 4,
  LDPHH_STATUS_DEGENERATE = 5,
  LDPHH_STATUS_NO_INTERSECTION = 6,
  LDPHH_STATUS_PANIC = 7,
} LdphhStatus;

typedef enum LdphhLoadMode {
  LDPHH_LOAD_MODE_INT = 0,
  LDPHH_LOAD_MODE_TEXT = 1,
} LdphhLoadMode;

typedef enum LdphhProtocol {
  LDPHH_PROTOCOL_PEM = 0,
  LDPHH_PROTOCOL_SPM = 1,
  LDPHH_PROTOCOL_MCM = 2,
} LdphhProtocol;

typedef enum LdphhVariant {
  LDPHH_VARIANT_SPLIT = 0,
  LDPHH_VARIANT_PARTITION = 1,
} LdphhVariant;

typedef enum LdphhWeights {
  LDPHH_WEIGHTS_F1 = 0,
  LDPHH_WEIGHTS_NCR = 1,
} LdphhWeights;

/**
 * A list of equal-length values.
 */
typedef struct LdphhDataset LdphhDataset;

/**
 * Local-hashing parameters for one privacy budget.
 */
typedef struct LdphhOlh LdphhOlh;

/**
 * The output of one protocol run.
 */
typedef struct LdphhResult LdphhResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null. Valid until the next failing
 * call on the same thread.
 */
const char *ldphh_last_error(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ldphh_string_free(char *s);

/**
 * Creates local-hashing parameters for budget `eps`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdphhStatus ldphh_olh_new(double eps, struct LdphhOlh **out);

/**
 * # Safety
 * `h` must come from [`ldphh_olh_new`] and not have been freed.
 */
void ldphh_olh_free(struct LdphhOlh *h);

/**
 * Hash range `d'`, or 0 for a null handle.
 *
 * # Safety
 * `h` must be a live handle or null.
 */
uint32_t ldphh_olh_d_prime(const struct LdphhOlh *h);

/**
 * Perturbs one value. `bytes` holds `bits` bits MSB-first. The randomness
 * is the stream `(seed, index)`, so equal arguments give equal reports.
 *
 * # Safety
 * `h` must be live, `bytes` must hold `ceil(bits/8)` bytes and the outputs
 * must be writable.
 */
enum LdphhStatus ldphh_olh_perturb(const struct LdphhOlh *h,
                                   const uint8_t *bytes,
                                   uint32_t bits,
                                   uint64_t seed,
                                   uint64_t index,
                                   uint64_t *out_hash_seed,
                                   uint32_t *out_bucket);

/**
 * Estimated count of one value from `n` reports given as parallel arrays.
 *
 * # Safety
 * `hash_seeds` and `buckets` must hold `n` elements; `bytes` must hold
 * `ceil(bits/8)` bytes; `out` must be writable.
 */
enum LdphhStatus ldphh_olh_estimate(const struct LdphhOlh *h,
                                    const uint64_t *hash_seeds,
                                    const uint32_t *buckets,
                                    size_t n,
                                    const uint8_t *bytes,
                                    uint32_t bits,
                                    double *out);

/**
 * Generates `n` values of `m` bits from a zipf law over `support` values,
 * skipping the `drop` most frequent ranks.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdphhStatus ldphh_dataset_zipf(double s,
                                    size_t support,
                                    size_t drop,
                                    size_t n,
                                    uint32_t m,
                                    uint64_t seed,
                                    struct LdphhDataset **out);

/**
 * Generates `n` values of `m` bits with frequencies `∝ e^{−rate·(j−1)}`.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdphhStatus ldphh_dataset_exponential(double rate,
                                           size_t support,
                                           size_t n,
                                           uint32_t m,
                                           uint64_t seed,
                                           struct LdphhDataset **out);

/**
 * Reads one value per line from `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum LdphhStatus ldphh_dataset_load(const char *path,
                                    uint32_t m,
                                    enum LdphhLoadMode mode,
                                    struct LdphhDataset **out);

/**
 * # Safety
 * `d` must be a live handle or null.
 */
size_t ldphh_dataset_len(const struct LdphhDataset *d);

/**
 * # Safety
 * `d` must come from this library and not have been freed.
 */
void ldphh_dataset_free(struct LdphhDataset *d);

/**
 * Runs a protocol with its planned configuration. `variant` only affects
 * the baselines. A positive `theta` selects the threshold variant of PEM.
 *
 * # Safety
 * `d` must be live and `out` writable.
 */
enum LdphhStatus ldphh_run(const struct LdphhDataset *d,
                           enum LdphhProtocol protocol,
                           enum LdphhVariant variant,
                           size_t k,
                           double eps,
                           double theta,
                           uint64_t query_limit,
                           uint64_t seed,
                           struct LdphhResult **out);

/**
 * Number of identified values.
 *
 * # Safety
 * `r` must be a live handle or null.
 */
size_t ldphh_result_len(const struct LdphhResult *r);

/**
 * Total candidate queries the run made.
 *
 * # Safety
 * `r` must be a live handle or null.
 */
uint64_t ldphh_result_queries(const struct LdphhResult *r);

/**
 * The `i`-th identified value as hex and its estimated count. The hex
 * string is released with [`ldphh_string_free`].
 *
 * # Safety
 * `r` must be live and the outputs writable.
 */
enum LdphhStatus ldphh_result_get(const struct LdphhResult *r,
                                  size_t i,
                                  char **out_hex,
                                  double *out_estimate);

/**
 * The whole result as JSON, released with [`ldphh_string_free`].
 *
 * # Safety
 * `r` must be live and `out` writable.
 */
enum LdphhStatus ldphh_result_json(const struct LdphhResult *r, char **out);

/**
 * # Safety
 * `r` must come from this library and not have been freed.
 */
void ldphh_result_free(struct LdphhResult *r);

/**
 * Analytic utility of PEM with uniform extension `eta` on a zipf law.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdphhStatus ldphh_utility_score_zipf(double s,
                                          size_t support,
                                          size_t drop,
                                          uint32_t m,
                                          size_t k,
                                          uint32_t eta,
                                          double n,
                                          double eps,
                                          enum LdphhWeights weights,
                                          double *out);

/**
 * Users needed to detect frequency `f` at `sigma_multiple` deviations.
 *
 * # Safety
 * `out` must be writable.
 */
enum LdphhStatus ldphh_min_population(double f, double eps, double sigma_multiple, uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LDPHH_H */
