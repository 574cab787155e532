#ifndef SNS_QKD_H
#define SNS_QKD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes; the error classes share their values with the CLI exit
 * codes.
 */
typedef enum SnsStatus {
  SNS_STATUS_OK = 0,
  SNS_STATUS_USAGE = 2,
  SNS_STATUS_PARSE = 3,
  SNS_STATUS_VALIDATION = 4,
  SNS_STATUS_VACUOUS = 5,
  SNS_STATUS_NULL_POINTER = 6,
  SNS_STATUS_PANIC = 7,
} SnsStatus;

/**
 * Opaque parsed tally.
 */
typedef struct SnsTally SnsTally;

typedef struct SnsSecurity {
  double eps_chernoff;
  double eps_cor;
  double eps_pa;
  double eps_hat;
  /**
   * Error-correction inefficiency.
   */
  double f;
} SnsSecurity;

typedef struct SnsSource {
  double mu_x;
  double mu_y;
  double p_v;
  double p_x;
  double p_y;
} SnsSource;

typedef struct SnsKeyRateInput {
  uint64_t n_total;
  double n1;
  double e1ph;
  double n_t;
  double e_t;
  uint64_t n_vy;
  uint64_t n_yv;
  struct SnsSecurity security;
  double clock_hz;
  /**
   * End-to-end transmittance; NaN skips the PLOB comparison.
   */
  double eta;
} SnsKeyRateInput;

typedef struct SnsReport {
  double r_per_pulse;
  double r_unclamped;
  double r_bps;
  double r_tail;
  uint64_t total_secure_bits;
  /**
   * NaN when no transmittance was known.
   */
  double plob_bound;
  bool above_plob;
  bool vacuous;
  double n1;
  double e1ph;
  double n_t;
  double e_t;
} SnsReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *sns_last_error(void);

/**
 * Library version as a static string.
 */
const char *sns_version(void);

/**
 * Parses tally JSON text into a new handle.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum SnsStatus sns_tally_from_json(const char *json, struct SnsTally **out);

/**
 * Reads and parses a tally file into a new handle.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SnsStatus sns_tally_from_file(const char *path, struct SnsTally **out);

/**
 * Releases a tally handle; null is ignored.
 *
 * # Safety
 * `tally` must come from this library and not be used afterwards.
 */
void sns_tally_free(struct SnsTally *tally);

/**
 * Total pulse pairs and vacuum-signal detection counts of a tally.
 *
 * # Safety
 * `tally` must be a live handle; outputs must be valid pointers.
 */
enum SnsStatus sns_tally_counts(const struct SnsTally *tally,
                                uint64_t *n_total,
                                uint64_t *n_vy,
                                uint64_t *n_yv);

/**
 * Default security parameters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SnsStatus sns_security_default(struct SnsSecurity *out);

/**
 * Published source parameter set 1 or 2.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SnsStatus sns_source_preset(uint32_t set, struct SnsSource *out);

/**
 * Evaluates the rate formula.
 *
 * # Safety
 * `input` and `out` must be valid pointers.
 */
enum SnsStatus sns_secure_key_rate(const struct SnsKeyRateInput *input, struct SnsReport *out);

/**
 * Full pipeline on a tally. `config` is optional run-configuration JSON
 * (null for defaults and tally metadata). A vacuous bound still fills
 * `out` and returns `Vacuous`.
 *
 * # Safety
 * `tally` must be a live handle, `config` null or a nul-terminated string,
 * `out` a valid pointer.
 */
enum SnsStatus sns_analyze(const struct SnsTally *tally, const char *config, struct SnsReport *out);

/**
 * Full pipeline on a tally, returning the complete report as JSON in
 * `*out`; free it with [`sns_string_free`].
 *
 * # Safety
 * As for [`sns_analyze`]; `out` must be a valid pointer.
 */
enum SnsStatus sns_analyze_json(const struct SnsTally *tally, const char *config, char **out);

/**
 * Releases a string returned by this library; null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sns_string_free(char *s);

/**
 * Binary Shannon entropy in bits.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SnsStatus sns_binary_entropy(double x, double *out);

/**
 * Repeaterless bound `-log2(1 - eta)`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum SnsStatus sns_plob(double eta, double *out);

/**
 * Per-pulse finite-size correction term.
 *
 * # Safety
 * `security` and `out` must be valid pointers.
 */
enum SnsStatus sns_r_tail(uint64_t n_total,
                          uint64_t n_vy,
                          uint64_t n_yv,
                          const struct SnsSecurity *security,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SNS_QKD_H */
