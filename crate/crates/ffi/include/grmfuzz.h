/* SPDX-License-Identifier: Apache-2.0 */

#ifndef GRMFUZZ_H
#define GRMFUZZ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GrmStatus {
  GRM_STATUS_OK = 0,
  GRM_STATUS_NULL_ARGUMENT = 1,
  GRM_STATUS_INVALID_ARGUMENT = 2,
  GRM_STATUS_CONFIG = 3,
  GRM_STATUS_RUNTIME = 4,
  GRM_STATUS_IO = 5,
  /**
   * The campaign has reached its budget; no iteration ran.
   */
  GRM_STATUS_DONE = 6,
  GRM_STATUS_BUFFER_TOO_SMALL = 7,
  GRM_STATUS_PANIC = 8,
} GrmStatus;

/**
 * Opaque running campaign.
 */
typedef struct GrmCampaign GrmCampaign;

/**
 * Opaque campaign configuration.
 */
typedef struct GrmConfig GrmConfig;

typedef struct GrmIterationStats {
  uint64_t iteration;
  /**
   * 0 for the GRM stage, 1 for the DUT stage.
   */
  uint32_t stage;
  uint64_t candidates;
  double validity_rate;
  uint64_t test_cases;
  uint64_t cum_coverage;
  uint64_t new_mismatches;
} GrmIterationStats;

typedef struct GrmSummary {
  uint64_t iterations;
  uint64_t grm_iterations;
  uint64_t dut_iterations;
  uint64_t test_cases;
  uint64_t cum_coverage;
  uint64_t universe_size;
  uint64_t new_mismatches;
  /**
   * Bit `i` set when bug V(i+1) was attributed to a NEW mismatch.
   */
  uint32_t bugs_found_mask;
} GrmSummary;

typedef struct GrmDivergence {
  /**
   * Nonzero when the two traces differ.
   */
  uint32_t diverged;
  uint64_t seq;
  uint64_t grm_length;
  uint64_t dut_length;
} GrmDivergence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated)
 * and returns the buffer size needed, including the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t grm_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *grm_version(void);

/**
 * Allocates the default configuration.
 */
struct GrmConfig *grm_config_default(void);

/**
 * Parses a JSON configuration; missing fields take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GrmStatus grm_config_from_json(const char *json, struct GrmConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum GrmStatus grm_config_set_seed(struct GrmConfig *cfg, uint64_t seed);

/**
 * DUT-stage test-case budget.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum GrmStatus grm_config_set_stage_budget(struct GrmConfig *cfg, uint64_t test_cases);

/**
 * Enabled bugs as `all`, `none` or a list such as `V1,V4`.
 *
 * # Safety
 * `cfg` must be a live handle and `bugs` a NUL-terminated string.
 */
enum GrmStatus grm_config_set_bugs(struct GrmConfig *cfg, const char *bugs);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void grm_config_free(struct GrmConfig *cfg);

/**
 * Pretrains a policy and creates a campaign; `cfg` is copied.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum GrmStatus grm_campaign_new(const struct GrmConfig *cfg, struct GrmCampaign **out);

/**
 * Runs one iteration. Returns `Done` without running once the budget is spent.
 *
 * # Safety
 * `c` must be a live handle; `stats` may be null.
 */
enum GrmStatus grm_campaign_step(struct GrmCampaign *c, struct GrmIterationStats *stats);

/**
 * Runs until the budget is spent.
 *
 * # Safety
 * `c` must be a live handle.
 */
enum GrmStatus grm_campaign_run(struct GrmCampaign *c);

/**
 * # Safety
 * `c` must be a live handle and `out` a valid pointer.
 */
enum GrmStatus grm_campaign_summary(const struct GrmCampaign *c, struct GrmSummary *out);

/**
 * Writes reports, mismatch log, filter and checkpoint under `dir`.
 *
 * # Safety
 * `c` must be a live handle and `dir` a NUL-terminated path.
 */
enum GrmStatus grm_campaign_write_artifacts(const struct GrmCampaign *c, const char *dir);

/**
 * # Safety
 * `c` must be null or a handle not yet freed.
 */
void grm_campaign_free(struct GrmCampaign *c);

/**
 * Assembles source text. `*out_len` receives the word count even when
 * `cap` is too small, in which case `BufferTooSmall` is returned.
 *
 * # Safety
 * `src` must be NUL-terminated; `words` must be null or hold `cap` words.
 */
enum GrmStatus grm_assemble(const char *src, uint32_t *words, size_t cap, size_t *out_len);

/**
 * Runs `src` from the reset state of `seed` on both models and reports the
 * first divergence.
 *
 * # Safety
 * `src` and `bugs` must be NUL-terminated; `out` must be valid.
 */
enum GrmStatus grm_diff_program(const char *src,
                                uint64_t seed,
                                const char *bugs,
                                struct GrmDivergence *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRMFUZZ_H */
