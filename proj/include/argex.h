/* argex — zero-shot document-level event argument extraction pipeline.
 *
 * C interface over the C++ core. An experiment is an opaque handle bound to a
 * config file and an output directory; every pipeline stage runs through
 * argex_experiment_run. All functions return ARGEX_OK on success; the last
 * error message is available per handle via argex_experiment_error.
 */
#ifndef ARGEX_H
#define ARGEX_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum argex_status {
  ARGEX_OK = 0,
  ARGEX_ERR_INVALID_ARGUMENT = 1,
  ARGEX_ERR_CONFIG = 2,
  ARGEX_ERR_IO = 3,
  ARGEX_ERR_MISSING_PREREQUISITE = 4,
  ARGEX_ERR_STAGE_FAILED = 5,
  ARGEX_ERR_LOCKED = 6,
  ARGEX_ERR_INTERNAL = 7
} argex_status;

typedef struct argex_experiment argex_experiment;

/* Library version string, e.g. "argex 0.1.0". */
const char* argex_version(void);

/* Opens an experiment from a JSON config file. The output directory is taken
 * from the config unless out_dir_override is non-NULL. Acquires the directory
 * lock; the handle must be closed to release it. On failure *out is NULL and
 * a message is written to err_buf (when provided). */
argex_status argex_experiment_open(const char* config_path, const char* out_dir_override,
                                   argex_experiment** out, char* err_buf, size_t err_cap);

void argex_experiment_close(argex_experiment* experiment);

/* Last error message for this handle; empty string when none. The pointer
 * stays valid until the next call on the same handle. */
const char* argex_experiment_error(const argex_experiment* experiment);

/* Runs one stage: split | sft-gen | sft-eval | propose | score | revise |
 * loop | eval | probe | diversity | export | plot.
 * options_json may be NULL/empty or a JSON object with optional fields:
 *   seed (interaction seed), round, min_reward, out, data, use_sft, series. */
argex_status argex_experiment_run(argex_experiment* experiment, const char* stage,
                                  const char* options_json);

/* Writes the micro-world fixture (ontology, corpora, starter config) into a
 * directory. options_json fields: docs_per_type, heldout_per_type,
 * empty_rate, seed. */
argex_status argex_make_fixture(const char* out_dir, const char* options_json, char* err_buf,
                                size_t err_cap);

#ifdef __cplusplus
}
#endif

#endif /* ARGEX_H */
