#ifndef REMIXLAB_H
#define REMIXLAB_H

/* C interface of the remixlab shared library.
 *
 * Every entry point returns a remixlab_status. On failure a machine-readable
 * JSON document describing the error is available from remixlab_last_error()
 * on the calling thread until the next call on that thread. Successful runs
 * leave a JSON summary in remixlab_last_result(). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(REMIXLAB_BUILDING_LIBRARY)
#    define REMIXLAB_API __declspec(dllexport)
#  else
#    define REMIXLAB_API __declspec(dllimport)
#  endif
#else
#  define REMIXLAB_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as CLI exit codes. */
typedef enum remixlab_status {
  REMIXLAB_OK = 0,
  REMIXLAB_INVALID_ARGUMENT = 1,
  REMIXLAB_CONFIG_ERROR = 2,
  REMIXLAB_RUNTIME_ABORT = 3,
  REMIXLAB_PARTIAL_SUITE = 4,
  REMIXLAB_IO_ERROR = 5,
  REMIXLAB_INTERNAL_ERROR = 6
} remixlab_status;

/* Opaque experiment configuration (a flat key/value object). */
typedef struct remixlab_config remixlab_config;

REMIXLAB_API const char* remixlab_version(void);
REMIXLAB_API const char* remixlab_last_error(void);
REMIXLAB_API const char* remixlab_last_result(void);

/* Reads and validates a JSON config file. *out is set only on success. */
REMIXLAB_API remixlab_status remixlab_config_load(const char* path, remixlab_config** out);
/* Same, from JSON text. */
REMIXLAB_API remixlab_status remixlab_config_parse(const char* json_text, remixlab_config** out);
/* Overrides one key. `value` is JSON text when it parses as JSON, else a
 * string. The whole config is revalidated; on failure it is left unchanged. */
REMIXLAB_API remixlab_status remixlab_config_set(remixlab_config* cfg, const char* key,
                                                 const char* value);
/* The effective config as JSON. Valid until the next call on this handle. */
REMIXLAB_API const char* remixlab_config_json(remixlab_config* cfg);
REMIXLAB_API void remixlab_config_free(remixlab_config* cfg);

/* Training entry points. Artifacts go to the config's out_dir. */
REMIXLAB_API remixlab_status remixlab_run_single(const remixlab_config* cfg);
REMIXLAB_API remixlab_status remixlab_run_ablation(const remixlab_config* cfg);
REMIXLAB_API remixlab_status remixlab_run_fusion_sweep(const remixlab_config* cfg);

/* Writes <run_dir>/report/. Missing artifacts give REMIXLAB_PARTIAL_SUITE
 * with the partial report still written. */
REMIXLAB_API remixlab_status remixlab_emit_report(const char* run_dir);

/* Writes the synthetic dataset of the run with `seed` as JSON lines. */
REMIXLAB_API remixlab_status remixlab_write_dataset(const remixlab_config* cfg, uint64_t seed,
                                                    const char* path);

/* KL divergence (nats) of a probability vector to the uniform distribution. */
REMIXLAB_API remixlab_status remixlab_kl_to_uniform(const double* probs, size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif /* REMIXLAB_H */
