/* C interface for the distill-lab numerical laboratory. */

#ifndef DISTILL_LAB_H
#define DISTILL_LAB_H

/* Generated by cbindgen from distill-lab-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define DL_OK 0

// An argument violated a documented precondition.
#define DL_ERR_ARGUMENT 1

// A size limit (enumeration cutoff, overflow guard) was exceeded.
#define DL_ERR_CAPACITY 2

// An experiment configuration failed to parse or validate.
#define DL_ERR_CONFIG 3

// Sentence generation aborted.
#define DL_ERR_GENERATION 4

// Inconsistent vector/matrix shapes.
#define DL_ERR_SHAPE 5

// Malformed serialized data (checkpoints, non-UTF-8 input).
#define DL_ERR_PARSE 6

// An underlying I/O operation failed.
#define DL_ERR_IO 7

// A panic was caught at the boundary; the message holds the payload.
#define DL_ERR_PANIC 8

// A required pointer argument was null.
#define DL_ERR_NULL 9

// Opaque parsed experiment configuration.
typedef struct DlConfig DlConfig;

// Opaque two-layer network handle.
typedef struct DlMlp DlMlp;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Do not free.
const char *dl_version(void);

// Message of the most recent failure on the calling thread (empty string if
// none). The pointer is owned by the library and stays valid until the next
// failing call on the same thread. Do not free.
const char *dl_last_error_message(void);

// Release a string previously returned through a `char**` out-parameter.
// Accepts null.
//
// # Safety
// `s` must be null or a pointer obtained from this library and not yet
// freed.
void dl_string_free(char *s);

// Parse a TOML experiment configuration into an opaque handle.
//
// # Safety
// `toml_text` must be a NUL-terminated string; `out` must be a valid
// destination pointer.
int32_t dl_config_parse(const char *toml_text, struct DlConfig **out);

// Run semantic validation. `findings_json_out` (nullable) receives a JSON
// array of `{severity, field, message}` objects; `error_count_out`
// (nullable) receives the number of error-severity findings. Returns `DL_OK`
// even when findings exist — inspect the outputs.
//
// # Safety
// `cfg` must be a live handle from [`dl_config_parse`]; the out-pointers
// must be null or valid destinations.
int32_t dl_config_validate(const struct DlConfig *cfg,
                           char **findings_json_out,
                           uint64_t *error_count_out);

// Release a configuration handle. Accepts null.
//
// # Safety
// `cfg` must be null or a live handle from [`dl_config_parse`].
void dl_config_free(struct DlConfig *cfg);

// Execute a configured experiment, writing a result bundle under
// `out_root/<run_id>/`. `report_json_out` (nullable) receives
// `{"dir": ..., "manifest": ..., "report": ...}`. Configurations with
// validation errors are rejected with `DL_ERR_CONFIG`.
//
// # Safety
// `cfg` must be a live handle; `out_root` must be a NUL-terminated path;
// `report_json_out` must be null or a valid destination.
int32_t dl_run(const struct DlConfig *cfg, const char *out_root, char **report_json_out);

// Load a two-layer network from a text checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated path; `out` must be a valid destination.
int32_t dl_mlp_load(const char *path, struct DlMlp **out);

// Save a network to a text checkpoint file (atomic replace).
//
// # Safety
// `mlp` must be a live handle; `path` must be a NUL-terminated path.
int32_t dl_mlp_save(const struct DlMlp *mlp, const char *path);

// Input dimension and hidden width of a network handle. Either out-pointer
// may be null.
//
// # Safety
// `mlp` must be a live handle; out-pointers must be null or valid.
int32_t dl_mlp_meta(const struct DlMlp *mlp, uint32_t *d_out, uint64_t *m_out);

// Evaluate the network on one point given as `len` coordinates in
// `{-1.0, +1.0}` (`len` must equal the input dimension).
//
// # Safety
// `mlp` must be a live handle; `x` must point to `len` doubles; `out` must
// be a valid destination.
int32_t dl_mlp_forward(const struct DlMlp *mlp, const double *x, uint64_t len, double *out);

// Release a network handle. Accepts null.
//
// # Safety
// `mlp` must be null or a live handle.
void dl_mlp_free(struct DlMlp *mlp);

// Closed-form degree-`degree` majority Fourier coefficient on `d` bits
// (`d` odd). Writes the value to `out`.
//
// # Safety
// `out` must be a valid destination.
int32_t dl_majority_zeta(uint32_t d, uint32_t degree, double *out);

// Sample `n` sentences from the built-in grammar into a newly allocated
// string: whitespace-separated token ids, one sentence per line, identical
// bytes to the corpus files the experiment pipeline writes for the same
// `seed` and `shard`.
//
// # Safety
// `corpus_out` must be a valid destination.
int32_t dl_pcfg_sample_corpus(uint64_t seed, uint64_t shard, uint64_t n, char **corpus_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DISTILL_LAB_H */
