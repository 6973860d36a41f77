/* C interface to the SwinCheX library.
 *
 * Every function returns a swx_status. On failure a human-readable message is
 * available from swx_last_error() until the next call on the same thread.
 * Handles are opaque and owned by the caller; free them with the matching
 * *_free function. Strings passed in are UTF-8 and copied. */
#ifndef SWINCHEX_SWINCHEX_H
#define SWINCHEX_SWINCHEX_H

#include <stddef.h>
#include <stdint.h>

#if defined(SWX_BUILDING_LIBRARY)
#define SWX_API __attribute__((visibility("default")))
#else
#define SWX_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum swx_status {
  SWX_OK = 0,
  SWX_ERR_INTERNAL = 1,
  SWX_ERR_CONFIG = 2,
  SWX_ERR_DATA = 3,
  SWX_ERR_NUMERIC = 4,
  SWX_ERR_CHECK_FAILED = 5,
  SWX_ERR_INVALID_ARGUMENT = 6
} swx_status;

typedef struct swx_config swx_config;
typedef struct swx_model swx_model;

/* Receives one progress or diagnostic line. */
typedef void (*swx_log_fn)(const char* line, void* user);

SWX_API const char* swx_version(void);
SWX_API const char* swx_last_error(void);

SWX_API size_t swx_num_classes(void);
/* Canonical class name, or NULL when index is out of range. */
SWX_API const char* swx_class_name(size_t index);

/* Configuration. Keys are "section.key", e.g. "train.lr". */
SWX_API swx_status swx_config_new(swx_config** out);
SWX_API swx_status swx_config_load(const char* path, swx_config** out);
SWX_API swx_status swx_config_set(swx_config* config, const char* key, const char* value);
/* Copies the value into buf (NUL-terminated). *needed receives the length
 * including the terminator; pass buf == NULL to query it. */
SWX_API swx_status swx_config_get(const swx_config* config, const char* key, char* buf,
                                  size_t buf_size, size_t* needed);
SWX_API swx_status swx_config_save(const swx_config* config, const char* path);
SWX_API void swx_config_free(swx_config* config);

/* Pipeline commands. */
SWX_API swx_status swx_run_split(const swx_config* config, swx_log_fn log, void* user);
SWX_API swx_status swx_run_train(const swx_config* config, swx_log_fn log, void* user);
/* checkpoints may be NULL when count == 0 (uses the recorded best epoch).
 * split is "train", "val" or "test". */
SWX_API swx_status swx_run_eval(const swx_config* config, const char* const* checkpoints,
                                size_t count, const char* split, const char* out_csv,
                                swx_log_fn log, void* user);
/* checkpoint NULL: recorded best epoch. class_name NULL: dominant logit. */
SWX_API swx_status swx_run_gradcam(const swx_config* config, const char* checkpoint,
                                   const char* image_path, const char* class_name,
                                   const char* out_png, swx_log_fn log, void* user);
/* Returns SWX_ERR_CHECK_FAILED when any check fails. */
SWX_API swx_status swx_run_check(const swx_config* config, swx_log_fn log, void* user);

/* Writes a synthetic dataset ("glyphs" or "quadrant") under dir. */
SWX_API swx_status swx_synthesize(const char* kind, size_t count, size_t patients,
                                  size_t image_size, uint64_t seed, const char* dir);

/* Attention cost in multiply-accumulates. */
SWX_API swx_status swx_omega_msa(uint64_t h, uint64_t w, uint64_t channels, uint64_t* out);
SWX_API swx_status swx_omega_wmsa(uint64_t h, uint64_t w, uint64_t channels, uint64_t window,
                                  uint64_t* out);
/* windowed != 0 measures W-MSA, otherwise global MSA. */
SWX_API swx_status swx_measure_attention_macs(uint64_t h, uint64_t w, uint64_t channels,
                                              uint64_t window, int windowed, uint64_t* out);
/* CSV text for every size x channels x window combination; the returned
 * string must be released with swx_string_free. */
SWX_API swx_status swx_complexity_csv(const size_t* sizes, size_t n_sizes, const size_t* channels,
                                      size_t n_channels, const size_t* windows, size_t n_windows,
                                      int measure, char** out);
SWX_API void swx_string_free(char* s);

/* Inference on a trained checkpoint. */
SWX_API swx_status swx_model_load(const char* checkpoint, const swx_config* fallback,
                                  swx_model** out);
SWX_API size_t swx_model_image_size(const swx_model* model);
/* image: height x width x 3 row-major values in [0, 1], already at the model
 * resolution. probs receives swx_num_classes() values. */
SWX_API swx_status swx_model_predict(const swx_model* model, const double* image, size_t height,
                                     size_t width, double* probs);
SWX_API void swx_model_free(swx_model* model);

#ifdef __cplusplus
}
#endif

#endif /* SWINCHEX_SWINCHEX_H */
