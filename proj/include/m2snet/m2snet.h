#ifndef M2SNET_H
#define M2SNET_H

/* C interface to the m2snet core. Every function returns an m2s_status;
 * on failure m2s_last_error() describes the problem (per thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(M2S_BUILDING_LIBRARY)
#    define M2S_API __declspec(dllexport)
#  else
#    define M2S_API __declspec(dllimport)
#  endif
#else
#  define M2S_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum m2s_status {
  M2S_OK = 0,
  M2S_ERR_CONFIG = 2,
  M2S_ERR_DATA = 3,
  M2S_ERR_NUMERIC = 4,
  M2S_ERR_IO = 5,
  M2S_ERR_FORMAT = 6,
  M2S_ERR_DIMENSION = 7,
  M2S_ERR_CONTRACT = 8,
  M2S_ERR_INVALID_ARGUMENT = 9,
  M2S_ERR_INTERNAL = 10
} m2s_status;

typedef struct m2s_config m2s_config;
typedef struct m2s_model m2s_model;

/* Logging sink for command progress; may be NULL. */
typedef void (*m2s_log_fn)(const char* line, void* user);

M2S_API const char* m2s_version(void);
M2S_API const char* m2s_last_error(void);
M2S_API const char* m2s_status_name(m2s_status status);

/* Configuration ---------------------------------------------------------- */
M2S_API m2s_status m2s_config_create(m2s_config** out);
M2S_API m2s_status m2s_config_load(const char* path, m2s_config** out);
M2S_API void m2s_config_destroy(m2s_config* cfg);
M2S_API m2s_status m2s_config_set(m2s_config* cfg, const char* key, const char* value);
/* "section.key=value" */
M2S_API m2s_status m2s_config_apply(m2s_config* cfg, const char* assignment);
/* Writes at most `cap` bytes including the terminator; `*needed` gets the full size. */
M2S_API m2s_status m2s_config_get(const m2s_config* cfg, const char* key, char* buf, size_t cap, size_t* needed);
M2S_API m2s_status m2s_config_validate(const m2s_config* cfg);
/* Static text listing every key and its default. */
M2S_API const char* m2s_config_help(void);

/* Commands (all outputs under out_dir) ------------------------------------ */
M2S_API m2s_status m2s_synth_gen(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user);
M2S_API m2s_status m2s_train(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user);
M2S_API m2s_status m2s_eval(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user);
M2S_API m2s_status m2s_ablate(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user);
M2S_API m2s_status m2s_flops(const m2s_config* cfg, const char* out_dir, m2s_log_fn log, void* user);
/* *passed is set to 1 or 0; a failed check returns M2S_ERR_NUMERIC. */
M2S_API m2s_status m2s_gradcheck(const m2s_config* cfg, const char* out_dir, int* passed, double* max_rel_error,
                                 m2s_log_fn log, void* user);
M2S_API m2s_status m2s_export_curves(const char* const* logs, size_t n_logs, const char* out_dir, m2s_log_fn log,
                                     void* user);

/* Models ------------------------------------------------------------------ */
M2S_API m2s_status m2s_model_create(const m2s_config* cfg, uint64_t seed, m2s_model** out);
M2S_API m2s_status m2s_model_load(const char* path, m2s_model** out);
M2S_API void m2s_model_destroy(m2s_model* model);
M2S_API m2s_status m2s_model_save(const m2s_model* model, const char* path);
M2S_API m2s_status m2s_model_param_count(const m2s_model* model, int64_t* out);
M2S_API m2s_status m2s_model_macs(const m2s_model* model, int64_t* macs, int64_t* fixed_filter_ops);
M2S_API m2s_status m2s_model_num_classes(const m2s_model* model, int* out);
/* rgb: height*width*3 interleaved bytes. out: num_classes*height*width
 * sigmoid probabilities, class-major. */
M2S_API m2s_status m2s_model_predict(const m2s_model* model, const uint8_t* rgb, int width, int height,
                                     double* out);

/* Metrics on row-major buffers -------------------------------------------- */
/* pred and gt hold n values in {0,1}. */
M2S_API m2s_status m2s_metric_dice(const double* pred, const double* gt, size_t n, double* out);
M2S_API m2s_status m2s_metric_jaccard(const double* pred, const double* gt, size_t n, double* out);
M2S_API m2s_status m2s_metric_mae(const double* prob, const double* gt, size_t n, double* out);
M2S_API m2s_status m2s_metric_s_measure(const double* prob, const double* gt, int width, int height,
                                        double alpha, double* out);
M2S_API m2s_status m2s_metric_e_max(const double* prob, const double* gt, int width, int height,
                                    int thresholds, double* out);
M2S_API m2s_status m2s_metric_f_beta_w(const double* prob, const double* gt, int width, int height, double* out);
M2S_API m2s_status m2s_metric_med(const int* pred, const int* gt, int width, int height, int class_id,
                                  double* out);

#ifdef __cplusplus
}
#endif

#endif
