/* C interface to the two-step dehazing toolkit.
 *
 * All functions return a tsdn_status. On failure a message describing the
 * error is available from tsdn_last_error() on the calling thread until the
 * next API call on that thread. Handles are opaque and owned by the caller;
 * release them with the matching *_free function.
 */
#ifndef TSDN_TSDN_H
#define TSDN_TSDN_H

#include <stddef.h>

#if defined(_WIN32)
#define TSDN_API __declspec(dllexport)
#else
#define TSDN_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 2 to 4 double as process exit codes for the CLI. */
typedef enum tsdn_status {
  TSDN_OK = 0,
  TSDN_ERR_INVALID = 1,
  TSDN_ERR_IO = 2,
  TSDN_ERR_MISSING_PREREQUISITE = 3,
  TSDN_ERR_DIVERGENCE = 4,
  TSDN_ERR_SCHEMA = 5,
  TSDN_ERR_VERSION = 6,
  TSDN_ERR_SHAPE = 7,
  TSDN_ERR_INTERNAL = 8
} tsdn_status;

typedef struct tsdn_config tsdn_config;
typedef struct tsdn_model tsdn_model;

typedef struct tsdn_synth_summary {
  size_t scenes;
  size_t hazy;
  size_t real;
} tsdn_synth_summary;

typedef struct tsdn_eval_summary {
  size_t count;
  double mean_psnr; /* +inf when every output matches its reference exactly */
  double mean_ssim;
  double mean_hazy_psnr;
  double l1_cv; /* negative when undefined */
} tsdn_eval_summary;

typedef enum tsdn_eval_model { TSDN_MODEL_NETWORK = 0, TSDN_MODEL_IDENTITY = 1, TSDN_MODEL_ORACLE = 2 } tsdn_eval_model;

typedef enum tsdn_extractor { TSDN_EXTRACTOR_AUTO = 0, TSDN_EXTRACTOR_SYNTHETIC = 1, TSDN_EXTRACTOR_REAL = 2 } tsdn_extractor;

TSDN_API const char* tsdn_last_error(void);
TSDN_API const char* tsdn_status_name(tsdn_status status);

/* Configuration: built-in defaults, optionally overlaid with a JSON file,
 * then dotted-key overrides ("train.intra.epochs", "5"). */
TSDN_API tsdn_status tsdn_config_new(const char* path, tsdn_config** out);
TSDN_API tsdn_status tsdn_config_set(tsdn_config* cfg, const char* key, const char* value);
/* Validates and returns the fully resolved configuration as JSON; free with tsdn_string_free. */
TSDN_API tsdn_status tsdn_config_resolved_json(const tsdn_config* cfg, char** out_json);
TSDN_API void tsdn_config_free(tsdn_config* cfg);
TSDN_API void tsdn_string_free(char* s);

TSDN_API tsdn_status tsdn_synth(const tsdn_config* cfg, const char* out_dir, tsdn_synth_summary* out);
TSDN_API tsdn_status tsdn_train_intra(const tsdn_config* cfg, const char* run_dir);
TSDN_API tsdn_status tsdn_mark_subset(const tsdn_config* cfg, const char* run_dir, size_t* scenes_marked);
TSDN_API tsdn_status tsdn_train_inter(const tsdn_config* cfg, const char* run_dir);
/* checkpoint may be NULL (latest in run_dir); split is "train", "test" or "real". Writes run_dir/eval.json. */
TSDN_API tsdn_status tsdn_eval(const tsdn_config* cfg, const char* run_dir, const char* checkpoint, const char* split,
                               tsdn_eval_model model, tsdn_extractor extractor, tsdn_eval_summary* out);
/* Writes run_dir/dispersion.csv and run_dir/dispersion.png from logs/steps.jsonl. */
TSDN_API tsdn_status tsdn_dispersion(const char* run_dir, size_t* epochs);
TSDN_API tsdn_status tsdn_dehaze_file(const char* checkpoint, const char* image_in, const char* image_out,
                                      tsdn_extractor extractor);

/* In-memory inference on interleaved RGB float images in [0,1]. */
TSDN_API tsdn_status tsdn_model_load(const char* checkpoint, tsdn_model** out);
TSDN_API tsdn_status tsdn_model_dehaze(tsdn_model* model, const float* rgb_in, size_t height, size_t width,
                                       tsdn_extractor extractor, float* rgb_out);
TSDN_API void tsdn_model_free(tsdn_model* model);

#ifdef __cplusplus
}
#endif

#endif /* TSDN_TSDN_H */
