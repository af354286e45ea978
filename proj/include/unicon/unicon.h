#ifndef UNICON_UNICON_H
#define UNICON_UNICON_H

/* C interface of the unicon library. Every call returns a status code;
 * on failure unicon_last_error() describes the problem (thread-local).
 * Strings returned through char** are owned by the caller and released
 * with unicon_string_free. JSON arguments may be NULL for defaults. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define UNICON_API __declspec(dllexport)
#else
#define UNICON_API __attribute__((visibility("default")))
#endif

enum {
  UNICON_OK = 0,
  UNICON_ERR_INPUT = 2,   /* bad arguments, files or configs */
  UNICON_ERR_RUNTIME = 3  /* I/O failure, divergence, internal error */
};

typedef struct unicon_dataset unicon_dataset;
typedef struct unicon_model unicon_model;

/* step, l_a, l_v, l_av, total */
typedef void (*unicon_progress_fn)(long step, double l_a, double l_v, double l_av, double total, void* user);

UNICON_API const char* unicon_version(void);
UNICON_API const char* unicon_last_error(void);
UNICON_API void unicon_string_free(char* s);

/* Worker count from UNICON_NUM_WORKERS (default 1). */
UNICON_API int unicon_num_workers(void);

/* Annotation CSV + media directory -> scene directories under out_dir.
 * summary_json (optional): counts of videos, scenes, tracks, frames. */
UNICON_API int unicon_prepare(const char* annotations_csv, const char* media_dir, const char* out_dir, int crop_size,
                              int workers, char** summary_json);

/* Synthetic scenes from a synth config JSON into out_dir. */
UNICON_API int unicon_synth(const char* config_json, const char* out_dir, int workers, char** summary_json);

/* Content hash (git blob ids of every file, SHA-1) over a directory or file. */
UNICON_API int unicon_content_hash(const char* path, char** hash);

UNICON_API int unicon_dataset_load(const char* dir, int workers, unicon_dataset** out);
UNICON_API size_t unicon_dataset_size(const unicon_dataset* data);
UNICON_API void unicon_dataset_free(unicon_dataset* data);

/* Fresh model with He-initialized parameters. */
UNICON_API int unicon_model_create(const char* model_config_json, uint64_t seed, unicon_model** out);
/* Model, optimizer state, train config and step from a checkpoint. */
UNICON_API int unicon_model_load(const char* checkpoint_path, unicon_model** out);
UNICON_API void unicon_model_free(unicon_model* model);
UNICON_API int unicon_model_config(const unicon_model* model, char** config_json);
/* Stage of the checkpoint the model came from (0 for a fresh model). */
UNICON_API int unicon_model_stage(const unicon_model* model);
/* Copies the stage-1 modules (encoders and prediction heads) from a
 * stage-1 checkpoint. */
UNICON_API int unicon_model_init_from_stage1(unicon_model* model, const char* checkpoint_path);

/* Trains with the given train config. A model loaded from a checkpoint of
 * the same stage resumes at its saved step with its optimizer state. */
UNICON_API int unicon_train(unicon_model* model, const unicon_dataset* data, const char* train_config_json,
                            unicon_progress_fn progress, void* user);
UNICON_API int unicon_model_save(const unicon_model* model, const char* checkpoint_path);
UNICON_API int unicon_train_log_csv(const unicon_model* model, char** csv);

/* options_json: visual_only, smooth_window, max_chunk_frames,
 * desync_shifts, plots (bool). Writes report.json, predictions.csv and,
 * with plots, pr_curve.png, breakdown.png, desync.png into out_dir. */
UNICON_API int unicon_evaluate(const unicon_model* model, const unicon_dataset* data, const char* options_json,
                               const char* out_dir, char** report_json);

/* Writes the self and pair head maps of the first frame of every scene
 * as PNG files into out_dir. */
UNICON_API int unicon_dump_headmaps(const unicon_dataset* data, const char* out_dir, size_t max_scenes);

#ifdef __cplusplus
}
#endif

#endif
