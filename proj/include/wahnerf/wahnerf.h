/* C interface of the wahnerf library.
 *
 * Every function returns a wah_status. On failure the message of the most
 * recent error on the calling thread is available from wah_last_error().
 * Objects are opaque handles released with their *_free function; passing
 * NULL to a *_free function is a no-op. Output pointers are written only on
 * success.
 */
#ifndef WAHNERF_H
#define WAHNERF_H

#include <stddef.h>
#include <stdint.h>

#if defined(WAH_BUILDING_LIBRARY)
#define WAH_API __attribute__((visibility("default")))
#else
#define WAH_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wah_status {
  WAH_OK = 0,
  WAH_ERR_INVALID_ARGUMENT = 1,
  WAH_ERR_IO = 2,
  WAH_ERR_FORMAT = 3,
  WAH_ERR_NUMERIC = 4,
  WAH_ERR_INTERNAL = 5
} wah_status;

typedef enum wah_split { WAH_SPLIT_TRAIN = 0, WAH_SPLIT_TEST = 1 } wah_split;

typedef struct wah_config wah_config;
typedef struct wah_scene wah_scene;
typedef struct wah_dataset wah_dataset;
typedef struct wah_model wah_model;

WAH_API const char* wah_last_error(void);
WAH_API const char* wah_status_name(wah_status status);

/* Configuration: `key = value` text, see the README for the key list. */
WAH_API wah_status wah_config_new(wah_config** out);
WAH_API wah_status wah_config_load(const char* path, wah_config** out);
WAH_API wah_status wah_config_parse(const char* text, wah_config** out);
/* Sets one key; the whole config is re-validated and left unchanged on error. */
WAH_API wah_status wah_config_set(wah_config* cfg, const char* key, const char* value);
/* Every key with defaults filled in. Copies at most `cap` bytes including the
 * terminator; `needed` receives the full size including the terminator. */
WAH_API wah_status wah_config_dump(const wah_config* cfg, char* buf, size_t cap, size_t* needed);
WAH_API void wah_config_free(wah_config* cfg);

/* Analytic scenes. Presets: "one-sphere", "two-primitive", "cluster". */
WAH_API wah_status wah_scene_preset(const char* name, wah_scene** out);
WAH_API wah_status wah_scene_load(const char* path, wah_scene** out);
WAH_API wah_status wah_scene_save(const wah_scene* scene, const char* path);
WAH_API void wah_scene_free(wah_scene* scene);

/* Datasets. Generation uses the dataset.* keys of `cfg`. */
WAH_API wah_status wah_dataset_generate(const wah_scene* scene, const wah_config* cfg, uint64_t seed,
                                        wah_dataset** out);
/* Reads transforms_{train,test}.json; near/far from the dataset.* keys. */
WAH_API wah_status wah_dataset_load(const char* dir, const wah_config* cfg, wah_dataset** out);
WAH_API wah_status wah_dataset_save(const wah_dataset* data, const char* dir);
WAH_API wah_status wah_dataset_count(const wah_dataset* data, wah_split split, size_t* out);
WAH_API void wah_dataset_free(wah_dataset* data);

/* Models carry the field, optimizer state, step, rng and their config. */
WAH_API wah_status wah_model_init(const wah_config* cfg, wah_model** out);
/* `cfg` may be NULL to keep the config stored in the checkpoint; otherwise
 * its training keys replace the stored ones (used to extend a run). */
WAH_API wah_status wah_model_load(const char* path, const wah_config* cfg, wah_model** out);
WAH_API wah_status wah_model_save(const wah_model* model, const char* path);
WAH_API wah_status wah_model_step(const wah_model* model, size_t* out);
WAH_API void wah_model_free(wah_model* model);

/* Trains up to the configured iteration count. Writes train_log.csv and
 * checkpoints into `out_dir` when it is not NULL. `last_total` may be NULL. */
WAH_API wah_status wah_train(wah_model* model, const wah_dataset* data, const char* out_dir, double* last_total);

/* Renders view `index` of `split` to a PNG. */
WAH_API wah_status wah_render_view(const wah_model* model, const wah_dataset* data, wah_split split, size_t index,
                                   const char* png_path);
/* Renders a look-at pose on the sphere around the origin with the
 * intrinsics of the first train view. */
WAH_API wah_status wah_render_pose(const wah_model* model, const wah_dataset* data, double radius, double phi,
                                   double gamma, const char* png_path);

/* Scores every test view; writes report.txt, report.csv and the renders
 * into `out_dir`. Either output pointer may be NULL. */
WAH_API wah_status wah_evaluate(const wah_model* model, const wah_dataset* data, const char* out_dir,
                                double* psnr_mean, double* ssim_mean);

/* Writes profiles.csv and spreads.csv for `n_rays` random test pixels.
 * `median_fine_spread` may be NULL; it is NaN when no ray has weight. */
WAH_API wah_status wah_diagnose(const wah_model* model, const wah_dataset* data, size_t n_rays, uint64_t seed,
                                const char* out_dir, double* median_fine_spread);

/* PSNR (capped at 99, `capped` set to 1) and SSIM between two PNG files. */
WAH_API wah_status wah_image_metrics(const char* png_a, const char* png_b, double* psnr, int* capped, double* ssim);

#ifdef __cplusplus
}
#endif

#endif
