#ifndef SLGAN_SLGAN_H
#define SLGAN_SLGAN_H

/*
 * C interface to the SLGAN makeup transfer / removal library.
 *
 * Every function returns an slgan_status. On failure the message of the
 * last error on the calling thread is available from slgan_last_error().
 * Handles are opaque; release them with the matching *_free function.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SLGAN_API __declspec(dllexport)
#else
#define SLGAN_API __attribute__((visibility("default")))
#endif

typedef enum slgan_status {
  SLGAN_OK = 0,
  SLGAN_ERR_INVALID_ARGUMENT = 1,
  SLGAN_ERR_IO = 2,
  SLGAN_ERR_DECODE = 3,        /* undecodable or non-RGB image, bad landmark file */
  SLGAN_ERR_SHAPE = 4,         /* tensor, mask or style dimension mismatch */
  SLGAN_ERR_CONFIG = 5,        /* invalid configuration */
  SLGAN_ERR_DATASET = 6,       /* missing directory, orphan image, empty domain, unknown label */
  SLGAN_ERR_CHECKPOINT = 7,    /* corrupt archive */
  SLGAN_ERR_VERSION = 8,       /* format version or config hash mismatch */
  SLGAN_ERR_WEIGHTS = 9,       /* interpolation weights do not sum to 1 */
  SLGAN_ERR_NON_FINITE = 10,   /* training produced a non-finite loss */
  SLGAN_ERR_INTERNAL = 99
} slgan_status;

typedef enum slgan_domain { SLGAN_NON_MAKEUP = 0, SLGAN_MAKEUP = 1 } slgan_domain;

typedef struct slgan_bundle slgan_bundle; /* frozen EMA model loaded from a checkpoint */
typedef struct slgan_face slgan_face;     /* preprocessed image + region masks + heatmap */
typedef struct slgan_image slgan_image;   /* generated 3×R×R image in [-1, 1] */

typedef struct slgan_bundle_info {
  int resolution;
  int style_dim;
  uint64_t step;
  uint64_t checkpoint_hash;
  int64_t parameter_count;
} slgan_bundle_info;

/* Thread-local message for the most recent failure on this thread. */
SLGAN_API const char* slgan_last_error(void);
/* Stable short name of the last error kind, e.g. "WeightSumViolation". */
SLGAN_API const char* slgan_last_error_kind(void);
SLGAN_API const char* slgan_status_name(slgan_status s);

/* Bundles */
SLGAN_API slgan_status slgan_bundle_load(const char* checkpoint_path, slgan_bundle** out);
SLGAN_API void slgan_bundle_free(slgan_bundle* b);
SLGAN_API slgan_status slgan_bundle_info_get(const slgan_bundle* b, slgan_bundle_info* out);

/* Faces. seg_path / landmarks_path may be NULL; without a parsing map the
 * masks fall back to an all-ones face mask and empty regions. */
SLGAN_API slgan_status slgan_face_load(const slgan_bundle* b, const char* image_path, const char* seg_path,
                                       const char* landmarks_path, slgan_face** out);
SLGAN_API slgan_status slgan_face_from_memory(const slgan_bundle* b, const uint8_t* image, size_t image_len,
                                              const uint8_t* seg, size_t seg_len, const char* landmarks_text,
                                              slgan_face** out);
SLGAN_API void slgan_face_free(slgan_face* f);
SLGAN_API int slgan_face_is_masked(const slgan_face* f);

/* Style codes are caller-owned arrays of style_dim doubles. */
SLGAN_API slgan_status slgan_encode_style(const slgan_bundle* b, const slgan_face* f, slgan_domain d, double* code,
                                          size_t code_len);
SLGAN_API slgan_status slgan_map_latent(const slgan_bundle* b, uint64_t seed, slgan_domain d, double* code,
                                        size_t code_len);
/* codes: k consecutive style codes of code_len each; out: code_len doubles. */
SLGAN_API slgan_status slgan_interpolate(const double* codes, const double* weights, size_t k, size_t code_len,
                                         double* out);
SLGAN_API slgan_status slgan_generate(const slgan_bundle* b, const slgan_face* source, const double* code,
                                      size_t code_len, slgan_image** out);

SLGAN_API slgan_status slgan_transfer(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference,
                                      slgan_image** out);
/* reference may be NULL for latent-guided removal from `seed`. */
SLGAN_API slgan_status slgan_remove(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference,
                                    uint64_t seed, slgan_image** out);
/* Style blend (1 - alpha)·SE_own(source) + alpha·SE_target(reference). */
SLGAN_API slgan_status slgan_blend(const slgan_bundle* b, const slgan_face* source, const slgan_face* reference,
                                   double alpha, slgan_domain target, slgan_image** out);

/* Images */
SLGAN_API void slgan_image_free(slgan_image* img);
SLGAN_API int slgan_image_size(const slgan_image* img);
/* Writes width·height·3 interleaved RGB bytes, round(clamp((v + 1)·127.5)). */
SLGAN_API slgan_status slgan_image_rgb8(const slgan_image* img, uint8_t* out, size_t out_len);
SLGAN_API slgan_status slgan_image_write_png(const slgan_image* img, const char* path);
/* PNG bytes into a library-allocated buffer; release with slgan_buffer_free. */
SLGAN_API slgan_status slgan_image_encode_png(const slgan_image* img, uint8_t** data, size_t* len);
SLGAN_API void slgan_buffer_free(void* p);

/* Training. progress may be NULL; it receives each step's JSON loss record. */
typedef void (*slgan_progress_fn)(const char* json_line, void* user);
SLGAN_API slgan_status slgan_train(const char* config_path, const char* dataset_root, const char* out_dir,
                                   const char* resume_from, slgan_progress_fn progress, void* user,
                                   char* final_path, size_t final_path_len);

/* Dataset index counts. */
SLGAN_API slgan_status slgan_dataset_counts(const char* root, size_t* makeup, size_t* non_makeup);

/* Studio HTTP service. Blocks until slgan_service_stop is called from another
 * thread. checkpoint_path may be NULL (then /health reports 503). */
typedef struct slgan_service slgan_service;
SLGAN_API slgan_status slgan_service_create(const char* checkpoint_path, slgan_service** out);
SLGAN_API slgan_status slgan_service_listen(slgan_service* s, const char* host, int port);
SLGAN_API void slgan_service_stop(slgan_service* s);
SLGAN_API void slgan_service_free(slgan_service* s);

#ifdef __cplusplus
}
#endif

#endif
