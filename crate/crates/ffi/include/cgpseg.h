#ifndef CGPSEG_H
#define CGPSEG_H

#include <stddef.h>
#include <stdint.h>

// Result codes.
typedef enum CgpsegStatus {
  CGPSEG_STATUS_OK = 0,
  CGPSEG_STATUS_NULL_POINTER = 1,
  CGPSEG_STATUS_INVALID_ARGUMENT = 2,
  CGPSEG_STATUS_IO = 3,
  CGPSEG_STATUS_PARSE = 4,
  CGPSEG_STATUS_INCOMPATIBLE = 5,
  CGPSEG_STATUS_INVALID_INPUT = 6,
  CGPSEG_STATUS_BUFFER_TOO_SMALL = 7,
  CGPSEG_STATUS_INTERNAL = 8,
  CGPSEG_STATUS_PANIC = 9,
} CgpsegStatus;

// Opaque handle to a loaded model.
typedef struct CgpsegModel CgpsegModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer is
// valid until the next call into the library on this thread.
const char *cgpseg_last_error(void);

// Library version as a static NUL-terminated string.
const char *cgpseg_version(void);

// Loads a model from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum CgpsegStatus cgpseg_model_load(const char *path, struct CgpsegModel **out);

// Loads a model from a JSON document held in memory.
//
// # Safety
// `json` must point to `len` readable bytes and `out` must be valid.
enum CgpsegStatus cgpseg_model_from_json(const uint8_t *json, size_t len, struct CgpsegModel **out);

// Releases a model. NULL is ignored.
//
// # Safety
// `model` must come from a load function and not be used afterwards.
void cgpseg_model_free(struct CgpsegModel *model);

// Number of active nodes in the model's graph.
//
// # Safety
// `model` and `out` must be valid pointers.
enum CgpsegStatus cgpseg_model_active_nodes(const struct CgpsegModel *model, size_t *out);

// Runs the model on an interleaved 8-bit image of `channels` channels and
// writes one instance label per pixel into `labels` (0 is background).
// Mask outputs are split into connected components. `instances` receives
// the number of instances when non-NULL.
//
// # Safety
// `data` must hold `width * height * channels` bytes and `labels` must
// hold `labels_len` writable `uint32_t` values.
enum CgpsegStatus cgpseg_model_run(const struct CgpsegModel *model,
                                   const uint8_t *data,
                                   size_t width,
                                   size_t height,
                                   size_t channels,
                                   uint32_t *labels,
                                   size_t labels_len,
                                   size_t *instances);

// JSON manifest of a function library (`NULL` selects the default). The
// string must be released with [`cgpseg_string_free`].
//
// # Safety
// `id` must be NULL or NUL-terminated; `out` must be valid.
enum CgpsegStatus cgpseg_library_manifest(const char *id, char **out);

// Releases a string returned by the library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void cgpseg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGPSEG_H */
