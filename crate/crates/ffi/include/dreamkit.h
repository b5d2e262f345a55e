#ifndef DREAMKIT_H
#define DREAMKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DkStatus {
  DK_STATUS_OK = 0,
  DK_STATUS_NULL_POINTER = 1,
  DK_STATUS_INVALID_ARGUMENT = 2,
  DK_STATUS_PARSE = 3,
  DK_STATUS_IO = 4,
  DK_STATUS_BUFFER_TOO_SMALL = 5,
  DK_STATUS_PANIC = 6,
} DkStatus;

/**
 * Dynamics model with its configuration.
 */
typedef struct DkModel DkModel;

/**
 * Generated excitation trajectory.
 */
typedef struct DkTrajectory DkTrajectory;

/**
 * Shape summary of a model.
 */
typedef struct DkModelDims {
  size_t frames;
  size_t t_hist;
  /**
   * Tokens per frame.
   */
  size_t spatial;
  size_t factors;
  size_t factor_size;
  size_t n_joints;
  uint64_t vocab_size;
} DkModelDims;

/**
 * Parsed judge verdict. `explanation` is owned by the caller and released
 * with [`dk_string_free`].
 */
typedef struct DkVerdict {
  bool collision_likely;
  double confidence;
  uint32_t first_collision_frame;
  char *explanation;
} DkVerdict;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next dreamkit call on the same thread.
 */
const char *dk_last_error(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a dreamkit function that documents ownership transfer.
 */
void dk_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dk_version(void);

/**
 * The judge prompt template as a static NUL-terminated string.
 */
const char *dk_prompt_template(void);

/**
 * Renders a contact splat image into `out` as row-major RGB triples in [0, 1].
 *
 * `scene_json` is an array of `{p, f}` records, `camera_json` a camera
 * model, `config_json` a splat config or NULL for defaults. `width` and
 * `height` are always written once the camera parses; `out` must hold
 * `3 * width * height` doubles, otherwise `DK_STATUS_BUFFER_TOO_SMALL` is
 * returned, so a first call with `out_len = 0` queries the size.
 *
 * # Safety
 * String arguments must be NUL-terminated; `out` must point to `out_len`
 * writable doubles.
 */
enum DkStatus dk_render_splats(const char *scene_json,
                               const char *camera_json,
                               const char *config_json,
                               double *out,
                               size_t out_len,
                               size_t *width,
                               size_t *height);

/**
 * Splits token `z` of a `v_f^k` vocabulary into `k` digits, least
 * significant first.
 *
 * # Safety
 * `digits` must point to `digits_len` writable values.
 */
enum DkStatus dk_vocab_decompose(uint32_t v_f,
                                 uint32_t k,
                                 uint32_t z,
                                 uint32_t *digits,
                                 size_t digits_len);

/**
 * Inverse of [`dk_vocab_decompose`].
 *
 * # Safety
 * `digits` must point to `digits_len` readable values.
 */
enum DkStatus dk_vocab_compose(uint32_t v_f,
                               uint32_t k,
                               const uint32_t *digits,
                               size_t digits_len,
                               uint32_t *z);

/**
 * Quantizes one latent vector (one value per level) to its FSQ index.
 *
 * # Safety
 * `levels` and `latent` must point to `n_levels` readable values.
 */
enum DkStatus dk_fsq_quantize(const uint32_t *levels,
                              size_t n_levels,
                              const double *latent,
                              uint32_t *index);

/**
 * Writes the grid point of FSQ `index` to `out` (`n_levels` values).
 *
 * # Safety
 * `levels` must point to `n_levels` readable values and `out` to `n_levels`
 * writable doubles.
 */
enum DkStatus dk_fsq_dequantize(const uint32_t *levels,
                                size_t n_levels,
                                uint32_t index,
                                double *out);

/**
 * Generates a trajectory. `ou_json` and `excitation_json` may be NULL for
 * defaults; `p0` is the 3-element start position, or NULL for the
 * workspace center.
 *
 * # Safety
 * String arguments must be NUL-terminated or NULL, `p0` must point to 3
 * doubles or be NULL, and `out` must be writable.
 */
enum DkStatus dk_trajectory_generate(const char *ou_json,
                                     const char *excitation_json,
                                     const double *p0,
                                     struct DkTrajectory **out);

/**
 * Number of steps, or 0 for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t dk_trajectory_len(const struct DkTrajectory *traj);

/**
 * Copies step `k`: the command into `x` and the target position into `p`
 * (3 doubles each).
 *
 * # Safety
 * `traj` must be a live handle; `x` and `p` must each hold 3 doubles.
 */
enum DkStatus dk_trajectory_step(const struct DkTrajectory *traj, size_t k, double *x, double *p);

/**
 * Releases a trajectory. NULL is ignored.
 *
 * # Safety
 * `traj` must be NULL or a handle not yet freed.
 */
void dk_trajectory_free(struct DkTrajectory *traj);

/**
 * Creates the toy-scale model with deterministic initialization from `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum DkStatus dk_model_new_toy(uint64_t seed, struct DkModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum DkStatus dk_model_load(const char *path, struct DkModel **out);

/**
 * Writes the model's shape summary.
 *
 * # Safety
 * `model` must be a live handle and `dims` writable.
 */
enum DkStatus dk_model_dims(const struct DkModel *model, struct DkModelDims *dims);

/**
 * Runs one forward pass.
 *
 * Inputs: `tokens` is `frames x spatial` (the MASK id is `vocab_size`),
 * `actions` is `frames x 3`, `joints` is `frames x n_joints`. Outputs:
 * `video` and `contact` receive `frames x spatial x factors x factor_size`
 * logits, `joint_pred` receives `frames x n_joints` values. `joint_pred`
 * may be NULL with length 0 when not needed, likewise `contact`.
 *
 * # Safety
 * Every pointer must reference a buffer of at least its stated length.
 */
enum DkStatus dk_model_forward(const struct DkModel *model,
                               const uint32_t *tokens,
                               size_t tokens_len,
                               const double *actions,
                               size_t actions_len,
                               const double *joints,
                               size_t joints_len,
                               double *video,
                               size_t video_len,
                               double *contact,
                               size_t contact_len,
                               double *joint_pred,
                               size_t joint_pred_len);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void dk_model_free(struct DkModel *model);

/**
 * Parses a raw judge reply.
 *
 * # Safety
 * `raw` must be NUL-terminated and `out` writable.
 */
enum DkStatus dk_verdict_parse(const char *raw, struct DkVerdict *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DREAMKIT_H */
