#ifndef RTNET_H
#define RTNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes of every fallible call.
typedef enum RtnetStatus {
  RTNET_STATUS_OK = 0,
  RTNET_STATUS_NULL_POINTER = 1,
  RTNET_STATUS_INVALID_ARGUMENT = 2,
  RTNET_STATUS_IO = 3,
  RTNET_STATUS_FORMAT = 4,
  RTNET_STATUS_UNKNOWN_ACT = 5,
  RTNET_STATUS_BUFFER_TOO_SMALL = 6,
  RTNET_STATUS_INTERNAL = 7,
} RtnetStatus;

// Per-act latent Gaussians.
typedef struct RtnetLatentSpec RtnetLatentSpec;

// A loaded checkpoint.
typedef struct RtnetModel RtnetModel;

// Input and output widths of a model.
typedef struct RtnetModelInfo {
  size_t acoustic_dim;
  size_t vocab_rows;
  size_t hz_dim;
  // Zero for models without a latent space.
  size_t latent_dim;
  bool is_vae;
  double frame_ms;
} RtnetModelInfo;

// One sampled response offset.
typedef struct RtnetOffset {
  // Frame at which the trigger fired.
  size_t trigger_frame;
  // Offset in ms from the end of the user's last speech frame.
  double offset_ms;
  // True when no trial fired and the trigger was forced at the last frame.
  bool censored;
} RtnetOffset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread ("" after a success).
// The pointer stays valid until the next call on the same thread.
const char *rtnet_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rtnet_version(void);

// Loads a checkpoint. On success `*out` receives a handle owned by the
// caller.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum RtnetStatus rtnet_model_load(const char *path, struct RtnetModel **out);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must come from [`rtnet_model_load`] and not be used afterwards.
void rtnet_model_free(struct RtnetModel *model);

// # Safety
// `model` and `out` must be valid pointers.
enum RtnetStatus rtnet_model_info(const struct RtnetModel *model, struct RtnetModelInfo *out);

// Embedding row of a token in the model's vocabulary; unknown tokens map
// to the unspecified-word row.
//
// # Safety
// `model` and `out` must be valid pointers, `token` NUL-terminated.
enum RtnetStatus rtnet_model_token_id(const struct RtnetModel *model,
                                      const char *token,
                                      uint32_t *out);

// Reads a latent spec file written by `rtnet fit-latent`.
//
// # Safety
// `path` must be NUL-terminated and `out` a valid pointer.
enum RtnetStatus rtnet_latent_spec_load(const char *path, struct RtnetLatentSpec **out);

// Releases a latent spec handle. Null is ignored.
//
// # Safety
// `spec` must come from [`rtnet_latent_spec_load`] and not be used
// afterwards.
void rtnet_latent_spec_free(struct RtnetLatentSpec *spec);

// Number of acts in the spec (0 for a null handle).
//
// # Safety
// `spec` must be null or a valid handle.
size_t rtnet_latent_spec_act_count(const struct RtnetLatentSpec *spec);

// Name of act `index` (sorted order). The pointer lives as long as the
// handle.
//
// # Safety
// `spec` and `out` must be valid pointers.
enum RtnetStatus rtnet_latent_spec_act_name(const struct RtnetLatentSpec *spec,
                                            size_t index,
                                            const char **out);

// Response encoding `h_z` from the latent mean `(1 - alpha)·μ_a + alpha·μ_b`.
// Pass the same act twice (any alpha) for a single act. `out_hz` must hold
// `hz_dim` floats.
//
// # Safety
// Pointers must be valid; strings NUL-terminated; `out_hz` writable for
// `hz_len` floats.
enum RtnetStatus rtnet_latent_hz(const struct RtnetModel *model,
                                 const struct RtnetLatentSpec *spec,
                                 const char *act_a,
                                 const char *act_b,
                                 double alpha,
                                 float *out_hz,
                                 size_t hz_len);

// Trigger probability for every user frame given `h_z`; frames before
// `r_start` get 0. `acoustic` is row-major `n_frames × acoustic_dim`,
// `token_ids` holds one linguistic id per frame, `out_probs` receives
// `n_frames` values.
//
// # Safety
// All arrays must be valid for the stated lengths.
enum RtnetStatus rtnet_trigger_probabilities(const struct RtnetModel *model,
                                             const float *acoustic,
                                             const uint32_t *token_ids,
                                             size_t n_frames,
                                             const float *hz,
                                             size_t hz_len,
                                             size_t r_start,
                                             double *out_probs);

// Samples one response offset. The user frames should extend past the end
// of speech (`user_end`, a frame index) with silence so the trigger has
// room to fire; if it never does it is forced at the last frame and
// flagged. Draws come from the stream `(seed, 0, pair_index)`.
//
// # Safety
// All arrays must be valid for the stated lengths; `out` writable.
enum RtnetStatus rtnet_sample_offset(const struct RtnetModel *model,
                                     const float *acoustic,
                                     const uint32_t *token_ids,
                                     size_t n_frames,
                                     size_t user_end,
                                     const float *hz,
                                     size_t hz_len,
                                     size_t r_start,
                                     uint64_t seed,
                                     uint32_t pair_index,
                                     struct RtnetOffset *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RTNET_H */
