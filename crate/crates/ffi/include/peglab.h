#ifndef PEGLAB_H
#define PEGLAB_H

/* Generated by cbindgen from the peglab-ffi crate; regenerate with the header_matches_generated test instead of editing. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of a C API call.
 */
typedef enum {
  PEGLAB_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  PEGLAB_STATUS_NULL_POINTER = 1,
  /**
   * An argument failed validation (encoding, range, or enum value).
   */
  PEGLAB_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Configuration text or file was rejected.
   */
  PEGLAB_STATUS_CONFIG_ERROR = 3,
  /**
   * Filesystem read or write failed.
   */
  PEGLAB_STATUS_IO_ERROR = 4,
  /**
   * Simulation, training, or evaluation reported an error.
   */
  PEGLAB_STATUS_RUNTIME_ERROR = 5,
  /**
   * Output buffer capacity is below the required length.
   */
  PEGLAB_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * An internal invariant failed; the handle should be discarded.
   */
  PEGLAB_STATUS_PANIC = 7,
} PeglabStatus;

/**
 * Task selector for environment sessions and evaluation.
 */
typedef enum {
  PEGLAB_TASK_INSERT = 0,
  PEGLAB_TASK_EXTRACT = 1,
} PeglabTask;

/**
 * Opaque run configuration.
 */
typedef struct PeglabConfig PeglabConfig;

/**
 * Opaque environment session: one object, one task, one seed.
 */
typedef struct PeglabEnv PeglabEnv;

/**
 * Opaque tactile feature model.
 */
typedef struct PeglabPca PeglabPca;

/**
 * Opaque policy checkpoint with its stored metadata.
 */
typedef struct PeglabPolicy PeglabPolicy;

/**
 * Outcome of one environment step.
 */
typedef struct {
  /**
   * Step reward: negative squared pose distance to the goal.
   */
  double reward;
  /**
   * Total contact reaction magnitude during the step.
   */
  double contact_force;
  bool done;
  bool success;
} PeglabStepInfo;

/**
 * Aggregate of one evaluation run.
 */
typedef struct {
  size_t trials;
  size_t successes;
  double rate;
  /**
   * Wilson score interval around the success rate.
   */
  double ci_lo;
  double ci_hi;
  /**
   * Mean per-trial peak contact force over the leading successful trials;
   * infinity when no trial succeeded.
   */
  double mean_max_force;
  size_t force_trials_used;
  /**
   * True when fewer successful trials existed than the force aggregate
   * asks for.
   */
  bool force_flagged;
} PeglabEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; never freed.
 */
const char *peglab_version(void);

/**
 * Message of the calling thread's most recent failure. Borrowed; valid
 * until the next failing call on this thread. Never null.
 */
const char *peglab_last_error(void);

/**
 * Releases a string returned by this API. Accepts null.
 */
void peglab_string_free(char *s);

/**
 * Default configuration.
 */
PeglabConfig *peglab_config_default(void);

/**
 * Parses a configuration file of `key = value` lines.
 */
PeglabConfig *peglab_config_from_file(const char *path);

/**
 * Parses configuration text of `key = value` lines.
 */
PeglabConfig *peglab_config_from_text(const char *text);

/**
 * Canonical text form of a configuration; caller frees.
 */
char *peglab_config_to_text(const PeglabConfig *cfg);

/**
 * Hex fingerprint of a configuration; caller frees.
 */
char *peglab_config_digest(const PeglabConfig *cfg);

/**
 * Releases a configuration. Accepts null.
 */
void peglab_config_free(PeglabConfig *cfg);

/**
 * Fits the tactile feature model under a configuration.
 */
PeglabPca *peglab_pca_calibrate(const PeglabConfig *cfg);

/**
 * Loads a persisted tactile feature model.
 */
PeglabPca *peglab_pca_load(const char *path);

/**
 * Persists a tactile feature model.
 */
PeglabStatus peglab_pca_save(const PeglabPca *pca, const char *path);

/**
 * Input (raw flow) and output (component) dimensions of a feature model.
 */
PeglabStatus peglab_pca_dims(const PeglabPca *pca, size_t *input_dim, size_t *output_dim);

/**
 * Releases a feature model. Accepts null.
 */
void peglab_pca_free(PeglabPca *pca);

/**
 * Loads a policy checkpoint; the configuration must match the one the
 * checkpoint was trained under.
 */
PeglabPolicy *peglab_policy_load(const char *path, const PeglabConfig *cfg);

/**
 * Policy kind label ("sac", "sl", or "residual"); caller frees.
 */
char *peglab_policy_kind(const PeglabPolicy *policy);

/**
 * Releases a policy. Accepts null.
 */
void peglab_policy_free(PeglabPolicy *policy);

/**
 * Opens an environment session on one object. Masked modalities are zeroed
 * in every observation, matching ablation evaluations.
 */
PeglabEnv *peglab_env_new(const PeglabConfig *cfg,
                          const PeglabPca *pca,
                          const char *object_id,
                          PeglabTask task,
                          uint64_t seed,
                          bool mask_vision,
                          bool mask_tactile);

/**
 * Observation shape: the vector length and image height/width. Image
 * dimensions are zero when the session produces no image.
 */
PeglabStatus peglab_env_obs_dims(const PeglabEnv *env,
                                 size_t *vec_dim,
                                 size_t *img_h,
                                 size_t *img_w);

/**
 * Per-component action half-widths, environment units.
 */
PeglabStatus peglab_env_action_bounds(const PeglabEnv *env,
                                      double *buf,
                                      size_t cap,
                                      size_t *written);

/**
 * Starts a new episode.
 */
PeglabStatus peglab_env_reset(PeglabEnv *env);

/**
 * Copies the current vector observation.
 */
PeglabStatus peglab_env_obs_vec(const PeglabEnv *env, double *buf, size_t cap, size_t *written);

/**
 * Copies the current image observation: three color planes of height by
 * width values in [0, 1]. Length zero when the session has no image.
 */
PeglabStatus peglab_env_obs_image(const PeglabEnv *env, float *buf, size_t cap, size_t *written);

/**
 * Applies a six-component action (three translations, three rotations);
 * components beyond the per-axis bounds are clipped.
 */
PeglabStatus peglab_env_step(PeglabEnv *env, const double *action, PeglabStepInfo *info);

/**
 * Releases an environment session. Accepts null.
 */
void peglab_env_free(PeglabEnv *env);

/**
 * Runs the policy on the environment's current observation and writes a
 * step-ready six-component action.
 */
PeglabStatus peglab_policy_act(const PeglabPolicy *policy, const PeglabEnv *env, double *action);

/**
 * Evaluates a policy over repeated trials on a comma-separated object list,
 * using the modality masks stored in the policy checkpoint.
 */
PeglabStatus peglab_evaluate(const PeglabConfig *cfg,
                             const PeglabPca *pca,
                             const PeglabPolicy *policy,
                             const char *objects,
                             PeglabTask task,
                             PeglabEvalSummary *summary);

/**
 * Wilson score interval for `successes` out of `trials` at normal quantile
 * `z`.
 */
PeglabStatus peglab_wilson_interval(size_t successes,
                                    size_t trials,
                                    double z,
                                    double *lo,
                                    double *hi);

/**
 * Worst relative error between analytic gradients and central finite
 * differences across all layer types; healthy builds sit well below 1e-4.
 */
PeglabStatus peglab_gradcheck_worst(uint64_t seed, double *worst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PEGLAB_H */
