#ifndef CMDP_IRL_H
#define CMDP_IRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmdpStatus {
  CMDP_STATUS_OK = 0,
  CMDP_STATUS_NULL_POINTER = 1,
  CMDP_STATUS_INVALID_ARGUMENT = 2,
  CMDP_STATUS_INVALID_MODEL = 3,
  CMDP_STATUS_DIMENSION_MISMATCH = 4,
  CMDP_STATUS_INFEASIBLE = 5,
  CMDP_STATUS_HORIZON_MISMATCH = 6,
  CMDP_STATUS_PARSE = 7,
  CMDP_STATUS_IO = 8,
  CMDP_STATUS_BUFFER_TOO_SMALL = 9,
  CMDP_STATUS_PANIC = 10,
} CmdpStatus;

typedef struct CmdpDataset CmdpDataset;

typedef struct CmdpIrlResult CmdpIrlResult;

typedef struct CmdpModel CmdpModel;

typedef struct CmdpDims {
  size_t n_states;
  size_t n_actions;
  size_t reward_dim;
  size_t constraint_dim;
} CmdpDims;

typedef struct CmdpSolution {
  double lambda;
  double reward_value;
  double cost_value;
  bool feasible;
} CmdpSolution;

/**
 * Recovery settings. A negative `lambda_floor` disables the floor.
 */
typedef struct CmdpIrlOptions {
  double learning_rate;
  size_t max_iters;
  double tol;
  double lambda_floor;
  uint64_t seed;
} CmdpIrlOptions;

typedef struct CmdpIrlSummary {
  double lambda;
  double cost_value;
  size_t iterations;
  bool converged;
} CmdpIrlSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Owned by the
 * library and valid until the next call on the same thread.
 */
const char *cmdp_last_error(void);

/**
 * Static version string.
 */
const char *cmdp_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and must not be used afterwards.
 */
void cmdp_string_free(char *s);

/**
 * Parses a model from its JSON form (`n_states`, `n_actions`,
 * `transition[s][a][s']`, `p0`, `gamma`, `phi_r`, `phi_c`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CmdpStatus cmdp_model_from_json(const char *json, struct CmdpModel **out);

/**
 * Serializes a model; free the result with [`cmdp_string_free`].
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CmdpStatus cmdp_model_to_json(const struct CmdpModel *model, char **out);

/**
 * Builds the random 5x5 hill gridworld for `seed` with discount `gamma`.
 * The simplex-normalized ground truth is written to `w_r` (2 entries) and
 * `w_c` (4 entries) when those are non-null.
 *
 * # Safety
 * `out` must be writable; non-null weight buffers must hold `*_len` entries.
 */
enum CmdpStatus cmdp_gridworld_new(uint64_t seed,
                                   double gamma,
                                   struct CmdpModel **out,
                                   double *w_r,
                                   size_t w_r_len,
                                   double *w_c,
                                   size_t w_c_len);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum CmdpStatus cmdp_model_dims(const struct CmdpModel *model, struct CmdpDims *out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from this library and must not be used afterwards.
 */
void cmdp_model_free(struct CmdpModel *model);

/**
 * Solves the constrained problem for the given weights. `policy_out` is a
 * row-major `n_states x n_actions` buffer. When the budget cannot be met
 * the call returns `CMDP_STATUS_INFEASIBLE` but still fills both outputs
 * with the minimum-cost policy.
 *
 * # Safety
 * `model` must be a live handle; weight buffers must hold `*_len` entries;
 * `solution` must be writable and `policy_out` must hold `policy_len`.
 */
enum CmdpStatus cmdp_solve(const struct CmdpModel *model,
                           const double *w_r,
                           size_t w_r_len,
                           const double *w_c,
                           size_t w_c_len,
                           struct CmdpSolution *solution,
                           double *policy_out,
                           size_t policy_len);

/**
 * Samples `count` trajectories of length `horizon` under a row-major policy.
 *
 * # Safety
 * `model` must be a live handle; `policy` must hold `policy_len` entries;
 * `out` must be writable.
 */
enum CmdpStatus cmdp_dataset_generate(const struct CmdpModel *model,
                                      const double *policy,
                                      size_t policy_len,
                                      size_t horizon,
                                      size_t count,
                                      uint64_t seed,
                                      struct CmdpDataset **out);

/**
 * Parses the line-oriented dataset text format.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum CmdpStatus cmdp_dataset_parse(const char *source, struct CmdpDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle; `out` must be writable.
 */
enum CmdpStatus cmdp_dataset_to_text(const struct CmdpDataset *dataset, char **out);

/**
 * Number of trajectories; 0 for null.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t cmdp_dataset_len(const struct CmdpDataset *dataset);

/**
 * Trajectory length; 0 for null.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t cmdp_dataset_horizon(const struct CmdpDataset *dataset);

/**
 * # Safety
 * `dataset` must come from this library and must not be used afterwards.
 */
void cmdp_dataset_free(struct CmdpDataset *dataset);

struct CmdpIrlOptions cmdp_irl_default_options(void);

/**
 * Recovers reward and constraint weights from `dataset`. Null `options`
 * means [`cmdp_irl_default_options`]. The horizon is taken from the dataset.
 *
 * # Safety
 * `model` and `dataset` must be live handles; `options` must be null or
 * valid; `out` must be writable.
 */
enum CmdpStatus cmdp_irl_run(const struct CmdpModel *model,
                             const struct CmdpDataset *dataset,
                             const struct CmdpIrlOptions *options,
                             struct CmdpIrlResult **out);

/**
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum CmdpStatus cmdp_irl_result_summary(const struct CmdpIrlResult *result,
                                        struct CmdpIrlSummary *out);

/**
 * Copies the recovered weights into caller buffers.
 *
 * # Safety
 * `result` must be a live handle; buffers must hold `*_len` entries.
 */
enum CmdpStatus cmdp_irl_result_weights(const struct CmdpIrlResult *result,
                                        double *w_r,
                                        size_t w_r_len,
                                        double *w_c,
                                        size_t w_c_len);

/**
 * Copies the final policy, row-major.
 *
 * # Safety
 * `result` must be a live handle; `policy_out` must hold `policy_len`.
 */
enum CmdpStatus cmdp_irl_result_policy(const struct CmdpIrlResult *result,
                                       double *policy_out,
                                       size_t policy_len);

/**
 * Full result including the per-iteration history, as JSON.
 *
 * # Safety
 * `result` must be a live handle; `out` must be writable.
 */
enum CmdpStatus cmdp_irl_result_to_json(const struct CmdpIrlResult *result, char **out);

/**
 * # Safety
 * `result` must come from this library and must not be used afterwards.
 */
void cmdp_irl_result_free(struct CmdpIrlResult *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CMDP_IRL_H */
