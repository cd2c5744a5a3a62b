#ifndef ROBUST_C_H
#define ROBUST_C_H

#include <stddef.h>

#if defined(RB_BUILDING_LIBRARY)
#define RB_API __attribute__((visibility("default")))
#else
#define RB_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rb_status {
  RB_OK = 0,
  RB_ERR_INVALID_ARGUMENT = 1,
  RB_ERR_DOMAIN = 2,
  RB_ERR_SHAPE_MISMATCH = 3,
  RB_ERR_NOT_CONVERGED = 4,
  RB_ERR_UNSUPPORTED = 5,
  RB_ERR_CONFIG = 6,
  RB_ERR_IO = 7,
  RB_ERR_INTERNAL = 8
} rb_status;

typedef struct rb_config rb_config;
typedef struct rb_tree rb_tree;
typedef struct rb_run_result rb_run_result;

typedef struct rb_evaluation {
  double gamma;
  double utility_leg;
  double penalty_leg;
  double divergence;
  double c_upper;
  double k_lower;
  int bound_upper_ok;
  int bound_lower_ok;
} rb_evaluation;

/* Message of the last failed call on this thread; empty after success. */
RB_API const char* rb_last_error(void);
RB_API const char* rb_status_name(rb_status status);

/* 0 restores the default (hardware concurrency). */
RB_API void rb_set_max_threads(unsigned n);
RB_API unsigned rb_max_threads(void);

RB_API rb_status rb_config_parse(const char* json_text, rb_config** out);
RB_API rb_status rb_config_load(const char* path, rb_config** out);
RB_API void rb_config_destroy(rb_config* config);

RB_API rb_status rb_tree_build(const rb_config* config, rb_tree** out);
RB_API void rb_tree_destroy(rb_tree* tree);
RB_API int rb_tree_n_steps(const rb_tree* tree);
RB_API size_t rb_tree_internal_count(const rb_tree* tree);
RB_API size_t rb_tree_leaf_count(const rb_tree* tree);

/* Total cost at the measure with conditional up-probabilities q (one per
   internal node, heap order). q == NULL means the reference measure. */
RB_API rb_status rb_evaluate(const rb_tree* tree, const rb_config* config, const double* q, size_t n,
                             rb_evaluation* out);

/* Minimizes with the config's run.method; q_out receives one probability per internal node. */
RB_API rb_status rb_optimize(const rb_tree* tree, const rb_config* config, double* q_out, size_t n,
                             double* gamma_star, double* min_atom);

/* Solves with the config's run.scheme and lattice; returns Y at the root. */
RB_API rb_status rb_bsde_y0(const rb_config* config, double* y0, size_t* truncated);

/* f*(x) for a divergence generator, h*(x) for a control penalty. */
RB_API rb_status rb_conjugate(const rb_config* config, double x, double* out);

/* Runs a subcommand as the CLI does. out_dir and run_overrides_json may be NULL.
   The status reports whether the call itself worked; the run's outcome is in
   rb_run_exit_code (0 ok, 1 config or runtime error, 2 failed verification rows). */
RB_API rb_status rb_run(const char* subcommand, const char* config_path, const char* out_dir,
                        const char* run_overrides_json, rb_run_result** out);
RB_API int rb_run_exit_code(const rb_run_result* result);
RB_API const char* rb_run_message(const rb_run_result* result);
RB_API size_t rb_run_file_count(const rb_run_result* result);
RB_API const char* rb_run_file(const rb_run_result* result, size_t index);
RB_API void rb_run_result_destroy(rb_run_result* result);

#ifdef __cplusplus
}
#endif

#endif
