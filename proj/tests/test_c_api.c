#include <math.h>
#include <stdio.h>
#include <string.h>

#include "robust/robust_c.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static const char* kTwoPoint =
    "{\"model\": {\"n_steps\": 1, \"terminal\": {\"kind\": \"array\", \"values\": [0, 1]}},"
    " \"cost\": {\"alpha\": 0, \"alpha_bar\": 1, \"beta\": 1},"
    " \"penalty\": {\"family\": \"fdiv\", \"name\": \"entropy\"},"
    " \"run\": {\"tol\": 1e-12}}";

int main(void) {
  rb_config* cfg = NULL;
  EXPECT(rb_config_parse(kTwoPoint, &cfg) == RB_OK);

  rb_tree* tree = NULL;
  EXPECT(rb_tree_build(cfg, &tree) == RB_OK);
  EXPECT(rb_tree_n_steps(tree) == 1);
  EXPECT(rb_tree_internal_count(tree) == 1);
  EXPECT(rb_tree_leaf_count(tree) == 2);

  rb_evaluation ev;
  EXPECT(rb_evaluate(tree, cfg, NULL, 0, &ev) == RB_OK);
  EXPECT(fabs(ev.gamma - 0.5) < 1e-15);
  double q = 0.75;
  EXPECT(rb_evaluate(tree, cfg, &q, 1, &ev) == RB_OK);
  EXPECT(fabs(ev.gamma - 0.3808120359) < 1e-9);
  EXPECT(rb_evaluate(tree, cfg, &q, 2, &ev) == RB_ERR_SHAPE_MISMATCH);
  EXPECT(strstr(rb_last_error(), "expected") != NULL);

  double q_star = 0.0, gamma_star = 0.0, min_atom = 0.0;
  EXPECT(rb_optimize(tree, cfg, &q_star, 1, &gamma_star, &min_atom) == RB_OK);
  EXPECT(fabs(gamma_star + log((1.0 + exp(-1.0)) / 2.0)) < 1e-10);
  EXPECT(min_atom > 0.0);

  double fstar = 0.0;
  EXPECT(rb_conjugate(cfg, 1.0, &fstar) == RB_OK);
  EXPECT(fabs(fstar - 1.0) < 1e-15);

  double y0 = 0.0;
  EXPECT(rb_bsde_y0(cfg, &y0, NULL) != RB_OK);

  rb_config* bad = NULL;
  EXPECT(rb_config_parse("{\"penalty\": 3}", &bad) == RB_ERR_CONFIG);
  EXPECT(bad == NULL);
  EXPECT(strstr(rb_last_error(), "penalty") != NULL);
  EXPECT(rb_config_load("/nonexistent.json", &bad) != RB_OK);
  EXPECT(rb_tree_build(NULL, &tree) == RB_ERR_INVALID_ARGUMENT);
  EXPECT(strcmp(rb_status_name(RB_ERR_CONFIG), "config") == 0);

  rb_config* walk = NULL;
  EXPECT(rb_config_parse("{\"model\": {\"n_steps\": 100, \"terminal\": {\"kind\": \"affine\", \"a\": 0, \"b\": 1}},"
                         " \"penalty\": {\"family\": \"consistent\", \"name\": \"quadratic\"},"
                         " \"cost\": {\"alpha\": 0}, \"run\": {\"scheme\": \"closed\"}}",
                         &walk) == RB_OK);
  size_t truncated = 7;
  EXPECT(rb_bsde_y0(walk, &y0, &truncated) == RB_OK);
  EXPECT(fabs(y0 + 100.0 * log(cosh(0.1))) < 1e-12);
  EXPECT(truncated == 0);

  rb_run_result* res = NULL;
  EXPECT(rb_run("nope", "/nonexistent.json", NULL, NULL, &res) == RB_OK);
  EXPECT(rb_run_exit_code(res) == 1);
  EXPECT(rb_run_file_count(res) == 0);
  EXPECT(rb_run_file(res, 0) == NULL);
  rb_run_result_destroy(res);

  rb_set_max_threads(1);
  EXPECT(rb_max_threads() == 1);

  rb_config_destroy(walk);
  rb_tree_destroy(tree);
  rb_config_destroy(cfg);
  if (failures) fprintf(stderr, "%d failures\n", failures);
  return failures ? 1 : 0;
}
