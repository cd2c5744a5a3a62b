#include <cstdio>
#include <cstdlib>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "robust/robust_c.h"

namespace {

struct Common {
  std::string config;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "Experiment config (JSON)")->required();
  sub->add_option("--out", c.out, "Output directory (default: config output or .)");
}

unsigned threads_from_env() {
  const char* v = std::getenv("ROBUSTCTL_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  unsigned long n = std::strtoul(v, &end, 10);
  if (*end != '\0' || n == 0) {
    std::fprintf(stderr, "warning: ignoring ROBUSTCTL_THREADS='%s'\n", v);
    return 0;
  }
  return static_cast<unsigned>(n);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust utility experiments: evaluate, optimize, solve and verify."};
  app.require_subcommand(1);

  Common common;
  nlohmann::json overrides = nlohmann::json::object();

  std::string method, scheme, suite, lattice;
  double grid_step = 0.0, tol = 0.0;
  int max_iters = 0, steps = 0;

  auto* evaluate = app.add_subcommand("evaluate", "Total cost at one measure");
  add_common(evaluate, common);

  auto* optimize = app.add_subcommand("optimize", "Minimize the total cost over measures");
  add_common(optimize, common);
  optimize->add_option("--method", method, "brute, convex or dp")->check(CLI::IsMember({"brute", "convex", "dp"}));
  optimize->add_option("--grid-step", grid_step, "Brute-force grid step");
  optimize->add_option("--tol", tol, "Convex solver tolerance");
  optimize->add_option("--max-iters", max_iters, "Convex solver iteration cap");

  auto* bsde = app.add_subcommand("bsde", "Backward solve on a lattice");
  add_common(bsde, common);
  bsde->add_option("--scheme", scheme, "dp, euler or closed")->check(CLI::IsMember({"dp", "euler", "closed"}));
  bsde->add_option("--steps", steps, "Number of time steps");
  bsde->add_option("--lattice", lattice, "recombining or tree")->check(CLI::IsMember({"recombining", "tree"}));

  auto* convergence = app.add_subcommand("convergence", "Euler and dp against a reference value");
  add_common(convergence, common);

  auto* conjugate = app.add_subcommand("conjugate", "Conjugate of the penalty on a grid");
  add_common(conjugate, common);

  auto* verify = app.add_subcommand("verify", "Property suites");
  add_common(verify, common);
  verify->add_option("--suite", suite, "young, identities, bounds, bellman, optimality, equivalence, convergence or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (!method.empty()) overrides["method"] = method;
  if (optimize->count("--grid-step")) overrides["grid_step"] = grid_step;
  if (optimize->count("--tol")) overrides["tol"] = tol;
  if (optimize->count("--max-iters")) overrides["max_iters"] = max_iters;
  if (!scheme.empty()) overrides["scheme"] = scheme;
  if (bsde->count("--steps")) overrides["steps"] = steps;
  if (!lattice.empty()) overrides["lattice"] = lattice;
  if (!suite.empty()) overrides["suite"] = suite;

  rb_set_max_threads(threads_from_env());

  const std::string sub = app.get_subcommands().front()->get_name();
  const std::string over = overrides.empty() ? std::string() : overrides.dump();
  rb_run_result* result = nullptr;
  rb_status st = rb_run(sub.c_str(), common.config.c_str(), common.out.empty() ? nullptr : common.out.c_str(),
                        over.empty() ? nullptr : over.c_str(), &result);
  if (st != RB_OK) {
    std::fprintf(stderr, "error: %s\n", rb_last_error());
    return 1;
  }
  int code = rb_run_exit_code(result);
  if (code == 1) {
    std::fprintf(stderr, "error: %s\n", rb_run_message(result));
  } else {
    for (size_t i = 0; i < rb_run_file_count(result); ++i) std::printf("wrote %s\n", rb_run_file(result, i));
    std::printf("%s\n", rb_run_message(result));
  }
  rb_run_result_destroy(result);
  return code;
}
