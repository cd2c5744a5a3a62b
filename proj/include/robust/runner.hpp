#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "robust/bsde_solver.hpp"
#include "robust/cost_engine.hpp"
#include "robust/scenario_model.hpp"

namespace robust {

// The bsde and convergence subcommands keep every lattice level in memory.
inline constexpr int kMaxBsdeOutputSteps = 2000;
inline constexpr int kMaxConvergenceSteps = 5000;

// Subcommand-specific settings. Every key is optional in the JSON; the
// subcommand reads the ones it needs.
struct RunSettings {
  // evaluate
  std::string measure = "reference";  // "reference", "q" or "eta"
  std::vector<double> measure_values;

  // optimize
  std::string method = "convex";  // "brute", "convex" or "dp"
  double grid_step = 1e-2;
  int refinement_rounds = 3;
  double tol = 1e-10;
  int max_iters = 10000;

  // bsde / convergence
  Scheme scheme = Scheme::dp;
  std::string lattice = "recombining";  // or "tree"
  std::optional<int> steps;             // overrides model.n_steps
  BsdeOptions bsde;
  std::vector<int> n_list{25, 50, 100, 200};
  std::optional<double> reference;  // default -horizon / 2

  // conjugate
  double grid_from = 0.0;
  double grid_to = 20.0;
  int grid_points = 200;

  // verify
  std::string suite = "all";
  int young_samples = 10000;
  int bound_samples = 1000;
  int random_instances = 100;
};

struct ExperimentConfig {
  TreeConfig model;
  CostParams cost;
  std::string penalty = "entropy";
  RunSettings run;
  std::string output;
};

// Parses and validates a JSON document. Unknown keys and bad values throw
// ErrorCode::config with the dotted field path in the message.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::string& path);

// Applies a JSON object of run-block keys on top of the config, with the same
// validation as the file.
void apply_run_overrides(ExperimentConfig& config, std::string_view json_object);

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"evaluate", "optimize", "bsde",
                                              "convergence", "conjugate", "verify"};
  return names;
}

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 1 config or runtime error, 2 failed verification rows
  std::vector<std::string> files;
  std::string message;
};

// Loads the config, applies overrides, runs the subcommand and writes
// <subcommand>.csv plus <subcommand>.config.json into out_dir (or the config's
// output path, or the working directory). Never throws.
RunOutcome run(std::string_view subcommand, const std::string& config_path,
               const std::string& out_dir = {}, std::string_view run_overrides = {});

}  // namespace robust
