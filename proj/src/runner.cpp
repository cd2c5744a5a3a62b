#include "robust/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "robust/csv.hpp"
#include "robust/error.hpp"
#include "robust/robust_optimizer.hpp"
#include "robust/verify.hpp"

namespace robust {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(ErrorCode::config, "config: " + path + ": " + what);
}

// Checks that depend on the subcommand, done before any computation.
void validate_for(std::string_view sub, const ExperimentConfig& cfg) {
  const auto& run = cfg.run;
  const bool tree_based = sub == "evaluate" || sub == "optimize" || (sub == "bsde" && run.lattice == "tree");
  const int steps = sub == "bsde" && run.steps ? *run.steps : cfg.model.n_steps;

  if (tree_based && steps > kMaxTreeSteps)
    bad(run.steps && sub == "bsde" ? "run.steps" : "model.n_steps",
        "at most " + std::to_string(kMaxTreeSteps) + " for the scenario tree");

  if (sub == "evaluate" && run.measure != "reference") {
    std::size_t need = (std::size_t{1} << cfg.model.n_steps) - 1;
    if (run.measure_values.size() != need)
      bad("run.measure_values", "expected " + std::to_string(need) + " values (one per internal node), got " +
                                    std::to_string(run.measure_values.size()));
  }

  if (sub == "optimize") {
    if (run.method == "convex" && !cfg.cost.fdiv()) bad("run.method", "convex needs an fdiv penalty");
    if (run.method == "dp" && cfg.cost.fdiv()) bad("run.method", "dp needs a consistent penalty");
    if (run.method == "brute") {
      std::size_t free = (std::size_t{1} << cfg.model.n_steps) - 1;
      if (free > kMaxBruteForceNodes)
        bad("model.n_steps", "brute force supports at most " + std::to_string(kMaxBruteForceNodes) + " free nodes");
    }
  }

  if (sub == "bsde" || sub == "convergence") {
    if (cfg.cost.fdiv()) bad("penalty.family", sub == "bsde" ? "bsde needs a consistent penalty"
                                                              : "convergence needs a consistent penalty");
    const bool recombining = sub == "convergence" || run.lattice == "recombining";
    if (recombining) {
      const auto& m = cfg.model;
      if (!m.utility.is_state_function()) bad("model.utility", "recombining lattice needs constant, affine or sine");
      if (!m.terminal.is_state_function()) bad("model.terminal", "recombining lattice needs constant, affine or sine");
      if (!m.discount.is_state_function()) bad("model.discount", "recombining lattice needs a constant discount");
    }
  }
  if (sub == "bsde" && steps > kMaxBsdeOutputSteps)
    bad(run.steps ? "run.steps" : "model.n_steps", "at most " + std::to_string(kMaxBsdeOutputSteps) + " for bsde output");
  if (sub == "bsde" && run.scheme == Scheme::closed_form) {
    const auto& p = cfg.cost.control_penalty();
    if (p.family() != ControlFamily::quadratic) bad("run.scheme", "closed needs the quadratic control penalty");
    const auto& d = cfg.model.discount;
    if (!(d.kind == NodeFunction::Kind::constant && d.a == 0.0)) bad("run.scheme", "closed needs zero discount");
  }
  if (sub == "conjugate" && cfg.cost.fdiv() && run.grid_from < 0.0)
    bad("run.grid_from", "conjugate grid of a divergence generator must start at >= 0");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Output {
 public:
  explicit Output(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    require(!ec, ErrorCode::io, "cannot create output directory '" + dir_.string() + "': " + ec.message());
  }

  std::ofstream open(const std::string& name) {
    fs::path p = dir_ / name;
    std::ofstream out(p, std::ios::binary);
    require(out.good(), ErrorCode::io, "cannot write '" + p.string() + "'");
    files_.push_back(p.string());
    return out;
  }

  std::vector<std::string>& files() { return files_; }

 private:
  fs::path dir_;
  std::vector<std::string> files_;
};

void check_written(std::ofstream& out, const std::string& name) {
  out.flush();
  require(out.good(), ErrorCode::io, "write failed for '" + name + "'");
}

std::string cell(double v) { return csv::number(v); }

// ---------------------------------------------------------------------------

std::string run_evaluate(const ExperimentConfig& cfg, Output& out) {
  auto tree = build_tree(cfg.model);
  const auto& run = cfg.run;
  CostArgument arg;
  if (run.measure == "reference") {
    if (cfg.cost.fdiv()) arg = reference_measure(tree);
    else arg = ControlProcess{std::vector<double>(tree.internal_count(), 0.0)};
  } else if (run.measure == "q") {
    MeasureSpec q{run.measure_values};
    if (cfg.cost.fdiv()) arg = q;
    else arg = control_from_measure(tree, q);
  } else {
    ControlProcess eta{run.measure_values};
    if (cfg.cost.fdiv()) arg = measure_from_control(tree, eta);
    else arg = eta;
  }
  auto r = total_cost(tree, arg, cfg.cost);

  auto f = out.open("evaluate.csv");
  csv::write_row(f, {"gamma", "utility_leg", "penalty_leg", "divergence", "c_upper", "k_lower", "bound_upper_ok",
                     "bound_lower_ok"});
  csv::write_row(f, {cell(r.gamma), cell(r.utility_leg), cell(r.penalty_leg), cell(r.divergence), cell(r.c_upper),
                     cell(r.k_lower), csv::boolean(r.bound_upper_ok), csv::boolean(r.bound_lower_ok)});
  check_written(f, "evaluate.csv");

  MeasureSpec q = cfg.cost.fdiv() ? std::get<MeasureSpec>(arg) : measure_from_control(tree, std::get<ControlProcess>(arg));
  auto density = density_from_measure(tree, q);
  auto t = out.open("tree.csv");
  write_tree_csv(t, tree, &density);
  check_written(t, "tree.csv");
  return "gamma=" + cell(r.gamma);
}

std::string run_optimize(const ExperimentConfig& cfg, Output& out) {
  auto tree = build_tree(cfg.model);
  const auto& run = cfg.run;
  OptimizationResult r;
  if (run.method == "brute") r = brute_force_min(tree, cfg.cost, run.grid_step, run.refinement_rounds);
  else if (run.method == "convex") r = convex_min_fdiv(tree, cfg.cost, run.tol, run.max_iters);
  else r = dp_min(tree, cfg.cost);

  auto f = out.open("optimize.csv");
  csv::write_row(f, {"node", "level", "path_index", "q_star", "gamma_star", "residual", "min_atom", "iterations",
                     "converged"});
  for (std::size_t v = 0; v < tree.internal_count(); ++v)
    csv::write_row(f, {std::to_string(v), std::to_string(ScenarioTree::level(v)),
                       std::to_string(ScenarioTree::path_index(v)), cell(r.measure.q[v]), cell(r.value),
                       cell(r.residual), cell(r.min_density_atom), std::to_string(r.iterations),
                       csv::boolean(r.converged)});
  check_written(f, "optimize.csv");
  return "gamma_star=" + cell(r.value) + " min_atom=" + cell(r.min_density_atom);
}

std::string run_bsde(const ExperimentConfig& cfg, Output& out) {
  TreeConfig model = cfg.model;
  if (cfg.run.steps) model.n_steps = *cfg.run.steps;
  const bool recombining = cfg.run.lattice == "recombining";
  Lattice lat = recombining ? make_recombining_lattice(model) : lattice_from_tree(build_tree(model));
  auto sol = solve_bsde(lat, cfg.cost, cfg.run.scheme, cfg.run.bsde);

  auto f = out.open("bsde.csv");
  csv::write_row(f, {"level", "index", "walk", "y", "z", "eta"});
  for (int k = 0; k <= lat.n_steps(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    for (std::size_t i = 0; i < lat.level_size(k); ++i) {
      bool last = k == lat.n_steps();
      csv::write_row(f, {std::to_string(k), std::to_string(i), cell(lat.walk(k, i)), cell(sol.y[kk][i]),
                         last ? "" : cell(sol.z[kk][i]), last ? "" : cell(sol.eta[kk][i])});
    }
  }
  check_written(f, "bsde.csv");
  return "scheme=" + scheme_name(sol.scheme) + " y0=" + cell(sol.y0()) + " truncated=" + std::to_string(sol.truncated);
}

std::string run_convergence(const ExperimentConfig& cfg, Output& out) {
  double reference = cfg.run.reference.value_or(-0.5 * cfg.model.horizon);
  auto rows = convergence_study(cfg.model, cfg.cost, cfg.run.n_list, reference, cfg.run.bsde);
  auto f = out.open("convergence.csv");
  csv::write_row(f, {"n", "y_euler", "y_dp", "reference", "error_euler", "error_dp", "ratio_euler", "ratio_dp"});
  for (const auto& r : rows)
    csv::write_row(f, {std::to_string(r.n), cell(r.y_euler), cell(r.y_dp), cell(r.reference), cell(r.error_euler),
                       cell(r.error_dp), cell(r.ratio_euler), cell(r.ratio_dp)});
  check_written(f, "convergence.csv");
  return std::to_string(rows.size()) + " rows";
}

std::string run_conjugate(const ExperimentConfig& cfg, Output& out) {
  const auto& run = cfg.run;
  auto f = out.open("conjugate.csv");
  auto x_at = [&](int i) { return run.grid_from + (run.grid_to - run.grid_from) * i / (run.grid_points - 1); };
  double worst = 0.0;
  if (cfg.cost.fdiv()) {
    const auto& g = cfg.cost.generator();
    csv::write_row(f, {"x", "closed_form", "numeric", "abs_diff"});
    for (int i = 0; i < run.grid_points; ++i) {
      double x = x_at(i);
      double num = numeric_legendre(g, x, 1e-12);
      auto cf = g.conjugate_closed_form(x);
      if (cf) worst = std::max(worst, std::abs(*cf - num));
      csv::write_row(f, {cell(x), cf ? cell(*cf) : "", cell(num), cf ? cell(std::abs(*cf - num)) : ""});
    }
  } else {
    const auto& h = cfg.cost.control_penalty();
    csv::write_row(f, {"x", "conjugate", "argsup"});
    for (int i = 0; i < run.grid_points; ++i) {
      double x = x_at(i);
      auto a = argsup_control(h, x, 1.0);
      csv::write_row(f, {cell(x), cell(h.conjugate(x)), cell(a.eta)});
    }
  }
  check_written(f, "conjugate.csv");
  return "max_abs_diff=" + cell(worst);
}

std::string run_verify(const ExperimentConfig& cfg, Output& out, int& exit_code) {
  VerifyOptions opt;
  opt.seed = cfg.model.seed;
  opt.young_samples = cfg.run.young_samples;
  opt.bound_samples = cfg.run.bound_samples;
  opt.random_instances = cfg.run.random_instances;
  auto report = verify_suite(cfg.run.suite, opt);
  auto f = out.open("verify.csv");
  write_verification_csv(f, report);
  check_written(f, "verify.csv");
  if (report.failed() > 0) exit_code = 2;
  return "suite=" + cfg.run.suite + " rows=" + std::to_string(report.rows.size()) +
         " passed=" + std::to_string(report.passed()) + " failed=" + std::to_string(report.failed());
}

}  // namespace

RunOutcome run(std::string_view subcommand, const std::string& config_path, const std::string& out_dir,
               std::string_view run_overrides) {
  RunOutcome outcome;
  try {
    const auto& subs = subcommand_names();
    require(std::find(subs.begin(), subs.end(), subcommand) != subs.end(), ErrorCode::invalid_argument,
            "unknown subcommand '" + std::string(subcommand) + "'");
    const std::string raw = read_file(config_path);
    ExperimentConfig cfg = parse_config(raw);
    apply_run_overrides(cfg, run_overrides);
    validate_for(subcommand, cfg);

    Output out(!out_dir.empty() ? out_dir : !cfg.output.empty() ? cfg.output : ".");
    const std::string sub(subcommand);
    {
      auto f = out.open(sub + ".config.json");
      f << raw;
      check_written(f, sub + ".config.json");
    }
    if (!run_overrides.empty()) {
      auto f = out.open(sub + ".overrides.json");
      f << run_overrides << '\n';
      check_written(f, sub + ".overrides.json");
    }

    if (sub == "evaluate") outcome.message = run_evaluate(cfg, out);
    else if (sub == "optimize") outcome.message = run_optimize(cfg, out);
    else if (sub == "bsde") outcome.message = run_bsde(cfg, out);
    else if (sub == "convergence") outcome.message = run_convergence(cfg, out);
    else if (sub == "conjugate") outcome.message = run_conjugate(cfg, out);
    else outcome.message = run_verify(cfg, out, outcome.exit_code);
    outcome.files = std::move(out.files());
  } catch (const std::exception& e) {
    outcome.exit_code = 1;
    outcome.message = e.what();
  }
  return outcome;
}

}  // namespace robust
