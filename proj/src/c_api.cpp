#include "robust/robust_c.h"

#include <algorithm>
#include <exception>
#include <new>
#include <string>

#include "robust/bsde_solver.hpp"
#include "robust/error.hpp"
#include "robust/parallel.hpp"
#include "robust/robust_optimizer.hpp"
#include "robust/runner.hpp"

struct rb_config {
  robust::ExperimentConfig config;
};

struct rb_tree {
  robust::ScenarioTree tree;
};

struct rb_run_result {
  robust::RunOutcome outcome;
};

namespace {

thread_local std::string last_error;

rb_status to_status(robust::ErrorCode code) {
  using robust::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_argument: return RB_ERR_INVALID_ARGUMENT;
    case ErrorCode::domain: return RB_ERR_DOMAIN;
    case ErrorCode::shape_mismatch: return RB_ERR_SHAPE_MISMATCH;
    case ErrorCode::not_converged: return RB_ERR_NOT_CONVERGED;
    case ErrorCode::unsupported: return RB_ERR_UNSUPPORTED;
    case ErrorCode::config: return RB_ERR_CONFIG;
    case ErrorCode::io: return RB_ERR_IO;
  }
  return RB_ERR_INTERNAL;
}

template <class F>
rb_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return RB_OK;
  } catch (const robust::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RB_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RB_ERR_INTERNAL;
  }
}

void need(const void* p, const char* name) {
  robust::require(p != nullptr, robust::ErrorCode::invalid_argument, std::string(name) + " is null");
}

}  // namespace

extern "C" {

RB_API const char* rb_last_error(void) { return last_error.c_str(); }

RB_API const char* rb_status_name(rb_status status) {
  switch (status) {
    case RB_OK: return "ok";
    case RB_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RB_ERR_DOMAIN: return "domain";
    case RB_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case RB_ERR_NOT_CONVERGED: return "not_converged";
    case RB_ERR_UNSUPPORTED: return "unsupported";
    case RB_ERR_CONFIG: return "config";
    case RB_ERR_IO: return "io";
    case RB_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

RB_API void rb_set_max_threads(unsigned n) { robust::set_max_threads(n); }
RB_API unsigned rb_max_threads(void) { return robust::max_threads(); }

RB_API rb_status rb_config_parse(const char* json_text, rb_config** out) {
  return guard([&] {
    need(json_text, "json_text");
    need(out, "out");
    *out = new rb_config{robust::parse_config(json_text)};
  });
}

RB_API rb_status rb_config_load(const char* path, rb_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new rb_config{robust::load_config(path)};
  });
}

RB_API void rb_config_destroy(rb_config* config) { delete config; }

RB_API rb_status rb_tree_build(const rb_config* config, rb_tree** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = new rb_tree{robust::build_tree(config->config.model)};
  });
}

RB_API void rb_tree_destroy(rb_tree* tree) { delete tree; }
RB_API int rb_tree_n_steps(const rb_tree* tree) { return tree ? tree->tree.n_steps() : 0; }
RB_API size_t rb_tree_internal_count(const rb_tree* tree) { return tree ? tree->tree.internal_count() : 0; }
RB_API size_t rb_tree_leaf_count(const rb_tree* tree) { return tree ? tree->tree.leaf_count() : 0; }

RB_API rb_status rb_evaluate(const rb_tree* tree, const rb_config* config, const double* q, size_t n,
                             rb_evaluation* out) {
  return guard([&] {
    need(tree, "tree");
    need(config, "config");
    need(out, "out");
    const auto& t = tree->tree;
    const auto& params = config->config.cost;
    robust::MeasureSpec measure = robust::reference_measure(t);
    if (q) {
      robust::require(n == t.internal_count(), robust::ErrorCode::shape_mismatch,
                      "expected " + std::to_string(t.internal_count()) + " probabilities");
      measure.q.assign(q, q + n);
    }
    robust::CostArgument arg = measure;
    if (!params.fdiv()) arg = robust::control_from_measure(t, measure);
    auto r = robust::total_cost(t, arg, params);
    *out = {r.gamma, r.utility_leg, r.penalty_leg, r.divergence, r.c_upper, r.k_lower,
            r.bound_upper_ok ? 1 : 0, r.bound_lower_ok ? 1 : 0};
  });
}

RB_API rb_status rb_optimize(const rb_tree* tree, const rb_config* config, double* q_out, size_t n,
                             double* gamma_star, double* min_atom) {
  return guard([&] {
    need(tree, "tree");
    need(config, "config");
    const auto& t = tree->tree;
    const auto& cfg = config->config;
    robust::OptimizationResult r;
    if (cfg.run.method == "brute") r = robust::brute_force_min(t, cfg.cost, cfg.run.grid_step, cfg.run.refinement_rounds);
    else if (cfg.run.method == "convex") r = robust::convex_min_fdiv(t, cfg.cost, cfg.run.tol, cfg.run.max_iters);
    else r = robust::dp_min(t, cfg.cost);
    if (q_out) {
      robust::require(n == r.measure.q.size(), robust::ErrorCode::shape_mismatch,
                      "expected room for " + std::to_string(r.measure.q.size()) + " probabilities");
      std::copy(r.measure.q.begin(), r.measure.q.end(), q_out);
    }
    if (gamma_star) *gamma_star = r.value;
    if (min_atom) *min_atom = r.min_density_atom;
  });
}

RB_API rb_status rb_bsde_y0(const rb_config* config, double* y0, size_t* truncated) {
  return guard([&] {
    need(config, "config");
    need(y0, "y0");
    const auto& cfg = config->config;
    auto model = cfg.model;
    if (cfg.run.steps) model.n_steps = *cfg.run.steps;
    robust::Lattice lat = cfg.run.lattice == "recombining" ? robust::make_recombining_lattice(model)
                                                            : robust::lattice_from_tree(robust::build_tree(model));
    auto sol = robust::solve_bsde(lat, cfg.cost, cfg.run.scheme, cfg.run.bsde);
    *y0 = sol.y0();
    if (truncated) *truncated = sol.truncated;
  });
}

RB_API rb_status rb_conjugate(const rb_config* config, double x, double* out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    const auto& params = config->config.cost;
    *out = params.fdiv() ? robust::conjugate_value(params.generator(), x) : params.control_penalty().conjugate(x);
  });
}

RB_API rb_status rb_run(const char* subcommand, const char* config_path, const char* out_dir,
                        const char* run_overrides_json, rb_run_result** out) {
  return guard([&] {
    need(subcommand, "subcommand");
    need(config_path, "config_path");
    need(out, "out");
    *out = new rb_run_result{robust::run(subcommand, config_path, out_dir ? out_dir : "",
                                         run_overrides_json ? run_overrides_json : "")};
  });
}

RB_API int rb_run_exit_code(const rb_run_result* result) { return result ? result->outcome.exit_code : 1; }
RB_API const char* rb_run_message(const rb_run_result* result) {
  return result ? result->outcome.message.c_str() : "";
}
RB_API size_t rb_run_file_count(const rb_run_result* result) { return result ? result->outcome.files.size() : 0; }
RB_API const char* rb_run_file(const rb_run_result* result, size_t index) {
  if (!result || index >= result->outcome.files.size()) return nullptr;
  return result->outcome.files[index].c_str();
}
RB_API void rb_run_result_destroy(rb_run_result* result) { delete result; }

}  // extern "C"
