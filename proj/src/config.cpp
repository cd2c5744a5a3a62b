#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

#include <json.hpp>

#include "robust/error.hpp"
#include "robust/runner.hpp"
#include "robust/verify.hpp"

namespace robust {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  fail(ErrorCode::config, "config: " + path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void only_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) bad(path.empty() ? "<root>" : path, "must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items())
    if (!ok.count(key)) bad(join(path, key), "unknown key");
}

double number(const json& v, const std::string& path) {
  if (!v.is_number()) bad(path, "must be a number");
  double x = v.get<double>();
  if (!std::isfinite(x)) bad(path, "must be finite");
  return x;
}

long long integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) bad(path, "must be an integer");
  return v.get<long long>();
}

std::string string(const json& v, const std::string& path) {
  if (!v.is_string()) bad(path, "must be a string");
  return v.get<std::string>();
}

bool boolean(const json& v, const std::string& path) {
  if (!v.is_boolean()) bad(path, "must be true or false");
  return v.get<bool>();
}

std::vector<double> numbers(const json& v, const std::string& path) {
  if (!v.is_array()) bad(path, "must be an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) out.push_back(number(v[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

NodeFunction node_function(const json& v, const std::string& path) {
  if (v.is_number()) return NodeFunction::constant(number(v, path));
  if (!v.is_object()) bad(path, "must be a number or an object with a \"kind\"");
  if (!v.contains("kind")) bad(join(path, "kind"), "missing");
  const std::string kind = string(v["kind"], join(path, "kind"));
  if (kind == "constant") {
    only_keys(v, path, {"kind", "value"});
    if (!v.contains("value")) bad(join(path, "value"), "missing");
    return NodeFunction::constant(number(v["value"], join(path, "value")));
  }
  if (kind == "affine" || kind == "sine") {
    only_keys(v, path, {"kind", "a", "b"});
    double a = v.contains("a") ? number(v["a"], join(path, "a")) : 0.0;
    double b = v.contains("b") ? number(v["b"], join(path, "b")) : 0.0;
    return kind == "affine" ? NodeFunction::affine(a, b) : NodeFunction::sine(a, b);
  }
  if (kind == "array") {
    only_keys(v, path, {"kind", "values"});
    if (!v.contains("values")) bad(join(path, "values"), "missing");
    return NodeFunction::explicit_values(numbers(v["values"], join(path, "values")));
  }
  if (kind == "uniform") {
    only_keys(v, path, {"kind", "low", "high"});
    if (!v.contains("low")) bad(join(path, "low"), "missing");
    if (!v.contains("high")) bad(join(path, "high"), "missing");
    double lo = number(v["low"], join(path, "low"));
    double hi = number(v["high"], join(path, "high"));
    if (hi < lo) bad(join(path, "high"), "must be >= low");
    return NodeFunction::uniform(lo, hi);
  }
  bad(join(path, "kind"), "expected constant, affine, sine, array or uniform, got '" + kind + "'");
}

void parse_model(const json& m, ExperimentConfig& cfg) {
  only_keys(m, "model", {"n_steps", "horizon", "utility", "terminal", "discount", "seed"});
  auto& t = cfg.model;
  if (m.contains("n_steps")) {
    long long n = integer(m["n_steps"], "model.n_steps");
    if (n < 1 || n > kMaxLatticeSteps) bad("model.n_steps", "must be in [1, " + std::to_string(kMaxLatticeSteps) + "]");
    t.n_steps = static_cast<int>(n);
  }
  if (m.contains("horizon")) {
    t.horizon = number(m["horizon"], "model.horizon");
    if (!(t.horizon > 0.0)) bad("model.horizon", "must be > 0");
  }
  if (m.contains("utility")) t.utility = node_function(m["utility"], "model.utility");
  if (m.contains("terminal")) t.terminal = node_function(m["terminal"], "model.terminal");
  if (m.contains("discount")) {
    t.discount = node_function(m["discount"], "model.discount");
    const auto& d = t.discount;
    switch (d.kind) {
      case NodeFunction::Kind::constant:
      case NodeFunction::Kind::random:
        if (d.a < 0.0) bad("model.discount", "discount rate must be >= 0");
        break;
      case NodeFunction::Kind::array:
        for (double x : d.values)
          if (x < 0.0) bad("model.discount.values", "discount rates must be >= 0");
        break;
      default:
        bad("model.discount.kind", "discount must be constant, uniform or array so it stays nonnegative and bounded");
    }
  }
  if (m.contains("seed")) {
    long long s = integer(m["seed"], "model.seed");
    if (s < 0) bad("model.seed", "must be >= 0");
    t.seed = static_cast<std::uint64_t>(s);
  }
}

void parse_cost(const json& c, ExperimentConfig& cfg) {
  only_keys(c, "cost", {"alpha", "alpha_bar", "beta"});
  if (c.contains("alpha")) cfg.cost.alpha = number(c["alpha"], "cost.alpha");
  if (c.contains("alpha_bar")) cfg.cost.alpha_bar = number(c["alpha_bar"], "cost.alpha_bar");
  if (c.contains("beta")) {
    cfg.cost.beta = number(c["beta"], "cost.beta");
    if (!(cfg.cost.beta > 0.0)) bad("cost.beta", "must be > 0");
  }
}

void parse_penalty_block(const json& p, ExperimentConfig& cfg) {
  only_keys(p, "penalty", {"family", "name", "power", "knots_x", "knots_f", "knots_h", "kappa1", "kappa2"});
  if (!p.contains("family")) bad("penalty.family", "missing");
  if (!p.contains("name")) bad("penalty.name", "missing");
  const std::string family = string(p["family"], "penalty.family");
  const std::string name = string(p["name"], "penalty.name");
  auto reject = [&](std::initializer_list<const char*> keys) {
    for (const char* k : keys)
      if (p.contains(k)) bad(join("penalty", k), "not used by " + family + "/" + name);
  };

  try {
    if (family == "fdiv") {
      reject({"knots_h", "kappa1", "kappa2"});
      GeneratorSpec spec;
      if (name == "entropy" || name == "quadratic") {
        reject({"power", "knots_x", "knots_f"});
        cfg.penalty = name;
        cfg.cost.penalty = parse_divergence_generator(name);
        return;
      }
      if (name == "power") {
        reject({"knots_x", "knots_f"});
        if (!p.contains("power")) bad("penalty.power", "missing");
        spec.family = DivergenceFamily::power;
        spec.power = number(p["power"], "penalty.power");
        if (!(spec.power > 1.0)) bad("penalty.power", "must be > 1");
      } else if (name == "tabulated") {
        reject({"power"});
        if (!p.contains("knots_x")) bad("penalty.knots_x", "missing");
        if (!p.contains("knots_f")) bad("penalty.knots_f", "missing");
        spec.family = DivergenceFamily::tabulated;
        spec.knots_x = numbers(p["knots_x"], "penalty.knots_x");
        spec.knots_f = numbers(p["knots_f"], "penalty.knots_f");
      } else {
        bad("penalty.name", "expected entropy, quadratic, power or tabulated, got '" + name + "'");
      }
      auto g = make_divergence_generator(spec);
      cfg.penalty = g.name();
      cfg.cost.penalty = std::move(g);
      return;
    }
    if (family == "consistent") {
      reject({"power", "knots_f"});
      ControlSpec spec;
      if (name == "quadratic" || name == "quartic") {
        reject({"knots_x", "knots_h", "kappa1", "kappa2"});
        spec.family = name == "quadratic" ? ControlFamily::quadratic : ControlFamily::quartic;
      } else if (name == "tabulated") {
        for (const char* k : {"knots_x", "knots_h", "kappa1", "kappa2"})
          if (!p.contains(k)) bad(join("penalty", k), "missing");
        spec.family = ControlFamily::tabulated;
        spec.knots_x = numbers(p["knots_x"], "penalty.knots_x");
        spec.knots_h = numbers(p["knots_h"], "penalty.knots_h");
        spec.kappa1 = number(p["kappa1"], "penalty.kappa1");
        spec.kappa2 = number(p["kappa2"], "penalty.kappa2");
      } else {
        bad("penalty.name", "expected quadratic, quartic or tabulated, got '" + name + "'");
      }
      auto h = make_control_penalty(spec);
      cfg.penalty = h.name();
      cfg.cost.penalty = std::move(h);
      return;
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    bad("penalty", e.what());
  }
  bad("penalty.family", "expected fdiv or consistent, got '" + family + "'");
}

void parse_run(const json& r, RunSettings& run, const std::string& path) {
  only_keys(r, path,
            {"measure", "measure_values", "method", "grid_step", "refinement_rounds", "tol", "max_iters", "scheme",
             "lattice", "steps", "driver_beta_scaling", "n_list", "reference", "grid_from", "grid_to",
             "grid_points", "suite", "young_samples", "bound_samples", "random_instances"});
  auto key = [&](const char* k) { return join(path, k); };
  auto positive_int = [&](const char* k, int limit) {
    long long v = integer(r[k], key(k));
    if (v < 1 || v > limit) bad(key(k), "must be in [1, " + std::to_string(limit) + "]");
    return static_cast<int>(v);
  };

  if (r.contains("measure")) {
    run.measure = string(r["measure"], key("measure"));
    if (run.measure != "reference" && run.measure != "q" && run.measure != "eta")
      bad(key("measure"), "expected reference, q or eta");
  }
  if (r.contains("measure_values")) run.measure_values = numbers(r["measure_values"], key("measure_values"));
  if (run.measure != "reference" && run.measure_values.empty())
    bad(key("measure_values"), "required when measure is " + run.measure);

  if (r.contains("method")) {
    run.method = string(r["method"], key("method"));
    if (run.method != "brute" && run.method != "convex" && run.method != "dp")
      bad(key("method"), "expected brute, convex or dp");
  }
  if (r.contains("grid_step")) {
    run.grid_step = number(r["grid_step"], key("grid_step"));
    if (!(run.grid_step > 0.0 && run.grid_step < 0.5)) bad(key("grid_step"), "must be in (0, 0.5)");
  }
  if (r.contains("refinement_rounds")) {
    long long v = integer(r["refinement_rounds"], key("refinement_rounds"));
    if (v < 0 || v > 10) bad(key("refinement_rounds"), "must be in [0, 10]");
    run.refinement_rounds = static_cast<int>(v);
  }
  if (r.contains("tol")) {
    run.tol = number(r["tol"], key("tol"));
    if (!(run.tol > 0.0)) bad(key("tol"), "must be > 0");
  }
  if (r.contains("max_iters")) run.max_iters = positive_int("max_iters", 100000000);

  if (r.contains("scheme")) {
    std::string s = string(r["scheme"], key("scheme"));
    if (s == "dp") run.scheme = Scheme::dp;
    else if (s == "euler") run.scheme = Scheme::euler;
    else if (s == "closed") run.scheme = Scheme::closed_form;
    else bad(key("scheme"), "expected dp, euler or closed");
  }
  if (r.contains("lattice")) {
    run.lattice = string(r["lattice"], key("lattice"));
    if (run.lattice != "recombining" && run.lattice != "tree") bad(key("lattice"), "expected recombining or tree");
  }
  if (r.contains("steps")) run.steps = positive_int("steps", kMaxLatticeSteps);
  if (r.contains("driver_beta_scaling"))
    run.bsde.driver_beta_scaling = boolean(r["driver_beta_scaling"], key("driver_beta_scaling"));
  if (r.contains("n_list")) {
    const auto& a = r["n_list"];
    if (!a.is_array() || a.empty()) bad(key("n_list"), "must be a nonempty array of integers");
    run.n_list.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::string p = key("n_list") + "[" + std::to_string(i) + "]";
      long long n = integer(a[i], p);
      if (n < 1 || n > kMaxConvergenceSteps) bad(p, "must be in [1, " + std::to_string(kMaxConvergenceSteps) + "]");
      run.n_list.push_back(static_cast<int>(n));
    }
  }
  if (r.contains("reference")) run.reference = number(r["reference"], key("reference"));

  if (r.contains("grid_from")) run.grid_from = number(r["grid_from"], key("grid_from"));
  if (r.contains("grid_to")) run.grid_to = number(r["grid_to"], key("grid_to"));
  if (!(run.grid_to > run.grid_from)) bad(key("grid_to"), "must exceed grid_from");
  if (r.contains("grid_points")) {
    run.grid_points = positive_int("grid_points", 1000000);
    if (run.grid_points < 2) bad(key("grid_points"), "must be >= 2");
  }

  if (r.contains("suite")) {
    run.suite = string(r["suite"], key("suite"));
    const auto& names = suite_names();
    if (run.suite != "all" && std::find(names.begin(), names.end(), run.suite) == names.end())
      bad(key("suite"), "unknown suite '" + run.suite + "'");
  }
  if (r.contains("young_samples")) run.young_samples = positive_int("young_samples", 10000000);
  if (r.contains("bound_samples")) run.bound_samples = positive_int("bound_samples", 10000000);
  if (r.contains("random_instances")) run.random_instances = positive_int("random_instances", 1000000);
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::config, "config: malformed JSON in " + what + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text) {
  json doc = parse_json(json_text, "config");
  only_keys(doc, "", {"model", "cost", "penalty", "run", "output"});
  ExperimentConfig cfg;
  if (doc.contains("model")) parse_model(doc["model"], cfg);
  if (doc.contains("cost")) parse_cost(doc["cost"], cfg);
  if (!doc.contains("penalty")) bad("penalty", "missing");
  parse_penalty_block(doc["penalty"], cfg);
  if (doc.contains("run")) parse_run(doc["run"], cfg.run, "run");
  if (doc.contains("output")) cfg.output = string(doc["output"], "output");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_run_overrides(ExperimentConfig& config, std::string_view json_object) {
  if (json_object.empty()) return;
  parse_run(parse_json(json_object, "overrides"), config.run, "run");
}

}  // namespace robust
