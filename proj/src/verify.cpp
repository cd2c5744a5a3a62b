#include "robust/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "robust/bsde_solver.hpp"
#include "robust/cost_engine.hpp"
#include "robust/csv.hpp"
#include "robust/error.hpp"
#include "robust/penalty_kernel.hpp"
#include "robust/robust_optimizer.hpp"
#include "robust/sampling.hpp"
#include "robust/scenario_model.hpp"

namespace robust {

std::size_t VerificationReport::passed() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.pass; }));
}

std::size_t VerificationReport::failed() const { return rows.size() - passed(); }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Independent stream per check, so adding or reordering checks never shifts
// the draws of another one.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed + h + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d", i);
  return buf;
}

std::string id(const std::string& prefix, int i) { return prefix + "/" + id(i); }

class Sink {
 public:
  explicit Sink(std::vector<VerificationRow>& rows) : rows_(rows) {}

  // lhs <= rhs up to tol.
  void at_most(const std::string& check, const std::string& inst, double lhs, double rhs, double tol) {
    double s = rhs - lhs;
    rows_.push_back({check, inst, lhs, rhs, s, s >= -tol});
  }
  void equal(const std::string& check, const std::string& inst, double lhs, double rhs, double tol) {
    double s = rhs - lhs;
    rows_.push_back({check, inst, lhs, rhs, s, std::abs(s) <= tol});
  }
  void custom(const std::string& check, const std::string& inst, double lhs, double rhs, bool pass) {
    rows_.push_back({check, inst, lhs, rhs, rhs - lhs, pass});
  }
  void flag(const std::string& check, const std::string& inst, bool ok) {
    rows_.push_back({check, inst, ok ? 1.0 : 0.0, 1.0, ok ? 0.0 : -1.0, ok});
  }

 private:
  std::vector<VerificationRow>& rows_;
};

double rel_tol(double scale, double tol) { return tol * (1.0 + std::abs(scale)); }

CostParams params_for(const std::string& penalty, double alpha = 1.0, double alpha_bar = 1.0,
                      double beta = 1.0) {
  CostParams p;
  p.alpha = alpha;
  p.alpha_bar = alpha_bar;
  p.beta = beta;
  p.penalty = parse_penalty(penalty);
  return p;
}

CostArgument random_argument(const ScenarioTree& tree, const CostParams& params, Rng& rng, double lo = 0.0) {
  if (params.fdiv()) return random_measure(tree, rng, lo);
  return random_control(tree, rng, 1.0 / tree.sqrt_dt());
}

MeasureSpec as_measure(const ScenarioTree& tree, const CostArgument& arg) {
  if (auto* q = std::get_if<MeasureSpec>(&arg)) return *q;
  return measure_from_control(tree, std::get<ControlProcess>(arg));
}

double expect_level(const std::vector<double>& values, int k) {
  const std::size_t off = ScenarioTree::level_offset(k);
  const std::size_t n = std::size_t{1} << k;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += values[off + i];
  return s / static_cast<double>(n);
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Nonnegative data and bounded discounting, so Gamma >= 0 for every penalty.
ScenarioTree bound_fixture(std::uint64_t seed) {
  TreeConfig c;
  c.n_steps = 3;
  c.horizon = 1.0;
  c.utility = NodeFunction::uniform(0.5, 1.5);
  c.terminal = NodeFunction::uniform(1.0, 3.0);
  c.discount = NodeFunction::uniform(0.0, 0.5);
  c.seed = stream_seed(seed, "bound-fixture");
  return build_tree(c);
}

ScenarioTree mixed_fixture(std::uint64_t seed, int n_steps, const std::string& tag) {
  TreeConfig c;
  c.n_steps = n_steps;
  c.horizon = 1.0;
  c.utility = NodeFunction::uniform(0.0, 1.0);
  c.terminal = NodeFunction::uniform(-1.0, 2.0);
  c.discount = NodeFunction::uniform(0.0, 0.5);
  c.seed = stream_seed(seed, tag);
  return build_tree(c);
}

ScenarioTree two_point(double up, double down) {
  TreeConfig c;
  c.n_steps = 1;
  c.horizon = 1.0;
  c.terminal = NodeFunction::explicit_values({up, down});
  return build_tree(c);
}

// Ubar = W_T, U = 0, delta = 0.
TreeConfig walk_fixture(int n) {
  TreeConfig c;
  c.n_steps = n;
  c.horizon = 1.0;
  c.terminal = NodeFunction::affine(0.0, 1.0);
  return c;
}

TreeConfig sine_fixture(int n) {
  TreeConfig c;
  c.n_steps = n;
  c.horizon = 1.0;
  c.terminal = NodeFunction::sine(1.0, 1.0);
  return c;
}

// -beta ln E[exp(-sin(W_T) / beta)] for W_T ~ N(0, T), composite Simpson on +-12 sd.
double sine_reference(double horizon, double beta) {
  const int n = 20000;
  const double sd = std::sqrt(horizon);
  const double a = -12.0 * sd;
  const double h = 24.0 * sd / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    double w = a + h * i;
    double v = std::exp(-std::sin(w) / beta - 0.5 * w * w / horizon);
    s += v * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  double mean = s * h / 3.0 / std::sqrt(2.0 * std::numbers::pi * horizon);
  return -beta * std::log(mean);
}

// ---------------------------------------------------------------------------

void suite_young(Sink& out, const VerifyOptions& opt) {
  const std::vector<std::string> generators{"entropy", "quadratic", "power:3", "power:1.5"};
  std::vector<double> grid(200);
  for (int i = 0; i < 200; ++i) grid[static_cast<std::size_t>(i)] = 20.0 * i / 199.0;

  for (const auto& name : generators) {
    auto g = parse_divergence_generator(name);
    auto fstar = [&](double x) { return *g.conjugate_closed_form(x); };

    for (bool scaled : {false, true}) {
      const std::string check = scaled ? "young_scaled" : "young";
      Rng rng(stream_seed(opt.seed, check + "/" + name));
      double worst = kInf, wl = 0.0, wr = 0.0;
      bool ok = true;
      for (int i = 0; i < opt.young_samples; ++i) {
        double x = rng.uniform(0.0, 20.0);
        double y = 10.0 * (1.0 - rng.uniform());
        double gamma = scaled ? 5.0 * (1.0 - rng.uniform()) : 1.0;
        double a = fstar(gamma * x), b = g(y);
        double lhs = x * y, rhs = (a + b) / gamma;
        double tol = 1e-12 * (1.0 + (std::abs(a) + std::abs(b)) / gamma);
        double s = (rhs - lhs) / tol;
        ok = ok && rhs - lhs >= -tol;
        if (s < worst) worst = s, wl = lhs, wr = rhs;
      }
      out.custom(check, name, wl, wr, ok);
    }

    double worst_num = -1.0, nl = 0.0, nr = 0.0;
    bool num_ok = true;
    std::vector<double> fs(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      double cf = fstar(grid[i]);
      double num = numeric_legendre(g, grid[i], 1e-12);
      fs[i] = cf;
      double err = std::abs(num - cf) / std::max(1.0, std::abs(cf));
      num_ok = num_ok && err <= 1e-8;
      if (err > worst_num) worst_num = err, nl = num, nr = cf;
    }
    out.custom("conjugate_numeric", name, nl, nr, num_ok);

    out.at_most("conjugate_nonnegative", name, 0.0, *std::min_element(fs.begin(), fs.end()), 0.0);

    double mono = kInf;
    std::size_t mi = 0;
    for (std::size_t i = 0; i + 1 < fs.size(); ++i)
      if (fs[i + 1] - fs[i] < mono) mono = fs[i + 1] - fs[i], mi = i;
    out.at_most("conjugate_monotone", name, fs[mi], fs[mi + 1], rel_tol(fs[mi], 1e-15));

    double cv = kInf, cl = 0.0, cr = 0.0;
    bool cv_ok = true;
    for (std::size_t i = 0; i < grid.size(); ++i)
      for (std::size_t j = i + 2; j < grid.size(); j += 2) {
        double mid = fstar(0.5 * (grid[i] + grid[j]));
        double chord = 0.5 * (fs[i] + fs[j]);
        double tol = rel_tol(chord, 1e-13);
        cv_ok = cv_ok && chord - mid >= -tol;
        if ((chord - mid) / tol < cv) cv = (chord - mid) / tol, cl = mid, cr = chord;
      }
    out.custom("conjugate_midpoint_convex", name, cl, cr, cv_ok);

    std::vector<double> hgrid(400);
    for (int i = 0; i < 400; ++i) hgrid[static_cast<std::size_t>(i)] = 20.0 * i / 399.0;
    auto rep = check_hypotheses(g, hgrid);
    out.flag("hypotheses", name, rep.h1 && rep.h2 && rep.h3 && rep.a3_consistent && rep.midpoint_convex);
    out.equal("a3_detected", name, rep.a3_numeric ? 1.0 : 0.0,
              g.family() == DivergenceFamily::entropy ? 1.0 : 0.0, 0.0);
  }

  {
    auto g = parse_divergence_generator("quadratic");
    ScalarFunction fn{[&](double x) { return *g.conjugate_closed_form(x); },
                      [](double x) { return 1.0 + 0.5 * x; }};
    std::vector<double> grid10(201);
    for (int i = 0; i <= 200; ++i) grid10[static_cast<std::size_t>(i)] = 0.05 * i;
    auto rep = derivative_growth_check(fn, 1.0, 0.5, grid10);
    out.custom("lingrowth", "quadratic", 0.0, rep.worst_margin, rep.pass);
  }

  std::vector<double> zgrid(201);
  for (int i = 0; i <= 200; ++i) zgrid[static_cast<std::size_t>(i)] = -10.0 + 0.1 * i;
  for (const std::string name : {"h-quadratic", "h-quartic"}) {
    auto h = parse_control_penalty(name);
    const double k1 = h.kappa1(), k2 = h.kappa2();

    double w = kInf, wl = 0.0, wr = 0.0;
    for (double z : zgrid) {
      double lhs = h.conjugate(z), rhs = z * z / (2.0 * k1) + k2;
      if (rhs - lhs < w) w = rhs - lhs, wl = lhs, wr = rhs;
    }
    out.at_most("h_star_quadratic_bound", name, wl, wr, rel_tol(wr, 1e-14));

    w = kInf;
    for (double x : zgrid) {
      double lhs = k1 * x * x - k2, rhs = h(x);
      if (rhs - lhs < w) w = rhs - lhs, wl = lhs, wr = rhs;
    }
    out.at_most("h_quadratic_lower_growth", name, wl, wr, rel_tol(wr, 1e-14));

    double err = -1.0;
    for (double beta : {0.5, 1.0, 2.0})
      for (double z : zgrid) {
        auto a = argsup_control(h, z, beta);
        double ref = beta * h.conjugate(z / beta);
        if (std::abs(a.value - ref) > err) err = std::abs(a.value - ref), wl = a.value, wr = ref;
      }
    out.equal("argsup_consistency", name, wl, wr, 1e-10);

    ScalarFunction fn{[&](double x) { return h.conjugate(x); },
                      [&](double x) { return h.derivative_inverse(x); }};
    auto rep = derivative_growth_check(fn, k2, 1.0 / (2.0 * k1), zgrid);
    out.custom("lingrowth", name, 0.0, rep.worst_margin, rep.pass);
  }
}

// ---------------------------------------------------------------------------

void suite_identities(Sink& out, const VerifyOptions& opt) {
  {
    Rng rng(stream_seed(opt.seed, "penalty_form_identity"));
    for (int i = 0; i < opt.random_instances; ++i) {
      TreeConfig c;
      c.n_steps = 1 + static_cast<int>(rng.index(8));
      c.horizon = rng.uniform(0.5, 2.0);
      c.discount = NodeFunction::uniform(0.0, 2.0);
      c.seed = rng.next();
      auto tree = build_tree(c);
      auto h = parse_control_penalty(i % 2 ? "h-quartic" : "h-quadratic");
      auto eta = random_control(tree, rng, 2.0);
      std::size_t node = rng.index(tree.internal_count());
      double nested = consistent_penalty(tree, eta, h, node, PenaltyForm::nested);
      double compact = consistent_penalty(tree, eta, h, node, PenaltyForm::compact);
      out.equal("penalty_form_identity", id(h.name(), i), nested, compact, 1e-12);
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "gamma_at_reference"));
    const std::vector<std::string> penalties{"entropy", "quadratic", "h-quadratic", "h-quartic"};
    for (int i = 0; i < 20; ++i) {
      auto tree = mixed_fixture(rng.next(), 1 + static_cast<int>(rng.index(6)), "gamma_at_reference");
      auto params = params_for(penalties[static_cast<std::size_t>(i) % penalties.size()], 1.0, 1.0,
                               rng.uniform(0.1, 4.0));
      CostArgument arg = params.fdiv() ? CostArgument{reference_measure(tree)}
                                       : CostArgument{ControlProcess{std::vector<double>(tree.internal_count(), 0.0)}};
      double gamma = gamma_value(tree, arg, params);
      auto u = realized_utility(tree, params);
      double mean = 0.0;
      for (double v : u) mean += v;
      mean /= static_cast<double>(u.size());
      out.equal("gamma_at_reference", id(penalty_name(params.penalty), i), gamma, mean, rel_tol(mean, 1e-12));
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "density_martingale"));
    for (int i = 0; i < 20; ++i) {
      TreeConfig c;
      c.n_steps = 1 + static_cast<int>(rng.index(8));
      auto tree = build_tree(c);
      auto Q = random_measure(tree, rng, 0.0);
      auto z = density_from_measure(tree, Q).z;
      double worst = 0.0;
      for (std::size_t v = 0; v < tree.internal_count(); ++v) {
        double avg = 0.5 * (z[ScenarioTree::up(v)] + z[ScenarioTree::down(v)]);
        worst = std::max(worst, std::abs(avg - z[v]) / std::max(z[v], 1e-300));
      }
      out.at_most("density_martingale", id(i), worst, 4e-16 * c.n_steps, 0.0);
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "girsanov_roundtrip"));
    for (int i = 0; i < 20; ++i) {
      TreeConfig c;
      c.n_steps = 1 + static_cast<int>(rng.index(8));
      c.horizon = rng.uniform(0.5, 2.0);
      auto tree = build_tree(c);
      auto eta = random_control(tree, rng, 1.0 / tree.sqrt_dt());
      auto Q = measure_from_control(tree, eta);
      auto back = control_from_measure(tree, Q);
      double err = 0.0;
      for (std::size_t v = 0; v < eta.eta.size(); ++v)
        err = std::max(err, std::abs(back.eta[v] - eta.eta[v]) * tree.sqrt_dt());
      out.at_most("control_roundtrip", id(i), err, 1e-14, 0.0);

      // Z_{k+1} = Z_k (1 + eta dW) along every path
      auto z = density_from_measure(tree, Q).z;
      std::vector<double> ref(tree.node_count(), 1.0);
      double worst = 0.0;
      for (std::size_t v = 0; v < tree.internal_count(); ++v) {
        ref[ScenarioTree::up(v)] = ref[v] * (1.0 + eta.eta[v] * tree.sqrt_dt());
        ref[ScenarioTree::down(v)] = ref[v] * (1.0 - eta.eta[v] * tree.sqrt_dt());
      }
      for (std::size_t v = 0; v < tree.node_count(); ++v)
        worst = std::max(worst, std::abs(z[v] - ref[v]) / std::max(1.0, ref[v]));
      out.at_most("stochastic_exponential", id(i), worst, 1e-14, 0.0);
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "utility_leg_oracle"));
    for (int i = 0; i < 20; ++i) {
      auto tree = mixed_fixture(rng.next(), 1 + static_cast<int>(rng.index(6)), "utility_leg_oracle");
      auto params = params_for("entropy", rng.uniform(-1.0, 2.0), rng.uniform(-1.0, 2.0));
      auto Q = random_measure(tree, rng, 0.0);
      auto prob = leaf_probabilities(tree, Q);
      auto u = realized_utility(tree, params);
      double e = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) e += prob[j] * u[j];
      out.equal("utility_leg_oracle", id(i), utility_leg(tree, Q, params), e, rel_tol(e, 1e-12));
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "undiscounted_penalty"));
    for (int i = 0; i < 20; ++i) {
      TreeConfig c;
      c.n_steps = 1 + static_cast<int>(rng.index(6));
      auto tree = build_tree(c);
      auto g = parse_divergence_generator(i % 2 ? "quadratic" : "entropy");
      auto Q = random_measure(tree, rng, 0.0);
      double d = f_divergence(tree, Q, g);
      out.equal("undiscounted_fdiv_penalty", id(g.name(), i), fdiv_penalty(tree, Q, g), d, rel_tol(d, 1e-12));

      auto h = parse_control_penalty(i % 2 ? "h-quartic" : "h-quadratic");
      auto eta = random_control(tree, rng, 1.0 / tree.sqrt_dt());
      double g0 = gamma_zero(tree, eta, h);
      out.equal("undiscounted_consistent_penalty", id(h.name(), i), consistent_penalty(tree, eta, h), g0,
                rel_tol(g0, 1e-12));
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "paste_identities"));
    for (int i = 0; i < 20; ++i) {
      TreeConfig c;
      c.n_steps = 2 + static_cast<int>(rng.index(5));
      auto tree = build_tree(c);
      auto Q = random_measure(tree, rng, 0.0);
      auto Qp = random_measure(tree, rng, 0.0);
      int tau = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(c.n_steps - 1)));
      for (std::size_t v = 0; v < ScenarioTree::level_offset(tau); ++v) Qp.q[v] = Q.q[v];
      auto a = random_level_set(tree, tau, rng);
      out.flag("paste_idempotent", id(i), paste(tree, Q, Q, tau, a).q == Q.q);
      out.flag("paste_empty_set", id(i), paste(tree, Q, Qp, tau, {}).q == Q.q);
    }
  }
}

// ---------------------------------------------------------------------------

void suite_bounds(Sink& out, const VerifyOptions& opt) {
  auto tree = bound_fixture(opt.seed);
  const double dt = tree.dt();
  const double T = tree.horizon();

  for (const std::string name : {"entropy", "quadratic", "power:1.5", "h-quadratic", "h-quartic"}) {
    auto params = params_for(name);
    Rng rng(stream_seed(opt.seed, "bounds/" + name));
    const bool consistent = !params.fdiv();
    for (int i = 0; i < opt.bound_samples; ++i) {
      auto arg = random_argument(tree, params, rng);
      auto r = total_cost(tree, arg, params);
      double up = r.c_upper * (1.0 + r.divergence);
      double lo = r.k_lower * (1.0 + r.gamma);
      out.at_most("upper_bound", id(name, i), r.gamma, up, rel_tol(up, 1e-12));
      out.at_most("lower_bound", id(name, i), r.divergence, lo, rel_tol(lo, 1e-12));

      if (consistent && i < opt.random_instances) {
        const auto& h = params.control_penalty();
        const double k1 = h.kappa1(), k2 = h.kappa2();
        double H = relative_entropy(tree, as_measure(tree, arg));
        double eb = r.divergence / (2.0 * k1) + T * k2 / (2.0 * k1) + 10.0 * dt;
        out.at_most("entropy_bound", id(name, i), H, eb, rel_tol(eb, 1e-12));
        double cb = r.k_lower * (1.0 + r.gamma) / (2.0 * k1) + T * k2 / (2.0 * k1) + 10.0 * dt;
        out.at_most("entropy_corollary", id(name, i), H, cb, rel_tol(cb, 1e-12));
      }
    }
  }

  for (const std::string name : {"entropy", "h-quadratic"}) {
    auto params = params_for(name);
    Rng rng(stream_seed(opt.seed, "tail_bound/" + name));
    for (int i = 0; i < opt.random_instances; ++i) {
      auto arg = random_argument(tree, params, rng);
      auto mask = random_leaf_mask(tree, rng);
      double scale = rng.uniform(0.1, 3.0);
      auto r = tail_bound_check(tree, arg, params, mask, scale);
      out.custom("tail_bound", id(name, i), r.lhs, r.rhs, r.pass);
    }
  }

  {
    auto g = parse_divergence_generator("entropy");
    Rng rng(stream_seed(opt.seed, "paste_bound"));
    for (int i = 0; i < opt.random_instances; ++i) {
      auto Q = random_measure(tree, rng, 0.0);
      auto Qp = random_measure(tree, rng, 0.0);
      int tau = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(tree.n_steps() - 1)));
      for (std::size_t v = 0; v < ScenarioTree::level_offset(tau); ++v) Qp.q[v] = Q.q[v];
      auto pasted = paste(tree, Q, Qp, tau, random_level_set(tree, tau, rng));
      double lhs = f_divergence(tree, pasted, g);
      double rhs = f_divergence(tree, Q, g) + f_divergence(tree, Qp, g) + g.kappa();
      out.at_most("paste_bound", id(i), lhs, rhs, rel_tol(rhs, 1e-12));
    }
  }

  for (const std::string name : {"entropy", "quadratic", "power:1.5"}) {
    auto g = parse_divergence_generator(name);
    Rng rng(stream_seed(opt.seed, "level_monotone/" + name));
    for (int i = 0; i < opt.random_instances; ++i) {
      auto z = density_from_measure(tree, random_measure(tree, rng, 0.0)).z;
      std::vector<double> fz(z.size());
      for (std::size_t v = 0; v < z.size(); ++v) fz[v] = g(z[v]);
      double last = expect_level(fz, tree.n_steps());
      double worst = -kInf;
      for (int k = 0; k < tree.n_steps(); ++k) worst = std::max(worst, expect_level(fz, k));
      out.at_most("level_divergence_monotone", id(name, i), worst, last, rel_tol(last, 1e-14));
    }
  }

  for (const std::string name : {"entropy", "quadratic"}) {
    auto g = parse_divergence_generator(name);
    Rng rng(stream_seed(opt.seed, "derivative_lemma/" + name));
    for (int i = 0; i < opt.random_instances; ++i) {
      auto z0 = density_from_measure(tree, random_measure(tree, rng, 0.05)).z;
      auto Q1 = random_measure(tree, rng, 0.0);
      auto z1 = density_from_measure(tree, Q1).z;
      std::vector<double> t(z0.size());
      for (std::size_t v = 0; v < z0.size(); ++v) t[v] = std::max(0.0, g.derivative(z0[v]) * (z1[v] - z0[v]));
      double worst = 0.0;
      for (int k = 0; k <= tree.n_steps(); ++k) worst = std::max(worst, expect_level(t, k));
      double rhs = f_divergence(tree, Q1, g) + g.kappa();
      out.at_most("derivative_lemma", id(name, i), worst, rhs, rel_tol(rhs, 1e-12));
    }
  }

  {
    const std::vector<double> betas{0.25, 0.5, 1.0, 2.0, 4.0};
    for (const std::string name : {"entropy", "h-quadratic"}) {
      std::vector<double> vals;
      for (double b : betas) {
        auto params = params_for(name, 1.0, 1.0, b);
        vals.push_back(params.fdiv() ? convex_min_fdiv(tree, params, 1e-12, 20000).value : dp_min(tree, params).value);
      }
      for (std::size_t i = 0; i + 1 < vals.size(); ++i)
        out.at_most("beta_monotone", id(name, static_cast<int>(i)), vals[i], vals[i + 1], rel_tol(vals[i], 1e-10));
    }
  }
}

// ---------------------------------------------------------------------------

std::pair<double, double> residual_range(const BellmanProcess& b) {
  auto [lo, hi] = std::minmax_element(b.residual.begin(), b.residual.end());
  return {*lo, *hi};
}

MeasureSpec perturb(const ScenarioTree& tree, const MeasureSpec& Q, Rng& rng) {
  MeasureSpec out = Q;
  std::size_t v = rng.index(tree.internal_count());
  out.q[v] += out.q[v] < 0.5 ? 0.1 : -0.1;
  return out;
}

void suite_bellman(Sink& out, const VerifyOptions& opt) {
  auto tree = mixed_fixture(opt.seed, 3, "bellman-fixture");

  for (const std::string name : {"entropy", "h-quadratic"}) {
    auto params = params_for(name);
    Rng rng(stream_seed(opt.seed, "submartingale/" + name));
    for (int i = 0; i < opt.random_instances; ++i) {
      auto Q = random_measure(tree, rng, 0.01);
      auto [lo, hi] = residual_range(bellman_process(tree, Q, params));
      out.at_most("submartingale", id(name, i), 0.0, lo, 1e-9);
    }
  }

  for (const std::string name : {"entropy", "quadratic", "h-quadratic", "h-quartic"}) {
    auto params = params_for(name);
    Rng rng(stream_seed(opt.seed, "martingale_at_optimum/" + name));
    auto best = params.fdiv() ? convex_min_fdiv(tree, params, 1e-12, 50000) : dp_min(tree, params);
    auto b = bellman_process(tree, best.measure, params);
    out.at_most("martingale_at_optimum", name, max_abs(b.residual), 1e-8, 0.0);
    auto [lo, hi] = residual_range(bellman_process(tree, perturb(tree, best.measure, rng), params));
    out.custom("strict_submartingale_off_optimum", name, 1e-8, hi, hi > 1e-8 && lo >= -1e-9);
  }

  {
    auto small = mixed_fixture(opt.seed, 2, "bellman-brute");
    auto params = params_for("entropy");
    const double step = 1e-2;
    auto best = brute_force_min(small, params, step, 3);
    auto b = bellman_process(small, best.measure, params);
    out.at_most("martingale_at_brute_force_optimum", "entropy", max_abs(b.residual), 10.0 * step, 0.0);
  }

  {
    // BSDE solution laid out on the tree of the W_T fixture
    auto cfg = walk_fixture(10);
    auto wtree = build_tree(cfg);
    for (const std::string name : {"h-quadratic", "h-quartic"}) {
      auto params = params_for(name, 0.0, 1.0, 1.0);
      auto sol = dp_min_solve(lattice_from_tree(wtree), params);
      auto b = reconstruct_bellman(wtree, sol, params);
      out.at_most("bsde_martingale_at_optimum", name, max_abs(b.residual), 1e-10, 0.0);

      auto ctrl = solution_control(wtree, sol);
      ctrl.eta[0] = std::clamp(ctrl.eta[0] + 0.5, -1.0 / wtree.sqrt_dt(), 1.0 / wtree.sqrt_dt());
      auto bp = reconstruct_bellman(wtree, sol, params, &ctrl);
      auto [lo, hi] = residual_range(bp);
      out.custom("bsde_strict_submartingale_off_optimum", name, 1e-10, hi, hi > 1e-10 && lo >= -1e-10);

      // node-wise conjugate consistency and argmin against a grid search
      const auto& h = params.control_penalty();
      const double box = 1.0 / wtree.sqrt_dt();
      const int m = 40001;
      double worst_val = 0.0, worst_eta = 0.0;
      for (int k = 0; k < cfg.n_steps; ++k)
        for (std::size_t j = 0; j < sol.z[static_cast<std::size_t>(k)].size(); ++j) {
          double z = sol.z[static_cast<std::size_t>(k)][j];
          double gmin = kInf, garg = 0.0;
          for (int t = 0; t < m; ++t) {
            double e = -box + 2.0 * box * t / (m - 1);
            double v = params.beta * h(e) + e * z;
            if (v < gmin) gmin = v, garg = e;
          }
          // golden-section polish around the grid argmin
          double a = garg - 2.0 * box / (m - 1), c = garg + 2.0 * box / (m - 1);
          for (int it = 0; it < 200 && c - a > 1e-15; ++it) {
            double x1 = c - (c - a) / std::numbers::phi, x2 = a + (c - a) / std::numbers::phi;
            if (params.beta * h(x1) + x1 * z < params.beta * h(x2) + x2 * z) c = x2; else a = x1;
          }
          double polished = 0.5 * (a + c);
          double conj = -params.beta * h.conjugate(-z / params.beta);
          worst_val = std::max(worst_val, std::abs(gmin - conj));
          worst_eta = std::max(worst_eta, std::abs(polished - sol.eta[static_cast<std::size_t>(k)][j]));
        }
      out.at_most("bsde_node_conjugate_consistency", name, worst_val, 1e-8, 0.0);
      out.at_most("bsde_node_argmin", name, worst_eta, 1e-7, 0.0);
      if (h.family() == ControlFamily::quadratic) {
        double worst = 0.0;
        for (int k = 0; k < cfg.n_steps; ++k)
          for (std::size_t j = 0; j < sol.z[static_cast<std::size_t>(k)].size(); ++j)
            worst = std::max(worst, std::abs(sol.eta[static_cast<std::size_t>(k)][j] +
                                             sol.z[static_cast<std::size_t>(k)][j] / params.beta));
        out.equal("bsde_eta_formula", name, worst, 0.0, 0.0);
      }
    }
  }
}

// ---------------------------------------------------------------------------

void suite_optimality(Sink& out, const VerifyOptions& opt) {
  {
    auto tree = two_point(0.0, 1.0);
    auto ent = brute_force_min(tree, params_for("entropy", 0.0), 1e-3, 3);
    out.equal("two_point_entropy", "value", ent.value, -std::log((1.0 + std::exp(-1.0)) / 2.0), 1e-6);
    auto quad = brute_force_min(tree, params_for("quadratic", 0.0), 1e-3, 3);
    out.equal("two_point_quadratic", "value", quad.value, 0.4375, 1e-6);
    out.equal("two_point_quadratic", "q", quad.measure.q[0], 0.625, 1e-6);
  }

  {
    TreeConfig c;
    c.n_steps = 3;
    c.terminal = NodeFunction::constant(2.0);
    auto tree = build_tree(c);
    auto r = convex_min_fdiv(tree, params_for("entropy", 0.0, 1.5), 1e-12, 1000);
    out.equal("constant_terminal_value", "entropy", r.value, 3.0, 1e-12);
    out.at_most("constant_terminal_iterations", "entropy", r.iterations, 1.0, 0.0);
  }

  auto tree = mixed_fixture(opt.seed, 3, "optimality-fixture");
  auto params = params_for("entropy");
  auto best = convex_min_fdiv(tree, params, 1e-12, 50000);
  {
    Rng rng(stream_seed(opt.seed, "directional_derivative"));
    for (int i = 0; i < 50; ++i) {
      auto q1 = random_measure(tree, rng, 0.05);
      double d = gamma_directional_derivative(tree, best.measure, q1, params);
      out.at_most("directional_derivative_at_optimum", id(i), -d, 1e-6, 0.0);
    }
  }
  {
    Rng rng(stream_seed(opt.seed, "directional_derivative_fd"));
    for (int i = 0; i < 50; ++i) {
      auto q0 = random_measure(tree, rng, 0.05);
      auto q1 = random_measure(tree, rng, 0.05);
      double an = gamma_directional_derivative(tree, q0, q1, params);
      const double e = 1e-6;
      double fd = (gamma_of_measure(tree, mix_measures(tree, q0, q1, e), params) -
                   gamma_of_measure(tree, mix_measures(tree, q0, q1, -e), params)) / (2.0 * e);
      out.equal("directional_derivative_fd", id(i), fd, an, 1e-4 * std::max(1.0, std::abs(an)));
    }
  }
  for (const std::string name : {"entropy", "h-quadratic"}) {
    auto p = params_for(name);
    Rng rng(stream_seed(opt.seed, "convexity/" + name));
    for (int i = 0; i < opt.bound_samples; ++i) {
      auto q0 = random_measure(tree, rng, 0.0);
      auto q1 = random_measure(tree, rng, 0.0);
      double x = rng.uniform(0.01, 0.99);
      double mid = gamma_of_measure(tree, mix_measures(tree, q0, q1, x), p);
      double chord = (1.0 - x) * gamma_of_measure(tree, q0, p) + x * gamma_of_measure(tree, q1, p);
      out.at_most("convexity", id(name, i), mid, chord, 1e-12);
      if (p.fdiv()) out.custom("strict_convexity", id(name, i), mid, chord, chord - mid >= 1e-10);
    }
  }

  {
    Rng rng(stream_seed(opt.seed, "uniqueness"));
    std::vector<double> start(tree.leaf_count());
    double s = 0.0;
    for (auto& v : start) s += (v = rng.uniform(0.1, 2.0));
    for (auto& v : start) v *= static_cast<double>(start.size()) / s;
    auto other = convex_min_fdiv(tree, params, 1e-12, 50000, &start);
    double diff = 0.0;
    for (std::size_t i = 0; i < start.size(); ++i)
      diff = std::max(diff, std::abs(other.leaf_density[i] - best.leaf_density[i]));
    out.at_most("uniqueness", "entropy", diff, 1e-6, 0.0);
  }

  {
    Rng rng(stream_seed(opt.seed, "oracle_equivalence"));
    int i = 0;
    for (int n : {1, 2})
      for (const std::string name : {"entropy", "quadratic", "power:3"})
        for (int rep = 0; rep < 3; ++rep, ++i) {
          auto t = mixed_fixture(rng.next(), n, "oracle_equivalence");
          auto p = params_for(name, 1.0, 1.0, rng.uniform(0.3, 3.0));
          auto cv = convex_min_fdiv(t, p, 1e-12, 50000);
          auto bf = brute_force_min(t, p, 1e-2, 3);
          out.equal("oracle_equivalence", id(name, i), cv.value, bf.value, std::max(1e-10, bf.residual));
        }
    for (int rep = 0; rep < 3; ++rep, ++i) {
      auto t = mixed_fixture(rng.next(), 2, "oracle_equivalence");
      auto p = params_for(rep % 2 ? "h-quartic" : "h-quadratic", 1.0, 1.0, rng.uniform(0.3, 3.0));
      auto dp = dp_min(t, p);
      auto bf = brute_force_min(t, p, 1e-2, 3);
      out.equal("oracle_equivalence", id(penalty_name(p.penalty), i), dp.value, bf.value,
                std::max(1e-10, bf.residual));
    }
  }
}

// ---------------------------------------------------------------------------

void suite_equivalence(Sink& out, const VerifyOptions& opt) {
  {
    Rng rng(stream_seed(opt.seed, "entropy_interior"));
    for (int i = 0; i < opt.random_instances; ++i) {
      TreeConfig c;
      c.n_steps = 3;
      c.horizon = rng.uniform(0.5, 2.0);
      c.utility = NodeFunction::uniform(-1.0, 1.0);
      c.terminal = NodeFunction::uniform(-3.0, 3.0);
      c.discount = NodeFunction::uniform(0.0, 1.0);
      c.seed = rng.next();
      auto tree = build_tree(c);
      auto r = convex_min_fdiv(tree, params_for("entropy", 1.0, 1.0, rng.uniform(0.2, 2.0)), 1e-12, 50000);
      out.custom("entropy_interior_optimum", id(i), 0.0, r.min_density_atom, r.min_density_atom > 0.0);
    }
  }

  {
    // Ubar = (0, 5): the quadratic penalty cannot stop mass leaving the down leaf
    auto tree = two_point(0.0, 5.0);
    auto params = params_for("quadratic", 0.0);
    auto cv = convex_min_fdiv(tree, params, 1e-12, 10000);
    auto bf = brute_force_min(tree, params, 1e-3, 3);
    out.equal("quadratic_boundary_optimum", "convex", cv.min_density_atom, 0.0, 1e-12);
    out.equal("quadratic_boundary_optimum", "brute", bf.min_density_atom, 0.0, 1e-12);
    out.equal("quadratic_boundary_optimum", "value", cv.value, 1.0, 1e-10);
    out.flag("a3_flag", "entropy", parse_divergence_generator("entropy").flags().a3);
    out.flag("a3_flag", "quadratic", !parse_divergence_generator("quadratic").flags().a3);

    auto closure = interior_vs_closure_check(tree, params, 1e-9, 1e-3, 2);
    out.custom("interior_vs_closure", "quadratic", closure.difference, closure.modulus, closure.pass);
    out.custom("boundary_gap_positive", "quadratic", 0.0, closure.difference, closure.difference > 0.0);
  }

  {
    auto tree = two_point(0.0, 1.0);
    auto closure = interior_vs_closure_check(tree, params_for("entropy", 0.0), 1e-9, 1e-3, 2);
    out.custom("interior_vs_closure", "entropy", closure.difference, closure.modulus, closure.pass);
    out.equal("interior_equals_closure", "entropy", closure.restricted, closure.unrestricted, 1e-9);
  }
}

// ---------------------------------------------------------------------------

void suite_convergence(Sink& out, const VerifyOptions&) {
  const auto params = params_for("h-quadratic", 0.0, 1.0, 1.0);
  {
    const int n = 100;
    auto lat = make_recombining_lattice(walk_fixture(n));
    double dp = dp_min_solve(lat, params).y0();
    double cf = entropic_closed_form(lat, params).y0();
    double exact = -n * std::log(std::cosh(std::sqrt(1.0 / n)));
    out.equal("entropic_dp_vs_closed_form", "n0100", dp, cf, 1e-10);
    out.equal("entropic_dp_vs_cosh", "n0100", dp, exact, 1e-10);
    out.equal("entropic_closed_form_vs_cosh", "n0100", cf, exact, 1e-10);
    double eu = euler_bsde_solve(lat, params).y0();
    out.equal("euler_continuous_limit", "n0100", eu, -0.5, 0.02);
  }

  auto ratio_rows = [&](const std::string& check, const std::vector<ConvergenceRow>& rows, bool euler) {
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      double prev = euler ? rows[i - 1].error_euler : rows[i - 1].error_dp;
      double cur = euler ? r.error_euler : r.error_dp;
      double ratio = euler ? r.ratio_euler : r.ratio_dp;
      std::string inst = "n" + id(r.n);
      out.custom(check + "_decreasing", inst, cur, prev, cur < prev);
      out.custom(check + "_ratio", inst, ratio, 2.0, ratio >= 1.5 && ratio <= 2.8);
    }
  };

  {
    auto rows = convergence_study(walk_fixture(1), params, {25, 50, 100, 200}, -0.5);
    ratio_rows("euler_order", rows, true);
  }
  {
    double ref = sine_reference(1.0, 1.0);
    auto rows = convergence_study(sine_fixture(1), params, {50, 100, 200, 400}, ref);
    ratio_rows("euler_order_nonlinear", rows, true);
    ratio_rows("dp_order_nonlinear", rows, false);
  }

  {
    // smooth control profile eta(t, W) = 0.5 cos t + 0.3 sin W
    auto gap = [](int n) {
      TreeConfig c;
      c.n_steps = n;
      auto tree = build_tree(c);
      ControlProcess eta{std::vector<double>(tree.internal_count())};
      for (std::size_t v = 0; v < tree.internal_count(); ++v)
        eta.eta[v] = 0.5 * std::cos(ScenarioTree::level(v) * tree.dt()) + 0.3 * std::sin(tree.walk(v));
      double H = relative_entropy(tree, measure_from_control(tree, eta));
      double g0 = gamma_zero(tree, eta, parse_control_penalty("h-quadratic"));
      return std::abs(H - g0);
    };
    double e1 = gap(8), e2 = gap(16);
    out.custom("entropy_identity_rate", "n0008", e1 / e2, 2.0, e1 / e2 >= 1.5 && e1 / e2 <= 2.8);
  }

  {
    auto lat = make_recombining_lattice(sine_fixture(100));
    double prev = -kInf;
    int i = 0;
    for (double beta : {0.5, 1.0, 2.0, 4.0}) {
      auto p = params_for("h-quadratic", 0.0, 1.0, beta);
      double y = entropic_closed_form(lat, p).y0();
      if (i > 0) out.at_most("closed_form_beta_monotone", id(i), prev, y, 1e-14);
      prev = y;
      ++i;
    }
  }
}

}  // namespace

VerificationReport verify_suite(std::string_view suite, const VerifyOptions& options) {
  const auto& names = suite_names();
  require(suite == "all" || std::find(names.begin(), names.end(), suite) != names.end(),
          ErrorCode::invalid_argument, "unknown suite '" + std::string(suite) + "'");
  require(options.young_samples > 0 && options.bound_samples > 0 && options.random_instances > 0,
          ErrorCode::invalid_argument, "sample counts must be positive");
  VerificationReport report;
  Sink sink(report.rows);
  auto want = [&](std::string_view name) { return suite == "all" || suite == name; };
  if (want("young")) suite_young(sink, options);
  if (want("identities")) suite_identities(sink, options);
  if (want("bounds")) suite_bounds(sink, options);
  if (want("bellman")) suite_bellman(sink, options);
  if (want("optimality")) suite_optimality(sink, options);
  if (want("equivalence")) suite_equivalence(sink, options);
  if (want("convergence")) suite_convergence(sink, options);
  return report;
}

void write_verification_csv(std::ostream& out, const VerificationReport& report) {
  csv::write_row(out, {"check", "instance", "lhs", "rhs", "slack", "pass"});
  for (const auto& r : report.rows)
    csv::write_row(out, {r.check, r.instance, csv::number(r.lhs), csv::number(r.rhs),
                         csv::number(r.slack), csv::boolean(r.pass)});
}

}  // namespace robust
