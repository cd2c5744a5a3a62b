#include "robust/robust_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "atom_solver.hpp"
#include "robust/error.hpp"
#include "robust/parallel.hpp"

namespace robust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gamma as a function of the conditional probabilities, with reusable buffers.
class GammaEvaluator {
 public:
  GammaEvaluator(const ScenarioTree& tree, const CostParams& params)
      : tree_(tree), params_(params), s_(discount_process(tree)) {
    decay_.resize(tree.internal_count());
    for (std::size_t v = 0; v < decay_.size(); ++v) decay_[v] = std::exp(-tree.discount()[v] * tree.dt());
    z_.resize(tree.node_count());
    y_.resize(tree.node_count());
    pen_.resize(tree.node_count());
  }

  double operator()(const std::vector<double>& q) {
    const auto& t = tree_;
    const std::size_t ni = t.internal_count();
    for (std::size_t i = 0; i < t.leaf_count(); ++i) {
      y_[ni + i] = params_.alpha_bar * t.terminal()[i];
      pen_[ni + i] = 0.0;
    }
    const bool fdiv = params_.fdiv();
    for (std::size_t v = ni; v-- > 0;) {
      double cont = q[v] * y_[2 * v + 1] + (1.0 - q[v]) * y_[2 * v + 2];
      y_[v] = params_.alpha * t.utility()[v] * t.dt() + decay_[v] * cont;
      if (!fdiv) {
        const auto& h = params_.control_penalty();
        double eta = (2.0 * q[v] - 1.0) / t.sqrt_dt();
        double pc = q[v] * pen_[2 * v + 1] + (1.0 - q[v]) * pen_[2 * v + 2];
        pen_[v] = h(eta) * t.dt() + decay_[v] * pc;
      }
    }
    if (!fdiv) return y_[0] + params_.beta * pen_[0];

    const auto& g = params_.generator();
    z_[0] = 1.0;
    for (std::size_t v = 0; v < ni; ++v) {
      z_[2 * v + 1] = z_[v] * (2.0 * q[v]);
      z_[2 * v + 2] = z_[v] * (2.0 * (1.0 - q[v]));
    }
    double penalty = 0.0;
    for (int k = 0; k <= t.n_steps(); ++k) {
      std::size_t first = ScenarioTree::level_offset(k);
      std::size_t count = std::size_t{1} << k;
      double level_sum = 0.0;
      for (std::size_t v = first; v < first + count; ++v) {
        if (k < t.n_steps()) {
          double d = t.discount()[v];
          if (d != 0.0) level_sum += d * s_[v] * g(z_[v]) * t.dt();
        } else {
          level_sum += s_[v] * g(z_[v]);
        }
      }
      penalty += std::ldexp(level_sum, -k);
    }
    return y_[0] + params_.beta * penalty;
  }

 private:
  const ScenarioTree& tree_;
  const CostParams& params_;
  std::vector<double> s_;
  std::vector<double> decay_;
  std::vector<double> z_, y_, pen_;
};

struct GridResult {
  std::vector<double> q;
  double value = kInf;
};

// Lexicographically first argmin over the product of the coordinate lists.
GridResult grid_search(const ScenarioTree& tree, const CostParams& params,
                       const std::vector<std::vector<double>>& axes) {
  double total = 1.0;
  for (const auto& a : axes) total *= static_cast<double>(a.size());
  require(total <= kMaxBruteForceGrid, ErrorCode::invalid_argument,
          "brute-force grid too large (" + std::to_string(total) + " points); increase grid_step");
  const std::size_t points = static_cast<std::size_t>(total);
  const std::size_t n = axes.size();
  const std::size_t chunks = std::min<std::size_t>(points, 256);
  std::vector<GridResult> partial(chunks);

  parallel_chunks(points, chunks, [&](std::size_t begin, std::size_t end, std::size_t chunk) {
    GammaEvaluator eval(tree, params);
    std::vector<double> q(n);
    GridResult best;
    for (std::size_t idx = begin; idx < end; ++idx) {
      std::size_t rest = idx;
      for (std::size_t c = n; c-- > 0;) {
        q[c] = axes[c][rest % axes[c].size()];
        rest /= axes[c].size();
      }
      double v = eval(q);
      if (v < best.value) {
        best.value = v;
        best.q = q;
      }
    }
    partial[chunk] = std::move(best);
  });

  GridResult best;
  for (auto& p : partial)
    if (p.value < best.value) best = std::move(p);
  require(std::isfinite(best.value), ErrorCode::domain, "brute-force objective is not finite on the grid");
  return best;
}

std::vector<double> axis(double lo, double hi, double step) {
  std::vector<double> a;
  const double span = hi - lo;
  std::size_t count = static_cast<std::size_t>(std::ceil(span / step - 1e-9));
  for (std::size_t i = 0; i <= count; ++i) a.push_back(std::min(lo + static_cast<double>(i) * step, hi));
  return a;
}

OptimizationResult finish(const ScenarioTree& tree, MeasureSpec Q, double value) {
  OptimizationResult r;
  auto d = density_from_measure(tree, Q);
  r.leaf_density.assign(d.z.begin() + static_cast<std::ptrdiff_t>(tree.first_leaf()), d.z.end());
  r.min_density_atom = *std::min_element(r.leaf_density.begin(), r.leaf_density.end());
  r.measure = std::move(Q);
  r.value = value;
  return r;
}

OptimizationResult brute_force_box(const ScenarioTree& tree, const CostParams& params,
                                   double grid_step, int refinement_rounds, double lo, double hi) {
  validate_params(params);
  require(grid_step > 0.0 && std::isfinite(grid_step), ErrorCode::invalid_argument, "grid_step must be > 0");
  require(refinement_rounds >= 0, ErrorCode::invalid_argument, "refinement_rounds must be >= 0");
  const std::size_t n = tree.internal_count();
  require(n <= kMaxBruteForceNodes, ErrorCode::invalid_argument,
          "brute force supports at most " + std::to_string(kMaxBruteForceNodes) +
              " free conditional probabilities, tree has " + std::to_string(n));

  std::vector<std::vector<double>> axes(n, axis(lo, hi, grid_step));
  GridResult best = grid_search(tree, params, axes);
  double step = grid_step;
  for (int round = 0; round < refinement_rounds; ++round) {
    double fine = step / 10.0;
    int side = 10;
    while (side > 1 && std::pow(2.0 * side + 1.0, static_cast<double>(n)) > 2e6) --side;
    // re-centre until the incumbent stops moving at this scale
    for (int pass = 0; pass < 100; ++pass) {
      for (std::size_t c = 0; c < n; ++c) {
        axes[c].clear();
        for (int k = -side; k <= side; ++k) {
          double v = best.q[c] + k * fine;
          if (v >= lo && v <= hi) axes[c].push_back(v);
        }
      }
      GridResult next = grid_search(tree, params, axes);
      if (!(next.value < best.value)) break;
      best = std::move(next);
    }
    step = fine;
  }

  GammaEvaluator eval(tree, params);
  double residual = 0.0;
  std::vector<double> probe = best.q;
  for (std::size_t c = 0; c < n; ++c) {
    for (double sign : {-1.0, 1.0}) {
      probe[c] = std::clamp(best.q[c] + sign * step, lo, hi);
      residual = std::max(residual, eval(probe) - best.value);
      probe[c] = best.q[c];
    }
  }
  OptimizationResult r = finish(tree, MeasureSpec{best.q}, best.value);
  r.iterations = refinement_rounds + 1;
  r.residual = residual;
  r.converged = true;
  return r;
}

}  // namespace

double gamma_of_measure(const ScenarioTree& tree, const MeasureSpec& Q, const CostParams& params) {
  if (params.fdiv()) return gamma_value(tree, Q, params);
  return gamma_value(tree, control_from_measure(tree, Q), params);
}

OptimizationResult brute_force_min(const ScenarioTree& tree, const CostParams& params,
                                   double grid_step, int refinement_rounds) {
  return brute_force_box(tree, params, grid_step, refinement_rounds, 0.0, 1.0);
}

OptimizationResult convex_min_fdiv(const ScenarioTree& tree, const CostParams& params, double tol,
                                   int max_iters, const std::vector<double>* start) {
  validate_params(params);
  require(params.fdiv(), ErrorCode::invalid_argument, "convex_min_fdiv needs an f-divergence penalty");
  require(tol > 0.0, ErrorCode::invalid_argument, "tol must be > 0");
  require(max_iters >= 0, ErrorCode::invalid_argument, "max_iters must be >= 0");
  auto problem = detail::subtree_problem(tree, 0, params.alpha, params.alpha_bar, params.beta,
                                         params.generator(), 1.0);
  auto sol = detail::solve_atoms(problem, start, tol, max_iters);
  OptimizationResult r = finish(tree, measure_from_leaf_density(tree, sol.x), sol.value);
  r.leaf_density = sol.x;
  r.min_density_atom = *std::min_element(sol.x.begin(), sol.x.end());
  r.iterations = sol.iterations;
  r.residual = sol.residual;
  r.fw_gap = sol.fw_gap;
  r.converged = sol.converged;
  return r;
}

OptimizationResult dp_min(const ScenarioTree& tree, const CostParams& params) {
  validate_params(params);
  require(!params.fdiv(), ErrorCode::invalid_argument, "dp needs a consistent-time (h-) penalty");
  auto sol = dp_min_solve(lattice_from_tree(tree), params);
  ControlProcess eta = solution_control(tree, sol);
  OptimizationResult r = finish(tree, measure_from_control(tree, eta), sol.y0());
  r.iterations = 1;
  r.residual = 0.0;
  return r;
}

MeasureSpec mix_measures(const ScenarioTree& tree, const MeasureSpec& q0, const MeasureSpec& q1,
                         double x) {
  auto z0 = density_from_measure(tree, q0).z;
  auto z1 = density_from_measure(tree, q1).z;
  std::vector<double> leaf(tree.leaf_count());
  for (std::size_t i = 0; i < leaf.size(); ++i) {
    std::size_t v = tree.first_leaf() + i;
    leaf[i] = (1.0 - x) * z0[v] + x * z1[v];
    require(leaf[i] >= 0.0, ErrorCode::domain, "mixture leaves the set of densities");
  }
  return measure_from_leaf_density(tree, leaf);
}

double gamma_directional_derivative(const ScenarioTree& tree, const MeasureSpec& q0,
                                    const MeasureSpec& q1, const CostParams& params) {
  validate_params(params);
  require(params.fdiv(), ErrorCode::invalid_argument,
          "directional derivative needs an f-divergence penalty");
  const auto& g = params.generator();
  auto z0 = density_from_measure(tree, q0).z;
  auto z1 = density_from_measure(tree, q1).z;
  auto s = discount_process(tree);
  auto u = realized_utility(tree, params);

  double utility = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::size_t v = tree.first_leaf() + i;
    utility += (z1[v] - z0[v]) * u[i];
  }
  utility *= tree.leaf_weight();

  double penalty = 0.0;
  for (int k = 0; k <= tree.n_steps(); ++k) {
    std::size_t first = ScenarioTree::level_offset(k);
    std::size_t count = std::size_t{1} << k;
    double level_sum = 0.0;
    for (std::size_t v = first; v < first + count; ++v) {
      double dz = z1[v] - z0[v];
      if (dz == 0.0) continue;
      double weight = k < tree.n_steps() ? tree.discount()[v] * tree.dt() : 1.0;
      if (weight == 0.0) continue;
      double slope = g.derivative(z0[v]);
      if (std::isinf(slope)) {
        if (dz > 0.0) return -kInf;
        return kInf;
      }
      level_sum += weight * s[v] * slope * dz;
    }
    penalty += std::ldexp(level_sum, -k);
  }
  return utility + params.beta * penalty;
}

BellmanProcess bellman_process(const ScenarioTree& tree, const MeasureSpec& Q,
                               const CostParams& params, double tol) {
  validate_params(params);
  validate_measure(tree, Q);
  if (!params.fdiv()) {
    auto sol = dp_min_solve(lattice_from_tree(tree), params);
    ControlProcess eta = control_from_measure(tree, Q);
    return reconstruct_bellman(tree, sol, params, &eta);
  }

  const auto& g = params.generator();
  auto z = density_from_measure(tree, Q).z;
  auto s = discount_process(tree);
  for (std::size_t v = 0; v < tree.node_count(); ++v)
    require(z[v] > 0.0, ErrorCode::domain,
            "Bellman value undefined: density vanishes at node " + std::to_string(v));

  std::vector<double> past(tree.node_count(), 0.0);
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double add = s[v] * tree.dt() *
                 (params.alpha * tree.utility()[v] + params.beta * tree.discount()[v] * g(z[v]) / z[v]);
    past[ScenarioTree::up(v)] = past[v] + add;
    past[ScenarioTree::down(v)] = past[v] + add;
  }

  BellmanProcess out;
  out.j.assign(tree.node_count(), 0.0);
  parallel_for(tree.node_count(), [&](std::size_t v) {
    auto p = detail::subtree_problem(tree, v, params.alpha, params.alpha_bar, params.beta, g, z[v]);
    auto sol = detail::solve_atoms(p, nullptr, tol, 50000);
    out.j[v] = past[v] + s[v] * sol.value / z[v];
  });
  out.residual.resize(tree.internal_count());
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double q = Q.q[v];
    out.residual[v] = q * out.j[ScenarioTree::up(v)] + (1.0 - q) * out.j[ScenarioTree::down(v)] - out.j[v];
  }
  return out;
}

ClosureReport interior_vs_closure_check(const ScenarioTree& tree, const CostParams& params,
                                        double tol, double grid_step, int refinement_rounds) {
  require(tol >= 0.0, ErrorCode::invalid_argument, "tol must be >= 0");
  require(grid_step > 0.0 && grid_step < 0.5, ErrorCode::invalid_argument, "grid_step must be in (0, 1/2)");
  ClosureReport r;
  r.epsilon = grid_step;
  auto full = brute_force_box(tree, params, grid_step, refinement_rounds, 0.0, 1.0);
  auto inner = brute_force_box(tree, params, grid_step, refinement_rounds, grid_step, 1.0 - grid_step);
  r.unrestricted = full.value;
  r.restricted = inner.value;
  r.difference = inner.value - full.value;
  MeasureSpec clamped = full.measure;
  for (auto& q : clamped.q) q = std::clamp(q, grid_step, 1.0 - grid_step);
  r.modulus = gamma_of_measure(tree, clamped, params) - full.value;
  double slack = 1e-12 * (1.0 + std::abs(full.value));
  r.pass = r.difference >= -tol - slack && r.difference <= tol + std::max(r.modulus, 0.0) + slack;
  return r;
}

}  // namespace robust
