#include "robust/cost_engine.hpp"

#include <cmath>
#include <string>

#include "robust/error.hpp"

namespace robust {

namespace {

// Nodes of the subtree below v at relative depth d occupy a contiguous id range.
std::size_t descendant_begin(std::size_t v, int d) { return ((v + 1) << d) - 1; }

double bound_tolerance(double rhs) { return 1e-12 * (1.0 + std::abs(rhs)); }

const MeasureSpec& require_measure(const CostArgument& arg) {
  if (!std::holds_alternative<MeasureSpec>(arg))
    fail(ErrorCode::invalid_argument, "f-divergence family needs a measure, got a control process");
  return std::get<MeasureSpec>(arg);
}

const ControlProcess& require_control(const CostArgument& arg) {
  if (!std::holds_alternative<ControlProcess>(arg))
    fail(ErrorCode::invalid_argument, "consistent-time family needs a control process, got a measure");
  return std::get<ControlProcess>(arg);
}

double expect_p(const ScenarioTree& tree, const std::vector<double>& per_leaf) {
  double s = 0.0;
  for (double v : per_leaf) s += v;
  return s * tree.leaf_weight();
}

}  // namespace

const DivergenceGenerator& CostParams::generator() const {
  if (!fdiv()) fail(ErrorCode::invalid_argument, "cost parameters carry a control penalty, not a generator");
  return std::get<DivergenceGenerator>(penalty);
}

const ControlPenalty& CostParams::control_penalty() const {
  if (fdiv()) fail(ErrorCode::invalid_argument, "cost parameters carry a generator, not a control penalty");
  return std::get<ControlPenalty>(penalty);
}

void validate_params(const CostParams& params) {
  require(std::isfinite(params.alpha), ErrorCode::invalid_argument, "alpha must be finite");
  require(std::isfinite(params.alpha_bar), ErrorCode::invalid_argument, "alpha_bar must be finite");
  require(std::isfinite(params.beta) && params.beta > 0.0, ErrorCode::invalid_argument,
          "beta must be in (0, inf)");
}

std::vector<double> realized_utility(const ScenarioTree& tree, const CostParams& params) {
  auto s = discount_process(tree);
  std::vector<double> acc(tree.node_count(), 0.0);
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double next = acc[v] + params.alpha * s[v] * tree.utility()[v] * tree.dt();
    acc[ScenarioTree::up(v)] = next;
    acc[ScenarioTree::down(v)] = next;
  }
  std::vector<double> out(tree.leaf_count());
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t v = tree.first_leaf() + i;
    out[i] = acc[v] + params.alpha_bar * s[v] * tree.terminal()[i];
  }
  return out;
}

std::vector<double> utility_envelope(const ScenarioTree& tree, const CostParams& params) {
  std::vector<double> acc(tree.node_count(), 0.0);
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double next = acc[v] + std::abs(params.alpha) * std::abs(tree.utility()[v]) * tree.dt();
    acc[ScenarioTree::up(v)] = next;
    acc[ScenarioTree::down(v)] = next;
  }
  std::vector<double> out(tree.leaf_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = acc[tree.first_leaf() + i] + std::abs(params.alpha_bar) * std::abs(tree.terminal()[i]);
  return out;
}

std::vector<double> utility_process(const ScenarioTree& tree, const MeasureSpec& Q,
                                    const CostParams& params) {
  validate_measure(tree, Q);
  std::vector<double> y(tree.node_count());
  for (std::size_t i = 0; i < tree.leaf_count(); ++i)
    y[tree.first_leaf() + i] = params.alpha_bar * tree.terminal()[i];
  for (std::size_t v = tree.internal_count(); v-- > 0;) {
    double q = Q.q[v];
    double cont = q * y[ScenarioTree::up(v)] + (1.0 - q) * y[ScenarioTree::down(v)];
    y[v] = params.alpha * tree.utility()[v] * tree.dt() + std::exp(-tree.discount()[v] * tree.dt()) * cont;
  }
  return y;
}

double utility_leg(const ScenarioTree& tree, const MeasureSpec& Q, const CostParams& params,
                   std::size_t from_node) {
  require(from_node < tree.node_count(), ErrorCode::invalid_argument, "node outside the tree");
  return utility_process(tree, Q, params)[from_node];
}

double fdiv_penalty(const ScenarioTree& tree, const MeasureSpec& Q, const DivergenceGenerator& g,
                    std::size_t from_node) {
  require(from_node < tree.node_count(), ErrorCode::invalid_argument, "node outside the tree");
  auto z = density_from_measure(tree, Q).z;
  require(z[from_node] > 0.0, ErrorCode::domain,
          "conditional penalty undefined: density vanishes at node " + std::to_string(from_node));
  auto s = discount_process(tree);
  const double zt = z[from_node];
  const double st = s[from_node];
  const int t = ScenarioTree::level(from_node);
  const int remaining = tree.n_steps() - t;

  // E_Q[(Z_t/Z_k) X | F_t] = E_P[X | F_t] with the convention Z (f(Z)/Z) = f(Z) at Z = 0.
  double total = 0.0;
  for (int d = 0; d <= remaining; ++d) {
    std::size_t begin = descendant_begin(from_node, d);
    std::size_t count = std::size_t{1} << d;
    double level_sum = 0.0;
    for (std::size_t u = begin; u < begin + count; ++u) {
      double term = (s[u] / st) * g(z[u] / zt);
      if (d < remaining) term *= tree.discount()[u] * tree.dt();
      level_sum += term;
    }
    total += std::ldexp(level_sum, -d);
  }
  return total;
}

double consistent_penalty(const ScenarioTree& tree, const ControlProcess& eta,
                          const ControlPenalty& h, std::size_t from_node, PenaltyForm form) {
  require(from_node < tree.node_count(), ErrorCode::invalid_argument, "node outside the tree");
  MeasureSpec Q = measure_from_control(tree, eta);
  if (tree.is_leaf(from_node)) return 0.0;

  if (form == PenaltyForm::compact) {
    // sum_s (S_s / S_t) h(eta_s) dt, by backward recursion
    std::vector<double> v(tree.node_count(), 0.0);
    for (std::size_t u = tree.internal_count(); u-- > from_node;) {
      double q = Q.q[u];
      double cont = q * v[ScenarioTree::up(u)] + (1.0 - q) * v[ScenarioTree::down(u)];
      v[u] = h(eta.eta[u]) * tree.dt() + std::exp(-tree.discount()[u] * tree.dt()) * cont;
    }
    return v[from_node];
  }

  // Nested: sum_s ((S_s - S_{s+1}) / S_t) A_s + (S_N / S_t) A_{N-1}, with A_s the
  // running penalty sum over [t, s], evaluated path by path.
  auto s = discount_process(tree);
  const double st = s[from_node];
  const int depth = tree.n_steps() - ScenarioTree::level(from_node);
  const std::size_t paths = std::size_t{1} << depth;
  double total = 0.0;
  for (std::size_t j = 0; j < paths; ++j) {
    std::size_t u = from_node;
    double prob = 1.0;
    double running = 0.0;
    double path_sum = 0.0;
    for (int d = 0; d < depth; ++d) {
      bool down = (j >> (depth - 1 - d)) & 1u;
      std::size_t child = down ? ScenarioTree::down(u) : ScenarioTree::up(u);
      running += h(eta.eta[u]) * tree.dt();
      path_sum += ((s[u] - s[child]) / st) * running;
      prob *= down ? 1.0 - Q.q[u] : Q.q[u];
      u = child;
    }
    path_sum += (s[u] / st) * running;
    total += prob * path_sum;
  }
  return total;
}

double gamma_zero(const ScenarioTree& tree, const ControlProcess& eta, const ControlPenalty& h) {
  MeasureSpec Q = measure_from_control(tree, eta);
  std::vector<double> v(tree.node_count(), 0.0);
  for (std::size_t u = tree.internal_count(); u-- > 0;) {
    double q = Q.q[u];
    v[u] = h(eta.eta[u]) * tree.dt() + q * v[ScenarioTree::up(u)] + (1.0 - q) * v[ScenarioTree::down(u)];
  }
  return v[0];
}

double gamma_value(const ScenarioTree& tree, const CostArgument& arg, const CostParams& params) {
  validate_params(params);
  if (params.fdiv()) {
    const auto& Q = require_measure(arg);
    return utility_leg(tree, Q, params) + params.beta * fdiv_penalty(tree, Q, params.generator());
  }
  const auto& eta = require_control(arg);
  MeasureSpec Q = measure_from_control(tree, eta);
  return utility_leg(tree, Q, params) +
         params.beta * consistent_penalty(tree, eta, params.control_penalty());
}

EvaluationReport total_cost(const ScenarioTree& tree, const CostArgument& arg,
                            const CostParams& params) {
  validate_params(params);
  EvaluationReport r;
  if (params.fdiv()) {
    const auto& Q = require_measure(arg);
    r.utility_leg = utility_leg(tree, Q, params);
    r.penalty_leg = fdiv_penalty(tree, Q, params.generator());
    r.divergence = f_divergence(tree, Q, params.generator());
  } else {
    const auto& eta = require_control(arg);
    MeasureSpec Q = measure_from_control(tree, eta);
    r.utility_leg = utility_leg(tree, Q, params);
    r.penalty_leg = consistent_penalty(tree, eta, params.control_penalty());
    r.divergence = gamma_zero(tree, eta, params.control_penalty());
  }
  r.gamma = r.utility_leg + params.beta * r.penalty_leg;
  r.c_upper = bound_constant_upper(tree, params);
  r.k_lower = bound_constant_lower(tree, params);
  double upper = r.c_upper * (1.0 + r.divergence);
  double lower = r.k_lower * (1.0 + r.gamma);
  r.bound_upper_ok = r.gamma <= upper + bound_tolerance(upper);
  r.bound_lower_ok = r.divergence <= lower + bound_tolerance(lower);
  return r;
}

double bound_constant_upper(const ScenarioTree& tree, const CostParams& params) {
  validate_params(params);
  const double T = tree.horizon();
  const double dsup = tree.discount_sup();
  const double beta = params.beta;
  auto R = utility_envelope(tree, params);
  if (params.fdiv()) {
    const auto& g = params.generator();
    std::vector<double> fs(R.size());
    for (std::size_t i = 0; i < R.size(); ++i) fs[i] = conjugate_value(g, R[i]);
    double a = expect_p(tree, fs) + 2.0 * g.kappa() * beta * (dsup * T + 1.0);
    double b = 1.0 + beta * dsup * T + beta;
    return std::max(a, b);
  }
  const auto& h = params.control_penalty();
  std::vector<double> es(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) es[i] = std::exp(R[i]);
  double a = std::exp(-1.0) * expect_p(tree, es) + T * h.kappa2() / (2.0 * h.kappa1());
  double b = 1.0 / (2.0 * h.kappa1()) + beta * (dsup * T + 1.0);
  return std::max(a, b);
}

double bound_constant_lower(const ScenarioTree& tree, const CostParams& params) {
  validate_params(params);
  const double T = tree.horizon();
  const double dsup = tree.discount_sup();
  const double beta = params.beta;
  auto R = utility_envelope(tree, params);
  if (params.fdiv()) {
    const auto& g = params.generator();
    const double gamma = 2.0 * std::exp(T * dsup) / beta;
    const double eta = beta * std::exp(-T * dsup) / 2.0;
    std::vector<double> fs(R.size());
    for (std::size_t i = 0; i < R.size(); ++i) fs[i] = conjugate_value(g, gamma * R[i]);
    double inner = beta * g.kappa() * (T * dsup + 1.0) + expect_p(tree, fs) / gamma;
    return std::max(1.0, inner) / eta;
  }
  const auto& h = params.control_penalty();
  const double lambda = std::exp(dsup * T) / (beta * h.kappa1());
  const double mu = beta * std::exp(-dsup * T) / 2.0;
  std::vector<double> es(R.size());
  for (std::size_t i = 0; i < R.size(); ++i) es[i] = std::exp(lambda * R[i]);
  double inner = T * h.kappa2() / (2.0 * lambda * h.kappa1()) +
                 std::exp(-1.0) / lambda * expect_p(tree, es);
  return std::max(1.0, inner) / mu;
}

TailBoundReport tail_bound_check(const ScenarioTree& tree, const CostArgument& arg,
                                 const CostParams& params, const std::vector<char>& leaf_mask,
                                 double scale) {
  validate_params(params);
  require(scale > 0.0, ErrorCode::invalid_argument, "tail bound scale must be > 0");
  require(leaf_mask.size() == tree.leaf_count(), ErrorCode::shape_mismatch, "leaf mask has wrong length");
  auto u = realized_utility(tree, params);
  auto R = utility_envelope(tree, params);

  MeasureSpec Q = params.fdiv() ? require_measure(arg) : measure_from_control(tree, require_control(arg));
  auto prob = leaf_probabilities(tree, Q);

  TailBoundReport r;
  for (std::size_t i = 0; i < u.size(); ++i)
    if (leaf_mask[i]) r.lhs += prob[i] * std::abs(u[i]);

  std::vector<double> masked(R.size(), 0.0);
  if (params.fdiv()) {
    const auto& g = params.generator();
    for (std::size_t i = 0; i < R.size(); ++i)
      if (leaf_mask[i]) masked[i] = conjugate_value(g, scale * R[i]);
    double d = f_divergence(tree, Q, g);
    r.rhs = (d + g.kappa()) / scale + expect_p(tree, masked) / scale;
  } else {
    const auto& h = params.control_penalty();
    for (std::size_t i = 0; i < R.size(); ++i)
      if (leaf_mask[i]) masked[i] = std::exp(scale * R[i]);
    double g0 = gamma_zero(tree, require_control(arg), h);
    const double k1 = h.kappa1();
    r.rhs = g0 / (2.0 * scale * k1) + tree.horizon() * h.kappa2() / (2.0 * scale * k1) +
            std::exp(-1.0) / scale + std::exp(-1.0) / scale * expect_p(tree, masked);
  }
  r.slack = r.rhs - r.lhs;
  r.pass = r.slack >= -bound_tolerance(r.rhs);
  return r;
}

}  // namespace robust
