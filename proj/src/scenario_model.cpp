#include "robust/scenario_model.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "robust/csv.hpp"
#include "robust/error.hpp"
#include "robust/sampling.hpp"

namespace robust {

namespace {

std::vector<double> fill_block(const NodeFunction& fn, const char* what, std::size_t first,
                               std::size_t count, const ScenarioTree& tree, Rng& rng) {
  std::vector<double> out(count);
  switch (fn.kind) {
    case NodeFunction::Kind::array:
      require(fn.values.size() == count, ErrorCode::shape_mismatch,
              std::string(what) + ": expected " + std::to_string(count) + " values, got " +
                  std::to_string(fn.values.size()));
      out = fn.values;
      break;
    case NodeFunction::Kind::random:
      require(fn.a <= fn.b, ErrorCode::invalid_argument, std::string(what) + ": random range is empty");
      for (auto& v : out) v = rng.uniform(fn.a, fn.b);
      break;
    default:
      for (std::size_t i = 0; i < count; ++i) out[i] = fn.at_state(tree.walk(first + i));
      break;
  }
  for (double v : out)
    require(std::isfinite(v), ErrorCode::invalid_argument, std::string(what) + ": non-finite value");
  return out;
}

}  // namespace

double NodeFunction::at_state(double w) const {
  switch (kind) {
    case Kind::constant: return a;
    case Kind::affine_walk: return a + b * w;
    case Kind::sine_walk: return a * std::sin(b * w);
    default: break;
  }
  fail(ErrorCode::unsupported, "node function is not a function of the walk state");
}

int ScenarioTree::level(std::size_t v) {
  return static_cast<int>(std::bit_width(v + 1)) - 1;
}

double ScenarioTree::walk(std::size_t v) const {
  int k = level(v);
  int downs = std::popcount(path_index(v));
  return static_cast<double>(k - 2 * downs) * sqrt_dt_;
}

ScenarioTree build_tree(const TreeConfig& config) {
  require(config.n_steps >= 1, ErrorCode::invalid_argument, "n_steps must be >= 1");
  require(config.n_steps <= kMaxTreeSteps, ErrorCode::invalid_argument,
          "n_steps must be <= " + std::to_string(kMaxTreeSteps) + " on a non-recombining tree");
  require(std::isfinite(config.horizon) && config.horizon > 0.0, ErrorCode::invalid_argument,
          "horizon must be > 0");
  ScenarioTree t;
  t.config_ = config;
  t.n_steps_ = config.n_steps;
  t.dt_ = config.horizon / config.n_steps;
  t.sqrt_dt_ = std::sqrt(t.dt_);
  t.leaf_weight_ = std::ldexp(1.0, -config.n_steps);

  Rng rng(config.seed);
  t.utility_ = fill_block(config.utility, "utility", 0, t.internal_count(), t, rng);
  t.discount_ = fill_block(config.discount, "discount", 0, t.internal_count(), t, rng);
  t.terminal_ = fill_block(config.terminal, "terminal", t.first_leaf(), t.leaf_count(), t, rng);

  for (std::size_t v = 0; v < t.discount_.size(); ++v) {
    require(t.discount_[v] >= 0.0, ErrorCode::domain,
            "discount rate is negative at node " + std::to_string(v));
    t.discount_sup_ = std::max(t.discount_sup_, t.discount_[v]);
  }
  t.markov_ = config.utility.is_state_function() && config.discount.is_state_function() &&
              config.terminal.is_state_function();
  return t;
}

bool MeasureSpec::equivalent_to_reference() const {
  for (double v : q)
    if (!(v > 0.0 && v < 1.0)) return false;
  return true;
}

MeasureSpec reference_measure(const ScenarioTree& tree) {
  return MeasureSpec{std::vector<double>(tree.internal_count(), 0.5)};
}

void validate_measure(const ScenarioTree& tree, const MeasureSpec& Q) {
  require(Q.q.size() == tree.internal_count(), ErrorCode::shape_mismatch,
          "measure has " + std::to_string(Q.q.size()) + " conditionals, tree needs " +
              std::to_string(tree.internal_count()));
  for (std::size_t v = 0; v < Q.q.size(); ++v)
    require(Q.q[v] >= 0.0 && Q.q[v] <= 1.0, ErrorCode::domain,
            "conditional probability outside [0,1] at node " + std::to_string(v));
}

std::vector<double> discount_process(const ScenarioTree& tree) {
  std::vector<double> s(tree.node_count());
  s[0] = 1.0;
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double f = std::exp(-tree.discount()[v] * tree.dt());
    s[ScenarioTree::up(v)] = s[v] * f;
    s[ScenarioTree::down(v)] = s[v] * f;
  }
  return s;
}

DensityProcess density_from_measure(const ScenarioTree& tree, const MeasureSpec& Q) {
  validate_measure(tree, Q);
  DensityProcess d;
  d.z.assign(tree.node_count(), 0.0);
  d.z[0] = 1.0;
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    d.z[ScenarioTree::up(v)] = d.z[v] * (2.0 * Q.q[v]);
    d.z[ScenarioTree::down(v)] = d.z[v] * (2.0 * (1.0 - Q.q[v]));
  }
  return d;
}

MeasureSpec measure_from_leaf_density(const ScenarioTree& tree, const std::vector<double>& leaf_z) {
  require(leaf_z.size() == tree.leaf_count(), ErrorCode::shape_mismatch,
          "leaf density has wrong length");
  // mass[v] = sum of leaf atoms below v
  std::vector<double> mass(tree.node_count(), 0.0);
  for (std::size_t i = 0; i < tree.leaf_count(); ++i) {
    require(leaf_z[i] >= 0.0, ErrorCode::domain, "negative leaf density");
    mass[tree.first_leaf() + i] = leaf_z[i];
  }
  for (std::size_t v = tree.internal_count(); v-- > 0;)
    mass[v] = mass[ScenarioTree::up(v)] + mass[ScenarioTree::down(v)];
  MeasureSpec Q;
  Q.q.resize(tree.internal_count());
  for (std::size_t v = 0; v < tree.internal_count(); ++v)
    Q.q[v] = mass[v] > 0.0 ? mass[ScenarioTree::up(v)] / mass[v] : 0.5;
  return Q;
}

void validate_control(const ScenarioTree& tree, const ControlProcess& eta) {
  require(eta.eta.size() == tree.internal_count(), ErrorCode::shape_mismatch,
          "control has " + std::to_string(eta.eta.size()) + " values, tree needs " +
              std::to_string(tree.internal_count()));
  for (std::size_t v = 0; v < eta.eta.size(); ++v)
    require(std::abs(eta.eta[v]) * tree.sqrt_dt() <= 1.0 + 1e-14, ErrorCode::domain,
            "control inadmissible at node " + std::to_string(v) + " (|eta| sqrt(dt) > 1)");
}

MeasureSpec measure_from_control(const ScenarioTree& tree, const ControlProcess& eta) {
  validate_control(tree, eta);
  MeasureSpec Q;
  Q.q.resize(eta.eta.size());
  for (std::size_t v = 0; v < eta.eta.size(); ++v)
    Q.q[v] = std::clamp(0.5 * (1.0 + eta.eta[v] * tree.sqrt_dt()), 0.0, 1.0);
  return Q;
}

ControlProcess control_from_measure(const ScenarioTree& tree, const MeasureSpec& Q) {
  validate_measure(tree, Q);
  ControlProcess c;
  c.eta.resize(Q.q.size());
  for (std::size_t v = 0; v < Q.q.size(); ++v) c.eta[v] = (2.0 * Q.q[v] - 1.0) / tree.sqrt_dt();
  return c;
}

MeasureSpec paste(const ScenarioTree& tree, const MeasureSpec& Q, const MeasureSpec& Qp, int tau,
                  const std::vector<std::size_t>& a_nodes) {
  validate_measure(tree, Q);
  validate_measure(tree, Qp);
  require(tau >= 0 && tau <= tree.n_steps(), ErrorCode::invalid_argument, "tau outside [0, N]");
  for (std::size_t v = 0; v < ScenarioTree::level_offset(tau); ++v)
    require(Q.q[v] == Qp.q[v], ErrorCode::domain,
            "measures differ before tau at node " + std::to_string(v));
  std::vector<char> in_a(tree.node_count(), 0);
  for (std::size_t v : a_nodes) {
    require(v < tree.node_count() && ScenarioTree::level(v) == tau, ErrorCode::invalid_argument,
            "pasting set contains node " + std::to_string(v) + " which is not on level tau");
    in_a[v] = 1;
  }
  MeasureSpec out = Q;
  for (std::size_t v = ScenarioTree::level_offset(tau); v < tree.internal_count(); ++v) {
    if (ScenarioTree::level(v) > tau) in_a[v] = in_a[ScenarioTree::parent(v)];
    if (in_a[v]) out.q[v] = Qp.q[v];
  }
  return out;
}

double f_divergence(const ScenarioTree& tree, const MeasureSpec& Q, const DivergenceGenerator& g) {
  DensityProcess d = density_from_measure(tree, Q);
  double sum = 0.0;
  for (std::size_t i = 0; i < tree.leaf_count(); ++i) sum += g(d.z[tree.first_leaf() + i]);
  return sum * tree.leaf_weight();
}

double relative_entropy(const ScenarioTree& tree, const MeasureSpec& Q) {
  static const DivergenceGenerator entropy = parse_divergence_generator("entropy");
  return f_divergence(tree, Q, entropy);
}

std::vector<double> leaf_probabilities(const ScenarioTree& tree, const MeasureSpec& Q) {
  DensityProcess d = density_from_measure(tree, Q);
  std::vector<double> p(tree.leaf_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = d.z[tree.first_leaf() + i] * tree.leaf_weight();
  return p;
}

void write_tree_csv(std::ostream& out, const ScenarioTree& tree, const DensityProcess* density) {
  std::vector<std::string> header{"level", "path_index", "U", "delta", "S"};
  if (density) header.push_back("Z");
  csv::write_row(out, header);
  auto s = discount_process(tree);
  for (std::size_t v = 0; v < tree.node_count(); ++v) {
    bool leaf = tree.is_leaf(v);
    std::vector<std::string> row{std::to_string(ScenarioTree::level(v)),
                                 std::to_string(ScenarioTree::path_index(v)),
                                 leaf ? "" : csv::number(tree.utility()[v]),
                                 leaf ? "" : csv::number(tree.discount()[v]), csv::number(s[v])};
    if (density) row.push_back(csv::number(density->z[v]));
    csv::write_row(out, row);
  }
}

}  // namespace robust
