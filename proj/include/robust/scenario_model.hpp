#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <vector>

#include "robust/penalty_kernel.hpp"

namespace robust {

// Per-node data source. State functions read the running sum W of the
// increments at the node, so they are also valid on a recombining lattice.
struct NodeFunction {
  enum class Kind { constant, affine_walk, sine_walk, array, random };
  Kind kind = Kind::constant;
  double a = 0.0;  // constant: a; affine: a + b W; sine: a sin(b W); random: uniform on [a, b]
  double b = 0.0;
  std::vector<double> values;  // array: one value per node in heap order within the block

  static NodeFunction constant(double c) { return {Kind::constant, c, 0.0, {}}; }
  static NodeFunction affine(double a, double b) { return {Kind::affine_walk, a, b, {}}; }
  static NodeFunction sine(double a, double b) { return {Kind::sine_walk, a, b, {}}; }
  static NodeFunction explicit_values(std::vector<double> v) {
    return {Kind::array, 0.0, 0.0, std::move(v)};
  }
  static NodeFunction uniform(double lo, double hi) { return {Kind::random, lo, hi, {}}; }

  bool is_state_function() const {
    return kind == Kind::constant || kind == Kind::affine_walk || kind == Kind::sine_walk;
  }
  // Only valid for state functions.
  double at_state(double w) const;
};

struct TreeConfig {
  int n_steps = 1;
  double horizon = 1.0;
  NodeFunction utility = NodeFunction::constant(0.0);   // on internal nodes
  NodeFunction terminal = NodeFunction::constant(0.0);  // on leaves
  NodeFunction discount = NodeFunction::constant(0.0);  // on internal nodes, >= 0
  std::uint64_t seed = 0;
};

inline constexpr int kMaxTreeSteps = 20;

// Binary non-recombining tree in heap order: the root is node 0, level k holds
// nodes 2^k - 1 ... 2^{k+1} - 2, and node v has up child 2v + 1 and down child
// 2v + 2. The up branch carries the increment +sqrt(dt). P is the fair coin.
class ScenarioTree {
 public:
  int n_steps() const { return n_steps_; }
  double horizon() const { return dt_ * n_steps_; }
  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }

  std::size_t node_count() const { return (std::size_t{2} << n_steps_) - 1; }
  std::size_t internal_count() const { return (std::size_t{1} << n_steps_) - 1; }
  std::size_t leaf_count() const { return std::size_t{1} << n_steps_; }
  std::size_t first_leaf() const { return internal_count(); }

  static std::size_t level_offset(int k) { return (std::size_t{1} << k) - 1; }
  static std::size_t up(std::size_t v) { return 2 * v + 1; }
  static std::size_t down(std::size_t v) { return 2 * v + 2; }
  static std::size_t parent(std::size_t v) { return (v - 1) / 2; }
  static int level(std::size_t v);
  // Position of v within its level.
  static std::size_t path_index(std::size_t v) { return v - level_offset(level(v)); }
  bool is_leaf(std::size_t v) const { return v >= internal_count(); }

  // Per internal node.
  const std::vector<double>& utility() const { return utility_; }
  const std::vector<double>& discount() const { return discount_; }
  // Per leaf, indexed by leaf position.
  const std::vector<double>& terminal() const { return terminal_; }
  // Running sum of increments, per node.
  double walk(std::size_t v) const;

  double discount_sup() const { return discount_sup_; }
  // P-probability of a single leaf, 2^{-N}.
  double leaf_weight() const { return leaf_weight_; }

  // True when U, delta and the terminal values are state functions, so the
  // recombining lattice carries the same model.
  bool markov() const { return markov_; }
  const TreeConfig& config() const { return config_; }

 private:
  friend ScenarioTree build_tree(const TreeConfig&);
  int n_steps_ = 0;
  double dt_ = 0.0;
  double sqrt_dt_ = 0.0;
  std::vector<double> utility_;
  std::vector<double> discount_;
  std::vector<double> terminal_;
  double discount_sup_ = 0.0;
  double leaf_weight_ = 0.0;
  bool markov_ = false;
  TreeConfig config_;
};

ScenarioTree build_tree(const TreeConfig& config);

// Conditional up-probabilities, one per internal node.
struct MeasureSpec {
  std::vector<double> q;
  bool equivalent_to_reference() const;
};

MeasureSpec reference_measure(const ScenarioTree& tree);
void validate_measure(const ScenarioTree& tree, const MeasureSpec& Q);

// Density process, one value per node.
struct DensityProcess {
  std::vector<double> z;
};

// Girsanov control, one value per internal node.
struct ControlProcess {
  std::vector<double> eta;
};

// S at every node: S(root) = 1, S(child) = S(node) exp(-delta(node) dt).
std::vector<double> discount_process(const ScenarioTree& tree);

DensityProcess density_from_measure(const ScenarioTree& tree, const MeasureSpec& Q);

// Inverse of density_from_measure on leaves: conditional probabilities from
// leaf atoms with P-mean one. Nodes with zero mass get q = 1/2.
MeasureSpec measure_from_leaf_density(const ScenarioTree& tree, const std::vector<double>& leaf_z);

void validate_control(const ScenarioTree& tree, const ControlProcess& eta);
MeasureSpec measure_from_control(const ScenarioTree& tree, const ControlProcess& eta);
ControlProcess control_from_measure(const ScenarioTree& tree, const MeasureSpec& Q);

// Q' conditionals on the subtrees rooted at the level-tau nodes in `a_nodes`,
// Q conditionals elsewhere. Q and Q' must agree on every level below tau.
MeasureSpec paste(const ScenarioTree& tree, const MeasureSpec& Q, const MeasureSpec& Qp, int tau,
                  const std::vector<std::size_t>& a_nodes);

double f_divergence(const ScenarioTree& tree, const MeasureSpec& Q, const DivergenceGenerator& g);
double relative_entropy(const ScenarioTree& tree, const MeasureSpec& Q);

// Q-probability of every leaf, indexed by leaf position.
std::vector<double> leaf_probabilities(const ScenarioTree& tree, const MeasureSpec& Q);

// CSV with columns level, path_index, U, delta, S[, Z].
void write_tree_csv(std::ostream& out, const ScenarioTree& tree, const DensityProcess* density);

}  // namespace robust
