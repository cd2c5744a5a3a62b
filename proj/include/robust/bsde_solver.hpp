#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "robust/cost_engine.hpp"
#include "robust/scenario_model.hpp"

namespace robust {

// Binomial lattice in one of two layouts. Recombining: level k has k + 1 nodes
// indexed by the number of down moves j, with W = (k - 2j) sqrt(dt). Tree: level
// k has 2^k nodes in path order, as in ScenarioTree.
class Lattice {
 public:
  int n_steps() const { return n_steps_; }
  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }
  double horizon() const { return dt_ * n_steps_; }
  bool recombining() const { return recombining_; }

  std::size_t level_size(int k) const {
    return recombining_ ? static_cast<std::size_t>(k) + 1 : std::size_t{1} << k;
  }
  std::size_t up(std::size_t i) const { return recombining_ ? i : 2 * i; }
  std::size_t down(std::size_t i) const { return recombining_ ? i + 1 : 2 * i + 1; }
  double walk(int k, std::size_t i) const;

  // Per level k < N: utility and discount rates; level N: terminal values.
  const std::vector<double>& utility(int k) const { return utility_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& discount(int k) const { return discount_[static_cast<std::size_t>(k)]; }
  const std::vector<double>& terminal() const { return terminal_; }
  bool zero_discount() const;

 private:
  friend Lattice make_recombining_lattice(const TreeConfig&);
  friend Lattice lattice_from_tree(const ScenarioTree&);
  int n_steps_ = 0;
  double dt_ = 0.0;
  double sqrt_dt_ = 0.0;
  bool recombining_ = false;
  std::vector<std::vector<double>> utility_;
  std::vector<std::vector<double>> discount_;
  std::vector<double> terminal_;
};

inline constexpr int kMaxLatticeSteps = 100000;

// Requires state-function data (constant, affine or sine in the walk).
Lattice make_recombining_lattice(const TreeConfig& config);
Lattice lattice_from_tree(const ScenarioTree& tree);

enum class Scheme { dp, euler, closed_form };
std::string scheme_name(Scheme s);

struct BsdeOptions {
  // true: driver beta h*(z / beta); false: h*(z / beta).
  bool driver_beta_scaling = true;
};

struct BSDESolution {
  Scheme scheme = Scheme::dp;
  double dt = 0.0;
  bool recombining = false;
  std::vector<std::vector<double>> y;    // levels 0..N
  std::vector<std::vector<double>> z;    // levels 0..N-1, (Y_up - Y_down) / (2 sqrt(dt))
  std::vector<std::vector<double>> eta;  // levels 0..N-1
  std::size_t truncated = 0;             // nodes where the admissibility box binds

  double y0() const { return y.front().front(); }
};

BSDESolution dp_min_solve(const Lattice& lattice, const CostParams& params);
BSDESolution euler_bsde_solve(const Lattice& lattice, const CostParams& params,
                              const BsdeOptions& options = {});
BSDESolution entropic_closed_form(const Lattice& lattice, const CostParams& params);

BSDESolution solve_bsde(const Lattice& lattice, const CostParams& params, Scheme scheme,
                        const BsdeOptions& options = {});

// min over eta of beta h(eta) + eta z, with the argmin. Used by the DP node solve
// and by the invariant checks; box_half_width <= 0 means unconstrained.
struct NodeMin {
  double eta = 0.0;
  double value = 0.0;
  bool truncated = false;
};
NodeMin control_node_min(const ControlPenalty& h, double beta, double z, double box_half_width);

struct BellmanProcess {
  std::vector<double> j;         // per tree node
  std::vector<double> residual;  // per internal node: E_Q[J(child) | node] - J(node)
};

// J(v) = S(v) Y(v) + alpha sum_{k<level} S_k U_k dt + beta sum_{k<level} S_k h(eta_k) dt
// along the path to v, with eta the solution's control unless `control` is given;
// residuals are taken under the measure of that control.
BellmanProcess reconstruct_bellman(const ScenarioTree& tree, const BSDESolution& solution,
                                   const CostParams& params, const ControlProcess* control = nullptr);

// The solution's optimal control laid out on the tree.
ControlProcess solution_control(const ScenarioTree& tree, const BSDESolution& solution);

struct ConvergenceRow {
  int n = 0;
  double y_euler = 0.0;
  double y_dp = 0.0;
  double reference = 0.0;
  double error_euler = 0.0;
  double error_dp = 0.0;
  double ratio_euler = 0.0;  // error(previous N) / error(N); 0 on the first row
  double ratio_dp = 0.0;
};

// Runs both schemes on the recombining lattice for every N, against a fixed reference value.
std::vector<ConvergenceRow> convergence_study(const TreeConfig& base, const CostParams& params,
                                             const std::vector<int>& n_list, double reference,
                                             const BsdeOptions& options = {});

}  // namespace robust
