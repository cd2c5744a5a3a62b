#pragma once

#include <cstddef>
#include <vector>

#include "robust/penalty_kernel.hpp"
#include "robust/scenario_model.hpp"

namespace robust::detail {

// Penalised cost of a subtree as a function of its leaf atoms x (densities
// relative to the subtree root, P-mean equal to `mean`):
//
//   w sum_l c_l x_l + beta [ sum_u p_u a_u f(X_u) + w sum_l b_l f(x_l) ]
//
// where w = 2^-depth, u runs over internal subtree nodes in heap order with
// P-weight p_u and average atom X_u.
struct AtomProblem {
  int depth = 0;
  std::vector<double> leaf_cost;        // c_l
  std::vector<double> internal_weight;  // a_u, size 2^depth - 1
  std::vector<double> terminal_weight;  // b_l
  double beta = 1.0;
  const DivergenceGenerator* g = nullptr;
  double mean = 1.0;

  std::size_t atoms() const { return std::size_t{1} << depth; }
};

// Subproblem for the subtree rooted at `node`, with S rebased to one there.
AtomProblem subtree_problem(const ScenarioTree& tree, std::size_t node, double alpha,
                            double alpha_bar, double beta, const DivergenceGenerator& g,
                            double mean);

double atom_objective(const AtomProblem& p, const std::vector<double>& x);

// Gradient divided by the leaf weight w.
void atom_gradient(const AtomProblem& p, const std::vector<double>& x, std::vector<double>& grad);

struct AtomSolution {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;  // sup-norm of the projected gradient step
  double fw_gap = 0.0;
  bool converged = false;
};

// Spectral projected gradient over {x >= floor, mean(x) = mean}. The floor is
// 1e-12 while iterating for generators with f'(0+) = -inf, then relaxed for a
// final polish.
AtomSolution solve_atoms(const AtomProblem& p, const std::vector<double>* start, double tol,
                         int max_iters);

// Euclidean projection of y onto {x >= lo, sum(x) = total}.
void project_capped_simplex(std::vector<double>& y, double lo, double total);

}  // namespace robust::detail
