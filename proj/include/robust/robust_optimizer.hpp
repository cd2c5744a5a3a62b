#pragma once

#include <cstddef>
#include <vector>

#include "robust/bsde_solver.hpp"
#include "robust/cost_engine.hpp"
#include "robust/scenario_model.hpp"

namespace robust {

struct OptimizationResult {
  MeasureSpec measure;
  double value = 0.0;               // Gamma*
  double min_density_atom = 0.0;    // min over leaves of Z_T
  std::vector<double> leaf_density;
  int iterations = 0;
  double residual = 0.0;
  double fw_gap = 0.0;              // convex method only
  bool converged = true;
};

inline constexpr std::size_t kMaxBruteForceNodes = 7;
inline constexpr double kMaxBruteForceGrid = 5e7;

// Exhaustive grid over the conditional probabilities, then `refinement_rounds`
// rounds of a finer grid (step / 10) around the incumbent. Ties go to the
// lexicographically first grid point. Works for both penalty families; for the
// consistent family q maps to eta = (2q - 1) / sqrt(dt).
OptimizationResult brute_force_min(const ScenarioTree& tree, const CostParams& params,
                                   double grid_step, int refinement_rounds);

// Gamma over leaf atoms by spectral projected gradient (f-divergence family).
// `start`, when given, is a leaf density with P-mean one.
OptimizationResult convex_min_fdiv(const ScenarioTree& tree, const CostParams& params, double tol,
                                   int max_iters, const std::vector<double>* start = nullptr);

// Optimum of the consistent family by dynamic programming on the tree.
OptimizationResult dp_min(const ScenarioTree& tree, const CostParams& params);

// Mixture on terminal atoms: Z^x = (1 - x) Z^0 + x Z^1.
MeasureSpec mix_measures(const ScenarioTree& tree, const MeasureSpec& q0, const MeasureSpec& q1,
                         double x);

// d/dx Gamma(Q^x) at x = 0; -inf when Z^0 vanishes where the direction pushes
// mass and f'(0+) = -inf.
double gamma_directional_derivative(const ScenarioTree& tree, const MeasureSpec& q0,
                                    const MeasureSpec& q1, const CostParams& params);

// Minimal conditional cost J per node together with the one-step residuals
// E_Q[J(child) | node] - J(node) under Q.
BellmanProcess bellman_process(const ScenarioTree& tree, const MeasureSpec& Q,
                               const CostParams& params, double tol = 1e-12);

struct ClosureReport {
  double unrestricted = 0.0;
  double restricted = 0.0;
  double difference = 0.0;
  double modulus = 0.0;  // Gamma(clamp(q*, eps, 1 - eps)) - Gamma(q*)
  double epsilon = 0.0;
  bool pass = false;
};

// Brute-force minimum over [0,1] against the minimum over [eps, 1 - eps],
// eps = grid_step.
ClosureReport interior_vs_closure_check(const ScenarioTree& tree, const CostParams& params,
                                        double tol, double grid_step = 1e-3,
                                        int refinement_rounds = 2);

// Gamma at the measure Q, for either family.
double gamma_of_measure(const ScenarioTree& tree, const MeasureSpec& Q, const CostParams& params);

}  // namespace robust
