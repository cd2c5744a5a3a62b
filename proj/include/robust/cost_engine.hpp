#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "robust/penalty_kernel.hpp"
#include "robust/scenario_model.hpp"

namespace robust {

struct CostParams {
  double alpha = 1.0;
  double alpha_bar = 1.0;
  double beta = 1.0;
  Penalty penalty = parse_divergence_generator("entropy");

  bool fdiv() const { return std::holds_alternative<DivergenceGenerator>(penalty); }
  const DivergenceGenerator& generator() const;
  const ControlPenalty& control_penalty() const;
};

void validate_params(const CostParams& params);

enum class PenaltyForm { nested, compact };

// Per-leaf realised utility alpha sum_k S_k U_k dt + alpha_bar S_N Ubar, rebased at the root.
std::vector<double> realized_utility(const ScenarioTree& tree, const CostParams& params);

// Per-leaf R = |alpha| sum_k |U_k| dt + |alpha_bar| |Ubar|.
std::vector<double> utility_envelope(const ScenarioTree& tree, const CostParams& params);

// Q-conditional discounted utility at every node, with S rebased to 1 at that node.
std::vector<double> utility_process(const ScenarioTree& tree, const MeasureSpec& Q,
                                    const CostParams& params);
double utility_leg(const ScenarioTree& tree, const MeasureSpec& Q, const CostParams& params,
                   std::size_t from_node = 0);

// Conditional f-divergence penalty at from_node; throws ErrorCode::domain when Z vanishes there.
double fdiv_penalty(const ScenarioTree& tree, const MeasureSpec& Q, const DivergenceGenerator& g,
                    std::size_t from_node = 0);

double consistent_penalty(const ScenarioTree& tree, const ControlProcess& eta,
                          const ControlPenalty& h, std::size_t from_node = 0,
                          PenaltyForm form = PenaltyForm::compact);

double gamma_zero(const ScenarioTree& tree, const ControlProcess& eta, const ControlPenalty& h);

using CostArgument = std::variant<MeasureSpec, ControlProcess>;

struct EvaluationReport {
  double utility_leg = 0.0;
  double penalty_leg = 0.0;
  double gamma = 0.0;
  double divergence = 0.0;  // d(Q|P) or gamma_0
  double c_upper = 0.0;
  double k_lower = 0.0;
  bool bound_upper_ok = false;
  bool bound_lower_ok = false;
};

EvaluationReport total_cost(const ScenarioTree& tree, const CostArgument& arg,
                            const CostParams& params);

// Gamma alone, without the bound constants.
double gamma_value(const ScenarioTree& tree, const CostArgument& arg, const CostParams& params);

double bound_constant_upper(const ScenarioTree& tree, const CostParams& params);
double bound_constant_lower(const ScenarioTree& tree, const CostParams& params);

struct TailBoundReport {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;
  bool pass = false;
};

// leaf_mask selects the event A. scale is gamma (f-divergence) or lambda (consistent).
TailBoundReport tail_bound_check(const ScenarioTree& tree, const CostArgument& arg,
                                 const CostParams& params, const std::vector<char>& leaf_mask,
                                 double scale);

}  // namespace robust
