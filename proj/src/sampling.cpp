#include "robust/sampling.hpp"

#include <algorithm>
#include <cmath>

namespace robust {

MeasureSpec random_measure(const ScenarioTree& tree, Rng& rng, double lo) {
  MeasureSpec Q;
  Q.q.resize(tree.internal_count());
  for (auto& q : Q.q) q = rng.uniform(lo, 1.0 - lo);
  return Q;
}

ControlProcess random_control(const ScenarioTree& tree, Rng& rng, double bound) {
  double cap = std::min(bound, 1.0 / tree.sqrt_dt());
  ControlProcess c;
  c.eta.resize(tree.internal_count());
  for (auto& e : c.eta) e = rng.uniform(-cap, cap);
  return c;
}

std::vector<std::size_t> random_level_set(const ScenarioTree& tree, int tau, Rng& rng) {
  (void)tree;
  std::vector<std::size_t> out;
  std::size_t first = ScenarioTree::level_offset(tau);
  for (std::size_t i = 0; i < (std::size_t{1} << tau); ++i)
    if (rng.coin()) out.push_back(first + i);
  return out;
}

std::vector<char> random_leaf_mask(const ScenarioTree& tree, Rng& rng) {
  std::vector<char> mask(tree.leaf_count());
  for (auto& m : mask) m = rng.coin() ? 1 : 0;
  return mask;
}

}  // namespace robust
