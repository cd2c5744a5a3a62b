#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "robust/scenario_model.hpp"

namespace robust {

// Uniform doubles built from the top 53 bits of mt19937_64, so streams are
// identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * n) % n; }
  bool coin() { return (engine_() >> 63) != 0; }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Conditionals drawn uniformly from [lo, 1 - lo].
MeasureSpec random_measure(const ScenarioTree& tree, Rng& rng, double lo = 0.0);

// Controls drawn uniformly from [-bound, bound], bound capped by admissibility.
ControlProcess random_control(const ScenarioTree& tree, Rng& rng, double bound);

// Each node of level tau joins the set with probability 1/2.
std::vector<std::size_t> random_level_set(const ScenarioTree& tree, int tau, Rng& rng);

// Each leaf index joins the set with probability 1/2.
std::vector<char> random_leaf_mask(const ScenarioTree& tree, Rng& rng);

}  // namespace robust
