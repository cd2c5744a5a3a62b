#include <doctest.h>

#include <cmath>

#include "robust/error.hpp"
#include "robust/robust_optimizer.hpp"
#include "robust/sampling.hpp"

using namespace robust;

namespace {

CostParams params(const std::string& penalty, double alpha = 1.0, double alpha_bar = 1.0, double beta = 1.0) {
  CostParams p;
  p.alpha = alpha;
  p.alpha_bar = alpha_bar;
  p.beta = beta;
  p.penalty = parse_penalty(penalty);
  return p;
}

ScenarioTree two_point(double up, double down) {
  TreeConfig c;
  c.terminal = NodeFunction::explicit_values({up, down});
  return build_tree(c);
}

ScenarioTree random_tree(int n, std::uint64_t seed) {
  TreeConfig c;
  c.n_steps = n;
  c.utility = NodeFunction::uniform(0.0, 1.0);
  c.terminal = NodeFunction::uniform(-1.0, 2.0);
  c.discount = NodeFunction::uniform(0.0, 0.5);
  c.seed = seed;
  return build_tree(c);
}

}  // namespace

TEST_CASE("two-point entropic optimum") {
  auto t = two_point(0.0, 1.0);
  auto p = params("entropy", 0.0);
  const double value = -std::log((1.0 + std::exp(-1.0)) / 2.0);
  const double q_star = std::exp(1.0) / (1.0 + std::exp(1.0));
  auto bf = brute_force_min(t, p, 1e-3, 3);
  CHECK(bf.value == doctest::Approx(value).epsilon(1e-9));
  CHECK(bf.measure.q[0] == doctest::Approx(q_star).epsilon(1e-5));
  auto cv = convex_min_fdiv(t, p, 1e-12, 1000);
  CHECK(cv.value == doctest::Approx(value).epsilon(1e-12));
  CHECK(cv.measure.q[0] == doctest::Approx(q_star).epsilon(1e-9));
  CHECK(cv.converged);
}

TEST_CASE("two-point quadratic optimum") {
  auto t = two_point(0.0, 1.0);
  auto bf = brute_force_min(t, params("quadratic", 0.0), 1e-3, 3);
  CHECK(bf.value == doctest::Approx(0.4375).epsilon(1e-9));
  CHECK(bf.measure.q[0] == doctest::Approx(0.625).epsilon(1e-9));
}

TEST_CASE("constant terminal value") {
  TreeConfig c;
  c.n_steps = 3;
  c.terminal = NodeFunction::constant(2.0);
  auto t = build_tree(c);
  auto r = convex_min_fdiv(t, params("entropy", 0.0, 1.5), 1e-12, 100);
  CHECK(r.value == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(r.iterations <= 1);
  for (double q : r.measure.q) CHECK(q == doctest::Approx(0.5));
  auto d = dp_min(t, params("h-quadratic", 0.0, 1.5));
  CHECK(d.value == doctest::Approx(3.0).epsilon(1e-14));
}

TEST_CASE("convex solver against brute force") {
  Rng rng(2);
  for (const char* name : {"entropy", "quadratic", "power:3"})
    for (int n : {1, 2}) {
      auto t = random_tree(n, rng.next());
      auto p = params(name, 1.0, 1.0, rng.uniform(0.3, 3.0));
      auto cv = convex_min_fdiv(t, p, 1e-12, 50000);
      auto bf = brute_force_min(t, p, 1e-2, 3);
      CHECK(cv.value <= bf.value + 1e-12);
      CHECK(bf.value - cv.value <= std::max(1e-9, bf.residual));
    }
}

TEST_CASE("dp against brute force for the consistent family") {
  auto t = random_tree(2, 31);
  for (const char* name : {"h-quadratic", "h-quartic"}) {
    auto p = params(name);
    auto dp = dp_min(t, p);
    auto bf = brute_force_min(t, p, 1e-2, 3);
    CHECK(dp.value <= bf.value + 1e-12);
    CHECK(bf.value - dp.value <= std::max(1e-9, bf.residual));
  }
}

TEST_CASE("brute force guards and ties") {
  CHECK_THROWS_AS(brute_force_min(random_tree(3, 1), params("entropy"), 1e-4, 0), Error);
  CHECK_THROWS_AS(brute_force_min(random_tree(4, 1), params("entropy"), 0.25, 0), Error);
  // a flat objective resolves to the first grid point
  TreeConfig c;
  auto t = build_tree(c);
  auto r = brute_force_min(t, params("entropy", 0.0, 0.0), 0.25, 0);
  CHECK(r.measure.q[0] == 0.5);  // unique minimiser of the divergence
}

TEST_CASE("uniqueness from different starts") {
  auto t = random_tree(3, 44);
  auto p = params("entropy");
  auto a = convex_min_fdiv(t, p, 1e-12, 50000);
  std::vector<double> start(t.leaf_count());
  for (std::size_t i = 0; i < start.size(); ++i) start[i] = i % 2 ? 1.5 : 0.5;
  auto b = convex_min_fdiv(t, p, 1e-12, 50000, &start);
  for (std::size_t i = 0; i < start.size(); ++i) CHECK(std::abs(a.leaf_density[i] - b.leaf_density[i]) <= 1e-6);
}

TEST_CASE("directional derivative") {
  auto t = random_tree(3, 9);
  auto p = params("entropy");
  Rng rng(8);
  auto q0 = random_measure(t, rng, 0.05);
  CHECK(gamma_directional_derivative(t, q0, q0, p) == doctest::Approx(0.0).epsilon(1e-12));

  auto best = convex_min_fdiv(t, p, 1e-12, 50000);
  for (int i = 0; i < 20; ++i)
    CHECK(gamma_directional_derivative(t, best.measure, random_measure(t, rng, 0.05), p) >= -1e-6);

  for (int i = 0; i < 20; ++i) {
    auto a = random_measure(t, rng, 0.05);
    auto b = random_measure(t, rng, 0.05);
    double an = gamma_directional_derivative(t, a, b, p);
    double e = 1e-6;
    double fd = (gamma_of_measure(t, mix_measures(t, a, b, e), p) - gamma_of_measure(t, mix_measures(t, a, b, -e), p)) /
                (2 * e);
    CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(an)));
  }

  // mass pushed onto a dead atom under entropy
  auto tp = two_point(0.0, 1.0);
  CHECK(std::isinf(gamma_directional_derivative(tp, MeasureSpec{{1.0}}, MeasureSpec{{0.5}}, p)));
}

TEST_CASE("Bellman process") {
  auto t = random_tree(3, 5);
  for (const char* name : {"entropy", "h-quadratic"}) {
    auto p = params(name);
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
      auto b = bellman_process(t, random_measure(t, rng, 0.01), p);
      for (double r : b.residual) CHECK(r >= -1e-9);
    }
  }

  // one step: J(root) is the optimum and J(leaf) the realised cost
  auto tp = two_point(0.0, 1.0);
  auto p = params("entropy", 0.0);
  auto best = convex_min_fdiv(tp, p, 1e-12, 1000);
  auto b = bellman_process(tp, best.measure, p);
  CHECK(b.j[0] == doctest::Approx(best.value).epsilon(1e-10));
  CHECK(std::abs(b.residual[0]) <= 1e-8);

  auto d = dp_min(t, params("h-quartic"));
  auto bd = bellman_process(t, d.measure, params("h-quartic"));
  for (double r : bd.residual) CHECK(std::abs(r) <= 1e-8);
}

TEST_CASE("equivalence and the closure") {
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    auto t = random_tree(3, rng.next());
    auto r = convex_min_fdiv(t, params("entropy", 1.0, 3.0, 0.3), 1e-12, 50000);
    CHECK(r.min_density_atom > 0.0);
  }

  auto t = two_point(0.0, 5.0);
  auto quad = params("quadratic", 0.0);
  auto r = convex_min_fdiv(t, quad, 1e-12, 1000);
  CHECK(r.min_density_atom == 0.0);
  CHECK(r.value == doctest::Approx(1.0));

  auto ent = interior_vs_closure_check(two_point(0.0, 1.0), params("entropy", 0.0), 1e-4);
  CHECK(ent.pass);
  CHECK(ent.difference <= 1e-4);

  double last = INFINITY;
  for (double eps : {1e-1, 1e-2, 1e-3}) {
    auto c = interior_vs_closure_check(t, quad, 1e-9, eps, 2);
    CHECK(c.pass);
    CHECK(c.difference > 0.0);
    CHECK(c.difference < last);
    last = c.difference;
  }
}

TEST_CASE("convexity along terminal mixtures") {
  auto t = random_tree(3, 15);
  Rng rng(15);
  for (const char* name : {"entropy", "h-quadratic"}) {
    auto p = params(name);
    for (int i = 0; i < 100; ++i) {
      auto a = random_measure(t, rng);
      auto b = random_measure(t, rng);
      double x = rng.uniform(0.01, 0.99);
      double mid = gamma_of_measure(t, mix_measures(t, a, b, x), p);
      CHECK(mid <= (1 - x) * gamma_of_measure(t, a, p) + x * gamma_of_measure(t, b, p) + 1e-12);
    }
  }
}

TEST_CASE("monotone in beta") {
  auto t = random_tree(3, 19);
  double prev = -INFINITY;
  for (double beta : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double v = convex_min_fdiv(t, params("entropy", 1.0, 1.0, beta), 1e-12, 50000).value;
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}
