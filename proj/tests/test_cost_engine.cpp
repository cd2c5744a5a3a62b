#include <doctest.h>

#include <cmath>

#include "robust/cost_engine.hpp"
#include "robust/error.hpp"
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

ScenarioTree two_point() {
  TreeConfig c;
  c.terminal = NodeFunction::explicit_values({0.0, 1.0});
  return build_tree(c);
}

ScenarioTree random_tree(int n, std::uint64_t seed, double delta_hi = 0.5) {
  TreeConfig c;
  c.n_steps = n;
  c.horizon = 1.3;
  c.utility = NodeFunction::uniform(-1.0, 1.0);
  c.terminal = NodeFunction::uniform(-2.0, 2.0);
  c.discount = NodeFunction::uniform(0.0, delta_hi);
  c.seed = seed;
  return build_tree(c);
}

// E_Q[sum_s S_s h(eta_s) dt] by enumerating paths
double compact_oracle(const ScenarioTree& t, const ControlProcess& eta, const ControlPenalty& h) {
  double total = 0.0;
  for (std::size_t leaf = 0; leaf < t.leaf_count(); ++leaf) {
    std::vector<std::size_t> path;
    for (std::size_t v = t.first_leaf() + leaf; v != 0;) {
      std::size_t p = ScenarioTree::parent(v);
      path.push_back(p);
      v = p;
    }
    double prob = 1.0, s = 1.0, acc = 0.0;
    std::size_t child = t.first_leaf() + leaf;
    for (auto it = path.rbegin(); it != path.rend(); ++it) {
      std::size_t v = *it;
      acc += s * h(eta.eta[v]) * t.dt();
      s *= std::exp(-t.discount()[v] * t.dt());
    }
    for (std::size_t v = child; v != 0;) {
      std::size_t p = ScenarioTree::parent(v);
      double q = (1.0 + eta.eta[p] * t.sqrt_dt()) / 2.0;
      prob *= v == ScenarioTree::up(p) ? q : 1.0 - q;
      v = p;
    }
    total += prob * acc;
  }
  return total;
}

}  // namespace

TEST_CASE("utility leg") {
  TreeConfig c;
  c.utility = NodeFunction::constant(1.0);
  auto t = build_tree(c);
  CHECK(utility_leg(t, reference_measure(t), params("entropy", 1.0, 0.0)) == doctest::Approx(1.0));

  TreeConfig k;
  k.n_steps = 3;
  k.terminal = NodeFunction::constant(2.0);
  auto tk = build_tree(k);
  Rng rng(1);
  CHECK(utility_leg(tk, random_measure(tk, rng), params("entropy", 0.0, 1.5)) == doctest::Approx(3.0));

  auto tr = random_tree(4, 8);
  auto p = params("entropy", 0.7, 1.3);
  auto Q = random_measure(tr, rng);
  auto prob = leaf_probabilities(tr, Q);
  auto u = realized_utility(tr, p);
  double e = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) e += prob[i] * u[i];
  CHECK(std::abs(utility_leg(tr, Q, p) - e) <= 1e-13);
}

TEST_CASE("f-divergence penalty") {
  auto t = two_point();
  auto g = parse_divergence_generator("entropy");
  CHECK(fdiv_penalty(t, reference_measure(t), g) == 0.0);
  CHECK(fdiv_penalty(t, MeasureSpec{{0.75}}, g) == doctest::Approx(0.130812).epsilon(1e-6));
  CHECK(fdiv_penalty(t, MeasureSpec{{1.0}}, g) == doctest::Approx(std::log(2.0)));

  // with delta = 0 only the terminal term survives
  TreeConfig c;
  c.n_steps = 4;
  auto t4 = build_tree(c);
  Rng rng(3);
  auto Q = random_measure(t4, rng);
  CHECK(fdiv_penalty(t4, Q, g) == doctest::Approx(f_divergence(t4, Q, g)).epsilon(1e-14));

  // conditional at a node with no mass
  CHECK_THROWS_AS(fdiv_penalty(t, MeasureSpec{{1.0}}, g, 2), Error);
}

TEST_CASE("consistent penalty forms") {
  auto h = parse_control_penalty("h-quadratic");
  TreeConfig c;
  c.n_steps = 5;
  c.horizon = 2.0;
  auto t = build_tree(c);
  ControlProcess zero{std::vector<double>(t.internal_count(), 0.0)};
  CHECK(consistent_penalty(t, zero, h, 0, PenaltyForm::nested) == 0.0);
  CHECK(consistent_penalty(t, zero, h, 0, PenaltyForm::compact) == 0.0);

  ControlProcess constant{std::vector<double>(t.internal_count(), 0.8)};
  CHECK(consistent_penalty(t, constant, h) == doctest::Approx(0.32 * 2.0));
  CHECK(gamma_zero(t, constant, h) == doctest::Approx(0.32 * 2.0));

  Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    auto tr = random_tree(1 + static_cast<int>(rng.index(8)), rng.next(), 2.0);
    auto eta = random_control(tr, rng, 2.0);
    const auto& hh = i % 2 ? h : parse_control_penalty("h-quartic");
    double nested = consistent_penalty(tr, eta, hh, 0, PenaltyForm::nested);
    double compact = consistent_penalty(tr, eta, hh, 0, PenaltyForm::compact);
    CHECK(std::abs(nested - compact) <= 1e-12);
    CHECK(std::abs(compact - compact_oracle(tr, eta, hh)) <= 1e-13);
  }
}

TEST_CASE("total cost on the two-point instance") {
  auto t = two_point();
  auto p = params("entropy", 0.0, 1.0);
  CHECK(gamma_value(t, reference_measure(t), p) == doctest::Approx(0.5));
  CHECK(gamma_value(t, MeasureSpec{{0.75}}, p) == doctest::Approx(0.380812).epsilon(1e-6));

  auto r = total_cost(t, MeasureSpec{{0.75}}, p);
  CHECK(r.utility_leg == doctest::Approx(0.25));
  CHECK(r.penalty_leg == doctest::Approx(0.130812).epsilon(1e-6));
  CHECK(r.bound_upper_ok);
  CHECK(r.bound_lower_ok);

  CHECK_THROWS_AS(total_cost(t, ControlProcess{{0.1}}, p), Error);
  CHECK_THROWS_AS(total_cost(t, MeasureSpec{{0.5}}, params("h-quadratic")), Error);
}

TEST_CASE("gamma at the reference measure") {
  for (const char* name : {"entropy", "quadratic", "h-quadratic", "h-quartic"}) {
    auto t = random_tree(4, 77);
    auto p = params(name, 0.9, 1.1, 2.0);
    CostArgument arg = p.fdiv() ? CostArgument{reference_measure(t)}
                                : CostArgument{ControlProcess{std::vector<double>(t.internal_count(), 0.0)}};
    auto u = realized_utility(t, p);
    double mean = 0.0;
    for (double v : u) mean += v / static_cast<double>(u.size());
    CHECK(gamma_value(t, arg, p) == doctest::Approx(mean).epsilon(1e-13));
  }
}

TEST_CASE("bound constants from the formulas") {
  TreeConfig c;
  c.n_steps = 2;
  auto t = build_tree(c);  // U = Ubar = delta = 0
  auto e = params("entropy");
  CHECK(bound_constant_upper(t, e) == doctest::Approx(2.0));
  CHECK(bound_constant_lower(t, e) == doctest::Approx(2.0));
  auto h = params("h-quadratic");
  CHECK(bound_constant_upper(t, h) == doctest::Approx(2.0));

  // scaling the terminal value up never decreases C
  TreeConfig d;
  d.n_steps = 3;
  d.terminal = NodeFunction::uniform(0.0, 1.0);
  d.seed = 4;
  auto t1 = build_tree(d);
  d.terminal = NodeFunction::uniform(0.0, 10.0);
  auto t10 = build_tree(d);
  for (const char* name : {"entropy", "quadratic", "h-quadratic", "h-quartic"}) {
    auto p = params(name);
    CHECK(bound_constant_upper(t10, p) >= bound_constant_upper(t1, p));
    CHECK(gamma_value(t1, p.fdiv() ? CostArgument{reference_measure(t1)}
                                   : CostArgument{ControlProcess{std::vector<double>(7, 0.0)}},
                      p) <= bound_constant_upper(t1, p));
  }
}

TEST_CASE("the lower bound needs a nonnegative cost") {
  // Ubar = -5: d(P|P) = 0 but K (1 + Gamma(P)) < 0
  TreeConfig c;
  c.n_steps = 2;
  c.terminal = NodeFunction::constant(-5.0);
  auto t = build_tree(c);
  auto r = total_cost(t, reference_measure(t), params("entropy"));
  CHECK(r.gamma == doctest::Approx(-5.0));
  CHECK(r.divergence == 0.0);
  CHECK_FALSE(r.bound_lower_ok);
}

TEST_CASE("tail bound") {
  TreeConfig c;
  c.n_steps = 3;
  c.utility = NodeFunction::uniform(-1.0, 1.0);
  c.terminal = NodeFunction::uniform(-2.0, 2.0);
  c.discount = NodeFunction::uniform(0.0, 0.5);
  c.seed = 12;
  auto t = build_tree(c);
  auto p = params("entropy");
  std::vector<char> none(t.leaf_count(), 0), all(t.leaf_count(), 1);

  auto r = tail_bound_check(t, reference_measure(t), p, none, 1.0);
  CHECK(r.lhs == 0.0);
  CHECK(r.rhs == doctest::Approx(p.generator().kappa()));
  CHECK(r.pass);
  CHECK(tail_bound_check(t, reference_measure(t), p, all, 1.0).pass);

  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    auto mask = random_leaf_mask(t, rng);
    double scale = rng.uniform(0.1, 3.0);
    CHECK(tail_bound_check(t, random_measure(t, rng), p, mask, scale).pass);
    CHECK(tail_bound_check(t, random_control(t, rng, 2.0), params("h-quadratic"), mask, scale).pass);
  }
  CHECK_THROWS_AS(tail_bound_check(t, reference_measure(t), p, all, 0.0), Error);
}
