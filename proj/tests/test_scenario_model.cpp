#include <doctest.h>

#include <cmath>
#include <sstream>

#include "robust/error.hpp"
#include "robust/sampling.hpp"
#include "robust/scenario_model.hpp"

using namespace robust;

namespace {

TreeConfig small(int n, double horizon = 1.0) {
  TreeConfig c;
  c.n_steps = n;
  c.horizon = horizon;
  return c;
}

}  // namespace

TEST_CASE("constant two-leaf tree") {
  auto c = small(1);
  c.terminal = NodeFunction::constant(2.5);
  auto t = build_tree(c);
  CHECK(t.node_count() == 3);
  CHECK(t.leaf_count() == 2);
  CHECK(t.terminal()[0] == 2.5);
  CHECK(t.terminal()[1] == 2.5);
  CHECK(t.dt() == 1.0);
}

TEST_CASE("terminal random walk values") {
  auto c = small(2);
  c.terminal = NodeFunction::affine(0.0, 1.0);
  auto t = build_tree(c);
  const double s = std::sqrt(0.5);
  CHECK(t.terminal()[0] == doctest::Approx(2 * s));
  CHECK(t.terminal()[1] == doctest::Approx(0.0));
  CHECK(t.terminal()[2] == doctest::Approx(0.0));
  CHECK(t.terminal()[3] == doctest::Approx(-2 * s));
}

TEST_CASE("heap layout") {
  CHECK(ScenarioTree::level(0) == 0);
  CHECK(ScenarioTree::level(1) == 1);
  CHECK(ScenarioTree::level(2) == 1);
  CHECK(ScenarioTree::level(6) == 2);
  CHECK(ScenarioTree::path_index(5) == 2);
  CHECK(ScenarioTree::parent(ScenarioTree::down(4)) == 4);
}

TEST_CASE("tree determinism and validation") {
  auto c = small(4);
  c.utility = NodeFunction::uniform(0.0, 1.0);
  c.terminal = NodeFunction::uniform(-1.0, 1.0);
  c.discount = NodeFunction::uniform(0.0, 0.3);
  c.seed = 42;
  auto a = build_tree(c);
  auto b = build_tree(c);
  CHECK(a.utility() == b.utility());
  CHECK(a.terminal() == b.terminal());
  CHECK(a.discount() == b.discount());
  CHECK_FALSE(a.markov());

  c.discount = NodeFunction::constant(-0.1);
  CHECK_THROWS_AS(build_tree(c), Error);
  c.discount = NodeFunction::constant(0.0);
  c.terminal = NodeFunction::explicit_values({1.0, 2.0});
  CHECK_THROWS_AS(build_tree(c), Error);
  c.n_steps = 0;
  CHECK_THROWS_AS(build_tree(small(0)), Error);
  CHECK_THROWS_AS(build_tree(small(kMaxTreeSteps + 1)), Error);
}

TEST_CASE("discount process") {
  auto c = small(3);
  auto s0 = discount_process(build_tree(c));
  for (double s : s0) CHECK(s == 1.0);

  c.discount = NodeFunction::constant(0.4);
  auto t = build_tree(c);
  auto s = discount_process(t);
  for (std::size_t v = 0; v < t.node_count(); ++v)
    CHECK(s[v] == doctest::Approx(std::exp(-0.4 * ScenarioTree::level(v) * t.dt())).epsilon(1e-15));

  c.discount = NodeFunction::uniform(0.0, 1.0);
  c.seed = 3;
  t = build_tree(c);
  s = discount_process(t);
  for (std::size_t v = 1; v < t.node_count(); ++v) {
    double sum = 0.0;
    for (std::size_t u = v; u != 0;) {
      u = ScenarioTree::parent(u);
      sum += t.discount()[u] * t.dt();
    }
    CHECK(s[v] == doctest::Approx(std::exp(-sum)).epsilon(1e-14));
  }
}

TEST_CASE("density process") {
  auto t = build_tree(small(1));
  auto z = density_from_measure(t, MeasureSpec{{0.75}}).z;
  CHECK(z[1] == 1.5);
  CHECK(z[2] == 0.5);

  auto p = density_from_measure(t, reference_measure(t)).z;
  for (double v : p) CHECK(v == 1.0);

  auto t2 = build_tree(small(2));
  Rng rng(9);
  auto Q = random_measure(t2, rng);
  auto z2 = density_from_measure(t2, Q).z;
  double sum = 0.0;
  for (std::size_t i = 0; i < t2.leaf_count(); ++i) sum += t2.leaf_weight() * z2[t2.first_leaf() + i];
  CHECK(std::abs(sum - 1.0) <= 1e-15);

  CHECK_THROWS_AS(validate_measure(t, MeasureSpec{{1.2}}), Error);
  CHECK_THROWS_AS(validate_measure(t, MeasureSpec{{0.5, 0.5}}), Error);
}

TEST_CASE("Girsanov controls") {
  auto t = build_tree(small(1));
  auto Q = measure_from_control(t, ControlProcess{{0.5}});
  CHECK(Q.q[0] == 0.75);
  auto z = density_from_measure(t, Q).z;
  CHECK(z[1] == 1.5);
  CHECK(z[2] == 0.5);

  auto eta = control_from_measure(t, MeasureSpec{{1.0}});
  CHECK(eta.eta[0] == doctest::Approx(1.0 / t.sqrt_dt()));
  CHECK_FALSE(MeasureSpec{{1.0}}.equivalent_to_reference());

  auto zero = control_from_measure(t, reference_measure(t));
  CHECK(zero.eta[0] == 0.0);
  CHECK_THROWS_AS(validate_control(t, ControlProcess{{1.5}}), Error);

  auto t5 = build_tree(small(5, 2.0));
  Rng rng(5);
  auto e = random_control(t5, rng, 10.0);
  auto back = control_from_measure(t5, measure_from_control(t5, e));
  for (std::size_t v = 0; v < e.eta.size(); ++v) CHECK(std::abs(back.eta[v] - e.eta[v]) * t5.sqrt_dt() <= 1e-14);
}

TEST_CASE("divergences of a measure") {
  auto t = build_tree(small(1));
  MeasureSpec Q{{0.75}};
  auto ent = parse_divergence_generator("entropy");
  CHECK(f_divergence(t, Q, ent) == doctest::Approx(0.75 * std::log(1.5) + 0.25 * std::log(0.5)).epsilon(1e-15));
  CHECK(relative_entropy(t, Q) == doctest::Approx(0.130812).epsilon(1e-6));
  CHECK(f_divergence(t, Q, parse_divergence_generator("quadratic")) == doctest::Approx(0.25));
  CHECK(relative_entropy(t, MeasureSpec{{1.0}}) == doctest::Approx(std::log(2.0)));
  CHECK(relative_entropy(t, reference_measure(t)) == 0.0);
}

TEST_CASE("leaf probabilities and leaf density inverse") {
  auto t = build_tree(small(3));
  Rng rng(11);
  auto Q = random_measure(t, rng, 0.05);
  auto p = leaf_probabilities(t, Q);
  double sum = 0.0;
  for (double x : p) sum += x;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-15));

  auto z = density_from_measure(t, Q).z;
  std::vector<double> leaf(z.begin() + static_cast<std::ptrdiff_t>(t.first_leaf()), z.end());
  auto back = measure_from_leaf_density(t, leaf);
  for (std::size_t v = 0; v < Q.q.size(); ++v) CHECK(back.q[v] == doctest::Approx(Q.q[v]).epsilon(1e-14));

  std::vector<double> dead(t.leaf_count(), 0.0);
  dead[0] = 8.0;
  auto m = measure_from_leaf_density(t, dead);
  CHECK(m.q[0] == 1.0);
  CHECK(m.q[2] == 0.5);  // no mass below node 2
}

TEST_CASE("paste") {
  auto t = build_tree(small(3));
  Rng rng(21);
  auto Q = random_measure(t, rng);
  auto Qp = random_measure(t, rng);
  Qp.q[0] = Q.q[0];
  auto same = paste(t, Q, Q, 1, {1});
  CHECK(same.q == Q.q);
  CHECK(paste(t, Q, Qp, 1, {}).q == Q.q);

  auto p = paste(t, Q, Qp, 1, {1});
  CHECK(p.q[0] == Q.q[0]);
  CHECK(p.q[1] == Qp.q[1]);
  CHECK(p.q[3] == Qp.q[3]);
  CHECK(p.q[4] == Qp.q[4]);
  CHECK(p.q[2] == Q.q[2]);
  CHECK(p.q[5] == Q.q[5]);

  CHECK_THROWS_AS(paste(t, Q, random_measure(t, rng), 1, {1}), Error);  // differs below tau
  CHECK_THROWS_AS(paste(t, Q, Qp, 1, {3}), Error);                     // node not on level tau
}

TEST_CASE("tree csv") {
  auto c = small(1);
  c.utility = NodeFunction::constant(1.0);
  auto t = build_tree(c);
  std::ostringstream out;
  auto d = density_from_measure(t, reference_measure(t));
  write_tree_csv(out, t, &d);
  auto s = out.str();
  CHECK(s.rfind("level,path_index,U,delta,S,Z\r\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
