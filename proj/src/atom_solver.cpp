#include "atom_solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>

#include "robust/error.hpp"

namespace robust::detail {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Node averages in relative heap order; leaves occupy the last n slots.
void node_averages(const AtomProblem& p, const std::vector<double>& x, std::vector<double>& avg) {
  const std::size_t n = p.atoms();
  avg.resize(2 * n - 1);
  std::copy(x.begin(), x.end(), avg.begin() + static_cast<std::ptrdiff_t>(n - 1));
  for (std::size_t u = n - 1; u-- > 0;) avg[u] = 0.5 * (avg[2 * u + 1] + avg[2 * u + 2]);
}

// The constant direction is orthogonal to the feasible set; dropping it keeps
// g.d free of cancellation near the optimum.
void centered_gradient(const AtomProblem& p, const std::vector<double>& x, std::vector<double>& g) {
  atom_gradient(p, x, g);
  double m = 0.0;
  for (double v : g) m += v;
  m /= static_cast<double>(g.size());
  for (double& v : g) v -= m;
}

struct SolveState {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

double projected_residual(const std::vector<double>& x,
                          const std::vector<double>& g, double lo, double total,
                          std::vector<double>& scratch) {
  scratch.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) scratch[i] = x[i] - g[i];
  project_capped_simplex(scratch, lo, total);
  double r = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r = std::max(r, std::abs(scratch[i] - x[i]));
  return r;
}

void spg(const AtomProblem& p, SolveState& st, double lo, double tol, int max_iters) {
  const std::size_t n = p.atoms();
  const double w = std::ldexp(1.0, -p.depth);
  const double total = p.mean * static_cast<double>(n);
  constexpr int kMemory = 10;
  constexpr double kArmijo = 1e-4;

  project_capped_simplex(st.x, lo, total);
  std::vector<double> g, gn, d(n), xn(n), scratch;
  centered_gradient(p, st.x, g);
  double f = atom_objective(p, st.x);
  std::deque<double> history{f};

  double r = projected_residual(st.x, g, lo, total, scratch);
  double step = 1.0 / std::max(r, 1e-12);
  st.converged = false;
  for (; st.iterations < max_iters; ++st.iterations) {
    st.residual = r;
    if (r <= tol) {
      st.converged = true;
      break;
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = st.x[i] - step * g[i];
    project_capped_simplex(d, lo, total);
    for (std::size_t i = 0; i < n; ++i) d[i] -= st.x[i];
    const double gd = w * dot(g, d);
    if (!(gd < 0.0)) break;

    const double fmax = *std::max_element(history.begin(), history.end());
    double lambda = 1.0;
    double fn = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) xn[i] = std::max(lo, st.x[i] + lambda * d[i]);
      fn = atom_objective(p, xn);
      // below rounding level the Armijo test is noise; take the step
      if (fn <= fmax + kArmijo * lambda * gd ||
          -lambda * gd <= 1e-15 * (1.0 + std::abs(f))) {
        accepted = true;
        break;
      }
      double denom = fn - f - lambda * gd;
      double trial = denom > 0.0 ? -0.5 * lambda * lambda * gd / denom : 0.5 * lambda;
      lambda = (trial >= 0.1 * lambda && trial <= 0.5 * lambda) ? trial : 0.5 * lambda;
    }
    if (!accepted) break;

    centered_gradient(p, xn, gn);
    double ss = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = xn[i] - st.x[i];
      ss += s * s;
      sy += s * (gn[i] - g[i]);
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-30, 1e30) : 1e30;
    if (!(sy > 0.0)) step = std::min(step, 1.0 / std::max(r, 1e-12));
    st.x.swap(xn);
    g.swap(gn);
    f = fn;
    history.push_back(f);
    if (history.size() > kMemory) history.pop_front();
    r = projected_residual(st.x, g, lo, total, scratch);
  }
  st.residual = r;
  if (r <= tol) st.converged = true;
  st.value = atom_objective(p, st.x);
}

}  // namespace

AtomProblem subtree_problem(const ScenarioTree& tree, std::size_t node, double alpha,
                            double alpha_bar, double beta, const DivergenceGenerator& g,
                            double mean) {
  require(node < tree.node_count(), ErrorCode::invalid_argument, "node outside the tree");
  AtomProblem p;
  p.depth = tree.n_steps() - ScenarioTree::level(node);
  p.beta = beta;
  p.g = &g;
  p.mean = mean;
  const std::size_t n = p.atoms();
  auto s = discount_process(tree);
  const double s0 = s[node];

  // relative heap index r <-> absolute id at relative depth d, position i
  auto absolute = [&](int d, std::size_t i) { return ((node + 1) << d) - 1 + i; };

  p.internal_weight.assign(n - 1, 0.0);
  std::vector<double> acc(2 * n - 1, 0.0);
  for (int d = 0; d < p.depth; ++d) {
    for (std::size_t i = 0; i < (std::size_t{1} << d); ++i) {
      std::size_t r = (std::size_t{1} << d) - 1 + i;
      std::size_t v = absolute(d, i);
      double rel = s[v] / s0;
      p.internal_weight[r] = tree.discount()[v] * rel * tree.dt();
      double next = acc[r] + alpha * rel * tree.utility()[v] * tree.dt();
      acc[2 * r + 1] = next;
      acc[2 * r + 2] = next;
    }
  }
  p.leaf_cost.resize(n);
  p.terminal_weight.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = absolute(p.depth, i);
    double rel = s[v] / s0;
    p.terminal_weight[i] = rel;
    p.leaf_cost[i] = acc[n - 1 + i] + alpha_bar * rel * tree.terminal()[v - tree.first_leaf()];
  }
  return p;
}

double atom_objective(const AtomProblem& p, const std::vector<double>& x) {
  const std::size_t n = p.atoms();
  const DivergenceGenerator& f = *p.g;
  thread_local std::vector<double> avg;
  node_averages(p, x, avg);
  double linear = 0.0;
  double terminal = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += p.leaf_cost[i] * x[i];
    terminal += p.terminal_weight[i] * f(x[i]);
  }
  double running = 0.0;
  for (std::size_t u = 0; u + 1 < n; ++u) {
    if (p.internal_weight[u] == 0.0) continue;
    int du = static_cast<int>(std::bit_width(u + 1)) - 1;
    running += std::ldexp(p.internal_weight[u] * f(avg[u]), -du);
  }
  const double w = std::ldexp(1.0, -p.depth);
  return w * linear + p.beta * (running + w * terminal);
}

void atom_gradient(const AtomProblem& p, const std::vector<double>& x, std::vector<double>& grad) {
  const std::size_t n = p.atoms();
  const DivergenceGenerator& f = *p.g;
  thread_local std::vector<double> avg;
  thread_local std::vector<double> acc;
  node_averages(p, x, avg);
  acc.assign(2 * n - 1, 0.0);
  for (std::size_t u = 0; u + 1 < n; ++u) {
    double own = p.internal_weight[u] == 0.0 ? 0.0 : p.internal_weight[u] * f.derivative(avg[u]);
    double total = acc[u] + own;
    acc[2 * u + 1] = total;
    acc[2 * u + 2] = total;
  }
  grad.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    grad[i] = p.leaf_cost[i] + p.beta * (acc[n - 1 + i] + p.terminal_weight[i] * f.derivative(x[i]));
}

void project_capped_simplex(std::vector<double>& y, double lo, double total) {
  const std::size_t n = y.size();
  const double s = total - lo * static_cast<double>(n);
  if (n == 0) return;
  if (s <= 0.0) {
    std::fill(y.begin(), y.end(), lo);
    return;
  }
  thread_local std::vector<double> u;
  u.resize(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = y[i] - lo;
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    cum += u[j];
    double t = (cum - s) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  for (std::size_t i = 0; i < n; ++i) y[i] = std::max(y[i] - lo - theta, 0.0) + lo;
}

AtomSolution solve_atoms(const AtomProblem& p, const std::vector<double>* start, double tol,
                         int max_iters) {
  require(p.g != nullptr, ErrorCode::invalid_argument, "atom problem has no generator");
  require(p.mean >= 0.0 && std::isfinite(p.mean), ErrorCode::domain, "atom mean must be >= 0");
  require(tol > 0.0, ErrorCode::invalid_argument, "tolerance must be > 0");
  const std::size_t n = p.atoms();

  SolveState st;
  if (start) {
    require(start->size() == n, ErrorCode::shape_mismatch, "start point has wrong length");
    st.x = *start;
  } else {
    st.x.assign(n, p.mean);
  }

  AtomSolution out;
  if (p.mean == 0.0) {
    st.x.assign(n, 0.0);
    out.x = st.x;
    out.value = atom_objective(p, st.x);
    out.converged = true;
    return out;
  }

  const bool singular_at_zero = std::isinf(p.g->derivative(0.0));
  const double floor = singular_at_zero ? 1e-12 * p.mean : 0.0;
  spg(p, st, floor, tol, max_iters);

  if (singular_at_zero) {
    bool at_floor = false;
    for (double v : st.x) at_floor = at_floor || v <= floor * (1.0 + 1e-9);
    if (at_floor) {
      // polish with the floor relaxed to the smallest normal scale
      double relaxed = std::numeric_limits<double>::min() * 1e10 * p.mean;
      int used = st.iterations;
      st.iterations = 0;
      spg(p, st, relaxed, tol, std::max(max_iters - used, 100));
      st.iterations += used;
    }
  }

  std::vector<double> g;
  atom_gradient(p, st.x, g);
  std::size_t best = static_cast<std::size_t>(std::min_element(g.begin(), g.end()) - g.begin());
  const double total = p.mean * static_cast<double>(n);
  double gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) gap += g[i] * st.x[i];
  gap -= g[best] * total;
  out.fw_gap = std::ldexp(gap, -p.depth);
  out.x = std::move(st.x);
  out.value = st.value;
  out.iterations = st.iterations;
  out.residual = st.residual;
  out.converged = st.converged;
  return out;
}

}  // namespace robust::detail
