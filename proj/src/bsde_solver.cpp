#include "robust/bsde_solver.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "robust/error.hpp"
#include "robust/parallel.hpp"

namespace robust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kParallelLevel = 2048;

void for_level(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n >= kParallelLevel) {
    parallel_for(n, body);
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
}

BSDESolution empty_solution(const Lattice& lat, Scheme scheme) {
  BSDESolution s;
  s.scheme = scheme;
  s.dt = lat.dt();
  s.recombining = lat.recombining();
  const int n = lat.n_steps();
  s.y.resize(static_cast<std::size_t>(n) + 1);
  s.z.resize(static_cast<std::size_t>(n));
  s.eta.resize(static_cast<std::size_t>(n));
  for (int k = 0; k <= n; ++k) s.y[static_cast<std::size_t>(k)].assign(lat.level_size(k), 0.0);
  for (int k = 0; k < n; ++k) {
    s.z[static_cast<std::size_t>(k)].assign(lat.level_size(k), 0.0);
    s.eta[static_cast<std::size_t>(k)].assign(lat.level_size(k), 0.0);
  }
  return s;
}

void set_terminal(const Lattice& lat, const CostParams& params, BSDESolution& s) {
  auto& yN = s.y.back();
  for (std::size_t i = 0; i < yN.size(); ++i) yN[i] = params.alpha_bar * lat.terminal()[i];
}

const ControlPenalty& require_consistent(const CostParams& params, const char* who) {
  validate_params(params);
  if (params.fdiv())
    fail(ErrorCode::invalid_argument, std::string(who) + " needs a consistent-time (h-) penalty");
  return params.control_penalty();
}

}  // namespace

double Lattice::walk(int k, std::size_t i) const {
  int downs = recombining_ ? static_cast<int>(i) : std::popcount(i);
  return static_cast<double>(k - 2 * downs) * sqrt_dt_;
}

bool Lattice::zero_discount() const {
  for (const auto& lvl : discount_)
    for (double d : lvl)
      if (d != 0.0) return false;
  return true;
}

Lattice make_recombining_lattice(const TreeConfig& config) {
  require(config.n_steps >= 1 && config.n_steps <= kMaxLatticeSteps, ErrorCode::invalid_argument,
          "lattice steps must be in [1, " + std::to_string(kMaxLatticeSteps) + "]");
  require(std::isfinite(config.horizon) && config.horizon > 0.0, ErrorCode::invalid_argument,
          "horizon must be > 0");
  require(config.utility.is_state_function() && config.discount.is_state_function() &&
              config.terminal.is_state_function(),
          ErrorCode::invalid_argument,
          "recombining lattice needs utility, discount and terminal given as functions of the walk");
  Lattice lat;
  lat.n_steps_ = config.n_steps;
  lat.dt_ = config.horizon / config.n_steps;
  lat.sqrt_dt_ = std::sqrt(lat.dt_);
  lat.recombining_ = true;
  lat.utility_.resize(static_cast<std::size_t>(config.n_steps));
  lat.discount_.resize(static_cast<std::size_t>(config.n_steps));
  for (int k = 0; k < config.n_steps; ++k) {
    auto& u = lat.utility_[static_cast<std::size_t>(k)];
    auto& d = lat.discount_[static_cast<std::size_t>(k)];
    u.resize(lat.level_size(k));
    d.resize(lat.level_size(k));
    for (std::size_t i = 0; i < u.size(); ++i) {
      double w = lat.walk(k, i);
      u[i] = config.utility.at_state(w);
      d[i] = config.discount.at_state(w);
      require(d[i] >= 0.0, ErrorCode::domain, "discount rate is negative on the lattice");
    }
  }
  lat.terminal_.resize(lat.level_size(config.n_steps));
  for (std::size_t i = 0; i < lat.terminal_.size(); ++i)
    lat.terminal_[i] = config.terminal.at_state(lat.walk(config.n_steps, i));
  return lat;
}

Lattice lattice_from_tree(const ScenarioTree& tree) {
  Lattice lat;
  lat.n_steps_ = tree.n_steps();
  lat.dt_ = tree.dt();
  lat.sqrt_dt_ = tree.sqrt_dt();
  lat.recombining_ = false;
  lat.utility_.resize(static_cast<std::size_t>(tree.n_steps()));
  lat.discount_.resize(static_cast<std::size_t>(tree.n_steps()));
  for (int k = 0; k < tree.n_steps(); ++k) {
    auto first = static_cast<std::ptrdiff_t>(ScenarioTree::level_offset(k));
    auto count = static_cast<std::ptrdiff_t>(lat.level_size(k));
    lat.utility_[static_cast<std::size_t>(k)].assign(tree.utility().begin() + first,
                                                     tree.utility().begin() + first + count);
    lat.discount_[static_cast<std::size_t>(k)].assign(tree.discount().begin() + first,
                                                      tree.discount().begin() + first + count);
  }
  lat.terminal_ = tree.terminal();
  return lat;
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::dp: return "dp";
    case Scheme::euler: return "euler";
    case Scheme::closed_form: return "closed";
  }
  return "unknown";
}

NodeMin control_node_min(const ControlPenalty& h, double beta, double z, double box_half_width) {
  NodeMin out;
  auto objective = [&](double e) { return beta * h(e) + e * z; };
  if (h.has_derivative_inverse()) {
    out.eta = h.derivative_inverse(-z / beta);
    if (box_half_width > 0.0 && std::abs(out.eta) > box_half_width) {
      out.eta = std::clamp(out.eta, -box_half_width, box_half_width);
      out.truncated = true;
      out.value = objective(out.eta);
    } else {
      out.value = -beta * h.conjugate(-z / beta);
    }
    return out;
  }
  // Piecewise-linear h: the minimum sits on a knot or on the edge of the box.
  auto [lo, hi] = h.domain();
  double a = lo, b = hi;
  if (box_half_width > 0.0) {
    a = std::max(lo, -box_half_width);
    b = std::min(hi, box_half_width);
  }
  require(a <= b, ErrorCode::domain, "control domain does not meet the admissibility box");
  out.value = kInf;
  auto consider = [&](double e) {
    double v = objective(e);
    if (v < out.value) {
      out.value = v;
      out.eta = e;
    }
  };
  consider(a);
  for (double x : h.knots())
    if (x > a && x < b) consider(x);
  consider(b);
  return out;
}

BSDESolution dp_min_solve(const Lattice& lat, const CostParams& params) {
  const ControlPenalty& h = require_consistent(params, "dp_min_solve");
  BSDESolution s = empty_solution(lat, Scheme::dp);
  set_terminal(lat, params, s);
  const double dt = lat.dt();
  const double sq = lat.sqrt_dt();
  const double box = 1.0 / sq;
  for (int k = lat.n_steps() - 1; k >= 0; --k) {
    const auto& next = s.y[static_cast<std::size_t>(k) + 1];
    auto& y = s.y[static_cast<std::size_t>(k)];
    auto& z = s.z[static_cast<std::size_t>(k)];
    auto& eta = s.eta[static_cast<std::size_t>(k)];
    const auto& u = lat.utility(k);
    const auto& del = lat.discount(k);
    std::vector<char> trunc(y.size(), 0);
    for_level(y.size(), [&](std::size_t i) {
      double yu = next[lat.up(i)];
      double yd = next[lat.down(i)];
      double disc = std::exp(-del[i] * dt);
      z[i] = (yu - yd) / (2.0 * sq);
      // E_q[Y'] = (yu + yd)/2 + eta sqrt(dt) (yu - yd)/2, so the eta-dependent part is dt (beta h + eta ztil)
      double ztil = disc * z[i];
      NodeMin m = control_node_min(h, params.beta, ztil, box);
      eta[i] = m.eta;
      trunc[i] = m.truncated ? 1 : 0;
      y[i] = params.alpha * u[i] * dt + disc * 0.5 * (yu + yd) + dt * m.value;
    });
    for (char t : trunc) s.truncated += t ? 1 : 0;
  }
  return s;
}

BSDESolution euler_bsde_solve(const Lattice& lat, const CostParams& params,
                              const BsdeOptions& options) {
  const ControlPenalty& h = require_consistent(params, "euler_bsde_solve");
  BSDESolution s = empty_solution(lat, Scheme::euler);
  set_terminal(lat, params, s);
  const double dt = lat.dt();
  const double sq = lat.sqrt_dt();
  const double beta = params.beta;
  const double scale = options.driver_beta_scaling ? beta : 1.0;
  for (int k = lat.n_steps() - 1; k >= 0; --k) {
    const auto& next = s.y[static_cast<std::size_t>(k) + 1];
    auto& y = s.y[static_cast<std::size_t>(k)];
    auto& z = s.z[static_cast<std::size_t>(k)];
    auto& eta = s.eta[static_cast<std::size_t>(k)];
    const auto& u = lat.utility(k);
    const auto& del = lat.discount(k);
    for_level(y.size(), [&](std::size_t i) {
      double yu = next[lat.up(i)];
      double yd = next[lat.down(i)];
      z[i] = (yu - yd) / (2.0 * sq);
      double driver = scale * h.conjugate(-z[i] / beta);
      y[i] = (0.5 * (yu + yd) + dt * (params.alpha * u[i] - driver)) / (1.0 + del[i] * dt);
      eta[i] = control_node_min(h, beta, z[i], 0.0).eta;
    });
  }
  return s;
}

BSDESolution entropic_closed_form(const Lattice& lat, const CostParams& params) {
  const ControlPenalty& h = require_consistent(params, "entropic_closed_form");
  require(h.family() == ControlFamily::quadratic, ErrorCode::unsupported,
          "closed form needs the quadratic control penalty");
  require(lat.zero_discount(), ErrorCode::unsupported, "closed form needs zero discount");
  BSDESolution s = empty_solution(lat, Scheme::closed_form);
  const double beta = params.beta;
  const double dt = lat.dt();
  const double sq = lat.sqrt_dt();
  const double ln2 = std::log(2.0);

  // L = log E_P[exp(-xi / beta) | node], Y = -beta L
  std::vector<double> l(lat.terminal().size());
  for (std::size_t i = 0; i < l.size(); ++i) l[i] = -params.alpha_bar * lat.terminal()[i] / beta;
  s.y.back() = l;
  for (auto& v : s.y.back()) v *= -beta;
  for (int k = lat.n_steps() - 1; k >= 0; --k) {
    const auto& u = lat.utility(k);
    std::vector<double> lk(lat.level_size(k));
    for_level(lk.size(), [&](std::size_t i) {
      double a = l[lat.up(i)];
      double b = l[lat.down(i)];
      double m = std::max(a, b);
      double lse = m + std::log1p(std::exp(-std::abs(a - b)));
      lk[i] = -params.alpha * u[i] * dt / beta + lse - ln2;
    });
    auto& y = s.y[static_cast<std::size_t>(k)];
    auto& z = s.z[static_cast<std::size_t>(k)];
    auto& eta = s.eta[static_cast<std::size_t>(k)];
    const auto& next = s.y[static_cast<std::size_t>(k) + 1];
    for (std::size_t i = 0; i < y.size(); ++i) {
      y[i] = -beta * lk[i];
      z[i] = (next[lat.up(i)] - next[lat.down(i)]) / (2.0 * sq);
      eta[i] = control_node_min(h, beta, z[i], 0.0).eta;
    }
    l.swap(lk);
  }
  return s;
}

BSDESolution solve_bsde(const Lattice& lattice, const CostParams& params, Scheme scheme,
                        const BsdeOptions& options) {
  switch (scheme) {
    case Scheme::dp: return dp_min_solve(lattice, params);
    case Scheme::euler: return euler_bsde_solve(lattice, params, options);
    case Scheme::closed_form: return entropic_closed_form(lattice, params);
  }
  fail(ErrorCode::invalid_argument, "unknown scheme");
}

namespace {

std::size_t lattice_index(const BSDESolution& s, std::size_t path_index) {
  return s.recombining ? static_cast<std::size_t>(std::popcount(path_index)) : path_index;
}

void check_layout(const ScenarioTree& tree, const BSDESolution& s) {
  require(s.y.size() == static_cast<std::size_t>(tree.n_steps()) + 1, ErrorCode::shape_mismatch,
          "solution and tree have different step counts");
  require(std::abs(s.dt - tree.dt()) <= 1e-15 * tree.dt(), ErrorCode::shape_mismatch,
          "solution and tree have different time steps");
}

}  // namespace

ControlProcess solution_control(const ScenarioTree& tree, const BSDESolution& solution) {
  check_layout(tree, solution);
  ControlProcess c;
  c.eta.resize(tree.internal_count());
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    int k = ScenarioTree::level(v);
    c.eta[v] = solution.eta[static_cast<std::size_t>(k)][lattice_index(solution, ScenarioTree::path_index(v))];
  }
  return c;
}

BellmanProcess reconstruct_bellman(const ScenarioTree& tree, const BSDESolution& solution,
                                   const CostParams& params, const ControlProcess* control) {
  const ControlPenalty& h = require_consistent(params, "reconstruct_bellman");
  check_layout(tree, solution);
  ControlProcess own;
  if (!control) {
    own = solution_control(tree, solution);
    control = &own;
  }
  MeasureSpec Q = measure_from_control(tree, *control);
  auto s = discount_process(tree);

  BellmanProcess out;
  out.j.assign(tree.node_count(), 0.0);
  std::vector<double> past(tree.node_count(), 0.0);
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double add = s[v] * (params.alpha * tree.utility()[v] + params.beta * h(control->eta[v])) * tree.dt();
    past[ScenarioTree::up(v)] = past[v] + add;
    past[ScenarioTree::down(v)] = past[v] + add;
  }
  for (std::size_t v = 0; v < tree.node_count(); ++v) {
    int k = ScenarioTree::level(v);
    double y = solution.y[static_cast<std::size_t>(k)][lattice_index(solution, ScenarioTree::path_index(v))];
    out.j[v] = s[v] * y + past[v];
  }
  out.residual.resize(tree.internal_count());
  for (std::size_t v = 0; v < tree.internal_count(); ++v) {
    double q = Q.q[v];
    out.residual[v] = q * out.j[ScenarioTree::up(v)] + (1.0 - q) * out.j[ScenarioTree::down(v)] - out.j[v];
  }
  return out;
}

std::vector<ConvergenceRow> convergence_study(const TreeConfig& base, const CostParams& params,
                                             const std::vector<int>& n_list, double reference,
                                             const BsdeOptions& options) {
  require(!n_list.empty(), ErrorCode::invalid_argument, "convergence study needs at least one N");
  for (std::size_t i = 1; i < n_list.size(); ++i)
    require(n_list[i] > n_list[i - 1], ErrorCode::invalid_argument, "N list must be increasing");
  std::vector<ConvergenceRow> rows;
  for (int n : n_list) {
    TreeConfig cfg = base;
    cfg.n_steps = n;
    Lattice lat = make_recombining_lattice(cfg);
    ConvergenceRow r;
    r.n = n;
    r.y_euler = euler_bsde_solve(lat, params, options).y0();
    r.y_dp = dp_min_solve(lat, params).y0();
    r.reference = reference;
    r.error_euler = std::abs(r.y_euler - reference);
    r.error_dp = std::abs(r.y_dp - reference);
    if (!rows.empty()) {
      r.ratio_euler = rows.back().error_euler / r.error_euler;
      r.ratio_dp = rows.back().error_dp / r.error_dp;
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace robust
