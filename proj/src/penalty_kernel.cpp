#include "robust/penalty_kernel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numbers>

#include "robust/error.hpp"

namespace robust {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string short_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_number(std::string_view text, const std::string& what) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorCode::invalid_argument, "cannot parse " + what + " from '" + std::string(text) + "'");
  return v;
}

void check_knots(const std::vector<double>& xs, const std::vector<double>& ys, const char* what) {
  require(xs.size() >= 2, ErrorCode::invalid_argument,
          std::string(what) + ": need at least two knots");
  require(xs.size() == ys.size(), ErrorCode::shape_mismatch,
          std::string(what) + ": knot abscissae and values differ in length");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    require(std::isfinite(xs[i]) && std::isfinite(ys[i]), ErrorCode::invalid_argument,
            std::string(what) + ": non-finite knot");
    if (i > 0)
      require(xs[i] > xs[i - 1], ErrorCode::invalid_argument,
              std::string(what) + ": knots must be strictly increasing");
  }
}

std::vector<double> segment_slopes(const std::vector<double>& xs, const std::vector<double>& ys,
                                   const char* what) {
  std::vector<double> s(xs.size() - 1);
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    s[i] = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
    if (i > 0)
      require(s[i] >= s[i - 1] - 1e-12 * (1.0 + std::abs(s[i - 1])), ErrorCode::invalid_argument,
              std::string(what) + ": knot values are not convex");
  }
  return s;
}

// Index of the segment containing x, clamped to the first/last segment.
std::size_t segment_of(const std::vector<double>& xs, double x) {
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  std::size_t i = it == xs.begin() ? 0 : static_cast<std::size_t>(it - xs.begin()) - 1;
  return std::min(i, xs.size() - 2);
}

}  // namespace

// ---------------------------------------------------------------------------

std::string DivergenceGenerator::name() const {
  switch (spec_.family) {
    case DivergenceFamily::entropy: return "entropy";
    case DivergenceFamily::quadratic: return "quadratic";
    case DivergenceFamily::power: return "power:" + short_number(spec_.power);
    case DivergenceFamily::tabulated: return "tabulated";
  }
  return "unknown";
}

double DivergenceGenerator::operator()(double x) const {
  if (!(x >= 0.0)) return kInf;
  switch (spec_.family) {
    case DivergenceFamily::entropy:
      return x == 0.0 ? 0.0 : x * std::log(x);
    case DivergenceFamily::quadratic:
      return (x - 1.0) * (x - 1.0);
    case DivergenceFamily::power: {
      const double p = spec_.power;
      return (std::pow(x, p) - p * x + p - 1.0) / (p * (p - 1.0));
    }
    case DivergenceFamily::tabulated: {
      const auto& xs = spec_.knots_x;
      const auto& ys = spec_.knots_f;
      std::size_t i = segment_of(xs, x);
      return ys[i] + slopes_[i] * (x - xs[i]);
    }
  }
  return kInf;
}

double DivergenceGenerator::derivative(double x) const {
  require(x >= 0.0, ErrorCode::domain, "generator derivative needs x >= 0");
  switch (spec_.family) {
    case DivergenceFamily::entropy:
      return x == 0.0 ? -kInf : std::log(x) + 1.0;
    case DivergenceFamily::quadratic:
      return 2.0 * (x - 1.0);
    case DivergenceFamily::power: {
      const double p = spec_.power;
      return (std::pow(x, p - 1.0) - 1.0) / (p - 1.0);
    }
    case DivergenceFamily::tabulated:
      return slopes_[segment_of(spec_.knots_x, x)];
  }
  return 0.0;
}

std::optional<double> DivergenceGenerator::conjugate_closed_form(double x) const {
  switch (spec_.family) {
    case DivergenceFamily::entropy:
      return std::exp(x - 1.0);
    case DivergenceFamily::quadratic:
      return x >= -2.0 ? x + 0.25 * x * x : -1.0;
    case DivergenceFamily::power: {
      const double p = spec_.power;
      const double base = 1.0 + (p - 1.0) * x;
      if (base <= 0.0) return -1.0 / p;
      const double y = std::pow(base, 1.0 / (p - 1.0));
      return x * y - (*this)(y);
    }
    case DivergenceFamily::tabulated:
      return std::nullopt;
  }
  return std::nullopt;
}

DivergenceGenerator make_divergence_generator(const GeneratorSpec& spec) {
  DivergenceGenerator g(spec);
  switch (spec.family) {
    case DivergenceFamily::entropy:
      g.kappa_ = std::exp(-1.0);
      g.flags_ = {true, true, true, true};
      break;
    case DivergenceFamily::quadratic:
      g.kappa_ = 0.0;
      g.flags_ = {true, true, true, false};
      break;
    case DivergenceFamily::power:
      require(std::isfinite(spec.power) && spec.power > 1.0, ErrorCode::invalid_argument,
              "power generator needs p > 1, got " + short_number(spec.power));
      // minimiser at x = 1 where f vanishes
      g.kappa_ = 0.0;
      g.flags_ = {true, true, true, false};
      break;
    case DivergenceFamily::tabulated: {
      check_knots(spec.knots_x, spec.knots_f, "tabulated generator");
      require(spec.knots_x.front() == 0.0, ErrorCode::invalid_argument,
              "tabulated generator: first knot must be at 0");
      g.slopes_ = segment_slopes(spec.knots_x, spec.knots_f, "tabulated generator");
      require(g.slopes_.back() >= 0.0, ErrorCode::invalid_argument,
              "tabulated generator: unbounded below (last slope negative)");
      double lowest = *std::min_element(spec.knots_f.begin(), spec.knots_f.end());
      g.kappa_ = std::max(0.0, -lowest);
      g.flags_.h1 = std::abs(g(1.0)) <= 1e-14;
      g.flags_.h2 = true;
      g.flags_.h3 = false;
      g.flags_.a3 = false;
      break;
    }
  }
  return g;
}

DivergenceGenerator parse_divergence_generator(std::string_view name) {
  GeneratorSpec spec;
  if (name == "entropy") {
    spec.family = DivergenceFamily::entropy;
  } else if (name == "quadratic") {
    spec.family = DivergenceFamily::quadratic;
  } else if (name.starts_with("power:")) {
    spec.family = DivergenceFamily::power;
    spec.power = parse_number(name.substr(6), "power exponent");
  } else {
    fail(ErrorCode::invalid_argument, "unknown divergence generator '" + std::string(name) + "'");
  }
  return make_divergence_generator(spec);
}

double conjugate_value(const DivergenceGenerator& g, double x) {
  require(x >= 0.0, ErrorCode::domain, "conjugate_value needs x >= 0, got " + short_number(x));
  if (auto v = g.conjugate_closed_form(x)) return *v;
  return numeric_legendre(g, x, 1e-12);
}

double numeric_legendre(const DivergenceGenerator& g, double x, double tol) {
  require(tol > 0.0, ErrorCode::invalid_argument, "numeric_legendre needs tol > 0");
  require(std::isfinite(x), ErrorCode::invalid_argument, "numeric_legendre needs finite x");
  auto phi = [&](double y) { return x * y - g(y); };

  constexpr int kMaxDoublings = 200;
  double lo = 1e-8;
  double hi = std::max(2.0, 2.0 * x);
  int doublings = 0;
  while (!(phi(hi) < phi(0.5 * hi))) {
    if (++doublings > kMaxDoublings || !std::isfinite(hi))
      fail(ErrorCode::not_converged,
           "numeric_legendre: bracket did not close for " + g.name() + " at x=" + short_number(x));
    hi *= 2.0;
  }

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo;
  double b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = phi(c);
  double fd = phi(d);
  for (int it = 0; it < 400; ++it) {
    if (b - a <= 4.0 * std::numeric_limits<double>::epsilon() * (std::abs(a) + std::abs(b))) break;
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = phi(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = phi(d);
    }
  }
  double best = std::max({fc, fd, phi(a), phi(b)});
  // sup over y > 0 includes the limit y -> 0
  return std::max(best, -g(0.0));
}

HypothesisReport check_hypotheses(const DivergenceGenerator& g, std::span<const double> probe_grid,
                                  double growth_target) {
  HypothesisReport r;
  r.f_at_one = g(1.0);
  r.h1 = std::abs(r.f_at_one) <= 1e-14;

  r.kappa = g.kappa();
  r.grid_min = kInf;
  for (double x : probe_grid) r.grid_min = std::min(r.grid_min, g(x));
  r.h2 = r.grid_min >= -r.kappa - 1e-14 * (1.0 + r.kappa);

  bool increasing = true;
  double prev = -kInf;
  for (int j = 1; j <= 15; ++j) {
    double X = std::pow(10.0, j);
    double ratio = g(X) / X;
    r.growth_probe.emplace_back(X, ratio);
    if (!(ratio > prev)) increasing = false;
    prev = ratio;
    r.h3_probe_x = X;
    r.h3_ratio = ratio;
    if (j >= 3 && ratio > growth_target) break;
  }
  r.h3 = increasing && r.h3_ratio > growth_target;

  bool decreasing = true;
  double first_drop = 0.0;
  double last_drop = 0.0;
  for (int j = 1; j <= 12; ++j) {
    double eps = std::pow(10.0, -j);
    double slope = g.derivative(eps);
    if (!r.slope_probe.empty()) {
      double drop = r.slope_probe.back().second - slope;
      if (!(drop > 0.0)) decreasing = false;
      if (r.slope_probe.size() == 1) first_drop = drop;
      last_drop = drop;
    }
    r.slope_probe.emplace_back(eps, slope);
  }
  r.a3_numeric = decreasing && first_drop > 0.0 && last_drop >= 0.5 * first_drop;
  r.a3_flag = g.flags().a3;
  r.a3_consistent = r.a3_numeric == r.a3_flag;

  r.midpoint_convex = true;
  const std::size_t n = probe_grid.size();
  auto check_pair = [&](double x, double y) {
    double fx = g(x), fy = g(y), fm = g(0.5 * (x + y));
    double slack = 1e-12 * (1.0 + std::abs(fx) + std::abs(fy));
    if (fm > 0.5 * (fx + fy) + slack) r.midpoint_convex = false;
  };
  if (n <= 512) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) check_pair(probe_grid[i], probe_grid[j]);
  } else {
    for (std::size_t i = 0; i + 1 < n; ++i) check_pair(probe_grid[i], probe_grid[i + 1]);
  }
  return r;
}

// ---------------------------------------------------------------------------

std::string ControlPenalty::name() const {
  switch (spec_.family) {
    case ControlFamily::quadratic: return "h-quadratic";
    case ControlFamily::quartic: return "h-quartic";
    case ControlFamily::tabulated: return "h-tabulated";
  }
  return "unknown";
}

double ControlPenalty::operator()(double eta) const {
  switch (spec_.family) {
    case ControlFamily::quadratic:
      return 0.5 * eta * eta;
    case ControlFamily::quartic: {
      double e2 = eta * eta;
      return 0.25 * e2 * e2;
    }
    case ControlFamily::tabulated: {
      const auto& xs = spec_.knots_x;
      const auto& hs = spec_.knots_h;
      if (eta < xs.front() || eta > xs.back()) return kInf;
      std::size_t i = segment_of(xs, eta);
      double w = (eta - xs[i]) / (xs[i + 1] - xs[i]);
      return hs[i] + w * (hs[i + 1] - hs[i]);
    }
  }
  return kInf;
}

double ControlPenalty::conjugate(double z) const {
  switch (spec_.family) {
    case ControlFamily::quadratic:
      return 0.5 * z * z;
    case ControlFamily::quartic:
      return 0.75 * std::pow(std::abs(z), 4.0 / 3.0);
    case ControlFamily::tabulated: {
      double best = -kInf;
      for (std::size_t i = 0; i < spec_.knots_x.size(); ++i)
        best = std::max(best, z * spec_.knots_x[i] - spec_.knots_h[i]);
      return best;
    }
  }
  return kInf;
}

double ControlPenalty::derivative_inverse(double y) const {
  switch (spec_.family) {
    case ControlFamily::quadratic: return y;
    case ControlFamily::quartic: return std::cbrt(y);
    case ControlFamily::tabulated: break;
  }
  fail(ErrorCode::unsupported, "derivative inverse not available for " + name());
}

std::pair<double, double> ControlPenalty::domain() const {
  if (spec_.family == ControlFamily::tabulated) return {spec_.knots_x.front(), spec_.knots_x.back()};
  return {-kInf, kInf};
}

ControlPenalty make_control_penalty(const ControlSpec& spec) {
  ControlPenalty h(spec);
  switch (spec.family) {
    case ControlFamily::quadratic:
      h.kappa1_ = 0.5;
      h.kappa2_ = 0.0;
      break;
    case ControlFamily::quartic:
      // x^4/4 - x^2 + 1 = (x^2 - 2)^2 / 4
      h.kappa1_ = 1.0;
      h.kappa2_ = 1.0;
      break;
    case ControlFamily::tabulated: {
      check_knots(spec.knots_x, spec.knots_h, "tabulated control penalty");
      segment_slopes(spec.knots_x, spec.knots_h, "tabulated control penalty");
      require(spec.knots_x.front() <= 0.0 && spec.knots_x.back() >= 0.0, ErrorCode::invalid_argument,
              "tabulated control penalty: domain must contain 0");
      require(spec.kappa1 > 0.0 && spec.kappa2 >= 0.0, ErrorCode::invalid_argument,
              "tabulated control penalty: need kappa1 > 0 and kappa2 >= 0");
      h.kappa1_ = spec.kappa1;
      h.kappa2_ = spec.kappa2;
      require(std::abs(h(0.0)) <= 1e-14, ErrorCode::invalid_argument,
              "tabulated control penalty: h(0) must be 0");
      for (std::size_t i = 0; i < spec.knots_x.size(); ++i) {
        double x = spec.knots_x[i];
        require(spec.knots_h[i] >= 0.0, ErrorCode::invalid_argument,
                "tabulated control penalty: negative value at knot " + short_number(x));
        // piecewise-linear h dominates the convex minorant once it does at the knots
        require(spec.knots_h[i] >= spec.kappa1 * x * x - spec.kappa2 - 1e-12,
                ErrorCode::invalid_argument,
                "tabulated control penalty: quadratic lower bound fails at knot " + short_number(x));
      }
      break;
    }
  }
  return h;
}

ControlPenalty parse_control_penalty(std::string_view name) {
  ControlSpec spec;
  if (name == "h-quadratic") {
    spec.family = ControlFamily::quadratic;
  } else if (name == "h-quartic") {
    spec.family = ControlFamily::quartic;
  } else {
    fail(ErrorCode::invalid_argument, "unknown control penalty '" + std::string(name) + "'");
  }
  return make_control_penalty(spec);
}

ControlArgSup argsup_control(const ControlPenalty& h, double z, double beta) {
  require(beta > 0.0, ErrorCode::invalid_argument, "argsup_control needs beta > 0");
  ControlArgSup out;
  if (h.has_derivative_inverse()) {
    out.eta = h.derivative_inverse(z / beta);
    out.value = z * out.eta - beta * h(out.eta);
    return out;
  }
  // Piecewise-linear h: the supremum of a concave piecewise-linear function sits on a knot.
  const double z_scaled = z / beta;
  double best = -kInf;
  for (double x : h.knots()) {
    double v = z_scaled * x - h(x);
    if (v > best) {
      best = v;
      out.eta = x;
    }
  }
  out.value = beta * best;
  return out;
}

Penalty parse_penalty(std::string_view name) {
  if (name.starts_with("h-")) return parse_control_penalty(name);
  return parse_divergence_generator(name);
}

std::string penalty_name(const Penalty& p) {
  return std::visit([](const auto& v) { return v.name(); }, p);
}

// ---------------------------------------------------------------------------

GrowthReport derivative_growth_check(const ScalarFunction& fn, double a1, double b1,
                                     std::span<const double> grid) {
  require(static_cast<bool>(fn.value) && static_cast<bool>(fn.derivative),
          ErrorCode::invalid_argument, "derivative_growth_check needs value and derivative");
  for (double x : grid) {
    double v = fn.value(x);
    double bound = a1 + b1 * x * x;
    if (!(std::abs(v) <= bound + 1e-12 * (1.0 + std::abs(bound))))
      fail(ErrorCode::domain, "quadratic bound |fn(x)| <= A1 + B1 x^2 fails at x=" + short_number(x));
  }
  GrowthReport r;
  r.a2 = 2.0 * a1 + fn.derivative(1.0);
  r.b2 = 5.0 * b1;
  r.pass = true;
  r.nonnegative_derivative = true;
  r.worst_margin = kInf;
  for (double x : grid) {
    double d = fn.derivative(x);
    double bound = r.a2 + r.b2 * std::abs(x);
    double margin = bound - std::abs(d);
    if (margin < r.worst_margin) {
      r.worst_margin = margin;
      r.worst_x = x;
    }
    if (margin < -1e-12 * (1.0 + std::abs(bound))) r.pass = false;
    if (d < 0.0) r.nonnegative_derivative = false;
  }
  if (grid.empty()) r.worst_margin = 0.0;
  return r;
}

}  // namespace robust
