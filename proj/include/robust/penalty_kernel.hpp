#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace robust {

// ---------------------------------------------------------------------------
// Divergence generators f : [0, inf) -> R, convex with f(1) = 0.
// ---------------------------------------------------------------------------

enum class DivergenceFamily { entropy, quadratic, power, tabulated };

struct GeneratorSpec {
  DivergenceFamily family = DivergenceFamily::entropy;
  double power = 2.0;            // power family only, must exceed 1
  std::vector<double> knots_x;   // tabulated only: 0 = x_0 < x_1 < ...
  std::vector<double> knots_f;
};

struct GeneratorFlags {
  bool h1 = false;  // f(1) = 0
  bool h2 = false;  // f bounded below by -kappa
  bool h3 = false;  // f(x)/x -> +inf
  bool a3 = false;  // f'(0+) = -inf
};

class DivergenceGenerator {
 public:
  DivergenceFamily family() const { return spec_.family; }
  double power() const { return spec_.power; }
  std::string name() const;

  // f(x) for x >= 0; f(0) is the right limit. +inf outside the domain.
  double operator()(double x) const;
  // Right derivative; at 0 the right limit, which may be -inf.
  double derivative(double x) const;

  double kappa() const { return kappa_; }
  const GeneratorFlags& flags() const { return flags_; }

  // Legendre conjugate sup_{y>0} (xy - f(y)) in closed form, defined on all of R
  // for the analytic families. Empty for tabulated generators.
  std::optional<double> conjugate_closed_form(double x) const;
  bool has_closed_form_conjugate() const { return spec_.family != DivergenceFamily::tabulated; }

 private:
  friend DivergenceGenerator make_divergence_generator(const GeneratorSpec&);
  explicit DivergenceGenerator(GeneratorSpec spec) : spec_(std::move(spec)) {}

  GeneratorSpec spec_;
  std::vector<double> slopes_;  // tabulated segment slopes
  double kappa_ = 0.0;
  GeneratorFlags flags_;
};

DivergenceGenerator make_divergence_generator(const GeneratorSpec& spec);

// Accepts "entropy", "quadratic", "power:<p>".
DivergenceGenerator parse_divergence_generator(std::string_view name);

// f*(x) for x >= 0, closed form when available and numeric otherwise.
double conjugate_value(const DivergenceGenerator& g, double x);

// sup_{y>0} (xy - f(y)) by bracketing plus golden-section search. Throws
// ErrorCode::not_converged when the bracket cannot be closed, which happens
// exactly when f grows at most linearly.
double numeric_legendre(const DivergenceGenerator& g, double x, double tol);

struct HypothesisReport {
  double f_at_one = 0.0;
  bool h1 = false;

  double grid_min = 0.0;
  double kappa = 0.0;
  bool h2 = false;

  // Expanding probe X = 10, 100, ... of f(X)/X, stopped once the ratio exceeds
  // the growth target. h3 requires a strictly increasing sequence that gets there.
  std::vector<std::pair<double, double>> growth_probe;
  double h3_probe_x = 0.0;
  double h3_ratio = 0.0;
  bool h3 = false;

  // f'(eps) for eps = 1e-1, 1e-2, ...; a3 requires strictly decreasing values
  // whose decrements do not die out.
  std::vector<std::pair<double, double>> slope_probe;
  bool a3_numeric = false;
  bool a3_flag = false;
  bool a3_consistent = false;

  bool midpoint_convex = false;
};

HypothesisReport check_hypotheses(const DivergenceGenerator& g, std::span<const double> probe_grid,
                                  double growth_target = 10.0);

// ---------------------------------------------------------------------------
// Control penalties h : R -> [0, inf], convex, h(0) = 0, h >= k1 x^2 - k2.
// ---------------------------------------------------------------------------

enum class ControlFamily { quadratic, quartic, tabulated };

struct ControlSpec {
  ControlFamily family = ControlFamily::quadratic;
  std::vector<double> knots_x;  // tabulated only; h = +inf outside [x_0, x_m]
  std::vector<double> knots_h;
  double kappa1 = 0.0;          // tabulated only
  double kappa2 = 0.0;
};

class ControlPenalty {
 public:
  ControlFamily family() const { return spec_.family; }
  std::string name() const;

  double operator()(double eta) const;
  double conjugate(double z) const;
  bool has_derivative_inverse() const { return spec_.family != ControlFamily::tabulated; }
  // (h')^{-1}(y); throws ErrorCode::unsupported for tabulated penalties.
  double derivative_inverse(double y) const;

  double kappa1() const { return kappa1_; }
  double kappa2() const { return kappa2_; }

  // Tabulated abscissae; empty for the analytic families.
  const std::vector<double>& knots() const { return spec_.knots_x; }

  // Effective domain [lo, hi] of h.
  std::pair<double, double> domain() const;

 private:
  friend ControlPenalty make_control_penalty(const ControlSpec&);
  explicit ControlPenalty(ControlSpec spec) : spec_(std::move(spec)) {}

  ControlSpec spec_;
  double kappa1_ = 0.0;
  double kappa2_ = 0.0;
};

ControlPenalty make_control_penalty(const ControlSpec& spec);

// Accepts "h-quadratic", "h-quartic".
ControlPenalty parse_control_penalty(std::string_view name);

struct ControlArgSup {
  double eta = 0.0;
  double value = 0.0;  // sup_eta (z eta - beta h(eta)) = beta h*(z / beta)
};

ControlArgSup argsup_control(const ControlPenalty& h, double z, double beta);

// Either penalty family, addressed by the config strings above.
using Penalty = std::variant<DivergenceGenerator, ControlPenalty>;
Penalty parse_penalty(std::string_view name);
std::string penalty_name(const Penalty& p);

// ---------------------------------------------------------------------------
// Linear growth of derivatives of convex functions with quadratic growth.
// ---------------------------------------------------------------------------

struct ScalarFunction {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

struct GrowthReport {
  double a2 = 0.0;  // 2 A1 + fn'(1)
  double b2 = 0.0;  // 5 B1
  bool pass = false;
  double worst_x = 0.0;       // grid point with the smallest margin
  double worst_margin = 0.0;  // A2 + B2|x| - |fn'(x)| there
  bool nonnegative_derivative = false;
};

// Throws ErrorCode::domain naming the first grid point where
// |fn(x)| <= A1 + B1 x^2 fails.
GrowthReport derivative_growth_check(const ScalarFunction& fn, double a1, double b1,
                                     std::span<const double> grid);

}  // namespace robust
