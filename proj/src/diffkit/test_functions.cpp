#include "qlabgrad/diffkit.hpp"

#include <algorithm>
#include <cmath>

namespace qlabgrad {
namespace {

double booth(double x, double y) {
  const double a = x + 2.0 * y - 7.0;
  const double b = 2.0 * x + y - 5.0;
  return a * a + b * b;
}

Eigen::Vector2d booth_grad(double x, double y) {
  const double a = x + 2.0 * y - 7.0;
  const double b = 2.0 * x + y - 5.0;
  return {2.0 * a + 4.0 * b, 4.0 * a + 2.0 * b};
}

double himmelblau(double x, double y) {
  const double a = x * x + y - 11.0;
  const double b = x + y * y - 7.0;
  return a * a + b * b;
}

Eigen::Vector2d himmelblau_grad(double x, double y) {
  const double a = x * x + y - 11.0;
  const double b = x + y * y - 7.0;
  return {4.0 * x * a + 2.0 * b, 2.0 * a + 4.0 * y * b};
}

double eggholder(double x, double y) {
  const double u = x / 2.0 + y + 47.0;
  const double v = x - (y + 47.0);
  return -(y + 47.0) * std::sin(std::sqrt(std::abs(u))) - x * std::sin(std::sqrt(std::abs(v)));
}

// d/dz sqrt(|z|); the kink at z = 0 gets the zero subgradient.
double dsqrt_abs(double z) {
  if (z == 0.0) return 0.0;
  return (z > 0.0 ? 1.0 : -1.0) / (2.0 * std::sqrt(std::abs(z)));
}

Eigen::Vector2d eggholder_grad(double x, double y) {
  const double u = x / 2.0 + y + 47.0;
  const double v = x - (y + 47.0);
  const double su = std::sqrt(std::abs(u));
  const double sv = std::sqrt(std::abs(v));
  const double du = dsqrt_abs(u);
  const double dv = dsqrt_abs(v);
  const double first = (y + 47.0) * std::cos(su) * du;  // d/du of (y+47) sin(su), y held fixed
  const double second = x * std::cos(sv) * dv;           // d/dv of x sin(sv), x held fixed
  const double gx = -0.5 * first - std::sin(sv) - second;
  const double gy = -std::sin(su) - first + second;
  return {gx, gy};
}

TestFunction describe(NamedFunction kind) {
  TestFunction info;
  info.dim = 2;
  switch (kind) {
    case NamedFunction::booth:
      info.name = "booth";
      info.known_minimum = KnownMinimum{Eigen::Vector2d(1.0, 3.0), 0.0};
      // Hessian [[10, 8], [8, 10]] has eigenvalues 2 and 18.
      info.lipschitz_constant = 18.0;
      info.domain_bounds = std::vector<std::pair<double, double>>{{-10.0, 10.0}, {-10.0, 10.0}};
      break;
    case NamedFunction::himmelblau:
      info.name = "himmelblau";
      // One of four global minima; the other three are irrational.
      info.known_minimum = KnownMinimum{Eigen::Vector2d(3.0, 2.0), 0.0};
      info.domain_bounds = std::vector<std::pair<double, double>>{{-5.0, 5.0}, {-5.0, 5.0}};
      break;
    case NamedFunction::eggholder:
      info.name = "eggholder";
      // Literature location, rounded to four decimals; value is the function at that point.
      info.known_minimum = KnownMinimum{Eigen::Vector2d(512.0, 404.2319), -959.6406627106155};
      info.domain_bounds = std::vector<std::pair<double, double>>{{-512.0, 512.0}, {-512.0, 512.0}};
      break;
  }
  return info;
}

}  // namespace

ParamVector TestFunction::clamp(const ParamVector& point) const {
  if (!domain_bounds) return point;
  ParamVector out = point;
  const auto& bounds = *domain_bounds;
  for (Eigen::Index i = 0; i < out.size() && static_cast<std::size_t>(i) < bounds.size(); ++i) {
    out[i] = std::clamp(out[i], bounds[i].first, bounds[i].second);
  }
  return out;
}

std::optional<NamedFunction> parse_named_function(const std::string& name) {
  if (name == "booth") return NamedFunction::booth;
  if (name == "himmelblau") return NamedFunction::himmelblau;
  if (name == "eggholder") return NamedFunction::eggholder;
  return std::nullopt;
}

TestFunctionOracle::TestFunctionOracle(NamedFunction kind)
    : LossOracle(2), kind_(kind), info_(describe(kind)) {}

double TestFunctionOracle::compute_loss(const ParamVector& theta) const {
  const double x = theta[0];
  const double y = theta[1];
  switch (kind_) {
    case NamedFunction::booth: return booth(x, y);
    case NamedFunction::himmelblau: return himmelblau(x, y);
    case NamedFunction::eggholder: return eggholder(x, y);
  }
  return 0.0;
}

GradEval TestFunctionOracle::compute_full(const ParamVector& theta) const {
  const double x = theta[0];
  const double y = theta[1];
  Eigen::Vector2d g;
  switch (kind_) {
    case NamedFunction::booth: g = booth_grad(x, y); break;
    case NamedFunction::himmelblau: g = himmelblau_grad(x, y); break;
    case NamedFunction::eggholder: g = eggholder_grad(x, y); break;
  }
  return {compute_loss(theta), ParamVector(g)};
}

TestFunctionOracle make_named_test_function(const std::string& name) {
  const auto kind = parse_named_function(name);
  if (!kind) throw std::invalid_argument("unknown test function '" + name + "'");
  return TestFunctionOracle(*kind);
}

}  // namespace qlabgrad
