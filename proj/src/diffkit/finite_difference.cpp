#include "qlabgrad/diffkit.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlabgrad {

ParamVector fd_gradient(LossOracle& oracle, const ParamVector& point, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw std::invalid_argument("fd_gradient: step must be positive");
  if (!all_finite(point)) throw NonFiniteError("fd_gradient: non-finite point");

  ParamVector grad(point.size());
  ParamVector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const double plus = oracle.eval_loss(probe);
    probe[i] = point[i] - step;
    const double minus = oracle.eval_loss(probe);
    probe[i] = point[i];
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      std::ostringstream msg;
      msg << "fd_gradient: non-finite loss while probing coordinate " << i;
      throw NonFiniteError(msg.str());
    }
    grad[i] = (plus - minus) / (2.0 * step);
  }
  return grad;
}

GradientCheck check_gradient(LossOracle& oracle, const ParamVector& point, double rel_tol) {
  if (!(rel_tol > 0.0)) throw std::invalid_argument("check_gradient: rel_tol must be positive");

  GradientCheck report;
  report.analytic = oracle.eval_full(point).gradient;
  report.numeric = fd_gradient(oracle, point, kDefaultFdStep);
  report.relative_error.resize(point.size());

  for (Eigen::Index i = 0; i < point.size(); ++i) {
    const double a = report.analytic[i];
    const double n = report.numeric[i];
    const double denom = std::max({std::abs(a), std::abs(n), 1e-8});
    const double err = std::abs(a - n) / denom;
    report.relative_error[i] = err;
    if (err > report.max_relative_error || report.worst_coordinate < 0) {
      report.max_relative_error = err;
      report.worst_coordinate = i;
    }
    if (err > rel_tol) report.failing_coordinates.push_back(i);
  }
  report.passed = report.failing_coordinates.empty();
  return report;
}

}  // namespace qlabgrad
