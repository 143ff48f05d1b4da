#include "qlabgrad/diffkit.hpp"

#include <cmath>
#include <sstream>

namespace qlabgrad {

bool all_finite(const ParamVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) return false;
  }
  return true;
}

LossOracle::LossOracle(Eigen::Index dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("oracle dimension must be >= 1");
}

void LossOracle::check_point(const ParamVector& theta) const {
  if (theta.size() != dim_) {
    std::ostringstream msg;
    msg << "parameter dimension " << theta.size() << " does not match oracle dimension " << dim_;
    throw std::invalid_argument(msg.str());
  }
  if (!all_finite(theta)) throw NonFiniteError("non-finite parameter vector passed to oracle");
}

GradEval LossOracle::eval_full(const ParamVector& theta) {
  check_point(theta);
  ++counters_.full_evals;
  GradEval out = compute_full(theta);
  if (out.gradient.size() != dim_) throw std::logic_error("oracle returned gradient of wrong dimension");
  if (!std::isfinite(out.loss)) throw NonFiniteError("oracle produced a non-finite loss");
  if (!all_finite(out.gradient)) throw NonFiniteError("oracle produced a non-finite gradient");
  return out;
}

double LossOracle::eval_loss(const ParamVector& theta) {
  check_point(theta);
  ++counters_.loss_only_evals;
  return compute_loss(theta);
}

FunctionOracle::FunctionOracle(Eigen::Index dim, LossFn loss, GradFn grad,
                               std::optional<double> lipschitz)
    : LossOracle(dim), loss_(std::move(loss)), grad_(std::move(grad)), lipschitz_(lipschitz) {
  if (!loss_ || !grad_) throw std::invalid_argument("FunctionOracle needs both loss and gradient callables");
}

GradEval FunctionOracle::compute_full(const ParamVector& theta) const {
  return {loss_(theta), grad_(theta)};
}

double FunctionOracle::compute_loss(const ParamVector& theta) const { return loss_(theta); }

}  // namespace qlabgrad
