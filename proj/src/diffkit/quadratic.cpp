#include "qlabgrad/diffkit.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlabgrad {

QuadraticOracle::QuadraticOracle(Eigen::MatrixXd hessian, ParamVector offset)
    : LossOracle(offset.size()), hessian_(std::move(hessian)), offset_(std::move(offset)) {
  const Eigen::Index d = offset_.size();
  if (hessian_.rows() != d || hessian_.cols() != d) {
    std::ostringstream msg;
    msg << "quadratic: matrix is " << hessian_.rows() << "x" << hessian_.cols()
        << " but offset has dimension " << d;
    throw std::invalid_argument(msg.str());
  }
  if (!hessian_.allFinite() || !all_finite(offset_)) {
    throw std::invalid_argument("quadratic: matrix and offset must be finite");
  }
  const double scale = std::max(1.0, hessian_.cwiseAbs().maxCoeff());
  if ((hessian_ - hessian_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw std::invalid_argument("quadratic: matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_, Eigen::EigenvaluesOnly);
  min_eigenvalue_ = eig.eigenvalues().minCoeff();
  lipschitz_ = eig.eigenvalues().maxCoeff();
  if (min_eigenvalue_ < -1e-12 * scale) {
    std::ostringstream msg;
    msg << "quadratic: matrix has negative eigenvalue " << min_eigenvalue_;
    throw std::invalid_argument(msg.str());
  }
  min_eigenvalue_ = std::max(min_eigenvalue_, 0.0);
}

GradEval QuadraticOracle::compute_full(const ParamVector& theta) const {
  const ParamVector diff = theta - offset_;
  ParamVector grad = hessian_ * diff;
  return {0.5 * diff.dot(grad), std::move(grad)};
}

double QuadraticOracle::compute_loss(const ParamVector& theta) const {
  const ParamVector diff = theta - offset_;
  return 0.5 * diff.dot(hessian_ * diff);
}

QuadraticOracle make_quadratic(const Eigen::MatrixXd& hessian, const ParamVector& offset) {
  return QuadraticOracle(hessian, offset);
}

}  // namespace qlabgrad
