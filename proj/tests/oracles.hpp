#pragma once

// Reference computations shared by the test binaries. Nothing here calls into
// the optimizer code paths under test.

#include <Eigen/Dense>

#include <cmath>
#include <random>

namespace oracle {

/// Golden-section search for the zero of the ray derivative
/// φ'(α) = −gᵀA(θ − αg − c) on [lo, hi]. For a PSD quadratic |φ'| is V-shaped,
/// so the search converges to the exact ray minimizer at working precision.
inline double golden_ray_minimizer(const Eigen::MatrixXd& a, const Eigen::VectorXd& offset,
                                   const Eigen::VectorXd& theta, double lo, double hi) {
  const Eigen::VectorXd g = a * (theta - offset);
  auto dphi = [&](double alpha) {
    return std::abs(-g.dot(a * (theta - alpha * g - offset)));
  };
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = dphi(x1), f2 = dphi(x2);
  for (int i = 0; i < 400 && hi - lo > 1e-15 * hi; ++i) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - r * (hi - lo);
      f1 = dphi(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + r * (hi - lo);
      f2 = dphi(x2);
    }
  }
  return 0.5 * (lo + hi);
}

struct Psd {
  Eigen::MatrixXd a;
  Eigen::VectorXd offset;
  Eigen::VectorXd start;
  double lmin = 0.0;
  double lmax = 0.0;
};

/// Random PSD quadratic with eigenvalues in [lmax/kappa, lmax], via a Gram-Schmidt rotation.
inline Psd random_psd(std::mt19937_64& rng, int d, double kappa) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd q(d, d);
  for (int j = 0; j < d; ++j) {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v[i] = n(rng);
    for (int k = 0; k < j; ++k) v -= q.col(k).dot(v) * q.col(k);
    q.col(j) = v.normalized();
  }
  Psd p;
  p.lmax = 0.5 + 4.5 * u(rng);
  p.lmin = d == 1 ? p.lmax : p.lmax / kappa;
  Eigen::VectorXd eig(d);
  for (int i = 0; i < d; ++i) eig[i] = p.lmin + (p.lmax - p.lmin) * u(rng);
  eig[0] = p.lmin;
  eig[d - 1] = p.lmax;
  p.a = q * eig.asDiagonal() * q.transpose();
  p.a = 0.5 * (p.a + p.a.transpose());
  p.offset.resize(d);
  p.start.resize(d);
  for (int i = 0; i < d; ++i) p.offset[i] = n(rng);
  for (int i = 0; i < d; ++i) p.start[i] = p.offset[i] + n(rng);
  return p;
}

}  // namespace oracle
