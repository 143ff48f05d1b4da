#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qlabgrad {

/// Flat vector of model parameters. Dimension is fixed for the lifetime of a run.
using ParamVector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a NaN or Inf shows up where finite values are required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

struct GradEval {
  double loss = 0.0;
  ParamVector gradient;
};

struct CallCounters {
  std::uint64_t full_evals = 0;
  std::uint64_t loss_only_evals = 0;

  friend bool operator==(const CallCounters&, const CallCounters&) = default;
};

bool all_finite(const ParamVector& v);

/// Loss/gradient oracle: the single seam between optimizers and problems.
///
/// Implementations override compute_full (and optionally compute_loss). The
/// public entry points validate the input point, count the call, and check the
/// GradEval invariants. eval_loss returns non-finite losses unchanged so that
/// line searches can react to overflow; eval_full throws on them.
///
/// An oracle instance is meant for single-threaded use. Minibatch oracles
/// expose their batch binding through next_batch(); deterministic oracles
/// have exactly one binding and ignore it.
class LossOracle {
 public:
  explicit LossOracle(Eigen::Index dim);
  virtual ~LossOracle() = default;

  LossOracle(const LossOracle&) = default;
  LossOracle& operator=(const LossOracle&) = default;
  LossOracle(LossOracle&&) = default;
  LossOracle& operator=(LossOracle&&) = default;

  Eigen::Index dim() const noexcept { return dim_; }

  GradEval eval_full(const ParamVector& theta);
  double eval_loss(const ParamVector& theta);

  const CallCounters& counters() const noexcept { return counters_; }
  void reset_counters() noexcept { counters_ = {}; }

  /// Lipschitz constant of the gradient, when known analytically.
  virtual std::optional<double> lipschitz_constant() const { return std::nullopt; }

  virtual void next_batch() {}
  virtual bool is_stochastic() const { return false; }

 protected:
  virtual GradEval compute_full(const ParamVector& theta) const = 0;
  virtual double compute_loss(const ParamVector& theta) const { return compute_full(theta).loss; }

 private:
  void check_point(const ParamVector& theta) const;

  Eigen::Index dim_;
  CallCounters counters_;
};

/// Oracle built from plain callables. Handy for tests and one-off problems.
class FunctionOracle final : public LossOracle {
 public:
  using LossFn = std::function<double(const ParamVector&)>;
  using GradFn = std::function<ParamVector(const ParamVector&)>;

  FunctionOracle(Eigen::Index dim, LossFn loss, GradFn grad,
                 std::optional<double> lipschitz = std::nullopt);

  std::optional<double> lipschitz_constant() const override { return lipschitz_; }

 protected:
  GradEval compute_full(const ParamVector& theta) const override;
  double compute_loss(const ParamVector& theta) const override;

 private:
  LossFn loss_;
  GradFn grad_;
  std::optional<double> lipschitz_;
};

/// L(θ) = ½ (θ − offset)ᵀ A (θ − offset) for symmetric PSD A.
class QuadraticOracle final : public LossOracle {
 public:
  QuadraticOracle(Eigen::MatrixXd hessian, ParamVector offset);

  std::optional<double> lipschitz_constant() const override { return lipschitz_; }

  const Eigen::MatrixXd& hessian() const noexcept { return hessian_; }
  const ParamVector& offset() const noexcept { return offset_; }
  double min_eigenvalue() const noexcept { return min_eigenvalue_; }

 protected:
  GradEval compute_full(const ParamVector& theta) const override;
  double compute_loss(const ParamVector& theta) const override;

 private:
  Eigen::MatrixXd hessian_;
  ParamVector offset_;
  double lipschitz_ = 0.0;
  double min_eigenvalue_ = 0.0;
};

/// Throws std::invalid_argument for non-symmetric or indefinite matrices.
QuadraticOracle make_quadratic(const Eigen::MatrixXd& hessian, const ParamVector& offset);

struct KnownMinimum {
  ParamVector location;
  double value = 0.0;
};

struct TestFunction {
  std::string name;
  Eigen::Index dim = 0;
  std::optional<KnownMinimum> known_minimum;
  std::optional<double> lipschitz_constant;
  std::optional<std::vector<std::pair<double, double>>> domain_bounds;

  /// Clamp a point coordinate-wise into domain_bounds (identity when unbounded).
  ParamVector clamp(const ParamVector& point) const;
};

enum class NamedFunction { booth, himmelblau, eggholder };

std::optional<NamedFunction> parse_named_function(const std::string& name);

/// Two-dimensional benchmark surfaces with analytic gradients.
class TestFunctionOracle final : public LossOracle {
 public:
  explicit TestFunctionOracle(NamedFunction kind);

  const TestFunction& info() const noexcept { return info_; }
  NamedFunction kind() const noexcept { return kind_; }

  std::optional<double> lipschitz_constant() const override { return info_.lipschitz_constant; }

 protected:
  GradEval compute_full(const ParamVector& theta) const override;
  double compute_loss(const ParamVector& theta) const override;

 private:
  NamedFunction kind_;
  TestFunction info_;
};

/// Throws std::invalid_argument naming the unknown function.
TestFunctionOracle make_named_test_function(const std::string& name);

inline constexpr double kDefaultFdStep = 1e-5;

/// Central differences, one pair of loss-only evaluations per coordinate.
ParamVector fd_gradient(LossOracle& oracle, const ParamVector& point, double step = kDefaultFdStep);

struct GradientCheck {
  ParamVector analytic;
  ParamVector numeric;
  ParamVector relative_error;
  double max_relative_error = 0.0;
  Eigen::Index worst_coordinate = -1;
  std::vector<Eigen::Index> failing_coordinates;
  bool passed = false;
};

/// Compares eval_full against fd_gradient (h = 1e-5). Per-coordinate relative
/// error is |a − n| / max(|a|, |n|, 1e-8). Never throws for mismatches.
GradientCheck check_gradient(LossOracle& oracle, const ParamVector& point, double rel_tol);

}  // namespace qlabgrad
