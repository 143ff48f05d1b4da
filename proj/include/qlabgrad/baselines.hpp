#pragma once

#include "qlabgrad/qlab.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace qlabgrad {

enum class SchemeKind {
  sgd,
  e_decay,
  r_decay,
  ss_decay,
  ca_decay,
  adagrad,
  rmsprop,
  adadelta,
  hgd,
  l4gd,
  lqa,
  momentum,
  nmomentum,
  adam,
};

std::string_view to_string(SchemeKind kind);
std::optional<SchemeKind> parse_scheme_kind(std::string_view name);

/// How squared-gradient accumulators are kept: one scalar ‖∇L‖² as written in
/// the scheme table, or one entry per coordinate as in common frameworks.
enum class AccumulatorMode { table_scalar, per_coordinate };

/// Hyperparameters use the names alpha, beta, gamma, T and eps (default 1e-8).
struct SchemeSpec {
  SchemeKind kind = SchemeKind::sgd;
  std::map<std::string, double> hyper;
  AccumulatorMode accumulator_mode = AccumulatorMode::table_scalar;
  /// LQA only: read the rate as ½α + ratio instead of ½α · ratio.
  bool lqa_additive = false;

  double get(const std::string& key) const;
  double get_or(const std::string& key, double fallback) const;
  bool has(const std::string& key) const { return hyper.count(key) != 0; }

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SchemeState {
  std::size_t t = 0;
  Eigen::VectorXd A;  ///< size 1 in table_scalar mode
  Eigen::VectorXd B;  ///< Adadelta only
  ParamVector F;
  std::optional<ParamVector> prev_grad;
  ParamVector prev_delta;
  double loss_min = std::numeric_limits<double>::infinity();
  double lr_scalar = 0.0;
};

struct SchemeStepResult {
  ParamVector theta;
  ParamVector delta;
  /// Effective scalar learning rate (mean over coordinates for per-coordinate rules).
  double lr = 0.0;
};

/// f(t) for the decay schedules; t counts completed steps starting at 0.
double decay_factor(const SchemeSpec& spec, std::size_t t);

class Scheme {
 public:
  explicit Scheme(SchemeSpec spec);

  /// Evaluates the gradient at θ itself, then steps.
  SchemeStepResult step(LossOracle& oracle, const ParamVector& theta);
  /// Steps from an evaluation already made at θ on the current batch binding.
  SchemeStepResult step(LossOracle& oracle, const ParamVector& theta, const GradEval& at_theta);

  const SchemeSpec& spec() const noexcept { return spec_; }
  const SchemeState& state() const noexcept { return state_; }
  std::string_view name() const { return to_string(spec_.kind); }

  /// Loss-only evaluations each step performs on top of the gradient evaluation.
  int extra_loss_evals_per_step() const noexcept { return spec_.kind == SchemeKind::lqa ? 2 : 0; }

 private:
  void ensure_shape(Eigen::Index dim);
  double accumulate(Eigen::VectorXd& acc, double decay, double weight, const ParamVector& v) const;
  ParamVector scaled_by_inverse_sqrt(const Eigen::VectorXd& acc, const ParamVector& v, double& mean_scale) const;

  SchemeSpec spec_;
  SchemeState state_;
  double eps_ = 1e-8;
};

Scheme make_scheme(SchemeSpec spec);

/// Runs a baseline scheme with the same row semantics as run_qlabgrad: one
/// evaluation at θ₀, then per step the scheme's own extra evaluations plus one
/// eval_full at the new iterate.
Trajectory run_scheme(Scheme& scheme, LossOracle& oracle, const ParamVector& theta0, std::size_t max_iters,
                      const StopRule& stop = {});

}  // namespace qlabgrad
