#pragma once

#include "qlabgrad/diffkit.hpp"

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace qlabgrad {

/// Where FindPLR probes when it is (re)run.
enum class PlrProbe {
  current_iterate,  ///< the run's current θ
  random_point,     ///< θ plus seeded N(0, probe_radius²) noise
};

struct QlabConfig {
  /// α₀ handed to FindPLR at t = 0.
  double initial_plr = 0.1;
  /// Re-run FindPLR every this many steps; nullopt means only at t = 0.
  std::optional<std::size_t> plr_refresh_interval;
  int max_doublings = 60;
  int max_halvings = 60;
  /// |a₂ numerator| below denom_guard·max(1, |L(θ)|) falls back to ᾱ.
  double denom_guard = 1e-12;
  /// ‖∇L‖² at or below this is treated as a stationary point.
  double grad_floor = 1e-16;
  /// Use this ᾱ directly and skip FindPLR.
  std::optional<double> fixed_plr;
  PlrProbe plr_probe = PlrProbe::current_iterate;
  double probe_radius = 1.0;
  std::uint64_t probe_seed = 0;

  void validate() const;
};

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Minimizer of the quadratic fit g₁(α) = a₀ + a₁α + a₂α² along −∇L:
///
///   α* = ‖∇L‖² ᾱ² / (2 [g(ᾱ) − L(θ) + ‖∇L‖² ᾱ])
///
/// Returns nullopt when the bracketed term is smaller in magnitude than
/// denom_guard·max(1, |loss0|) or the quotient overflows. Negative values are
/// returned as is; choosing the fallback is the caller's job.
std::optional<double> qlab_alpha_star(double loss0, double grad_sq_norm, double g_bar, double plr,
                                      double denom_guard = 1e-12);

/// Bracketed term of the α* denominator, g(ᾱ) − L(θ) + ‖∇L‖² ᾱ = a₂ ᾱ².
inline double a2_numerator(double loss0, double grad_sq_norm, double g_bar, double plr) {
  return g_bar - loss0 + grad_sq_norm * plr;
}

struct StepReport {
  std::size_t t = 0;
  double loss_before = kNaN;
  double grad_sq_norm = kNaN;
  double plr = kNaN;
  double g_bar = kNaN;
  double a2_numerator = kNaN;
  double alpha_star = kNaN;  ///< NaN when the denominator guard fired
  double alpha_used = kNaN;
  bool fallback = false;
  bool guard_fired = false;
  bool converged = false;
  /// Loss at the new iterate; filled by run_qlabgrad, or equal to g_bar on fallback steps.
  double loss_after = kNaN;
};

struct StepResult {
  ParamVector theta;
  StepReport report;
};

/// Thrown when a step cannot complete; carries whatever the report holds so far.
class StepError : public Error {
 public:
  StepError(const std::string& what, StepReport partial) : Error(what), report(std::move(partial)) {}
  StepReport report;
};

/// One QLABGrad update: one eval_full at θ and one eval_loss at θ − ᾱ∇L(θ).
StepResult qlab_step(LossOracle& oracle, const ParamVector& theta, double plr, const QlabConfig& config);

/// Same update, reusing an evaluation already made at θ on the oracle's current
/// batch binding. Performs exactly one eval_loss.
StepResult qlab_step(LossOracle& oracle, const ParamVector& theta, const GradEval& at_theta, double plr,
                     const QlabConfig& config);

struct PlrProbePoint {
  double alpha = 0.0;
  double g_alpha = 0.0;
};

struct PlrSearch {
  double plr = 0.0;
  int doublings = 0;
  int halvings = 0;
  bool tie_adjusted = false;
  double g0 = 0.0;
  double grad_sq_norm = 0.0;
  /// Every g(α) evaluated by the search, in order.
  std::vector<PlrProbePoint> probes;
  /// Evaluation at the probe point; reusable when it is the run's iterate.
  GradEval at_theta;
  CallCounters calls;
};

class PlrSearchError : public Error {
 public:
  enum class Loop { doubling, halving };
  PlrSearchError(const std::string& what, Loop loop, double last_plr)
      : Error(what), loop(loop), last_plr(last_plr) {}
  Loop loop;
  double last_plr;
};

/// FindPLR: double ᾱ while the a₂ numerator is negative, then halve it while
/// g(ᾱ) > g(0). An exact tie g(ᾱ) = g(0) at exit scales ᾱ by 0.99 once so the
/// result stays strictly inside the descent region.
PlrSearch find_plr(LossOracle& oracle, const ParamVector& theta, double alpha0, const QlabConfig& config);

struct StopRule {
  std::optional<double> loss_target;
  std::optional<double> grad_norm_floor;
};

enum class RunStatus { converged, max_iters, error };

std::string to_string(RunStatus status);

struct TrajectoryRow {
  std::size_t t = 0;
  double loss = kNaN;       ///< L(θ_t)
  double grad_norm = kNaN;  ///< ‖∇L(θ_t)‖
  double lr = kNaN;         ///< rate applied in step t
  double alpha_star_raw = kNaN;
  bool fallback = false;
  std::uint64_t full_evals = 0;
  std::uint64_t loss_only_evals = 0;
};

struct PlrSearchRecord {
  std::size_t before_step = 0;
  PlrSearch search;
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  RunStatus status = RunStatus::max_iters;
  std::string error;
  /// QLABGrad internals per step; empty for baseline schemes.
  std::vector<StepReport> steps;
  std::vector<PlrSearchRecord> plr_searches;
  double initial_loss = kNaN;
  double initial_grad_norm = kNaN;
  ParamVector final_theta;
  /// Calls made before step 1 (FindPLR or the initial evaluation).
  CallCounters setup_calls;
};

/// QLABGrad driven by FindPLR. Row t describes θ_t, evaluated once after the
/// update; that evaluation also feeds step t+1, so each step costs one full and
/// one loss-only evaluation. FindPLR's evaluation at θ₀ seeds step 1.
Trajectory run_qlabgrad(LossOracle& oracle, const ParamVector& theta0, const QlabConfig& config,
                        std::size_t max_iters, const StopRule& stop = {});

}  // namespace qlabgrad
