#include "qlabgrad/qlab.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace qlabgrad {

void QlabConfig::validate() const {
  if (!(initial_plr > 0.0) || !std::isfinite(initial_plr)) {
    throw std::invalid_argument("qlab: initial_plr must be positive and finite");
  }
  if (max_doublings < 1) throw std::invalid_argument("qlab: max_doublings must be >= 1");
  if (max_halvings < 1) throw std::invalid_argument("qlab: max_halvings must be >= 1");
  if (!(denom_guard > 0.0)) throw std::invalid_argument("qlab: denom_guard must be positive");
  if (!(grad_floor >= 0.0)) throw std::invalid_argument("qlab: grad_floor must be non-negative");
  if (plr_refresh_interval && *plr_refresh_interval == 0) {
    throw std::invalid_argument("qlab: plr_refresh_interval must be positive");
  }
  if (fixed_plr && (!(*fixed_plr > 0.0) || !std::isfinite(*fixed_plr))) {
    throw std::invalid_argument("qlab: fixed_plr must be positive and finite");
  }
  if (plr_probe == PlrProbe::random_point && !(probe_radius > 0.0)) {
    throw std::invalid_argument("qlab: probe_radius must be positive");
  }
}

std::optional<double> qlab_alpha_star(double loss0, double grad_sq_norm, double g_bar, double plr,
                                      double denom_guard) {
  if (!std::isfinite(loss0) || !std::isfinite(grad_sq_norm) || !std::isfinite(g_bar) || !std::isfinite(plr)) {
    throw NonFiniteError("qlab_alpha_star: non-finite input");
  }
  if (!(plr > 0.0)) throw std::invalid_argument("qlab_alpha_star: pre-learning rate must be positive");
  if (grad_sq_norm < 0.0) throw std::invalid_argument("qlab_alpha_star: squared gradient norm is negative");

  const double bracket = a2_numerator(loss0, grad_sq_norm, g_bar, plr);
  if (std::abs(bracket) < denom_guard * std::max(1.0, std::abs(loss0))) return std::nullopt;
  const double alpha = grad_sq_norm * plr * plr / (2.0 * bracket);
  if (!std::isfinite(alpha)) return std::nullopt;
  return alpha;
}

StepResult qlab_step(LossOracle& oracle, const ParamVector& theta, double plr, const QlabConfig& config) {
  const GradEval at_theta = oracle.eval_full(theta);
  return qlab_step(oracle, theta, at_theta, plr, config);
}

StepResult qlab_step(LossOracle& oracle, const ParamVector& theta, const GradEval& at_theta, double plr,
                     const QlabConfig& config) {
  if (!(plr > 0.0) || !std::isfinite(plr)) throw std::invalid_argument("qlab_step: pre-learning rate must be positive");

  StepReport report;
  report.plr = plr;
  report.loss_before = at_theta.loss;
  report.grad_sq_norm = at_theta.gradient.squaredNorm();

  if (report.grad_sq_norm <= config.grad_floor) {
    // Stationary point: α* would be 0, so the step is a no-op.
    report.alpha_star = 0.0;
    report.alpha_used = plr;
    report.fallback = true;
    report.converged = true;
    report.loss_after = at_theta.loss;
    return {theta, report};
  }

  const ParamVector probe = theta - plr * at_theta.gradient;
  if (!all_finite(probe)) throw StepError("qlab_step: probe point is not finite", report);
  report.g_bar = oracle.eval_loss(probe);
  if (!std::isfinite(report.g_bar)) throw StepError("qlab_step: non-finite loss at the probe point", report);

  report.a2_numerator = a2_numerator(report.loss_before, report.grad_sq_norm, report.g_bar, plr);
  const auto alpha =
      qlab_alpha_star(report.loss_before, report.grad_sq_norm, report.g_bar, plr, config.denom_guard);
  report.guard_fired = !alpha.has_value();
  report.alpha_star = alpha.value_or(kNaN);

  if (alpha && *alpha > 0.0) {
    report.alpha_used = *alpha;
  } else {
    report.alpha_used = plr;
    report.fallback = true;
    report.loss_after = report.g_bar;
  }

  if (report.fallback) return {probe, report};

  ParamVector next = theta - report.alpha_used * at_theta.gradient;
  if (!all_finite(next)) throw StepError("qlab_step: update produced a non-finite parameter", report);
  return {std::move(next), report};
}

PlrSearch find_plr(LossOracle& oracle, const ParamVector& theta, double alpha0, const QlabConfig& config) {
  if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) throw std::invalid_argument("find_plr: alpha0 must be positive");
  if (config.max_doublings < 1 || config.max_halvings < 1) {
    throw std::invalid_argument("find_plr: loop caps must be >= 1");
  }

  const CallCounters before = oracle.counters();
  PlrSearch out;
  out.at_theta = oracle.eval_full(theta);
  out.g0 = out.at_theta.loss;
  out.grad_sq_norm = out.at_theta.gradient.squaredNorm();
  const ParamVector& grad = out.at_theta.gradient;

  double plr = alpha0;
  auto probe = [&](double alpha) {
    const double g = oracle.eval_loss(theta - alpha * grad);
    out.probes.push_back({alpha, g});
    return g;
  };

  double g_plr = probe(plr);
  while (g_plr - out.g0 + plr * out.grad_sq_norm < 0.0) {
    if (out.doublings == config.max_doublings) {
      std::ostringstream msg;
      msg << "find_plr: doubling loop exceeded " << config.max_doublings << " iterations (last plr " << plr
          << "); the loss looks concave along the gradient ray";
      throw PlrSearchError(msg.str(), PlrSearchError::Loop::doubling, plr);
    }
    plr *= 2.0;
    ++out.doublings;
    g_plr = probe(plr);
  }
  // Written as !(<=) so that an overflowing probe also triggers halving.
  while (!(g_plr <= out.g0)) {
    if (out.halvings == config.max_halvings) {
      std::ostringstream msg;
      msg << "find_plr: halving loop exceeded " << config.max_halvings << " iterations (last plr " << plr << ")";
      throw PlrSearchError(msg.str(), PlrSearchError::Loop::halving, plr);
    }
    plr *= 0.5;
    ++out.halvings;
    g_plr = probe(plr);
  }
  if (g_plr == out.g0) {
    plr *= 0.99;
    out.tie_adjusted = true;
  }

  out.plr = plr;
  out.calls.full_evals = oracle.counters().full_evals - before.full_evals;
  out.calls.loss_only_evals = oracle.counters().loss_only_evals - before.loss_only_evals;
  return out;
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_iters: return "max_iters";
    case RunStatus::error: return "error";
  }
  return "unknown";
}

namespace {

CallCounters since(const LossOracle& oracle, const CallCounters& base) {
  return {oracle.counters().full_evals - base.full_evals, oracle.counters().loss_only_evals - base.loss_only_evals};
}

bool should_stop(const GradEval& eval, const QlabConfig& config, const StopRule& stop) {
  const double gsq = eval.gradient.squaredNorm();
  if (gsq <= config.grad_floor) return true;
  if (stop.grad_norm_floor && std::sqrt(gsq) <= *stop.grad_norm_floor) return true;
  if (stop.loss_target && eval.loss <= *stop.loss_target) return true;
  return false;
}

}  // namespace

Trajectory run_qlabgrad(LossOracle& oracle, const ParamVector& theta0, const QlabConfig& config,
                        std::size_t max_iters, const StopRule& stop) {
  if (max_iters == 0) throw std::invalid_argument("run_qlabgrad: max_iters must be >= 1");
  config.validate();
  if (theta0.size() != oracle.dim()) throw std::invalid_argument("run_qlabgrad: initial point has wrong dimension");

  Trajectory traj;
  const CallCounters base = oracle.counters();
  std::mt19937_64 probe_rng(config.probe_seed);
  std::normal_distribution<double> noise(0.0, config.probe_radius);

  ParamVector theta = theta0;
  double plr = config.fixed_plr.value_or(config.initial_plr);
  GradEval current;

  // Runs FindPLR; returns true when the search evaluated exactly at θ.
  auto search = [&](std::size_t before_step, double alpha0) {
    ParamVector point = theta;
    if (config.plr_probe == PlrProbe::random_point) {
      for (Eigen::Index i = 0; i < point.size(); ++i) point[i] += noise(probe_rng);
    }
    PlrSearch result = find_plr(oracle, point, alpha0, config);
    plr = result.plr;
    const bool at_iterate = config.plr_probe == PlrProbe::current_iterate;
    traj.plr_searches.push_back({before_step, std::move(result)});
    return at_iterate;
  };

  try {
    if (config.fixed_plr) {
      current = oracle.eval_full(theta);
    } else if (search(1, config.initial_plr)) {
      current = traj.plr_searches.back().search.at_theta;
    } else {
      current = oracle.eval_full(theta);
    }
  } catch (const std::exception& e) {
    traj.status = RunStatus::error;
    traj.error = e.what();
    traj.final_theta = theta;
    traj.setup_calls = since(oracle, base);
    return traj;
  }
  traj.setup_calls = since(oracle, base);
  traj.initial_loss = current.loss;
  traj.initial_grad_norm = current.gradient.norm();

  traj.status = RunStatus::max_iters;
  for (std::size_t t = 1; t <= max_iters; ++t) {
    try {
      if (!config.fixed_plr && config.plr_refresh_interval && t > 1 &&
          (t - 1) % *config.plr_refresh_interval == 0) {
        search(t, plr);
      }

      StepResult step = qlab_step(oracle, theta, current, plr, config);
      step.report.t = t;
      TrajectoryRow row;
      row.t = t;
      row.lr = step.report.alpha_used;
      row.alpha_star_raw = step.report.alpha_star;
      row.fallback = step.report.fallback;

      if (step.report.converged) {
        row.loss = current.loss;
        row.grad_norm = std::sqrt(step.report.grad_sq_norm);
        const CallCounters c = since(oracle, base);
        row.full_evals = c.full_evals;
        row.loss_only_evals = c.loss_only_evals;
        traj.steps.push_back(step.report);
        traj.rows.push_back(row);
        traj.status = RunStatus::converged;
        break;
      }

      theta = std::move(step.theta);
      oracle.next_batch();
      current = oracle.eval_full(theta);
      step.report.loss_after = current.loss;

      row.loss = current.loss;
      row.grad_norm = current.gradient.norm();
      const CallCounters c = since(oracle, base);
      row.full_evals = c.full_evals;
      row.loss_only_evals = c.loss_only_evals;
      traj.steps.push_back(step.report);
      traj.rows.push_back(row);

      if (should_stop(current, config, stop)) {
        traj.status = RunStatus::converged;
        break;
      }
    } catch (const StepError& e) {
      StepReport partial = e.report;
      partial.t = t;
      traj.steps.push_back(partial);
      traj.status = RunStatus::error;
      traj.error = e.what();
      break;
    } catch (const std::exception& e) {
      traj.status = RunStatus::error;
      traj.error = e.what();
      break;
    }
  }
  traj.final_theta = theta;
  return traj;
}

}  // namespace qlabgrad
