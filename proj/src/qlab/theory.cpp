#include "qlabgrad/theory.hpp"

#include <algorithm>
#include <cmath>

namespace qlabgrad {

double descent_constant(double plr, double lipschitz) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("descent_constant: Lipschitz constant must be positive");
  if (!(plr > 0.0) || !(plr < 2.0 / lipschitz)) {
    throw std::invalid_argument("descent_constant: pre-learning rate must satisfy 0 < plr < 2/M");
  }
  return std::min(plr, (2.0 - lipschitz * plr) / (2.0 * lipschitz));
}

double theorem1_bound(double loss0, double loss_star, double plr, double lipschitz, std::size_t total_iters) {
  if (total_iters == 0) throw std::invalid_argument("theorem1_bound: total_iters must be >= 1");
  if (loss0 < loss_star) throw std::invalid_argument("theorem1_bound: loss0 is below loss_star");
  const double c = descent_constant(plr, lipschitz);
  return std::sqrt((loss0 - loss_star) / c) / std::sqrt(static_cast<double>(total_iters));
}

LemmaReport verify_lemmas(const Trajectory& trajectory, double lipschitz, double rel_tol) {
  if (!(lipschitz > 0.0)) throw std::invalid_argument("verify_lemmas: Lipschitz constant must be positive");
  LemmaReport report;
  const double inv_m = 1.0 / lipschitz;
  const double two_over_m = 2.0 / lipschitz;

  auto fold_min = [](double& acc, double v) { acc = std::isnan(acc) ? v : std::min(acc, v); };

  auto lemma3 = [&](double alpha, double g_alpha, double g0) {
    if (!(g_alpha > g0)) return;
    ++report.lemma3_checked;
    if (alpha < two_over_m * (1.0 - rel_tol)) ++report.lemma3_violations;
    fold_min(report.worst_lemma3_margin, alpha / two_over_m - 1.0);
  };

  for (const StepReport& s : trajectory.steps) {
    if (std::isfinite(s.g_bar)) lemma3(s.plr, s.g_bar, s.loss_before);
    if (!(s.a2_numerator > 0.0) || s.guard_fired || !std::isfinite(s.alpha_star)) continue;

    LemmaStepCheck check{s.t, s.alpha_star, s.plr, true, true};
    ++report.lemma2_checked;
    if (s.alpha_star < inv_m * (1.0 - rel_tol)) {
      check.lower_ok = false;
      ++report.lemma2_lower_violations;
    }
    if (s.alpha_star > s.plr * (1.0 + rel_tol)) {
      check.upper_ok = false;
      ++report.lemma2_upper_violations;
    }
    fold_min(report.worst_lower_margin, s.alpha_star * lipschitz - 1.0);
    fold_min(report.worst_upper_margin, 1.0 - s.alpha_star / s.plr);
    report.steps.push_back(check);
  }

  for (const PlrSearchRecord& rec : trajectory.plr_searches) {
    for (const PlrProbePoint& p : rec.search.probes) lemma3(p.alpha, p.g_alpha, rec.search.g0);
  }
  return report;
}

std::vector<double> gradient_norm_sequence(const Trajectory& trajectory) {
  std::vector<double> out;
  if (std::isnan(trajectory.initial_grad_norm)) return out;
  out.reserve(trajectory.rows.size() + 1);
  out.push_back(trajectory.initial_grad_norm);
  for (const TrajectoryRow& row : trajectory.rows) {
    // A no-op converged row repeats the gradient it was handed.
    if (row.t == 1 && !trajectory.steps.empty() && trajectory.steps.front().converged) break;
    out.push_back(row.grad_norm);
  }
  return out;
}

Theorem1Check check_theorem1(const Trajectory& trajectory, double loss_star, double plr, double lipschitz,
                             std::size_t horizon) {
  Theorem1Check out;
  out.horizon = horizon;
  out.bound = theorem1_bound(trajectory.initial_loss, loss_star, plr, lipschitz, horizon);
  const std::vector<double> norms = gradient_norm_sequence(trajectory);
  const std::size_t n = std::min(norms.size(), horizon);
  out.gradients_seen = n;
  if (n == 0) return out;
  out.min_grad_norm = *std::min_element(norms.begin(), norms.begin() + static_cast<std::ptrdiff_t>(n));
  out.holds = out.min_grad_norm <= out.bound;
  return out;
}

DescentCheck check_sufficient_decrease(const Trajectory& trajectory, double plr, double lipschitz) {
  const double c = descent_constant(plr, lipschitz);
  DescentCheck out;
  for (const StepReport& s : trajectory.steps) {
    if (s.converged || std::isnan(s.loss_after)) continue;
    ++out.checked;
    const double decrease = s.loss_before - s.loss_after;
    if (s.loss_after > s.loss_before) ++out.monotone_violations;
    const double required = c * s.grad_sq_norm;
    if (required > decrease) ++out.sufficient_decrease_violations;
    const double margin = s.grad_sq_norm > 0.0 ? (decrease - required) / s.grad_sq_norm : 0.0;
    out.worst_margin = std::isnan(out.worst_margin) ? margin : std::min(out.worst_margin, margin);
  }
  return out;
}

}  // namespace qlabgrad
