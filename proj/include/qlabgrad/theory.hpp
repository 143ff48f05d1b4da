#pragma once

#include "qlabgrad/qlab.hpp"

#include <cstddef>
#include <vector>

namespace qlabgrad {

/// C = min{ᾱ, (2 − Mᾱ)/(2M)}. Requires 0 < ᾱ < 2/M.
double descent_constant(double plr, double lipschitz);

/// (1/√T)·√((L₀ − L*)/C): upper bound on min_{t<T} ‖∇L(θ_t)‖ for ᾱ < 2/M.
double theorem1_bound(double loss0, double loss_star, double plr, double lipschitz, std::size_t total_iters);

struct LemmaStepCheck {
  std::size_t t = 0;
  double alpha_star = 0.0;
  double plr = 0.0;
  bool lower_ok = true;
  bool upper_ok = true;
};

struct LemmaReport {
  // Bracket 1/M ≤ α* ≤ ᾱ, checked whenever the a₂ numerator is positive.
  std::size_t lemma2_checked = 0;
  std::size_t lemma2_lower_violations = 0;
  std::size_t lemma2_upper_violations = 0;
  /// min over checked steps of α*·M − 1 (negative means violated).
  double worst_lower_margin = kNaN;
  /// min over checked steps of 1 − α*/ᾱ (negative means violated).
  double worst_upper_margin = kNaN;
  std::vector<LemmaStepCheck> steps;

  // Probe bound: g(α) > g(0) implies α ≥ 2/M, over every recorded probe.
  std::size_t lemma3_checked = 0;
  std::size_t lemma3_violations = 0;
  /// min over ascending probes of α·M/2 − 1.
  double worst_lemma3_margin = kNaN;

  bool lemma2_lower_passed() const { return lemma2_lower_violations == 0; }
  bool lemma2_upper_passed() const { return lemma2_upper_violations == 0; }
  bool lemma2_passed() const { return lemma2_lower_passed() && lemma2_upper_passed(); }
  bool lemma3_passed() const { return lemma3_violations == 0; }
  bool passed() const { return lemma2_passed() && lemma3_passed(); }
};

/// Checks the step-size lemmas on a recorded QLABGrad trajectory. `rel_tol`
/// is relative: 1/M·(1 − tol) ≤ α* ≤ ᾱ·(1 + tol) and α ≥ 2/M·(1 − tol).
/// Steps where the denominator guard fired carry no α* and are skipped.
LemmaReport verify_lemmas(const Trajectory& trajectory, double lipschitz, double rel_tol);

/// Gradient norms ‖∇L(θ_0)‖, ‖∇L(θ_1)‖, … as recorded by a trajectory.
std::vector<double> gradient_norm_sequence(const Trajectory& trajectory);

struct Theorem1Check {
  std::size_t horizon = 0;
  std::size_t gradients_seen = 0;
  double min_grad_norm = kNaN;
  double bound = kNaN;
  bool holds = false;
};

/// Compares min_{0≤t≤T−1} ‖∇L(θ_t)‖ with theorem1_bound, without tolerance.
/// A run that stopped early contributes all of its gradients.
Theorem1Check check_theorem1(const Trajectory& trajectory, double loss_star, double plr, double lipschitz,
                             std::size_t horizon);

struct DescentCheck {
  std::size_t checked = 0;
  std::size_t monotone_violations = 0;
  std::size_t sufficient_decrease_violations = 0;
  /// min over steps of (L_{t−1} − L_t) − C‖∇L(θ_{t−1})‖², scaled by ‖∇L‖².
  double worst_margin = kNaN;
  bool passed() const { return monotone_violations == 0 && sufficient_decrease_violations == 0; }
};

/// L(θ_t) ≤ L(θ_{t−1}) and C‖∇L(θ_{t−1})‖² ≤ L(θ_{t−1}) − L(θ_t) for every step.
DescentCheck check_sufficient_decrease(const Trajectory& trajectory, double plr, double lipschitz);

}  // namespace qlabgrad
