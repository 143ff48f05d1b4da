#include "qlabgrad/baselines.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>

namespace qlabgrad {
namespace {

constexpr std::array<std::pair<SchemeKind, std::string_view>, 14> kNames{{
    {SchemeKind::sgd, "sgd"},
    {SchemeKind::e_decay, "e_decay"},
    {SchemeKind::r_decay, "r_decay"},
    {SchemeKind::ss_decay, "ss_decay"},
    {SchemeKind::ca_decay, "ca_decay"},
    {SchemeKind::adagrad, "adagrad"},
    {SchemeKind::rmsprop, "rmsprop"},
    {SchemeKind::adadelta, "adadelta"},
    {SchemeKind::hgd, "hgd"},
    {SchemeKind::l4gd, "l4gd"},
    {SchemeKind::lqa, "lqa"},
    {SchemeKind::momentum, "momentum"},
    {SchemeKind::nmomentum, "nmomentum"},
    {SchemeKind::adam, "adam"},
}};

[[noreturn]] void bad_field(const SchemeSpec& spec, const std::string& field, const std::string& why) {
  std::ostringstream msg;
  msg << to_string(spec.kind) << ": hyperparameter '" << field << "' " << why;
  throw std::invalid_argument(msg.str());
}

}  // namespace

std::string_view to_string(SchemeKind kind) {
  for (const auto& [k, name] : kNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<SchemeKind> parse_scheme_kind(std::string_view name) {
  for (const auto& [k, n] : kNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

double SchemeSpec::get(const std::string& key) const {
  auto it = hyper.find(key);
  if (it == hyper.end()) bad_field(*this, key, "is required");
  return it->second;
}

double SchemeSpec::get_or(const std::string& key, double fallback) const {
  auto it = hyper.find(key);
  return it == hyper.end() ? fallback : it->second;
}

void SchemeSpec::validate() const {
  for (const auto& [key, value] : hyper) {
    if (key != "alpha" && key != "beta" && key != "gamma" && key != "T" && key != "eps") {
      bad_field(*this, key, "is not recognised");
    }
    if (!std::isfinite(value)) bad_field(*this, key, "must be finite");
  }
  auto positive = [&](const std::string& key) {
    if (!(get(key) > 0.0)) bad_field(*this, key, "must be > 0");
  };
  auto open_unit = [&](const std::string& key) {
    const double v = get(key);
    if (!(v > 0.0 && v < 1.0)) bad_field(*this, key, "must lie in (0, 1)");
  };
  auto half_open_unit = [&](const std::string& key) {
    const double v = get(key);
    if (!(v >= 0.0 && v < 1.0)) bad_field(*this, key, "must lie in [0, 1)");
  };

  if (kind != SchemeKind::adadelta) positive("alpha");
  switch (kind) {
    case SchemeKind::sgd:
    case SchemeKind::adagrad:
    case SchemeKind::lqa:
      break;
    case SchemeKind::e_decay:
    case SchemeKind::r_decay:
    case SchemeKind::hgd:
      positive("beta");
      break;
    case SchemeKind::ss_decay:
      if (!(get("T") >= 1.0)) bad_field(*this, "T", "must be >= 1");
      break;
    case SchemeKind::ca_decay:
      if (!(get("T") >= 1.0)) bad_field(*this, "T", "must be >= 1");
      positive("beta");
      if (get("beta") > get("alpha")) bad_field(*this, "beta", "(minimum rate) must not exceed alpha");
      break;
    case SchemeKind::rmsprop:
    case SchemeKind::adadelta:
      open_unit("beta");
      break;
    case SchemeKind::l4gd: {
      const double b = get("beta");
      if (!(b >= 0.0 && b <= 1.0)) bad_field(*this, "beta", "must lie in [0, 1]");
      break;
    }
    case SchemeKind::momentum:
    case SchemeKind::nmomentum:
      half_open_unit("gamma");
      break;
    case SchemeKind::adam:
      open_unit("beta");
      half_open_unit("gamma");
      break;
  }
  if (has("eps") && get("eps") < 0.0) bad_field(*this, "eps", "must be >= 0");
}

double decay_factor(const SchemeSpec& spec, std::size_t t) {
  const double td = static_cast<double>(t);
  switch (spec.kind) {
    case SchemeKind::e_decay:
      return std::exp(-spec.get("beta") * td);
    case SchemeKind::r_decay:
      return 1.0 / (1.0 + spec.get("beta") * td);
    case SchemeKind::ss_decay: {
      const auto period = static_cast<std::size_t>(spec.get("T"));
      return std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(t / period, 1074)));
    }
    case SchemeKind::ca_decay: {
      const double alpha = spec.get("alpha");
      const double floor_rate = spec.get("beta");
      const double period = spec.get("T");
      const double phase = std::min(td, period) / period;
      const double rate = floor_rate + 0.5 * (alpha - floor_rate) * (1.0 + std::cos(std::numbers::pi * phase));
      return rate / alpha;
    }
    default:
      throw std::invalid_argument("decay_factor: scheme '" + std::string(to_string(spec.kind)) +
                                  "' is not a decay schedule");
  }
}

Scheme::Scheme(SchemeSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  eps_ = spec_.get_or("eps", 1e-8);
  if (spec_.kind == SchemeKind::hgd) state_.lr_scalar = spec_.get("alpha");
}

Scheme make_scheme(SchemeSpec spec) { return Scheme(std::move(spec)); }

void Scheme::ensure_shape(Eigen::Index dim) {
  if (state_.F.size() == dim) return;
  if (state_.F.size() != 0) throw std::invalid_argument("scheme: parameter dimension changed mid-run");
  const Eigen::Index acc = spec_.accumulator_mode == AccumulatorMode::per_coordinate ? dim : 1;
  state_.A = Eigen::VectorXd::Zero(acc);
  state_.B = Eigen::VectorXd::Zero(acc);
  state_.F = ParamVector::Zero(dim);
  state_.prev_delta = ParamVector::Zero(dim);
}

double Scheme::accumulate(Eigen::VectorXd& acc, double decay, double weight, const ParamVector& v) const {
  if (acc.size() == 1) {
    acc[0] = decay * acc[0] + weight * v.squaredNorm();
  } else {
    acc = decay * acc + weight * v.cwiseAbs2();
  }
  return acc.mean();
}

// v / √(acc + ε), with the scalar or per-coordinate accumulator.
ParamVector Scheme::scaled_by_inverse_sqrt(const Eigen::VectorXd& acc, const ParamVector& v,
                                           double& mean_scale) const {
  if (acc.size() == 1) {
    const double scale = 1.0 / std::sqrt(acc[0] + eps_);
    mean_scale = scale;
    return scale * v;
  }
  const Eigen::VectorXd scale = (acc.array() + eps_).sqrt().inverse().matrix();
  mean_scale = scale.mean();
  return scale.cwiseProduct(v);
}

SchemeStepResult Scheme::step(LossOracle& oracle, const ParamVector& theta) {
  const GradEval at_theta = oracle.eval_full(theta);
  return step(oracle, theta, at_theta);
}

SchemeStepResult Scheme::step(LossOracle& oracle, const ParamVector& theta, const GradEval& at_theta) {
  if (!all_finite(theta)) throw NonFiniteError("scheme_step: non-finite parameters");
  ensure_shape(theta.size());
  const ParamVector& g = at_theta.gradient;
  const double alpha = spec_.get_or("alpha", 0.0);
  const std::size_t t = state_.t;
  const double step_no = static_cast<double>(t + 1);

  SchemeStepResult out;
  double scale = 0.0;

  switch (spec_.kind) {
    case SchemeKind::sgd:
      out.lr = alpha;
      out.delta = -alpha * g;
      break;

    case SchemeKind::e_decay:
    case SchemeKind::r_decay:
    case SchemeKind::ss_decay:
    case SchemeKind::ca_decay:
      out.lr = alpha * decay_factor(spec_, t);
      out.delta = -out.lr * g;
      break;

    case SchemeKind::adagrad:
      accumulate(state_.A, 1.0, 1.0, g);
      out.delta = -alpha * scaled_by_inverse_sqrt(state_.A, g, scale);
      out.lr = alpha * scale;
      break;

    case SchemeKind::rmsprop: {
      const double beta = spec_.get("beta");
      accumulate(state_.A, beta, 1.0 - beta, g);
      out.delta = -alpha * scaled_by_inverse_sqrt(state_.A, g, scale);
      out.lr = alpha * scale;
      break;
    }

    case SchemeKind::adadelta: {
      const double beta = spec_.get("beta");
      accumulate(state_.A, beta, 1.0 - beta, g);
      accumulate(state_.B, beta, 1.0 - beta, state_.prev_delta);
      if (state_.A.size() == 1) {
        out.lr = std::sqrt((state_.B[0] + eps_) / (state_.A[0] + eps_));
        out.delta = -out.lr * g;
      } else {
        const Eigen::VectorXd rate =
            ((state_.B.array() + eps_) / (state_.A.array() + eps_)).sqrt().matrix();
        out.lr = rate.mean();
        out.delta = -rate.cwiseProduct(g);
      }
      break;
    }

    case SchemeKind::hgd:
      if (state_.prev_grad) state_.lr_scalar += spec_.get("beta") * state_.prev_grad->dot(g);
      out.lr = state_.lr_scalar;
      out.delta = -state_.lr_scalar * g;
      state_.prev_grad = g;
      break;

    case SchemeKind::l4gd: {
      state_.loss_min = std::min(state_.loss_min, at_theta.loss);
      const double gsq = g.squaredNorm();
      const double rate = gsq > 0.0 ? (at_theta.loss - spec_.get("beta") * state_.loss_min) / gsq : 0.0;
      state_.lr_scalar = rate;
      out.lr = alpha * rate;
      out.delta = -out.lr * g;
      break;
    }

    case SchemeKind::lqa: {
      const double plus = oracle.eval_loss(theta + alpha * g);
      const double minus = oracle.eval_loss(theta - alpha * g);
      const double curvature = plus + minus - 2.0 * at_theta.loss;
      double rate = alpha;
      if (curvature > 0.0 && std::isfinite(plus) && std::isfinite(minus)) {
        const double ratio = (plus - minus) / curvature;
        rate = spec_.lqa_additive ? 0.5 * alpha + ratio : 0.5 * alpha * ratio;
      }
      state_.lr_scalar = rate;
      out.lr = rate;
      out.delta = -rate * g;
      break;
    }

    case SchemeKind::momentum: {
      const double gamma = spec_.get("gamma");
      state_.F = gamma * state_.F + (1.0 - gamma) * g;
      out.lr = alpha;
      out.delta = -alpha * state_.F;
      break;
    }

    case SchemeKind::nmomentum: {
      const double gamma = spec_.get("gamma");
      ParamVector look_grad;
      if (t == 0) {
        look_grad = g;  // Δθ₀ = 0, so the look-ahead point is θ itself.
      } else {
        look_grad = oracle.eval_full(theta + gamma * state_.prev_delta).gradient;
      }
      state_.F = gamma * state_.F + (1.0 - gamma) * look_grad;
      out.lr = alpha;
      out.delta = -alpha * state_.F;
      break;
    }

    case SchemeKind::adam: {
      const double beta = spec_.get("beta");
      const double gamma = spec_.get("gamma");
      accumulate(state_.A, beta, 1.0 - beta, g);
      state_.F = gamma * state_.F + (1.0 - gamma) * g;
      const double bias = std::sqrt(1.0 - std::pow(beta, step_no)) / (1.0 - std::pow(gamma, step_no));
      out.delta = -alpha * bias * scaled_by_inverse_sqrt(state_.A, state_.F, scale);
      out.lr = alpha * bias * scale;
      break;
    }
  }

  if (!all_finite(out.delta) || !std::isfinite(out.lr)) {
    throw NonFiniteError("scheme_step: " + std::string(name()) + " produced a non-finite update");
  }
  out.theta = theta + out.delta;
  state_.prev_delta = out.delta;
  ++state_.t;
  return out;
}

Trajectory run_scheme(Scheme& scheme, LossOracle& oracle, const ParamVector& theta0, std::size_t max_iters,
                      const StopRule& stop) {
  if (max_iters == 0) throw std::invalid_argument("run_scheme: max_iters must be >= 1");
  if (theta0.size() != oracle.dim()) throw std::invalid_argument("run_scheme: initial point has wrong dimension");

  Trajectory traj;
  const CallCounters base = oracle.counters();
  auto since = [&] {
    return CallCounters{oracle.counters().full_evals - base.full_evals,
                        oracle.counters().loss_only_evals - base.loss_only_evals};
  };

  ParamVector theta = theta0;
  GradEval current;
  try {
    current = oracle.eval_full(theta);
  } catch (const std::exception& e) {
    traj.status = RunStatus::error;
    traj.error = e.what();
    traj.final_theta = theta;
    traj.setup_calls = since();
    return traj;
  }
  traj.setup_calls = since();
  traj.initial_loss = current.loss;
  traj.initial_grad_norm = current.gradient.norm();

  traj.status = RunStatus::max_iters;
  for (std::size_t t = 1; t <= max_iters; ++t) {
    try {
      SchemeStepResult step = scheme.step(oracle, theta, current);
      theta = std::move(step.theta);
      oracle.next_batch();
      current = oracle.eval_full(theta);

      TrajectoryRow row;
      row.t = t;
      row.loss = current.loss;
      row.grad_norm = current.gradient.norm();
      row.lr = step.lr;
      const CallCounters c = since();
      row.full_evals = c.full_evals;
      row.loss_only_evals = c.loss_only_evals;
      traj.rows.push_back(row);

      const double gnorm = row.grad_norm;
      if (gnorm == 0.0 || (stop.grad_norm_floor && gnorm <= *stop.grad_norm_floor) ||
          (stop.loss_target && current.loss <= *stop.loss_target)) {
        traj.status = RunStatus::converged;
        break;
      }
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
