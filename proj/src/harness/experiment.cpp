#include "qlabgrad/harness.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <future>
#include <sstream>

#include <unistd.h>

namespace qlabgrad::harness {
namespace {

std::shared_ptr<const nn::Dataset> head_rows(nn::Dataset data, Eigen::Index n) {
  if (n > 0 && n < data.size()) {
    data.features.conservativeResize(n, Eigen::NoChange);
    data.labels.resize(static_cast<std::size_t>(n));
  }
  return std::make_shared<const nn::Dataset>(std::move(data));
}

}  // namespace

Problem::Problem(const ExperimentConfig& config) : config_(&config) {
  const ProblemSpec& p = config.problem;
  switch (p.kind) {
    case ProblemKind::named:
      theta0_ = config.initial_point.value_or(default_start(p.named));
      break;
    case ProblemKind::quadratic:
      // Constructing once validates the Hessian before any run.
      QuadraticOracle(p.hessian, p.offset);
      theta0_ = config.initial_point.value_or(ParamVector::Zero(p.offset.size()));
      break;
    case ProblemKind::mlp: {
      model_ = std::make_unique<nn::Mlp>(p.mlp);
      const DataSpec& d = p.data;
      if (d.source == "synthetic") {
        train_ = std::make_shared<const nn::Dataset>(nn::synth_dataset(d.seed, d.n, d.d, d.k, d.spread));
        if (d.test_n > 0) {
          test_ = std::make_shared<const nn::Dataset>(
              nn::synth_dataset(d.test_seed, d.test_n, d.d, d.k, d.spread, nn::Split::test));
        }
      } else {
        train_ = head_rows(nn::load_idx(d.train_images, d.train_labels), d.n);
        if (!d.test_images.empty()) {
          test_ = head_rows(nn::load_idx(d.test_images, d.test_labels, nn::Split::test), d.test_n);
        }
      }
      if (p.batch_size > train_->size()) throw ConfigError("config: mlp.batch_size exceeds the training set");
      if (train_->feature_dim() != model_->input_width()) {
        throw ConfigError("config: mlp.widths input layer does not match the data feature width");
      }
      if (train_->num_classes > model_->num_classes()) {
        throw ConfigError("config: mlp output layer is narrower than the class count");
      }
      theta0_ = config.initial_point.value_or(model_->init_params(config.seed));
      break;
    }
  }
}

std::unique_ptr<LossOracle> Problem::make_oracle() const {
  const ProblemSpec& p = config_->problem;
  switch (p.kind) {
    case ProblemKind::named: return std::make_unique<TestFunctionOracle>(p.named);
    case ProblemKind::quadratic: return std::make_unique<QuadraticOracle>(p.hessian, p.offset);
    case ProblemKind::mlp:
      return std::make_unique<nn::MinibatchOracle>(*model_, train_, p.batch_size, config_->seed);
  }
  return nullptr;
}

std::optional<double> Problem::lipschitz() const {
  if (is_mlp()) return std::nullopt;
  return make_oracle()->lipschitz_constant();
}

std::optional<std::size_t> iterations_to_threshold(const Trajectory& trajectory, double loss_target) {
  for (const TrajectoryRow& row : trajectory.rows) {
    if (row.loss <= loss_target) return row.t;
  }
  return std::nullopt;
}

bool ComparisonReport::any_failed() const {
  for (const auto& e : entries) {
    if (e.failed) return true;
  }
  return false;
}

const SchemeOutcome* ComparisonReport::find(const std::string& label) const {
  for (const auto& e : entries) {
    if (e.label == label) return &e;
  }
  return nullptr;
}

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trajectory_csv(const Trajectory& trajectory) {
  std::ostringstream out;
  out << "iter,loss,grad_norm,lr,alpha_star_raw,fallback,full_evals,loss_only_evals\n";
  for (const TrajectoryRow& r : trajectory.rows) {
    out << r.t << ',' << format_real(r.loss) << ',' << format_real(r.grad_norm) << ',' << format_real(r.lr) << ','
        << format_real(r.alpha_star_raw) << ',' << (r.fallback ? 1 : 0) << ',' << r.full_evals << ','
        << r.loss_only_evals << '\n';
  }
  return out.str();
}

std::string report_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "scheme,iters_to_threshold,final_loss,final_grad_norm,full_evals,loss_only_evals,fallbacks\n";
  for (const SchemeOutcome& e : report.entries) {
    out << e.label << ',';
    if (e.iters_to_threshold) out << *e.iters_to_threshold;
    out << ',' << format_real(e.final_loss) << ',' << format_real(e.final_grad_norm) << ',' << e.full_evals << ','
        << e.loss_only_evals << ',';
    if (e.fallbacks) out << *e.fallbacks;
    out << '\n';
  }
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << contents;
  out.close();
  if (!out) throw Error("write failed for " + path.string());
}

void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path) {
  write_text_file(path, trajectory_csv(trajectory));
}

namespace {

std::string plr_csv(const Trajectory& trajectory) {
  std::ostringstream out;
  out << "before_step,plr,doublings,halvings,tie_adjusted,full_evals,loss_only_evals\n";
  for (const auto& rec : trajectory.plr_searches) {
    const PlrSearch& s = rec.search;
    out << rec.before_step << ',' << format_real(s.plr) << ',' << s.doublings << ',' << s.halvings << ','
        << (s.tie_adjusted ? 1 : 0) << ',' << s.calls.full_evals << ',' << s.calls.loss_only_evals << '\n';
  }
  return out.str();
}

SchemeOutcome run_one(const Problem& problem, const SchemeEntry& entry, const ExperimentConfig& config) {
  SchemeOutcome out;
  out.label = entry.label;
  try {
    auto oracle = problem.make_oracle();
    if (entry.is_qlab) {
      QlabConfig q = entry.qlab;
      q.probe_seed = config.seed;
      out.trajectory = run_qlabgrad(*oracle, problem.initial_point(), q, config.max_iters, config.stop);
      if (!out.trajectory.plr_searches.empty() && out.trajectory.plr_searches.front().before_step == 1) {
        out.initial_plr = out.trajectory.plr_searches.front().search.plr;
      } else if (q.fixed_plr) {
        out.initial_plr = *q.fixed_plr;
      }
      std::size_t fallbacks = 0;
      for (const auto& row : out.trajectory.rows) fallbacks += row.fallback ? 1 : 0;
      out.fallbacks = fallbacks;
    } else {
      Scheme scheme = make_scheme(entry.scheme);
      out.trajectory = run_scheme(scheme, *oracle, problem.initial_point(), config.max_iters, config.stop);
    }
  } catch (const std::exception& e) {
    out.trajectory.status = RunStatus::error;
    out.trajectory.error = e.what();
  }

  const Trajectory& tr = out.trajectory;
  if (tr.status == RunStatus::error) {
    out.failed = true;
    out.error = tr.error;
  }
  if (!tr.rows.empty()) {
    const TrajectoryRow& last = tr.rows.back();
    out.final_loss = last.loss;
    out.final_grad_norm = last.grad_norm;
    out.full_evals = last.full_evals;
    out.loss_only_evals = last.loss_only_evals;
  } else {
    out.final_loss = tr.initial_loss;
    out.final_grad_norm = tr.initial_grad_norm;
    out.full_evals = tr.setup_calls.full_evals;
    out.loss_only_evals = tr.setup_calls.loss_only_evals;
  }
  if (config.stop.loss_target) out.iters_to_threshold = iterations_to_threshold(tr, *config.stop.loss_target);

  if (problem.is_mlp() && tr.final_theta.size() == problem.model()->param_count() && !out.failed) {
    out.train_loss = problem.model()->mean_loss(tr.final_theta, *problem.train_data());
    if (problem.test_data()) out.test_accuracy = problem.model()->accuracy(tr.final_theta, *problem.test_data());
  }
  return out;
}

std::string eval_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out << "scheme,train_loss,test_accuracy\n";
  for (const auto& e : report.entries) {
    out << e.label << ',' << (e.train_loss ? format_real(*e.train_loss) : "") << ','
        << (e.test_accuracy ? format_real(*e.test_accuracy) : "") << '\n';
  }
  return out.str();
}

std::string meta_text(const ComparisonReport& report, const std::vector<double>& seconds,
                      const ExperimentConfig& config) {
  std::ostringstream out;
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  char host[256] = {};
  if (gethostname(host, sizeof host - 1) != 0) host[0] = '\0';
  out << "timestamp=" << stamp << "\nhost=" << host << "\nseed=" << config.seed
      << "\nmax_iters=" << config.max_iters << '\n';
  for (std::size_t i = 0; i < report.entries.size(); ++i) {
    const SchemeOutcome& e = report.entries[i];
    const std::size_t steps = e.trajectory.rows.size();
    out << e.label << ".status=" << to_string(e.trajectory.status) << '\n';
    out << e.label << ".wall_seconds=" << seconds[i] << '\n';
    out << e.label << ".wall_seconds_per_step=" << (steps ? seconds[i] / static_cast<double>(steps) : 0.0) << '\n';
    if (e.initial_plr) out << e.label << ".initial_plr=" << format_real(*e.initial_plr) << '\n';
    if (e.failed) out << e.label << ".error=" << e.error << '\n';
  }
  return out.str();
}

}  // namespace

ComparisonReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (!config.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec || !std::filesystem::is_directory(config.output_dir)) {
      throw ConfigError("output directory " + config.output_dir.string() + " is not writable");
    }
  }

  const Problem problem(config);
  const std::size_t n = config.schemes.size();
  std::vector<std::future<std::pair<SchemeOutcome, double>>> jobs;
  jobs.reserve(n);
  for (const SchemeEntry& entry : config.schemes) {
    jobs.push_back(std::async(std::launch::async, [&problem, &entry, &config] {
      const auto t0 = std::chrono::steady_clock::now();
      SchemeOutcome o = run_one(problem, entry, config);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      return std::make_pair(std::move(o), secs);
    }));
  }

  ComparisonReport report;
  std::vector<double> seconds;
  for (auto& job : jobs) {
    auto [outcome, secs] = job.get();
    report.entries.push_back(std::move(outcome));
    seconds.push_back(secs);
  }

  if (!config.output_dir.empty()) {
    for (const SchemeOutcome& e : report.entries) {
      write_trajectory_csv(e.trajectory, config.output_dir / (e.label + ".csv"));
      if (!e.trajectory.plr_searches.empty()) {
        write_text_file(config.output_dir / (e.label + ".plr.csv"), plr_csv(e.trajectory));
      }
    }
    write_text_file(config.output_dir / "report.csv", report_csv(report));
    if (problem.is_mlp()) write_text_file(config.output_dir / "eval.csv", eval_csv(report));
    write_text_file(config.output_dir / "meta.txt", meta_text(report, seconds, config));
  }
  return report;
}

bool GradcheckOutcome::passed() const {
  for (const auto& c : checks) {
    if (!c.passed) return false;
  }
  return !checks.empty();
}

GradcheckOutcome run_gradcheck(const GradcheckConfig& config) {
  const Problem problem(config.experiment);
  auto oracle = problem.make_oracle();
  std::mt19937_64 rng(config.experiment.seed);
  std::normal_distribution<double> jitter(0.0, config.radius);
  GradcheckOutcome out;
  for (std::size_t i = 0; i < config.points; ++i) {
    ParamVector point = problem.initial_point();
    if (i > 0) {
      for (Eigen::Index j = 0; j < point.size(); ++j) point[j] += jitter(rng);
    }
    out.checks.push_back(check_gradient(*oracle, point, config.rel_tol));
  }
  return out;
}

}  // namespace qlabgrad::harness
