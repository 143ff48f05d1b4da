#pragma once

#include "qlabgrad/baselines.hpp"
#include "qlabgrad/nn.hpp"
#include "qlabgrad/qlab.hpp"
#include "qlabgrad/theory.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace qlabgrad::harness {

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Flat `key = value` text with `#` comments. Every accessor marks its key as
/// used so that leftovers (typos) can be reported.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  std::optional<double> get_optional_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// Indices N that appear as `prefix.N.*`, sorted.
  std::vector<int> indices(const std::string& prefix) const;
  std::vector<std::string> unused_keys() const;
  const std::string& origin() const noexcept { return origin_; }

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> used_;
  std::string origin_;
};

enum class ProblemKind { named, quadratic, mlp };

struct DataSpec {
  std::string source = "synthetic";
  Eigen::Index n = 2000;
  Eigen::Index d = 20;
  int k = 10;
  double spread = 0.2;
  std::uint64_t seed = 7;
  Eigen::Index test_n = 1000;
  std::uint64_t test_seed = 8;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
};

struct ProblemSpec {
  ProblemKind kind = ProblemKind::named;
  NamedFunction named = NamedFunction::booth;
  Eigen::MatrixXd hessian;
  ParamVector offset;
  nn::MlpSpec mlp;
  DataSpec data;
  Eigen::Index batch_size = 64;
};

struct SchemeEntry {
  std::string label;
  bool is_qlab = false;
  QlabConfig qlab;
  SchemeSpec scheme;
};

struct ExperimentConfig {
  ProblemSpec problem;
  std::vector<SchemeEntry> schemes;
  std::optional<ParamVector> initial_point;
  std::uint64_t seed = 0;
  std::size_t max_iters = 1000;
  StopRule stop;
  std::filesystem::path output_dir;

  /// Throws ConfigError.
  void validate() const;
};

/// Default starting points for the named surfaces.
ParamVector default_start(NamedFunction f);

ExperimentConfig parse_experiment_config(const KeyValueConfig& kv);

struct GradcheckConfig {
  ExperimentConfig experiment;  ///< problem part only; schemes are ignored
  double rel_tol = 1e-5;
  std::size_t points = 5;
  double radius = 0.1;  ///< N(0, radius²) jitter around the start for extra points
};

GradcheckConfig parse_gradcheck_config(const KeyValueConfig& kv);

/// Builds fresh, independent problem instances so every scheme sees identical
/// data order, initial parameters, and zeroed call counters.
class Problem {
 public:
  explicit Problem(const ExperimentConfig& config);

  std::unique_ptr<LossOracle> make_oracle() const;
  ParamVector initial_point() const { return theta0_; }
  std::optional<double> lipschitz() const;
  bool is_mlp() const noexcept { return model_ != nullptr; }
  const nn::Mlp* model() const noexcept { return model_.get(); }
  const nn::Dataset* train_data() const noexcept { return train_.get(); }
  const nn::Dataset* test_data() const noexcept { return test_.get(); }

 private:
  const ExperimentConfig* config_;
  std::shared_ptr<const nn::Dataset> train_;
  std::shared_ptr<const nn::Dataset> test_;
  std::unique_ptr<nn::Mlp> model_;
  ParamVector theta0_;
};

std::optional<std::size_t> iterations_to_threshold(const Trajectory& trajectory, double loss_target);

struct SchemeOutcome {
  std::string label;
  Trajectory trajectory;
  std::optional<std::size_t> iters_to_threshold;
  double final_loss = kNaN;
  double final_grad_norm = kNaN;
  std::uint64_t full_evals = 0;
  std::uint64_t loss_only_evals = 0;
  std::optional<std::size_t> fallbacks;  ///< QLABGrad only
  std::optional<double> initial_plr;     ///< ᾱ chosen by FindPLR before step 1
  std::optional<double> train_loss;      ///< full training-set loss (MLP problems)
  std::optional<double> test_accuracy;   ///< held-out accuracy (MLP problems)
  bool failed = false;
  std::string error;
};

struct ComparisonReport {
  std::vector<SchemeOutcome> entries;
  bool any_failed() const;
  const SchemeOutcome* find(const std::string& label) const;
};

/// Runs every scheme from the same start, then writes `<label>.csv`,
/// `<label>.plr.csv` (QLABGrad), `report.csv`, `eval.csv` (MLP) and a
/// `meta.txt` sidecar into output_dir when it is non-empty.
ComparisonReport run_experiment(const ExperimentConfig& config);

std::string format_real(double v);
std::string trajectory_csv(const Trajectory& trajectory);
std::string report_csv(const ComparisonReport& report);
void write_trajectory_csv(const Trajectory& trajectory, const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

struct GradcheckOutcome {
  std::vector<GradientCheck> checks;
  bool passed() const;
};

/// Compares the problem's analytic gradient with central differences at the
/// start point and points-1 seeded perturbations of it.
GradcheckOutcome run_gradcheck(const GradcheckConfig& config);

struct TheoryConfig {
  std::vector<Eigen::Index> dims{1, 2, 10};
  std::vector<double> kappas{1.0, 10.0, 100.0};
  std::size_t seeds = 50;
  double plr_factor = 0.9;  ///< ᾱ = plr_factor · 2/M
  std::vector<std::size_t> horizons{10, 100, 1000};
  double lemma_tol = 1e-9;
  std::uint64_t base_seed = 0;
};

TheoryConfig parse_theory_config(const KeyValueConfig& kv);

struct RandomQuadratic {
  Eigen::MatrixXd hessian;
  ParamVector offset;
  ParamVector start;
  double lipschitz = 0.0;
};

/// Random rotation of eigenvalues spread in [M/κ, M] (extremes included when
/// d ≥ 2), with M drawn from [0.5, 5]. d = 1 always yields κ = 1.
RandomQuadratic random_quadratic(std::mt19937_64& rng, Eigen::Index dim, double kappa);

struct TheoryReport {
  bool theorem_precondition_met = true;
  std::size_t runs = 0;
  std::size_t steps = 0;

  std::size_t theorem1_checks = 0;
  std::size_t theorem1_failures = 0;
  /// max over checks of min‖∇L‖ / bound.
  double worst_theorem1_ratio = 0.0;

  std::size_t lemma2_checked = 0;
  std::size_t lemma2_lower_violations = 0;
  std::size_t lemma2_upper_violations = 0;
  double worst_lemma2_lower_margin = kNaN;
  double worst_lemma2_upper_margin = kNaN;
  std::size_t lemma3_checked = 0;
  std::size_t lemma3_violations = 0;

  std::size_t descent_checked = 0;
  std::size_t monotone_violations = 0;
  std::size_t sufficient_decrease_violations = 0;

  bool asserted_checks_passed() const;
  std::string to_csv() const;
};

TheoryReport run_theory_suite(const TheoryConfig& config);

}  // namespace qlabgrad::harness
