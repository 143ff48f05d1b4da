#include "qlabgrad/harness.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using namespace qlabgrad;
using namespace qlabgrad::harness;

struct Globals {
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_iters;
};

KeyValueConfig load_with_overrides(const std::string& path, const Globals& g) {
  KeyValueConfig kv = KeyValueConfig::load(path);
  if (g.seed) kv.set("seed", std::to_string(*g.seed));
  if (g.max_iters) kv.set("max_iters", std::to_string(*g.max_iters));
  return kv;
}

std::filesystem::path output_dir(const Globals& g, const std::filesystem::path& from_config) {
  if (!g.out.empty()) return g.out;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("QLABGRAD_OUT_DIR"); env && *env) return env;
  return "qlabgrad_out";
}

int cmd_run(const std::string& path, const Globals& g) {
  ExperimentConfig cfg = parse_experiment_config(load_with_overrides(path, g));
  cfg.output_dir = output_dir(g, cfg.output_dir);
  const ComparisonReport report = run_experiment(cfg);
  std::cout << report_csv(report);
  for (const auto& e : report.entries) {
    if (e.initial_plr) std::cerr << e.label << ": initial plr " << format_real(*e.initial_plr) << '\n';
    if (e.test_accuracy) {
      std::cerr << e.label << ": train loss " << format_real(*e.train_loss) << ", test accuracy "
                << format_real(*e.test_accuracy) << '\n';
    }
    if (e.failed) std::cerr << e.label << ": FAILED: " << e.error << '\n';
  }
  std::cerr << "wrote " << cfg.output_dir.string() << '\n';
  return report.any_failed() ? 1 : 0;
}

int cmd_theory(const std::string& path, const Globals& g) {
  KeyValueConfig kv = load_with_overrides(path, g);
  if (kv.has("max_iters")) (void)kv.get_string("max_iters");  // accepted, horizons govern run length
  const TheoryConfig cfg = parse_theory_config(kv);
  const TheoryReport report = run_theory_suite(cfg);
  const std::string csv = report.to_csv();
  std::cout << csv;
  if (!g.out.empty() || std::getenv("QLABGRAD_OUT_DIR")) {
    const auto dir = output_dir(g, {});
    std::filesystem::create_directories(dir);
    write_text_file(dir / "theory.csv", csv);
  }
  if (!report.theorem_precondition_met) {
    std::cerr << "plr_factor >= 1: gradient-bound precondition unmet, reporting descent statistics only\n";
  }
  return report.asserted_checks_passed() ? 0 : 1;
}

int cmd_gradcheck(const std::string& path, const Globals& g) {
  const GradcheckConfig cfg = parse_gradcheck_config(load_with_overrides(path, g));
  const GradcheckOutcome out = run_gradcheck(cfg);
  std::cout << "point,max_relative_error,worst_coordinate,failing_coordinates,passed\n";
  for (std::size_t i = 0; i < out.checks.size(); ++i) {
    const GradientCheck& c = out.checks[i];
    std::cout << i << ',' << format_real(c.max_relative_error) << ',' << c.worst_coordinate << ','
              << c.failing_coordinates.size() << ',' << (c.passed ? 1 : 0) << '\n';
  }
  return out.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QLABGrad experiment runner"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  std::size_t max_iters = 0;
  app.add_option("--out", g.out, "output directory (default: config out_dir, $QLABGRAD_OUT_DIR, ./qlabgrad_out)");
  auto* seed_opt = app.add_option("--seed", seed, "override the config seed");
  auto* iters_opt = app.add_option("--max-iters", max_iters, "override max_iters")->check(CLI::PositiveNumber);

  std::string path;
  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", path)->required()->check(CLI::ExistingFile);
  auto* theory = app.add_subcommand("theory", "run the quadratic theory-verification suite");
  theory->add_option("config", path)->required()->check(CLI::ExistingFile);
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of a problem's gradient");
  gradcheck->add_option("config", path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (*seed_opt) g.seed = seed;
  if (*iters_opt) g.max_iters = max_iters;

  try {
    if (*run) return cmd_run(path, g);
    if (*theory) return cmd_theory(path, g);
    return cmd_gradcheck(path, g);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
