#include "qlabgrad/harness.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace qlabgrad::harness {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double to_double(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
}

std::vector<double> to_doubles(const std::string& text, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("config: empty list entry in '" + key + "'");
    out.push_back(to_double(item, key));
  }
  if (out.empty()) throw ConfigError("config: '" + key + "' is an empty list");
  return out;
}

ParamVector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const ParamVector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text, const std::string& origin) {
  KeyValueConfig kv;
  kv.origin_ = origin;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (kv.entries_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
    kv.entries_[key] = value;
  }
  return kv;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

const std::string& KeyValueConfig::raw(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  used_.insert(key);
  return it->second;
}

std::string KeyValueConfig::get_string(const std::string& key) const { return raw(key); }

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}

double KeyValueConfig::get_double(const std::string& key) const { return to_double(raw(key), key); }

std::optional<double> KeyValueConfig::get_optional_double(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return get_double(key);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string& text = raw(key);
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + text + "'");
  }
  return v;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
  return to_doubles(raw(key), key);
}

std::vector<int> KeyValueConfig::indices(const std::string& prefix) const {
  std::set<int> found;
  const std::string head = prefix + ".";
  for (const auto& [key, value] : entries_) {
    if (key.rfind(head, 0) != 0) continue;
    const auto dot = key.find('.', head.size());
    const std::string num = key.substr(head.size(), dot == std::string::npos ? std::string::npos : dot - head.size());
    int idx = 0;
    const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), idx);
    if (ec != std::errc{} || ptr != num.data() + num.size() || num.empty() || idx < 0) {
      throw ConfigError("config: bad index in key '" + key + "'");
    }
    found.insert(idx);
  }
  return {found.begin(), found.end()};
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (!used_.count(key)) out.push_back(key);
  }
  return out;
}

ParamVector default_start(NamedFunction f) {
  switch (f) {
    case NamedFunction::booth: return Eigen::Vector2d(-5.0, -5.0);
    case NamedFunction::himmelblau: return Eigen::Vector2d(0.0, 0.0);
    case NamedFunction::eggholder: return Eigen::Vector2d(0.0, 0.0);
  }
  return Eigen::Vector2d::Zero();
}

namespace {

SchemeEntry parse_scheme(const KeyValueConfig& kv, int index) {
  const std::string p = "scheme." + std::to_string(index) + ".";
  SchemeEntry entry;
  const std::string kind = kv.get_string(p + "kind");
  entry.label = kv.get_string(p + "label", "");

  if (kind == "qlabgrad") {
    entry.is_qlab = true;
    QlabConfig& q = entry.qlab;
    q.initial_plr = kv.get_double(p + "alpha0", q.initial_plr);
    if (kv.has(p + "refresh")) {
      const auto r = kv.get_int(p + "refresh", 0);
      if (r <= 0) throw ConfigError("config: " + p + "refresh must be a positive integer");
      q.plr_refresh_interval = static_cast<std::size_t>(r);
    }
    if (kv.has(p + "plr")) q.fixed_plr = kv.get_double(p + "plr");
    q.max_doublings = static_cast<int>(kv.get_int(p + "max_doublings", q.max_doublings));
    q.max_halvings = static_cast<int>(kv.get_int(p + "max_halvings", q.max_halvings));
    q.denom_guard = kv.get_double(p + "denom_guard", q.denom_guard);
    q.grad_floor = kv.get_double(p + "grad_floor_sq", q.grad_floor);
    const std::string probe = kv.get_string(p + "probe", "current");
    if (probe == "current") {
      q.plr_probe = PlrProbe::current_iterate;
    } else if (probe == "random") {
      q.plr_probe = PlrProbe::random_point;
    } else {
      throw ConfigError("config: " + p + "probe must be 'current' or 'random'");
    }
    q.probe_radius = kv.get_double(p + "probe_radius", q.probe_radius);
    try {
      q.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: scheme.") + std::to_string(index) + ": " + e.what());
    }
    return entry;
  }

  const auto parsed = parse_scheme_kind(kind);
  if (!parsed) throw ConfigError("config: unknown scheme kind '" + kind + "' in " + p + "kind");
  entry.scheme.kind = *parsed;
  for (const char* key : {"alpha", "beta", "gamma", "T", "eps"}) {
    if (kv.has(p + key)) entry.scheme.hyper[key] = kv.get_double(p + key);
  }
  const std::string acc = kv.get_string(p + "accumulator", "table_scalar");
  if (acc == "table_scalar") {
    entry.scheme.accumulator_mode = AccumulatorMode::table_scalar;
  } else if (acc == "per_coordinate") {
    entry.scheme.accumulator_mode = AccumulatorMode::per_coordinate;
  } else {
    throw ConfigError("config: " + p + "accumulator must be table_scalar or per_coordinate");
  }
  const std::string form = kv.get_string(p + "lqa_form", "multiplicative");
  if (form != "multiplicative" && form != "additive") {
    throw ConfigError("config: " + p + "lqa_form must be multiplicative or additive");
  }
  entry.scheme.lqa_additive = form == "additive";
  try {
    entry.scheme.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: scheme.") + std::to_string(index) + ": " + e.what());
  }
  return entry;
}

}  // namespace

namespace {

void reject_leftovers(const KeyValueConfig& kv) {
  if (const auto leftovers = kv.unused_keys(); !leftovers.empty()) {
    std::string msg = "config: unrecognised keys:";
    for (const auto& k : leftovers) msg += " " + k;
    throw ConfigError(msg);
  }
}

void parse_problem(const KeyValueConfig& kv, ExperimentConfig& cfg) {
  const std::string problem = kv.get_string("problem");
  if (auto named = parse_named_function(problem)) {
    cfg.problem.kind = ProblemKind::named;
    cfg.problem.named = *named;
  } else if (problem == "quadratic") {
    cfg.problem.kind = ProblemKind::quadratic;
    if (kv.has("quadratic.diag")) {
      cfg.problem.hessian = to_vector(kv.get_doubles("quadratic.diag")).asDiagonal();
    } else {
      const std::vector<double> m = kv.get_doubles("quadratic.matrix");
      const auto d = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(m.size()))));
      if (d * d != static_cast<Eigen::Index>(m.size())) {
        throw ConfigError("config: quadratic.matrix must list d*d entries (row-major)");
      }
      cfg.problem.hessian = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          m.data(), d, d);
    }
    const Eigen::Index d = cfg.problem.hessian.rows();
    cfg.problem.offset = kv.has("quadratic.offset") ? to_vector(kv.get_doubles("quadratic.offset"))
                                                    : ParamVector(ParamVector::Zero(d));
  } else if (problem == "mlp") {
    cfg.problem.kind = ProblemKind::mlp;
    for (double w : kv.get_doubles("mlp.widths")) {
      if (w < 1 || w != std::floor(w)) throw ConfigError("config: mlp.widths must be positive integers");
      cfg.problem.mlp.layer_widths.push_back(static_cast<Eigen::Index>(w));
    }
    cfg.problem.batch_size = kv.get_int("mlp.batch_size", 64);
    DataSpec& data = cfg.problem.data;
    data.source = kv.get_string("data.source", data.source);
    if (data.source == "synthetic") {
      data.n = kv.get_int("data.n", data.n);
      data.d = kv.get_int("data.d", data.d);
      data.k = static_cast<int>(kv.get_int("data.k", data.k));
      data.spread = kv.get_double("data.spread", data.spread);
      data.seed = static_cast<std::uint64_t>(kv.get_int("data.seed", static_cast<std::int64_t>(data.seed)));
      data.test_n = kv.get_int("data.test_n", data.test_n);
      data.test_seed =
          static_cast<std::uint64_t>(kv.get_int("data.test_seed", static_cast<std::int64_t>(data.test_seed)));
    } else if (data.source == "idx") {
      data.train_images = kv.get_string("data.train_images");
      data.train_labels = kv.get_string("data.train_labels");
      data.test_images = kv.get_string("data.test_images", "");
      data.test_labels = kv.get_string("data.test_labels", "");
      data.n = kv.get_int("data.n", 0);  // 0 keeps every sample
      data.test_n = kv.get_int("data.test_n", 0);
    } else {
      throw ConfigError("config: data.source must be synthetic or idx");
    }
  } else {
    throw ConfigError("config: unknown problem '" + problem + "'");
  }

  if (kv.has("init")) cfg.initial_point = to_vector(kv.get_doubles("init"));
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  const auto iters = kv.get_int("max_iters", 1000);
  if (iters < 1) throw ConfigError("config: max_iters must be >= 1");
  cfg.max_iters = static_cast<std::size_t>(iters);
  cfg.stop.loss_target = kv.get_optional_double("loss_target");
  cfg.stop.grad_norm_floor = kv.get_optional_double("grad_floor");
  cfg.output_dir = kv.get_string("out_dir", "");
}

}  // namespace

ExperimentConfig parse_experiment_config(const KeyValueConfig& kv) {
  ExperimentConfig cfg;
  parse_problem(kv, cfg);
  for (int idx : kv.indices("scheme")) cfg.schemes.push_back(parse_scheme(kv, idx));

  std::map<std::string, int> label_use;
  for (const auto& s : cfg.schemes) {
    const std::string kind = s.is_qlab ? "qlabgrad" : std::string(to_string(s.scheme.kind));
    ++label_use[s.label.empty() ? kind : s.label];
  }
  for (std::size_t i = 0; i < cfg.schemes.size(); ++i) {
    SchemeEntry& s = cfg.schemes[i];
    if (!s.label.empty()) continue;
    const std::string kind = s.is_qlab ? "qlabgrad" : std::string(to_string(s.scheme.kind));
    s.label = label_use[kind] > 1 ? kind + "_" + std::to_string(i) : kind;
  }
  reject_leftovers(kv);
  cfg.validate();
  return cfg;
}

GradcheckConfig parse_gradcheck_config(const KeyValueConfig& kv) {
  GradcheckConfig cfg;
  parse_problem(kv, cfg.experiment);
  cfg.rel_tol = kv.get_double("gradcheck.tol", cfg.rel_tol);
  if (!(cfg.rel_tol > 0.0)) throw ConfigError("config: gradcheck.tol must be positive");
  const auto points = kv.get_int("gradcheck.points", static_cast<std::int64_t>(cfg.points));
  if (points < 1) throw ConfigError("config: gradcheck.points must be >= 1");
  cfg.points = static_cast<std::size_t>(points);
  cfg.radius = kv.get_double("gradcheck.radius", cfg.radius);
  reject_leftovers(kv);
  // Scheme list is irrelevant here; validate the problem part only.
  cfg.experiment.schemes.push_back({"gradcheck", true, {}, {}});
  cfg.experiment.validate();
  cfg.experiment.schemes.clear();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (schemes.empty()) throw ConfigError("config: at least one scheme is required");
  std::set<std::string> labels;
  for (const auto& s : schemes) {
    if (!labels.insert(s.label).second) throw ConfigError("config: duplicate scheme label '" + s.label + "'");
    if (s.label.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError("config: scheme label '" + s.label + "' must not contain spaces or slashes");
    }
  }
  if (max_iters < 1) throw ConfigError("config: max_iters must be >= 1");
  if (stop.loss_target && !std::isfinite(*stop.loss_target)) throw ConfigError("config: loss_target must be finite");
  if (stop.grad_norm_floor && !(*stop.grad_norm_floor > 0.0)) throw ConfigError("config: grad_floor must be positive");
  if (problem.kind == ProblemKind::mlp) {
    try {
      problem.mlp.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (problem.batch_size < 1) throw ConfigError("config: mlp.batch_size must be positive");
  }
  if (initial_point) {
    Eigen::Index dim = 2;
    if (problem.kind == ProblemKind::quadratic) dim = problem.offset.size();
    if (problem.kind == ProblemKind::mlp) dim = nn::Mlp(problem.mlp).param_count();
    if (initial_point->size() != dim) throw ConfigError("config: init has the wrong dimension");
  }
}

TheoryConfig parse_theory_config(const KeyValueConfig& kv) {
  TheoryConfig cfg;
  if (kv.has("theory.dims")) {
    cfg.dims.clear();
    for (double d : kv.get_doubles("theory.dims")) {
      if (d < 1 || d != std::floor(d)) throw ConfigError("config: theory.dims must be positive integers");
      cfg.dims.push_back(static_cast<Eigen::Index>(d));
    }
  }
  if (kv.has("theory.kappas")) {
    cfg.kappas = kv.get_doubles("theory.kappas");
    for (double k : cfg.kappas) {
      if (!(k >= 1.0)) throw ConfigError("config: theory.kappas must be >= 1");
    }
  }
  const auto seeds = kv.get_int("theory.seeds", static_cast<std::int64_t>(cfg.seeds));
  if (seeds < 1) throw ConfigError("config: theory.seeds must be >= 1");
  cfg.seeds = static_cast<std::size_t>(seeds);
  cfg.plr_factor = kv.get_double("theory.plr_factor", cfg.plr_factor);
  if (!(cfg.plr_factor > 0.0)) throw ConfigError("config: theory.plr_factor must be positive");
  if (kv.has("theory.horizons")) {
    cfg.horizons.clear();
    for (double h : kv.get_doubles("theory.horizons")) {
      if (h < 1 || h != std::floor(h)) throw ConfigError("config: theory.horizons must be positive integers");
      cfg.horizons.push_back(static_cast<std::size_t>(h));
    }
  }
  cfg.lemma_tol = kv.get_double("theory.tol", cfg.lemma_tol);
  cfg.base_seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
  reject_leftovers(kv);
  return cfg;
}

}  // namespace qlabgrad::harness
