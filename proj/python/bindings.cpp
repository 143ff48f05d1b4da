#include "qlabgrad/harness.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace qlabgrad;

namespace {

template <typename T, typename F>
py::array_t<T> column(const std::vector<TrajectoryRow>& rows, F get) {
  py::array_t<T> out(static_cast<py::ssize_t>(rows.size()));
  auto w = out.template mutable_unchecked<1>();
  for (std::size_t i = 0; i < rows.size(); ++i) w(static_cast<py::ssize_t>(i)) = get(rows[i]);
  return out;
}

py::dict trajectory_dict(const Trajectory& t) {
  py::dict d;
  const auto& r = t.rows;
  d["iter"] = column<std::uint64_t>(r, [](const TrajectoryRow& x) { return x.t; });
  d["loss"] = column<double>(r, [](const TrajectoryRow& x) { return x.loss; });
  d["grad_norm"] = column<double>(r, [](const TrajectoryRow& x) { return x.grad_norm; });
  d["lr"] = column<double>(r, [](const TrajectoryRow& x) { return x.lr; });
  d["alpha_star_raw"] = column<double>(r, [](const TrajectoryRow& x) { return x.alpha_star_raw; });
  d["fallback"] = column<bool>(r, [](const TrajectoryRow& x) { return x.fallback; });
  d["full_evals"] = column<std::uint64_t>(r, [](const TrajectoryRow& x) { return x.full_evals; });
  d["loss_only_evals"] = column<std::uint64_t>(r, [](const TrajectoryRow& x) { return x.loss_only_evals; });
  d["status"] = to_string(t.status);
  d["error"] = t.error;
  d["initial_loss"] = t.initial_loss;
  d["final_theta"] = t.final_theta;
  py::list plrs;
  for (const auto& rec : t.plr_searches) plrs.append(py::make_tuple(rec.before_step, rec.search.plr));
  d["plr_searches"] = plrs;
  return d;
}

StopRule stop_rule(std::optional<double> loss_target, std::optional<double> grad_floor) {
  StopRule s;
  s.loss_target = loss_target;
  s.grad_norm_floor = grad_floor;
  return s;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "QLABGrad step-size search, baseline optimizers and experiment harness.";

  py::register_exception<Error>(m, "QlabError", PyExc_RuntimeError);
  py::register_exception<harness::ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<LossOracle>(m, "LossOracle")
      .def_property_readonly("dim", &LossOracle::dim)
      .def("eval_full",
           [](LossOracle& o, const ParamVector& theta) {
             GradEval g = o.eval_full(theta);
             return py::make_tuple(g.loss, g.gradient);
           })
      .def("eval_loss", &LossOracle::eval_loss)
      .def_property_readonly("counters",
                             [](const LossOracle& o) {
                               return py::make_tuple(o.counters().full_evals, o.counters().loss_only_evals);
                             })
      .def("reset_counters", &LossOracle::reset_counters)
      .def_property_readonly("lipschitz", &LossOracle::lipschitz_constant);

  py::class_<QuadraticOracle, LossOracle>(m, "Quadratic")
      .def(py::init(&make_quadratic), py::arg("hessian"), py::arg("offset"))
      .def_property_readonly("min_eigenvalue", &QuadraticOracle::min_eigenvalue);

  py::class_<TestFunctionOracle, LossOracle>(m, "TestFunction")
      .def(py::init(&make_named_test_function), py::arg("name"));

  // Callables run under the GIL; keep these oracles on the calling thread.
  py::class_<FunctionOracle, LossOracle>(m, "FunctionOracle")
      .def(py::init<Eigen::Index, FunctionOracle::LossFn, FunctionOracle::GradFn, std::optional<double>>(),
           py::arg("dim"), py::arg("loss"), py::arg("grad"), py::arg("lipschitz") = std::nullopt);

  m.def("alpha_star", &qlab_alpha_star, py::arg("loss0"), py::arg("grad_sq_norm"), py::arg("g_bar"), py::arg("plr"),
        py::arg("denom_guard") = 1e-12);

  m.def(
      "find_plr",
      [](LossOracle& oracle, const ParamVector& theta, double alpha0) {
        const PlrSearch s = find_plr(oracle, theta, alpha0, QlabConfig{});
        py::dict d;
        d["plr"] = s.plr;
        d["doublings"] = s.doublings;
        d["halvings"] = s.halvings;
        d["tie_adjusted"] = s.tie_adjusted;
        d["g0"] = s.g0;
        return d;
      },
      py::arg("oracle"), py::arg("theta"), py::arg("alpha0") = 0.1);

  m.def(
      "run_qlabgrad",
      [](LossOracle& oracle, const ParamVector& theta0, std::size_t max_iters, double alpha0,
         std::optional<std::size_t> refresh, std::optional<double> fixed_plr, std::optional<double> loss_target,
         std::optional<double> grad_floor) {
        QlabConfig c;
        c.initial_plr = alpha0;
        c.plr_refresh_interval = refresh;
        c.fixed_plr = fixed_plr;
        c.validate();
        return trajectory_dict(run_qlabgrad(oracle, theta0, c, max_iters, stop_rule(loss_target, grad_floor)));
      },
      py::arg("oracle"), py::arg("theta0"), py::arg("max_iters"), py::arg("alpha0") = 0.1,
      py::arg("refresh") = std::nullopt, py::arg("fixed_plr") = std::nullopt, py::arg("loss_target") = std::nullopt,
      py::arg("grad_floor") = std::nullopt);

  m.def(
      "run_scheme",
      [](const std::string& kind, const std::map<std::string, double>& hyper, LossOracle& oracle,
         const ParamVector& theta0, std::size_t max_iters, std::optional<double> loss_target) {
        const auto k = parse_scheme_kind(kind);
        if (!k) throw std::invalid_argument("unknown scheme '" + kind + "'");
        SchemeSpec spec;
        spec.kind = *k;
        spec.hyper = hyper;
        Scheme s(spec);
        return trajectory_dict(run_scheme(s, oracle, theta0, max_iters, stop_rule(loss_target, std::nullopt)));
      },
      py::arg("kind"), py::arg("hyper"), py::arg("oracle"), py::arg("theta0"), py::arg("max_iters"),
      py::arg("loss_target") = std::nullopt);

  m.def(
      "decay_factor",
      [](const std::string& kind, const std::map<std::string, double>& hyper, std::size_t t) {
        const auto k = parse_scheme_kind(kind);
        if (!k) throw std::invalid_argument("unknown scheme '" + kind + "'");
        SchemeSpec spec;
        spec.kind = *k;
        spec.hyper = hyper;
        return decay_factor(spec, t);
      },
      py::arg("kind"), py::arg("hyper"), py::arg("t"));

  m.def(
      "check_gradient",
      [](LossOracle& oracle, const ParamVector& point, double rel_tol) {
        const GradientCheck g = check_gradient(oracle, point, rel_tol);
        return py::make_tuple(g.passed, g.max_relative_error);
      },
      py::arg("oracle"), py::arg("point"), py::arg("rel_tol") = 1e-5);

  m.def(
      "run_experiment",
      [](const std::string& config_text, const std::string& out_dir) {
        harness::ExperimentConfig cfg =
            harness::parse_experiment_config(harness::KeyValueConfig::parse(config_text));
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        harness::ComparisonReport r;
        {
          py::gil_scoped_release release;
          r = harness::run_experiment(cfg);
        }
        py::dict out;
        for (const auto& e : r.entries) {
          py::dict d = trajectory_dict(e.trajectory);
          d["iters_to_threshold"] = e.iters_to_threshold;
          d["failed"] = e.failed;
          d["initial_plr"] = e.initial_plr;
          d["train_loss"] = e.train_loss;
          d["test_accuracy"] = e.test_accuracy;
          out[py::str(e.label)] = d;
        }
        return out;
      },
      py::arg("config_text"), py::arg("out_dir") = "");

  m.def(
      "run_theory",
      [](const std::string& config_text) {
        const harness::TheoryConfig cfg = harness::parse_theory_config(harness::KeyValueConfig::parse(config_text));
        py::gil_scoped_release release;
        return harness::run_theory_suite(cfg).to_csv();
      },
      py::arg("config_text") = "");
}
