#include "qlabgrad/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qlabgrad::harness {

RandomQuadratic random_quadratic(std::mt19937_64& rng, Eigen::Index dim, double kappa) {
  if (dim < 1) throw std::invalid_argument("random_quadratic: dim must be >= 1");
  if (!(kappa >= 1.0)) throw std::invalid_argument("random_quadratic: kappa must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double M = 0.5 + 4.5 * unit(rng);
  Eigen::VectorXd eig(dim);
  if (dim == 1) {
    eig[0] = M;
  } else {
    const double lo = M / kappa;
    eig[0] = lo;
    eig[dim - 1] = M;
    // Log-uniform interior keeps every decade of the spectrum populated.
    for (Eigen::Index i = 1; i + 1 < dim; ++i) eig[i] = lo * std::pow(kappa, unit(rng));
  }

  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::MatrixXd h = q * eig.asDiagonal() * q.transpose();
  h = 0.5 * (h + h.transpose());

  RandomQuadratic out;
  out.hessian = h;
  out.offset.resize(dim);
  out.start.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out.offset[i] = normal(rng);
  for (Eigen::Index i = 0; i < dim; ++i) out.start[i] = out.offset[i] + normal(rng);
  out.lipschitz = QuadraticOracle(out.hessian, out.offset).lipschitz_constant().value();
  return out;
}

bool TheoryReport::asserted_checks_passed() const {
  if (lemma2_lower_violations || lemma2_upper_violations || lemma3_violations) return false;
  if (!theorem_precondition_met) return true;
  return theorem1_failures == 0 && monotone_violations == 0 && sufficient_decrease_violations == 0;
}

std::string TheoryReport::to_csv() const {
  std::ostringstream out;
  out << "metric,value\n";
  out << "theorem_precondition_met," << (theorem_precondition_met ? 1 : 0) << '\n';
  out << "runs," << runs << '\n';
  out << "steps," << steps << '\n';
  if (theorem_precondition_met) {
    out << "theorem1_checks," << theorem1_checks << '\n';
    out << "theorem1_failures," << theorem1_failures << '\n';
    out << "worst_theorem1_ratio," << format_real(worst_theorem1_ratio) << '\n';
  }
  out << "lemma2_checked," << lemma2_checked << '\n';
  out << "lemma2_lower_violations," << lemma2_lower_violations << '\n';
  out << "lemma2_upper_violations," << lemma2_upper_violations << '\n';
  out << "worst_lemma2_lower_margin," << format_real(worst_lemma2_lower_margin) << '\n';
  out << "worst_lemma2_upper_margin," << format_real(worst_lemma2_upper_margin) << '\n';
  out << "lemma3_checked," << lemma3_checked << '\n';
  out << "lemma3_violations," << lemma3_violations << '\n';
  out << "descent_checked," << descent_checked << '\n';
  out << "monotone_violations," << monotone_violations << '\n';
  if (theorem_precondition_met) {
    out << "sufficient_decrease_violations," << sufficient_decrease_violations << '\n';
  }
  return out.str();
}

namespace {

double worst(double current, double candidate) {
  if (std::isnan(candidate)) return current;
  return std::isnan(current) ? candidate : std::min(current, candidate);
}

}  // namespace

TheoryReport run_theory_suite(const TheoryConfig& config) {
  TheoryReport report;
  report.theorem_precondition_met = config.plr_factor < 1.0;
  const std::size_t horizon = config.horizons.empty()
                                  ? std::size_t{1}
                                  : *std::max_element(config.horizons.begin(), config.horizons.end());

  for (std::size_t di = 0; di < config.dims.size(); ++di) {
    for (std::size_t ki = 0; ki < config.kappas.size(); ++ki) {
      for (std::size_t s = 0; s < config.seeds; ++s) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.base_seed), static_cast<std::uint32_t>(config.base_seed >> 32),
                          static_cast<std::uint32_t>(config.dims[di]), static_cast<std::uint32_t>(ki),
                          static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        const RandomQuadratic quad = random_quadratic(rng, config.dims[di], config.kappas[ki]);
        QuadraticOracle oracle(quad.hessian, quad.offset);
        const double M = quad.lipschitz;

        QlabConfig qc;
        qc.fixed_plr = config.plr_factor * 2.0 / M;
        const Trajectory traj = run_qlabgrad(oracle, quad.start, qc, horizon);
        ++report.runs;
        report.steps += traj.rows.size();

        const LemmaReport lemmas = verify_lemmas(traj, M, config.lemma_tol);
        report.lemma2_checked += lemmas.lemma2_checked;
        report.lemma2_lower_violations += lemmas.lemma2_lower_violations;
        report.lemma2_upper_violations += lemmas.lemma2_upper_violations;
        report.worst_lemma2_lower_margin = worst(report.worst_lemma2_lower_margin, lemmas.worst_lower_margin);
        report.worst_lemma2_upper_margin = worst(report.worst_lemma2_upper_margin, lemmas.worst_upper_margin);
        report.lemma3_checked += lemmas.lemma3_checked;
        report.lemma3_violations += lemmas.lemma3_violations;

        if (report.theorem_precondition_met) {
          for (std::size_t T : config.horizons) {
            const Theorem1Check c = check_theorem1(traj, 0.0, *qc.fixed_plr, M, T);
            ++report.theorem1_checks;
            if (!c.holds) ++report.theorem1_failures;
            if (c.bound > 0.0) report.worst_theorem1_ratio = std::max(report.worst_theorem1_ratio, c.min_grad_norm / c.bound);
          }
          const DescentCheck d = check_sufficient_decrease(traj, *qc.fixed_plr, M);
          report.descent_checked += d.checked;
          report.monotone_violations += d.monotone_violations;
          report.sufficient_decrease_violations += d.sufficient_decrease_violations;
        } else {
          double prev = traj.initial_loss;
          for (const TrajectoryRow& row : traj.rows) {
            ++report.descent_checked;
            if (row.loss > prev) ++report.monotone_violations;
            prev = row.loss;
          }
        }
      }
    }
  }
  return report;
}

}  // namespace qlabgrad::harness
