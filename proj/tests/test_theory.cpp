#include "qlabgrad/theory.hpp"

#include "oracles.hpp"

#include <doctest.h>

using namespace qlabgrad;

namespace {

QlabConfig fixed(double plr) {
  QlabConfig c;
  c.fixed_plr = plr;
  return c;
}

}  // namespace

TEST_CASE("theorem1_bound values") {
  CHECK(theorem1_bound(0.5, 0.0, 1.0, 1.0, 100) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(theorem1_bound(3.0, 3.0, 0.5, 1.0, 7) == 0.0);
  CHECK(descent_constant(1.0, 1.0) == 0.5);
  CHECK(descent_constant(0.1, 1.0) == 0.1);
  CHECK_THROWS_AS(theorem1_bound(0.5, 0.0, 2.0, 1.0, 10), std::invalid_argument);
  CHECK_THROWS_AS(theorem1_bound(0.5, 0.0, 1.0, 1.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(theorem1_bound(0.0, 1.0, 1.0, 1.0, 10), std::invalid_argument);
}

TEST_CASE("lemma bracket is tight on the isotropic quadratic") {
  QuadraticOracle q(Eigen::MatrixXd::Identity(1, 1), ParamVector::Zero(1));
  const Trajectory t = run_qlabgrad(q, ParamVector::Ones(1), fixed(1.0), 5);
  const LemmaReport r = verify_lemmas(t, 1.0, 1e-9);
  CHECK(r.lemma2_checked == 1);
  CHECK(r.passed());
  CHECK(r.worst_lower_margin == 0.0);
  CHECK(r.worst_upper_margin == 0.0);
  CHECK(r.steps[0].alpha_star == 1.0);
}

TEST_CASE("alpha star follows exact line search and can exceed the pre-learning rate") {
  // Steepest descent with exact steps on diag(1, 4) from (1, 1) alternates 17/65 and 17/20,
  // so the upper half of the bracket does not hold for plr = 0.4.
  QuadraticOracle q(Eigen::Vector2d(1, 4).asDiagonal().toDenseMatrix(), ParamVector::Zero(2));
  const Trajectory t = run_qlabgrad(q, ParamVector::Ones(2), fixed(0.4), 4);
  REQUIRE(t.steps.size() == 4);
  CHECK(t.steps[0].alpha_star == doctest::Approx(17.0 / 65.0).epsilon(1e-14));
  CHECK(t.steps[1].alpha_star == doctest::Approx(17.0 / 20.0).epsilon(1e-14));
  const LemmaReport r = verify_lemmas(t, 4.0, 1e-9);
  CHECK(r.lemma2_lower_passed());
  CHECK_FALSE(r.lemma2_upper_passed());
  CHECK(r.lemma2_upper_violations == 2);
  CHECK(r.worst_lower_margin >= 0.0);
}

TEST_CASE("lemma checks on an empty trajectory pass vacuously") {
  const LemmaReport r = verify_lemmas(Trajectory{}, 1.0, 1e-9);
  CHECK(r.lemma2_checked == 0);
  CHECK(r.lemma3_checked == 0);
  CHECK(r.passed());
}

TEST_CASE("lemma 3 on FindPLR probes") {
  QuadraticOracle q(Eigen::MatrixXd::Identity(1, 1), ParamVector::Zero(1));
  QlabConfig cfg;
  cfg.initial_plr = 10.0;
  const Trajectory t = run_qlabgrad(q, ParamVector::Ones(1), cfg, 3);
  const LemmaReport r = verify_lemmas(t, 1.0, 1e-9);
  CHECK(r.lemma3_checked == 3);  // 10, 5 and 2.5 increase the loss
  CHECK(r.lemma3_passed());
  CHECK(r.worst_lemma3_margin == doctest::Approx(0.25));
}

TEST_CASE("theorem 1 and descent hold on random quadratics") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 30; ++k) {
    const oracle::Psd p = oracle::random_psd(rng, 1 + k % 6, 1.0 + 20.0 * (k % 5));
    QuadraticOracle q(p.a, p.offset);
    for (double factor : {0.9, 0.6, 0.55, 0.2}) {
      const double plr = factor * 2.0 / p.lmax;
      const Trajectory t = run_qlabgrad(q, p.start, fixed(plr), 300);
      for (std::size_t T : {1, 10, 100, 300}) CHECK(check_theorem1(t, 0.0, plr, p.lmax, T).holds);
      const DescentCheck d = check_sufficient_decrease(t, plr, p.lmax);
      INFO("factor " << factor << " worst margin " << d.worst_margin);
      CHECK(d.monotone_violations == 0);
      if (factor >= 0.5) CHECK(d.sufficient_decrease_violations == 0);
    }
  }
}

TEST_CASE("sufficient decrease fails between 1/(2M) and 1/M") {
  // L = Mθ²/2 with M = 2: the exact step gives ΔL = ‖g‖²/(2M) while C = 2/(3M).
  const double M = 2.0;
  QuadraticOracle q(Eigen::MatrixXd::Constant(1, 1, M), ParamVector::Zero(1));
  const double plr = 2.0 / (3.0 * M);
  const Trajectory t = run_qlabgrad(q, ParamVector::Ones(1), fixed(plr), 1);
  const DescentCheck d = check_sufficient_decrease(t, plr, M);
  CHECK(d.checked == 1);
  CHECK(d.monotone_violations == 0);
  CHECK(d.sufficient_decrease_violations == 1);
}

TEST_CASE("gradient norm sequence starts at theta zero") {
  QuadraticOracle q(Eigen::Vector2d(1, 2).asDiagonal().toDenseMatrix(), ParamVector::Zero(2));
  const Trajectory t = run_qlabgrad(q, ParamVector::Ones(2), fixed(0.5), 3);
  const auto g = gradient_norm_sequence(t);
  REQUIRE(g.size() == 4);
  CHECK(g[0] == doctest::Approx(std::sqrt(5.0)));
  CHECK(g[3] == t.rows[2].grad_norm);
}
