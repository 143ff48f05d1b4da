import math

import numpy as np
import pytest

import qlabgrad


def test_alpha_star_exact_fit():
    assert qlabgrad.alpha_star(0.5, 1.0, 0.0, 1.0) == pytest.approx(1.0)


def test_find_plr_halves_large_seed():
    q = qlabgrad.Quadratic(np.eye(1), np.zeros(1))
    s = qlabgrad.find_plr(q, np.ones(1), 10.0)
    assert s["plr"] == 1.25
    assert s["halvings"] == 3


def test_isotropic_one_step():
    q = qlabgrad.Quadratic(np.eye(1), np.zeros(1))
    t = qlabgrad.run_qlabgrad(q, np.ones(1), 10, alpha0=1.0)
    assert t["status"] == "converged"
    assert len(t["loss"]) == 1
    assert t["loss"][0] == 0.0


def test_booth_beats_sgd():
    f = qlabgrad.TestFunction("booth")
    x0 = np.array([-5.0, 5.0])
    q = qlabgrad.run_qlabgrad(f, x0, 500, loss_target=1e-6)
    f.reset_counters()
    s = qlabgrad.run_scheme("sgd", {"alpha": 0.01}, f, x0, 500, loss_target=1e-6)
    assert q["loss"][-1] <= 1e-6
    assert len(q["loss"]) < len(s["loss"])


def test_callable_oracle_and_counters():
    f = qlabgrad.FunctionOracle(2, lambda x: 0.5 * float(x @ x), lambda x: x.copy(), 1.0)
    loss, grad = f.eval_full(np.array([3.0, 4.0]))
    assert loss == pytest.approx(12.5)
    np.testing.assert_allclose(grad, [3.0, 4.0])
    f.eval_loss(np.zeros(2))
    assert f.counters == (1, 1)
    ok, err = qlabgrad.check_gradient(f, np.array([1.0, -2.0]))
    assert ok and err < 1e-6


def test_decay_factor():
    assert qlabgrad.decay_factor("ss_decay", {"alpha": 1.0, "T": 10}, 10) == 0.5


def test_experiment_from_text(tmp_path):
    text = "problem = booth\nmax_iters = 50\nscheme.0.kind = qlabgrad\nscheme.1.kind = sgd\nscheme.1.alpha = 0.05\n"
    r = qlabgrad.run_experiment(text, str(tmp_path))
    assert set(r) == {"qlabgrad", "sgd"}
    assert r["qlabgrad"]["initial_plr"] > 0
    assert (tmp_path / "report.csv").exists()


def test_config_error():
    with pytest.raises(qlabgrad.ConfigError):
        qlabgrad.run_experiment("problem = nowhere\nscheme.0.kind = qlabgrad\n")


def test_theory_csv():
    csv = qlabgrad.run_theory("theory.seeds = 2\ntheory.horizons = 10, 100\n")
    rows = dict(line.split(",") for line in csv.strip().splitlines()[1:])
    assert rows["theorem1_failures"] == "0"
    assert int(rows["runs"]) == 18


def test_nonfinite_point_rejected():
    q = qlabgrad.Quadratic(np.eye(1), np.zeros(1))
    with pytest.raises(Exception):
        q.eval_full(np.array([math.nan]))
