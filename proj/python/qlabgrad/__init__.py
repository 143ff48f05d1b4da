"""QLABGrad optimizer, baselines and experiment harness (C++ core)."""

from ._core import (
    ConfigError,
    FunctionOracle,
    LossOracle,
    QlabError,
    Quadratic,
    TestFunction,
    alpha_star,
    check_gradient,
    decay_factor,
    find_plr,
    run_experiment,
    run_qlabgrad,
    run_scheme,
    run_theory,
)

__all__ = [
    "ConfigError",
    "FunctionOracle",
    "LossOracle",
    "QlabError",
    "Quadratic",
    "TestFunction",
    "alpha_star",
    "check_gradient",
    "decay_factor",
    "find_plr",
    "run_experiment",
    "run_qlabgrad",
    "run_scheme",
    "run_theory",
]
