"""Shared fixtures: the three study systems and their solved designs."""

import numpy as np
import pytest

from lqmpc import (
    ConstrainedProblem,
    HPolytope,
    LqSystem,
    TerminalDesign,
    load_scenario,
    solve_dare,
    zeta_dare,
)

# Effective amplification factors used throughout (carried by the built-in
# scenarios; calibrated so the terminal matrices match the reported
# ratio/distance pairs).
ZEFF_2D = 10.132151874906384
ZEFF_4D = 8.0


@pytest.fixture(scope="session")
def scalar_sys():
    return LqSystem(
        np.array([[2.0]]), np.array([[0.5]]), np.array([[1.0]]), np.array([[10.0]])
    )


@pytest.fixture(scope="session")
def di2d_sys():
    A = np.array([[1.0, 1.0], [0.0, 1.0]])
    B = np.array([[0.0], [1.0]])
    return LqSystem(A, B, np.eye(2), np.eye(1))


@pytest.fixture(scope="session")
def ac4d_sys():
    # Pull the 4-D model from the built-in scenario so the data lives in
    # exactly one place.
    return load_scenario("ac-4d").system


@pytest.fixture(scope="session")
def scalar_dare(scalar_sys):
    return solve_dare(scalar_sys)


@pytest.fixture(scope="session")
def di2d_dare(di2d_sys):
    return solve_dare(di2d_sys)


@pytest.fixture(scope="session")
def ac4d_dare(ac4d_sys):
    return solve_dare(ac4d_sys)


@pytest.fixture(scope="session")
def di2d_K_eff(di2d_sys):
    """2-D amplified terminal matrix at the calibrated effective factor."""
    return zeta_dare(di2d_sys, ZEFF_2D)


@pytest.fixture(scope="session")
def ac4d_K_eff(ac4d_sys):
    return zeta_dare(ac4d_sys, ZEFF_4D)


@pytest.fixture(scope="session")
def di2d_prob(di2d_sys):
    Xhat = HPolytope.symmetric_box([5.0, 5.0])
    U = HPolytope.symmetric_box([1.0])
    return ConstrainedProblem(di2d_sys, Xhat, U)


@pytest.fixture(scope="session")
def di2d_design_opt(di2d_prob):
    return TerminalDesign.for_optimal_cost(di2d_prob)


@pytest.fixture(scope="session")
def di2d_design_eff(di2d_prob):
    return TerminalDesign.for_amplified_cost(di2d_prob, ZEFF_2D)


@pytest.fixture(scope="session")
def ac4d_prob(ac4d_sys):
    sc = load_scenario("ac-4d")
    return sc.constrained_problem()


@pytest.fixture(scope="session")
def ac4d_design_eff(ac4d_prob):
    return TerminalDesign.for_amplified_cost(ac4d_prob, ZEFF_4D)
