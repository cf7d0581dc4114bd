"""Shared fixtures: the frozen solver fixtures used across rde, CLI, and
acceptance tests, solved once per session."""

import numpy as np
import pytest
from hypothesis import settings

from roughkit.funcs import LipFunction, PolyMap
from roughkit.path import SampledPath, SampledRoughPath, pure_area_path, signature
from roughkit.rde import RdeProblem, continuity_probe, rescale_problem, solve

settings.register_profile(
    "suite", deadline=None, max_examples=25, derandomize=True
)
settings.load_profile("suite")


# -- exponential fixture: scalar dy = y dx on a smooth monotone-ish path -----


def scalar_exp_path(n_steps: int) -> SampledPath:
    t = np.linspace(0.0, 1.0, n_steps + 1)
    x = 0.4 * t + 0.16 * np.sin(2.0 * np.pi * t)
    return SampledPath(t, x[:, None])


def exp_field() -> LipFunction:
    return LipFunction(
        PolyMap.linear_vector_field([np.array([[1.0]])]), gamma=4.0, radius=4.0
    )


def exp_problem(n_steps: int, **kw) -> RdeProblem:
    driver = signature(scalar_exp_path(n_steps), 3, p=3.0)
    return RdeProblem(driver, exp_field(), xi=np.array([1.0]), **kw)


# -- cubic fixture: 2-d state, 2-d driver, degree-3 polynomial field ---------


def cubic_field() -> LipFunction:
    rng = np.random.default_rng(11)
    coeffs = (
        0.4 * rng.standard_normal((2, 2)),
        0.3 * rng.standard_normal((2, 2, 2)),
        0.12 * rng.standard_normal((2, 2, 2, 2)),
        0.04 * rng.standard_normal((2, 2, 2, 2, 2)),
    )
    return LipFunction(PolyMap(2, (2, 2), coeffs), gamma=4.0, radius=3.0)


def cubic_path(n_steps: int) -> SampledPath:
    t = np.linspace(0.0, 1.0, n_steps + 1)
    xs = np.stack(
        [
            0.4 * t + 0.15 * np.sin(2.0 * np.pi * t),
            0.3 * np.cos(2.0 * np.pi * t) - 0.3,
        ],
        axis=1,
    )
    return SampledPath(t, xs)


def cubic_problem(n_steps: int, **kw) -> RdeProblem:
    driver = signature(cubic_path(n_steps), 3, p=3.0)
    return RdeProblem(driver, cubic_field(), xi=np.array([0.5, -0.25]), **kw)


# -- pure-area fixture: level-2 driver with no displacement ------------------

AREA_A1 = np.array([[0.0, 1.0], [-0.5, 0.2]])
AREA_A2 = np.array([[0.3, -0.2], [0.8, 0.0]])
AREA_VALUE = 0.35
AREA_XI = np.array([1.0, 0.5])


def area_problem(steps: int = 320, **kw) -> RdeProblem:
    field = LipFunction(
        PolyMap.linear_vector_field([AREA_A1, AREA_A2]), gamma=3.0, radius=4.0
    )
    return RdeProblem(pure_area_path(AREA_VALUE, steps), field, xi=AREA_XI, **kw)


# -- probe fixture: scalar equation on a 200-step grid, used by the ----------
# -- uniqueness and continuity probes and the acceptance suite ----------------


def probe_path() -> SampledPath:
    t = np.linspace(0.0, 1.0, 201)
    x = 0.3 * t + 0.1 * np.sin(2.0 * np.pi * t)
    return SampledPath(t, x[:, None])


def probe_problem(**kw) -> RdeProblem:
    return RdeProblem(
        signature(probe_path(), 3, p=3.0), exp_field(), xi=np.array([1.0]), **kw
    )


def perturbed_probe_driver(delta: float) -> SampledRoughPath:
    t = np.linspace(0.0, 1.0, 201)
    x = 0.3 * t + 0.1 * np.sin(2.0 * np.pi * t)
    bump = 0.5 * np.sin(4.0 * np.pi * t) + 0.5 * t * (1.0 - t)
    return signature(SampledPath(t, (x + delta * bump)[:, None]), 3, p=3.0)


@pytest.fixture(scope="session")
def probe_solutions():
    """The probe equation solved twice: as posed and at a rescaled size."""
    prob = probe_problem(n_max=16)
    scaled_prob, c = rescale_problem(prob, 0.5)
    return {
        "problem": prob,
        "base": solve(prob),
        "rescaled": solve(scaled_prob),
        "c": c,
    }


@pytest.fixture(scope="session")
def continuity_report():
    prob = probe_problem(n_max=16)
    drivers = [prob.driver] + [
        perturbed_probe_driver(d) for d in (1e-1, 1e-2, 1e-3)
    ]
    return continuity_probe(prob, drivers)


@pytest.fixture(scope="session")
def exp_solutions():
    """Exponential fixture solved at two grid resolutions, with history."""
    return {
        n: solve(exp_problem(n, n_max=16), keep_history=True)
        for n in (128, 256)
    }


@pytest.fixture(scope="session")
def cubic_solutions():
    return {
        n: solve(cubic_problem(n, n_max=16), keep_history=True)
        for n in (128, 256)
    }


@pytest.fixture(scope="session")
def area_solution():
    return solve(area_problem())
