"""Session fixtures: the reference model and the expensive shared runs."""

from __future__ import annotations

from dataclasses import dataclass

import pytest

from mlfe.cayley import CayleySolution, solve_fixed_point
from mlfe.chain import h_star_spectral
from mlfe.flow import FlowConfig, FlowResult, run
from mlfe.grid import Axis, TensorGrid
from mlfe.measures import JointDensity, correlated_mixture
from mlfe.potentials import PotentialPair, Quadratic

import helpers


@pytest.fixture(scope="session")
def pair() -> PotentialPair:
    """Reference model: quadratic confinement with attractive interaction."""
    return PotentialPair(Quadratic(2.0, 1.5), 2)


@pytest.fixture(scope="session")
def axis64() -> Axis:
    return Axis(-6.0, 6.0, 64)


@pytest.fixture(scope="session")
def grid64(axis64) -> TensorGrid:
    return TensorGrid(axis64, 3)


@pytest.fixture(scope="session")
def cayley64(pair, axis64) -> CayleySolution:
    return solve_fixed_point(pair, axis64)


@pytest.fixture(scope="session")
def h_star64(pair, axis64) -> float:
    return h_star_spectral(pair, axis64)


def correlated_start(solution: CayleySolution, grid: TensorGrid) -> JointDensity:
    """The canonical relaxation start: the stationary edge moments with a
    small variance surplus and a 20% overshoot of the (negative)
    covariance.  Matching the stationary moments this closely makes the
    edge free energy start essentially at its terminal value, so the
    transient of the joint relative to its pair marginal stands out.
    """
    _, var_pi, cov_pi = helpers.edge_moments(solution.joint)
    return correlated_mixture(grid, var=var_pi + 0.06, cov=1.2 * cov_pi)


@dataclass(frozen=True)
class RelaxationRun:
    """The shared long run from the correlated start."""

    init: JointDensity
    result: FlowResult


@pytest.fixture(scope="session")
def relaxation(pair, grid64, cayley64) -> RelaxationRun:
    """64-point relaxation to t = 3 (about a minute; shared session-wide)."""
    init = correlated_start(cayley64, grid64)
    cfg = FlowConfig(dt=1e-3, t_end=3.0, output_every=10)
    return RelaxationRun(init=init, result=run(pair, init, cfg))
