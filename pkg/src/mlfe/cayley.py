"""Stationary laws via the Cayley-tree fixed-point equation.

A stationary neighborhood density factorizes over the tree: it is fully
determined by a single-site density ``nu_0`` solving

    nu_0(x)^(1/kappa) = (1/z) exp(-U(x)/kappa)
        * integral exp(-W(x - y) - U(y)/kappa) nu_0(y)^((kappa-1)/kappa) dy.

This module solves that equation by damped Picard iteration, assembles the
edge and joint densities of the solution, checks stationarity three
independent ways, and converts to/from the log-transform coordinates in
which the fixed-point map becomes integral-to-log composition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import Axis, TensorGrid, central_gradient, integrate, trapezoid_weights
from .measures import EdgeDensity, JointDensity, gamma_field
from .potentials import PotentialPair
from . import functionals


class MaxIterExceeded(RuntimeError):
    """Picard iteration did not reach tolerance within the iteration cap."""


class NonPositiveIterate(RuntimeError):
    """An iterate left the positive cone (overflow/underflow of the Gibbs
    factors; usually the grid window is too small for the potentials)."""


@dataclass(frozen=True)
class CayleySolution:
    """A solved stationary law.

    ``nu0`` is the single-site density on the axis, ``z_nu0`` the edge
    normalizer of the fixed-point map at the solution, ``edge`` and
    ``joint`` the assembled two-point and neighborhood densities,
    ``residual_linf`` the sup-norm fixed-point residual, ``iterations``
    the number of Picard steps taken.
    """

    axis: Axis
    nu0: np.ndarray
    z_nu0: float
    edge: EdgeDensity
    joint: JointDensity
    residual_linf: float
    iterations: int


@dataclass(frozen=True)
class StationarityResiduals:
    """Three independent measures of how stationary a solution is.

    ``gradient_identity_linf``: defect of
    ``(log nu_0)'(x) = -U'(x) - kappa * E[W'(x - Y) | X = x]``
    on the bulk ``nu_0 > bulk_floor``.
    ``dissipation``: the flow's dissipation functional on the joint.
    ``gamma_identity_linf``: defect of
    ``gamma(x, y) = -d/dx log nubar(x, y)`` on the bulk of the edge.
    """

    gradient_identity_linf: float
    dissipation: float
    gamma_identity_linf: float


def _picard_map(pair: PotentialPair, axis: Axis, nu0: np.ndarray) -> np.ndarray:
    """One undamped application of the fixed-point map, renormalized."""
    kappa = pair.kappa
    x = axis.nodes()
    w = trapezoid_weights(axis)
    kernel = np.exp(-pair.w(x[:, None] - x[None, :]) - pair.u(x)[None, :] / kappa)
    phi = np.exp(-pair.u(x) / kappa) * (kernel @ (w * nu0 ** ((kappa - 1) / kappa)))
    candidate = phi**kappa
    if not np.all(np.isfinite(candidate)) or np.any(candidate <= 0):
        raise NonPositiveIterate(
            "fixed-point iterate left the positive cone; widen the axis window"
        )
    return candidate / float(np.dot(w, candidate))


def edge_normalizer(pair: PotentialPair, axis: Axis, nu0: np.ndarray) -> float:
    """``z = integral integral exp(-(U(x) + U(y))/kappa - W(x - y))
    (nu0(x) nu0(y))^((kappa-1)/kappa) dx dy``."""
    kappa = pair.kappa
    x = axis.nodes()
    w = trapezoid_weights(axis)
    f = np.exp(-pair.u(x) / kappa) * nu0 ** ((kappa - 1) / kappa)
    kernel = np.exp(-pair.w(x[:, None] - x[None, :]))
    return float((w * f) @ kernel @ (w * f))


def assemble_edge(pair: PotentialPair, axis: Axis, nu0: np.ndarray) -> tuple[EdgeDensity, float]:
    """Edge density of the tree Gibbs law built on ``nu0`` and its
    normalizer.  At a fixed point the edge mass is 1 exactly (up to
    rounding) because the normalizer is the same integral."""
    kappa = pair.kappa
    x = axis.nodes()
    z = edge_normalizer(pair, axis, nu0)
    f = np.exp(-pair.u(x) / kappa) * nu0 ** ((kappa - 1) / kappa)
    vals = np.exp(-pair.w(x[:, None] - x[None, :])) * np.outer(f, f) / z
    return EdgeDensity(axis, vals), z


def assemble_joint(pair: PotentialPair, axis: Axis, nu0: np.ndarray) -> JointDensity:
    """Neighborhood density of the tree Gibbs law built on ``nu0``.

    Uses the product form
    ``nu(x) = z^-kappa exp(-U(x_0)) prod_v exp(-W(x_0 - x_v) - U(x_v)/kappa)
    nu0(x_v)^((kappa-1)/kappa)``,
    which never divides by ``nu0`` and so stays stable in the tails; the
    result is renormalized (the defect is of the order of the fixed-point
    residual).
    """
    kappa = pair.kappa
    x = axis.nodes()
    w = trapezoid_weights(axis)
    z = edge_normalizer(pair, axis, nu0)
    f = np.exp(-pair.u(x) / kappa) * nu0 ** ((kappa - 1) / kappa)
    leaf = np.exp(-pair.w(x[:, None] - x[None, :])) * f[None, :]  # (root, leaf)
    vals = np.exp(-pair.u(x)) / z**kappa
    shape = [axis.points] + [1] * kappa
    vals = vals.reshape(shape)
    for v in range(1, 1 + kappa):
        s = [1] * (1 + kappa)
        s[0] = axis.points
        s[v] = axis.points
        vals = vals * leaf.reshape(s)
    mass = integrate(vals, w)
    grid = TensorGrid(axis, 1 + kappa)
    return JointDensity(grid, vals / mass, kappa)


def solve_fixed_point(
    pair: PotentialPair,
    axis: Axis,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 500,
    init: Optional[np.ndarray] = None,
) -> CayleySolution:
    """Damped Picard iteration for the single-site fixed point.

    Each step replaces ``nu_0`` by ``(1 - damping) nu_0 + damping T(nu_0)``
    where ``T`` is the normalized fixed-point map.  Convergence is declared
    when the undamped update is small in weighted L1:
    ``integral |T(nu_0) - nu_0| <= tol``.

    With interaction switched off (``W == 0``) the map sends *any* density
    straight to ``exp(-U)/Z``, so undamped iteration converges in two
    steps; damping trades that speed for robustness at strong interaction.
    """
    if not 0.0 < damping <= 1.0:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    w = trapezoid_weights(axis)
    if init is None:
        nu0 = np.full(axis.points, 1.0 / (axis.upper - axis.lower))
    else:
        nu0 = np.asarray(init, dtype=float)
        if nu0.shape != (axis.points,):
            raise ValueError(f"init must have shape ({axis.points},)")
        if np.any(nu0 <= 0):
            raise NonPositiveIterate("init must be strictly positive")
        nu0 = nu0 / float(np.dot(w, nu0))

    for iteration in range(1, max_iter + 1):
        mapped = _picard_map(pair, axis, nu0)
        delta = float(np.dot(w, np.abs(mapped - nu0)))
        nu0 = (1.0 - damping) * nu0 + damping * mapped
        if delta <= tol:
            residual = float(np.max(np.abs(_picard_map(pair, axis, nu0) - nu0)))
            edge, z = assemble_edge(pair, axis, nu0)
            joint = assemble_joint(pair, axis, nu0)
            return CayleySolution(
                axis=axis,
                nu0=nu0,
                z_nu0=z,
                edge=edge,
                joint=joint,
                residual_linf=residual,
                iterations=iteration,
            )
    raise MaxIterExceeded(f"no convergence to {tol} within {max_iter} iterations")


def stationarity_residuals(
    pair: PotentialPair, solution: CayleySolution, bulk_floor: float = 1e-8
) -> StationarityResiduals:
    """Check stationarity of a solution by three independent identities."""
    axis = solution.axis
    x = axis.nodes()
    w = trapezoid_weights(axis)
    h = axis.h
    nu0 = solution.nu0
    bulk = nu0 > bulk_floor

    # (a) single-site gradient identity
    lhs = central_gradient(np.log(np.maximum(nu0, 1e-300)), h, 0)
    dw_matrix = pair.dw(x[:, None] - x[None, :])
    cond = (dw_matrix * solution.edge.values) @ w / np.maximum(nu0, 1e-300)
    rhs = -pair.du(x) - pair.kappa * cond
    grad_defect = float(np.max(np.abs((lhs - rhs)[bulk])))

    # (b) dissipation of the joint
    dissipation = functionals.i_kappa(pair, solution.joint)

    # (c) the conditional drift equals the negative edge score
    gamma = gamma_field(pair, solution.joint)
    score = -central_gradient(np.log(np.maximum(solution.edge.values, 1e-300)), h, 0)
    edge_bulk = solution.edge.values > bulk_floor
    gamma_defect = float(np.max(np.abs((gamma.values - score)[edge_bulk])))

    return StationarityResiduals(
        gradient_identity_linf=grad_defect,
        dissipation=dissipation,
        gamma_identity_linf=gamma_defect,
    )


def to_lacker_zhang(pair: PotentialPair, axis: Axis, nu0: np.ndarray) -> np.ndarray:
    """Log-transform coordinates of a single-site density:
    ``F = -(U + log nu_0) / kappa``.

    In these coordinates the fixed-point map becomes a smoothed integral
    update of ``F`` itself, which is the form convenient for contraction
    arguments; :func:`from_lacker_zhang` inverts exactly up to
    normalization.
    """
    return -(pair.u(axis.nodes()) + np.log(np.maximum(nu0, 1e-300))) / pair.kappa


def from_lacker_zhang(pair: PotentialPair, axis: Axis, f: np.ndarray) -> np.ndarray:
    """Invert :func:`to_lacker_zhang`: ``nu_0 = exp(-U - kappa F) / Z``."""
    f = np.asarray(f, dtype=float)
    if f.shape != (axis.points,):
        raise ValueError(f"f must have shape ({axis.points},)")
    w = trapezoid_weights(axis)
    nu0 = np.exp(-pair.u(axis.nodes()) - pair.kappa * f)
    mass = float(np.dot(w, nu0))
    if not mass > 0 or not np.isfinite(mass):
        raise NonPositiveIterate("transform inverse has no normalizable mass")
    return nu0 / mass
