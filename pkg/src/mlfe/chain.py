"""Doubly infinite chain diagnostics (kappa = 2).

At kappa = 2 the regular tree is the integer line, and stationary laws are
Gibbs measures of the pair energy ``Q(x, y) = U(x) + U(y) + 2 W(x - y)``
factorizing over edges.  This module provides

* finite-chain log partition functions ``log Z^n`` on sites ``-n .. n``
  via transfer-operator contraction,
* the spectral free-energy density ``h_star = -log lambda_max`` of the
  symmetrized transfer operator, the common large-``n`` limit of the
  per-site free energy,
* the entropy of the *lift*: the chain law assembled by propagating a
  neighborhood density's conditionals site by site, whose relative
  entropy against the chain Gibbs measure has a closed telescoped form,
* explicit small-``n`` lift construction for marginal cross-checks,
* a windowed decomposition of the dissipation functional around one
  interior site of the lift.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .grid import Axis, central_gradient, trapezoid_weights
from .measures import JointDensity, edge_marginal, entropy
from .potentials import PotentialPair, q_energy
from . import functionals


class MemoryGuardError(MemoryError):
    """An explicit lift tensor would exceed the configured memory budget."""


@dataclass(frozen=True)
class TransferOperator:
    """Quadrature transfer operator of the chain Gibbs factor.

    ``kernel[i, j] = exp(-Q(x_i, x_j) / 2)`` and ``weights`` are the
    trapezoid weights; contracting ``2n`` kernel applications between
    weight vectors yields ``Z^n``.  ``log_scale_accumulator`` carries the
    renormalizations applied during contraction so huge/tiny partition
    functions never overflow.
    """

    axis: Axis
    kernel: np.ndarray
    weights: np.ndarray
    log_scale_accumulator: float = 0.0


def transfer_operator(pair: PotentialPair, axis: Axis) -> TransferOperator:
    x = axis.nodes()
    kernel = np.exp(-0.5 * q_energy(pair, x[:, None], x[None, :]))
    return TransferOperator(axis=axis, kernel=kernel, weights=trapezoid_weights(axis))


def log_partition(pair: PotentialPair, axis: Axis, n: int) -> float:
    """``log Z^n`` for the chain on sites ``-n .. n`` (``2n`` edges).

    ``Z^n = integral prod_{v=-n}^{n-1} exp(-Q(x_v, x_{v+1}) / 2) dx``,
    evaluated by repeated kernel-vector contraction with per-step
    renormalization on the log scale.
    """
    if n < 1:
        raise ValueError(f"chain half-length must be >= 1, got {n}")
    op = transfer_operator(pair, axis)
    r = op.weights.copy()
    log_scale = op.log_scale_accumulator
    for _ in range(2 * n):
        r = (r @ op.kernel) * op.weights
        peak = float(r.max())
        if not peak > 0 or not np.isfinite(peak):
            raise FloatingPointError("transfer contraction left the positive cone")
        r /= peak
        log_scale += np.log(peak)
    return log_scale + float(np.log(r.sum()))


def h_star_spectral(
    pair: PotentialPair, axis: Axis, tol: float = 1e-12, max_iter: int = 100000
) -> float:
    """Free-energy density ``-log lambda_max`` of the transfer operator.

    Power iteration on the symmetrized operator
    ``sqrt(w) kernel sqrt(w)`` (similar to the weighted kernel, so same
    spectrum; symmetric, so the Rayleigh quotient converges one order
    faster than the iterates).  The kernel is strictly positive, hence the
    top eigenvalue is simple and the iteration cannot stall.
    """
    op = transfer_operator(pair, axis)
    sw = np.sqrt(op.weights)
    sym = sw[:, None] * op.kernel * sw[None, :]
    v = np.full(axis.points, 1.0 / np.sqrt(axis.points))
    lam = 0.0
    for _ in range(max_iter):
        u = sym @ v
        lam_new = float(v @ u)
        u_norm = float(np.linalg.norm(u))
        v = u / u_norm
        if abs(lam_new - lam) <= tol * max(1.0, abs(lam_new)):
            return -float(np.log(lam_new))
        lam = lam_new
    raise RuntimeError(f"power iteration did not converge within {max_iter} steps")


def per_site_increment(pair: PotentialPair, axis: Axis, n: int) -> float:
    """Two-site increment estimator ``-(log Z^n - log Z^{n-1}) / 2``.

    Converges to the spectral free-energy density geometrically in ``n``
    (rate: spectral gap), unlike the plain per-site ratio
    ``log Z^n / (2n + 1)``, which carries an O(1/n) boundary offset.
    """
    if n < 2:
        raise ValueError(f"increment estimator needs n >= 2, got {n}")
    return -0.5 * (log_partition(pair, axis, n) - log_partition(pair, axis, n - 1))


@dataclass(frozen=True)
class ChainReport:
    """Chain diagnostics at one half-length ``n``."""

    n: int
    log_z: float
    per_site_log_z: float
    increment_estimate: float
    h_star_spectral: float
    lift_entropy: Optional[float]
    lift_entropy_per_site: Optional[float]


def chain_report(
    pair: PotentialPair,
    axis: Axis,
    n: int,
    density: Optional[JointDensity] = None,
    h_star: Optional[float] = None,
) -> ChainReport:
    """Assemble one report row; ``density`` adds the lift-entropy columns."""
    log_z = log_partition(pair, axis, n)
    if h_star is None:
        h_star = h_star_spectral(pair, axis)
    lift = lift_entropy(pair, density, n) if density is not None else None
    increment = per_site_increment(pair, axis, n) if n >= 2 else float("nan")
    return ChainReport(
        n=n,
        log_z=log_z,
        per_site_log_z=log_z / (2 * n + 1),
        increment_estimate=increment,
        h_star_spectral=h_star,
        lift_entropy=lift,
        lift_entropy_per_site=None if lift is None else lift / (2 * n + 1),
    )


def lift_entropy(pair: PotentialPair, density: JointDensity, n: int) -> float:
    """Relative entropy of the lifted chain law against the chain Gibbs law.

    The lift propagates ``density``'s conditionals along the chain:
    ``psi = prod_{v interior} nu(x_{v-1}, x_v, x_{v+1})
    / prod_{v, v+1 interior} nubar(x_v, x_{v+1})``.
    Telescoping collapses its entropy, giving the closed form

    ``H(psi | theta^n) = log Z^n + (2n - 1) * integral nu log nu
    - (2n - 2) * integral nubar log nubar + 2n * integral g dnu``.

    Requires a kappa = 2 density on the same axis used for ``Z^n``.
    """
    if pair.kappa != 2 or density.kappa != 2:
        raise ValueError("lift entropy is defined for kappa = 2")
    if n < 1:
        raise ValueError(f"chain half-length must be >= 1, got {n}")
    ax = density.axis
    edge = edge_marginal(density)
    return (
        log_partition(pair, ax, n)
        + (2 * n - 1) * entropy(density.values, ax)
        - (2 * n - 2) * entropy(edge.values, ax)
        + 2 * n * functionals._energy_integral(pair, density)
    )


# ---------------------------------------------------------------------------
# explicit lift for small n


def _lift_tensor(density: JointDensity, n: int, budget_bytes: float) -> np.ndarray:
    """Explicit lift values on the ``(2n+1)``-fold tensor grid.

    Site ``s`` of the chain (``0 .. 2n`` left to right) is array axis ``s``.
    """
    ax = density.axis
    sites = 2 * n + 1
    need = 8.0 * ax.points**sites
    if need > budget_bytes:
        raise MemoryGuardError(
            f"lift tensor needs {need:.3e} bytes, budget is {budget_bytes:.3e}"
        )
    w = trapezoid_weights(ax)
    rho = density.values  # rho[root, leaf, leaf]
    pair_marg = edge_marginal(density).values  # [root, leaf]

    def window(values: np.ndarray, left: int) -> np.ndarray:
        """Broadcast a 3-site window (sites left, left+1, left+2) to the
        full tensor, with the window's center on the density's root axis."""
        centered = np.moveaxis(values, 0, 1)  # (left, center, right)
        shape = [1] * sites
        shape[left] = shape[left + 1] = shape[left + 2] = ax.points
        return centered.reshape(shape)

    psi = np.ones((ax.points,) * sites)
    for v in range(1, sites - 1):  # interior sites
        psi = psi * window(rho, v - 1)
    for v in range(1, sites - 2):  # adjacent pairs of interior sites
        shape = [1] * sites
        shape[v] = shape[v + 1] = ax.points
        psi = psi / pair_marg.reshape(shape)
    return psi


@dataclass(frozen=True)
class LiftMarginalCheck:
    """Observable agreement between the explicit lift and its generator."""

    n: int
    site: int
    mass_defect: float
    mean_defect: float
    second_moment_defect: float
    neighbor_product_defect: float


def lift_marginal_check(
    density: JointDensity,
    n: int,
    site: int = 0,
    budget_bytes: float = 3.2e8,
) -> LiftMarginalCheck:
    """Build the explicit lift and compare window observables against
    ``density``'s own expectations.

    ``site`` is a chain site in ``[-n + 1, n - 1]`` (interior).  Checked
    observables: total mass vs 1, ``x_site`` and ``x_site^2`` vs the root
    marginal moments, and the neighbor product ``x_{site-1} x_{site+1}``
    vs the leaf-pair expectation.  On consistent input all defects sit at
    quadrature roundoff.
    """
    if density.kappa != 2:
        raise ValueError("explicit lifts are defined for kappa = 2")
    if not -n + 1 <= site <= n - 1:
        raise ValueError(f"site {site} is not interior for half-length {n}")
    ax = density.axis
    w = trapezoid_weights(ax)
    x = ax.nodes()
    psi = _lift_tensor(density, n, budget_bytes)
    sites = 2 * n + 1
    # fold quadrature weights in place, one axis at a time
    for s in range(sites):
        shape = [1] * sites
        shape[s] = ax.points
        psi *= w.reshape(shape)
    c = site + n  # array axis of the requested site

    def expect(factors: dict[int, np.ndarray]) -> float:
        letters = "abcdefghijklm"[:sites]
        operands = [psi]
        spec = [letters]
        for axis_index, vec in factors.items():
            operands.append(vec)
            spec.append(letters[axis_index])
        return float(np.einsum(",".join(spec) + "->", *operands))

    mass = expect({})
    mean = expect({c: x})
    second = expect({c: x * x})
    neighbor = expect({c - 1: x, c + 1: x})

    root = density.values
    for _ in range(2):
        root = np.tensordot(root, w, axes=([-1], [0]))
    ref_mean = float(np.dot(w, x * root))
    ref_second = float(np.dot(w, x * x * root))
    ref_neighbor = float(
        np.einsum("abc,a,b,c,b,c->", density.values, w, w, w, x, x)
    )
    return LiftMarginalCheck(
        n=n,
        site=site,
        mass_defect=abs(mass - 1.0),
        mean_defect=abs(mean - ref_mean),
        second_moment_defect=abs(second - ref_second),
        neighbor_product_defect=abs(neighbor - ref_neighbor),
    )


# ---------------------------------------------------------------------------
# windowed dissipation around one interior vertex


@dataclass(frozen=True)
class FisherWindowReport:
    """Five-site window decomposition of the dissipation functional.

    ``root_part`` integrates the squared corrected root score
    ``|b + grad log nu|^2`` of the center site, ``leaf_part`` the two
    conditional scores of the outer sites differentiated in the center
    coordinate; their sum reproduces the neighborhood dissipation
    functional, while ``cross`` (the mixed term) vanishes for exact
    conditionals and measures discretization leakage.
    """

    total: float
    root_part: float
    leaf_part: float
    cross: float


def fisher_interior_vertex(pair: PotentialPair, density: JointDensity) -> FisherWindowReport:
    """Decompose the dissipation at an interior chain vertex of the lift.

    Works on the density's own grid: the five-site window law is
    ``omega(x1..x5) = nu(x1, x2, x3) nu(x4 | x3, x2) nu(x5 | x4, x3)``
    (windows written left-to-right; ``nu``'s root is the window center).
    The window law factorizes along the chain, so every expectation is
    evaluated by three-index contractions; the five-index tensor is never
    materialized.
    """
    if pair.kappa != 2 or density.kappa != 2:
        raise ValueError("the window decomposition is defined for kappa = 2")
    ax = density.axis
    npts = ax.points
    x = ax.nodes()
    w = trapezoid_weights(ax)
    h = ax.h
    rho = density.values  # [root, leaf, leaf]
    m = edge_marginal(density).values  # [root, leaf]

    log_rho = np.log(np.maximum(rho, 1e-300))
    log_m = np.log(np.maximum(m, 1e-300))
    g_root = central_gradient(log_rho, h, 0)
    g_leaf1 = central_gradient(log_rho, h, 1)
    g_leaf2 = central_gradient(log_rho, h, 2)
    g_m = central_gradient(log_m, h, 1)

    # conditional of the next site given the two previous: C[prev, cur, nxt]
    cond = np.moveaxis(rho, 0, 1) / m.T[:, :, None]

    w1 = np.moveaxis(rho, 0, 1)  # [a, b, c] = nu(x1, x2, x3), root at b

    # theta_1 over (b, c, d): full drift plus root score of the center window
    dw_mat = pair.dw(x[:, None] - x[None, :])  # [i, j] = W'(x_i - x_j)
    theta1 = (
        pair.du(x)[None, :, None]
        + dw_mat.T[:, :, None]  # W'(x_c - x_b)
        + dw_mat[None, :, :]  # W'(x_c - x_d)
        + np.transpose(g_root, (1, 0, 2))  # score at (root=c, leaves b, d)
    )

    # s1 over (a, b, c): d/dx3 log nu(x1 | x2, x3); window root at b
    s1 = np.transpose(g_leaf2, (1, 0, 2)) - g_m[None, :, :]
    # s5 over (c, d, e): d/dx3 log nu(x5 | x4, x3); window root at d
    s5 = np.transpose(g_leaf1, (1, 0, 2)) - g_m.T[:, :, None]

    # weighted window law p3 on (x1,x2,x3) and weighted transitions t_step,
    # which sum to one over their last axis; marginals follow by chaining
    t_step = cond * w[None, None, :]
    p3 = w1 * w[:, None, None] * w[None, :, None] * w[None, None, :]
    m2 = p3.sum(axis=0)  # window law on (x2, x3)
    m34 = np.einsum("bc,bcd->cd", m2, t_step)  # window law on (x3, x4)

    root_part = float(np.einsum("bc,bcd,bcd->", m2, t_step, theta1 * theta1))
    a1 = np.einsum("abc,abc->bc", p3, s1)
    b5 = np.einsum("cde,cde->cd", t_step, s5)
    leaf_part = (
        float(np.einsum("abc,abc->", p3, s1 * s1))
        + float(np.einsum("cd,cde,cde->", m34, t_step, s5 * s5))
        + 2.0 * float(np.einsum("bc,bcd,cd->", a1, t_step, b5))
    )
    cross = float(np.einsum("bc,bcd,bcd->", a1, t_step, theta1)) + float(
        np.einsum("bc,bcd,bcd,cd->", m2, t_step, theta1, b5)
    )
    return FisherWindowReport(
        total=root_part + leaf_part,
        root_part=root_part,
        leaf_part=leaf_part,
        cross=cross,
    )
