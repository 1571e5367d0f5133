"""Shared oracles and statistics for the test suite.

Everything here is an independent re-derivation: closed forms for the
quadratic family, brute-force quadrature constructions for the chain
objects, and the plain statistics (segment rise, log-linear fit) used to
read trajectories.  Nothing in this module calls back into the package
beyond the data containers, so agreement between a package value and a
helper value is a two-implementation cross-check.
"""

from __future__ import annotations

import math

import numpy as np

from mlfe.grid import trapezoid_weights
from mlfe.measures import JointDensity, edge_marginal


# ---------------------------------------------------------------------------
# closed forms for the quadratic family

def stationary_site_variance(alpha: float, beta: float) -> float:
    """Single-site variance of the stationary Gaussian chain law."""
    return 1.0 / math.sqrt(alpha * alpha - beta * beta)


def stationary_edge_correlation(alpha: float, beta: float) -> float:
    """Correlation of two adjacent sites under the stationary chain law.

    Solving the quadratic recursion of the tridiagonal precision operator
    gives ``-beta / (alpha + sqrt(alpha^2 - beta^2))``: anti-correlated
    for attractive ``beta > 0`` and positively correlated for ``beta < 0``.
    """
    return -beta / (alpha + math.sqrt(alpha * alpha - beta * beta))


def gaussian_product_free_energy(alpha: float, beta: float, mean: float, var: float) -> float:
    """``h_kappa`` of an IID ``N(mean, var)`` neighborhood at kappa = 2.

    Entropy ``-(3/2) log(2 pi e var)`` minus the edge-entropy correction
    ``-log(2 pi e var)`` plus energy ``((alpha+beta)/2)(var + mean^2)``
    plus the two half-weighted interaction terms ``-beta var / 2``.
    """
    return (
        -0.5 * math.log(2.0 * math.pi * math.e * var)
        + 0.5 * (alpha + beta) * (var + mean * mean)
        - 0.5 * beta * var
    )


def gaussian_product_dissipation(alpha: float, beta: float, mean: float, var: float) -> float:
    """``i_kappa`` of an IID ``N(mean, var)`` neighborhood at kappa = 2.

    Only the root term survives on a product (the leaf score equals the
    edge score exactly): with ``A = alpha - 1/var`` the corrected root
    drift is ``A x0 + (beta/2)(x1 + x2) + mean/var``, a Gaussian with mean
    ``mean (alpha + beta)`` and variance ``A^2 var + beta^2 var / 2``.
    """
    a = alpha - 1.0 / var
    return mean * mean * (alpha + beta) ** 2 + a * a * var + 0.5 * beta * beta * var


def gaussian_edge_free_energy(alpha: float, beta: float, var: float) -> float:
    """``h_hat2`` of the centered product edge ``N(0, var) x N(0, var)``:
    energy ``alpha var / 2`` plus the net one-site entropy."""
    return 0.5 * alpha * var - 0.5 * math.log(2.0 * math.pi * math.e * var)


def chain_log_partition_gaussian(alpha: float, beta: float, n: int) -> float:
    """``log Z^n`` of the quadratic chain on ``2n + 1`` sites, exactly.

    The pair energies sum to ``(1/2) x^T A x`` with tridiagonal ``A``
    (diagonal ``alpha`` inside, ``alpha/2`` at the two open ends,
    off-diagonal ``beta/2``), so ``Z^n`` is a Gaussian integral.
    """
    sites = 2 * n + 1
    a = np.zeros((sites, sites))
    np.fill_diagonal(a, alpha)
    a[0, 0] = a[-1, -1] = 0.5 * alpha
    for i in range(sites - 1):
        a[i, i + 1] = a[i + 1, i] = 0.5 * beta
    sign, logdet = np.linalg.slogdet(a)
    assert sign > 0
    return 0.5 * sites * math.log(2.0 * math.pi) - 0.5 * logdet


# ---------------------------------------------------------------------------
# grid moments

def edge_moments(density: JointDensity) -> tuple[float, float, float]:
    """``(mean_root, var_root, cov_root_leaf)`` from the edge marginal."""
    ax = density.axis
    w = trapezoid_weights(ax)
    x = ax.nodes()
    ev = edge_marginal(density).values
    m0 = float(np.einsum("a,b,ab->", w * x, w, ev))
    m1 = float(np.einsum("a,b,ab->", w, w * x, ev))
    var0 = float(np.einsum("a,b,ab->", w * x * x, w, ev)) - m0 * m0
    cov = float(np.einsum("a,b,ab->", w * x, w * x, ev)) - m0 * m1
    return m0, var0, cov


def leaf_pair_covariance(density: JointDensity) -> float:
    """Covariance of two distinct leaves of one neighborhood."""
    ax = density.axis
    w = trapezoid_weights(ax)
    x = ax.nodes()
    v = density.values
    m1 = float(np.einsum("a,b,c,abc->", w, w * x, w, v))
    m2 = float(np.einsum("a,b,c,abc->", w, w, w * x, v))
    return float(np.einsum("a,b,c,abc->", w, w * x, w * x, v)) - m1 * m2


# ---------------------------------------------------------------------------
# trajectory statistics

def segment_rise(values) -> float:
    """Largest cumulative rise above the running minimum.

    Reads an increase out of a sampled trajectory independently of the
    sampling cadence: any contiguous climb shows up whole, while a
    monotone decreasing series scores exactly zero.
    """
    arr = np.asarray(values, dtype=float)
    return float(np.max(arr - np.minimum.accumulate(arr)))


def loglinear_fit(t, y) -> tuple[float, float, float]:
    """Least-squares line through ``(t, log y)``: slope, intercept, R^2."""
    t = np.asarray(t, dtype=float)
    ly = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(t, ly, 1)
    pred = intercept + slope * t
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    return float(slope), float(intercept), 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# brute-force chain constructions (small grids only)

def brute_log_partition_n1(pair, axis) -> float:
    """Direct 3-D quadrature of ``Z^1`` (no transfer contraction)."""
    from mlfe.potentials import q_energy

    x = axis.nodes()
    w = trapezoid_weights(axis)
    q01 = q_energy(pair, x[:, None], x[None, :])
    f = np.exp(-0.5 * (q01[:, :, None] + q01[None, :, :]))
    return float(np.log(np.einsum("a,b,c,abc->", w, w, w, f)))


def brute_lift_entropy_n2(pair, density: JointDensity) -> float:
    """5-D quadrature of the lifted chain law's relative entropy at n = 2.

    Builds the lift explicitly -- three overlapping neighborhood windows
    divided by the two interior pair marginals -- and integrates
    ``psi log(psi / theta)`` against the normalized Gibbs factor, with its
    own 5-D partition function.  Requires a coarse axis (memory!).
    """
    from mlfe.potentials import q_energy

    ax = density.axis
    npts = ax.points
    if npts > 28:
        raise ValueError("brute-force lift needs a coarse axis")
    x = ax.nodes()
    w = trapezoid_weights(ax)
    rho = density.values
    m = edge_marginal(density).values
    win = np.moveaxis(rho, 0, 1)  # value at (left, center, right)
    psi = (
        win[:, :, :, None, None]
        * win[None, :, :, :, None]
        * win[None, None, :, :, :]
        / m.reshape(1, npts, npts, 1, 1)
        / m.reshape(1, 1, npts, npts, 1)
    )
    w5 = (
        w[:, None, None, None, None]
        * w[None, :, None, None, None]
        * w[None, None, :, None, None]
        * w[None, None, None, :, None]
        * w[None, None, None, None, :]
    )
    q01 = q_energy(pair, x[:, None], x[None, :])
    energy = (
        q01[:, :, None, None, None]
        + q01[None, :, :, None, None]
        + q01[None, None, :, :, None]
        + q01[None, None, None, :, :]
    )
    z_brute = float((np.exp(-0.5 * energy) * w5).sum())
    log_psi = np.log(np.maximum(psi, 1e-300))
    return float((psi * w5 * (log_psi + 0.5 * energy)).sum()) + math.log(z_brute)


def brute_fisher_window(pair, density: JointDensity):
    """Materialized 5-D window law and its dissipation decomposition.

    The mirror of the package's contraction-based computation, done the
    slow way: build ``omega`` on the full five-site tensor, square and
    integrate.  Returns ``(root_part, leaf_part, cross)``.
    """
    from mlfe.grid import central_gradient

    ax = density.axis
    npts = ax.points
    if npts > 28:
        raise ValueError("brute-force window needs a coarse axis")
    x = ax.nodes()
    w = trapezoid_weights(ax)
    h = ax.h
    rho = density.values
    m = edge_marginal(density).values

    log_rho = np.log(np.maximum(rho, 1e-300))
    log_m = np.log(np.maximum(m, 1e-300))
    g_root = central_gradient(log_rho, h, 0)
    g_leaf1 = central_gradient(log_rho, h, 1)
    g_leaf2 = central_gradient(log_rho, h, 2)
    g_m = central_gradient(log_m, h, 1)

    win = np.moveaxis(rho, 0, 1)  # (left, center, right)
    cond = win / m.T[:, :, None]  # next given (prev, cur)
    omega = (
        win[:, :, :, None, None]
        * cond[None, :, :, :, None]
        * cond[None, None, :, :, :]
    )
    w5 = (
        w[:, None, None, None, None]
        * w[None, :, None, None, None]
        * w[None, None, :, None, None]
        * w[None, None, None, :, None]
        * w[None, None, None, None, :]
    )
    dw_mat = pair.dw(x[:, None] - x[None, :])
    theta1 = (
        pair.du(x)[None, :, None]
        + dw_mat.T[:, :, None]
        + dw_mat[None, :, :]
        + np.transpose(g_root, (1, 0, 2))
    )  # over (x2, x3, x4)
    s1 = np.transpose(g_leaf2, (1, 0, 2)) - g_m[None, :, :]  # over (x1, x2, x3)
    s5 = np.transpose(g_leaf1, (1, 0, 2)) - g_m.T[:, :, None]  # over (x3, x4, x5)

    t1 = theta1[None, :, :, :, None]
    sa = s1[:, :, :, None, None]
    sb = s5[None, None, :, :, :]
    root_part = float((omega * w5 * t1 * t1).sum())
    leaf_part = float((omega * w5 * (sa + sb) ** 2).sum())
    cross = float((omega * w5 * t1 * (sa + sb)).sum())
    return root_part, leaf_part, cross
