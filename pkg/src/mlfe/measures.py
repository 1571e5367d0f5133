"""Neighborhood densities on tensor grids and their derived fields.

A *neighborhood density* is a probability density ``nu(x_0, x_1, ..., x_kappa)``
for the root of a kappa-regular tree (slot 0) and its kappa neighbors,
discretized on a shared symmetric axis.  Admissible densities are
nonnegative, have unit trapezoid mass, and are exchangeable in the leaf
slots.  This module provides the density containers, leaf symmetrization,
marginals, the conditional local-field drift, entropy/moment functionals,
standard initializers, and a binary file format.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .grid import (
    Axis,
    TensorGrid,
    contract_axis,
    integrate,
    trapezoid_weights,
)
from .potentials import PotentialPair

MAGIC = b"MLFE"
FORMAT_VERSION = 1
EDGE_FLOOR = 1e-14


class ZeroMassError(ValueError):
    """Renormalization was asked of a field with no mass."""


@dataclass(frozen=True)
class JointDensity:
    """Density of the root neighborhood: shape ``(points,) * (1 + kappa)``.

    Array axis 0 is the root coordinate; axes ``1 .. kappa`` are the leaf
    coordinates, exchangeable for admissible densities.
    """

    grid: TensorGrid
    values: np.ndarray
    kappa: int

    def __post_init__(self) -> None:
        if self.kappa not in (2, 3):
            raise ValueError(f"kappa must be 2 or 3, got {self.kappa}")
        if self.grid.arity != 1 + self.kappa:
            raise ValueError(
                f"grid arity {self.grid.arity} does not match 1 + kappa = {1 + self.kappa}"
            )
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid shape {self.grid.shape}"
            )

    @property
    def axis(self) -> Axis:
        return self.grid.axis

    def mass(self) -> float:
        return integrate(self.values, trapezoid_weights(self.axis))


@dataclass(frozen=True)
class EdgeDensity:
    """Joint density of one edge ``(root, one leaf)``: shape ``(points, points)``."""

    axis: Axis
    values: np.ndarray

    def __post_init__(self) -> None:
        n = self.axis.points
        if self.values.shape != (n, n):
            raise ValueError(f"edge values must be ({n}, {n}), got {self.values.shape}")

    def mass(self) -> float:
        return integrate(self.values, trapezoid_weights(self.axis))

    def first_marginal(self) -> np.ndarray:
        """Density of the first (root-slot) coordinate."""
        return contract_axis(self.values, trapezoid_weights(self.axis), 1)

    def swap_defect(self) -> float:
        """Sup-norm asymmetry under exchanging the two coordinates."""
        return float(np.max(np.abs(self.values - self.values.T)))


@dataclass(frozen=True)
class GammaField:
    """Conditional drift table ``values[a, b] = gamma(x_a, x_b)``.

    ``gamma(x, y)`` is the conditional mean of the root drift given the
    root at ``x`` and one fixed neighbor at ``y``; a leaf at position ``z``
    whose root sits at ``x_0`` moves with drift ``-gamma(z, x_0)``.
    """

    axis: Axis
    values: np.ndarray

    def __post_init__(self) -> None:
        n = self.axis.points
        if self.values.shape != (n, n):
            raise ValueError(f"gamma values must be ({n}, {n}), got {self.values.shape}")


@dataclass(frozen=True)
class AdmissibilityReport:
    """Deviations of a candidate density from the admissible class."""

    mass_defect: float
    entropy: float
    second_moment: float
    leaf_exchange_defect: float
    edge_symmetry_defect: float
    min_value: float


def symmetrize(density: JointDensity) -> JointDensity:
    """Project onto leaf-exchangeable densities and renormalize.

    Averages over all ``kappa!`` permutations of the leaf axes, then
    divides by the trapezoid mass.  Raises :class:`ZeroMassError` when the
    average has no mass to normalize.
    """
    leaf_axes = tuple(range(1, 1 + density.kappa))
    acc = np.zeros_like(density.values)
    count = 0
    for perm in permutations(leaf_axes):
        acc += np.transpose(density.values, (0, *perm))
        count += 1
    acc /= count
    mass = integrate(acc, trapezoid_weights(density.axis))
    if not mass > 0 or not np.isfinite(mass):
        raise ZeroMassError(f"cannot renormalize: mass = {mass}")
    acc /= mass
    return JointDensity(density.grid, acc, density.kappa)


def leaf_exchange_defect(density: JointDensity) -> float:
    """Sup-norm distance to the leaf-exchangeable class."""
    leaf_axes = tuple(range(1, 1 + density.kappa))
    worst = 0.0
    for perm in permutations(leaf_axes):
        if perm == leaf_axes:
            continue
        d = float(np.max(np.abs(density.values - np.transpose(density.values, (0, *perm)))))
        worst = max(worst, d)
    return worst


def edge_marginal(density: JointDensity) -> EdgeDensity:
    """Integrate out all leaves but the first."""
    w = trapezoid_weights(density.axis)
    vals = density.values
    while vals.ndim > 2:
        vals = contract_axis(vals, w, -1)
    return EdgeDensity(density.axis, vals)


def root_marginal(density: JointDensity) -> np.ndarray:
    """Density of the root coordinate alone, shape ``(points,)``."""
    w = trapezoid_weights(density.axis)
    vals = density.values
    while vals.ndim > 1:
        vals = contract_axis(vals, w, -1)
    return vals


def gamma_field(pair: PotentialPair, density: JointDensity, floor: float = EDGE_FLOOR) -> GammaField:
    """Conditional local-field drift induced by ``density``.

    ``gamma(x, y) = U'(x) + W'(x - y)
    + (kappa - 1) * E[W'(x - X_2) | X_0 = x, X_1 = y]``,
    the conditional expectation taken under ``density`` using one
    representative extra leaf (leaf exchangeability makes them all equal).
    Where the conditioning edge marginal falls below ``floor`` the
    conditional term is meaningless and the field falls back to the bare
    confining drift ``U'(x)``.
    """
    if pair.kappa != density.kappa:
        raise ValueError(f"pair has kappa = {pair.kappa}, density has kappa = {density.kappa}")
    x = density.axis.nodes()
    w = trapezoid_weights(density.axis)
    vals = density.values
    while vals.ndim > 3:  # keep (root, leaf_1, leaf_2); drop further leaves
        vals = contract_axis(vals, w, -1)
    dw_w = pair.dw(x[:, None] - x[None, :]) * w[None, :]  # (a, c)
    cond_num = np.matmul(vals, dw_w[:, :, None])[:, :, 0]  # batched over the root axis
    edge = contract_axis(vals, w, 2)
    closed = pair.du(x)[:, None] + pair.dw(x[:, None] - x[None, :])
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = closed + (pair.kappa - 1) * (cond_num / edge)
    bare = np.broadcast_to(pair.du(x)[:, None], gamma.shape)
    gamma = np.where(edge >= floor, gamma, bare)
    return GammaField(density.axis, gamma)


def entropy(values: np.ndarray, axis: Axis, floor: float = 1e-300) -> float:
    """Differential entropy integral ``sum nu log nu`` (note: *not* negated),
    with the convention ``0 log 0 = 0``."""
    integrand = values * np.log(np.maximum(values, floor))
    return integrate(integrand, trapezoid_weights(axis))


def second_moment(values: np.ndarray, axis: Axis) -> float:
    """``integral |x|^2 nu(x) dx`` summed over all coordinates."""
    w = trapezoid_weights(axis)
    x2 = np.square(axis.nodes())
    total = 0.0
    for keep in range(values.ndim):
        marg = values
        # contract trailing axes first so `keep` stays in place
        for drop in range(values.ndim - 1, -1, -1):
            if drop != keep:
                marg = contract_axis(marg, w, drop)
        total += float(np.dot(w * x2, marg))
    return total


def admissibility_check(density: JointDensity) -> AdmissibilityReport:
    """Measure how far a density is from the admissible class."""
    edge = edge_marginal(density)
    return AdmissibilityReport(
        mass_defect=abs(density.mass() - 1.0),
        entropy=entropy(density.values, density.axis),
        second_moment=second_moment(density.values, density.axis),
        leaf_exchange_defect=leaf_exchange_defect(density),
        edge_symmetry_defect=edge.swap_defect(),
        min_value=float(density.values.min()),
    )


# ---------------------------------------------------------------------------
# initializers


def _normalized(grid: TensorGrid, values: np.ndarray, kappa: int) -> JointDensity:
    mass = integrate(values, trapezoid_weights(grid.axis))
    if not mass > 0 or not np.isfinite(mass):
        raise ZeroMassError(f"initializer has mass = {mass}")
    return JointDensity(grid, values / mass, kappa)


def gaussian_product(grid: TensorGrid, mean: float = 0.0, var: float = 1.0) -> JointDensity:
    """IID product of ``N(mean, var)`` over all ``1 + kappa`` coordinates,
    renormalized to unit trapezoid mass on the grid."""
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    x = grid.axis.nodes()
    p = np.exp(-0.5 * np.square(x - mean) / var) / np.sqrt(2.0 * np.pi * var)
    values = p
    for _ in range(grid.arity - 1):
        values = np.multiply.outer(values, p)
    return _normalized(grid, values, grid.arity - 1)


def gaussian_mixture(
    grid: TensorGrid,
    centers: tuple[float, ...] = (0.5841, -0.5841),
    var: float = 0.41470,
    weights: tuple[float, ...] = (0.5, 0.5),
    leaf_centers: Optional[tuple[float, ...]] = None,
) -> JointDensity:
    """Mixture of Gaussian products, one component per center.

    Component ``k`` places ``N(centers[k], var)`` on the root coordinate and
    IID ``N(leaf_centers[k], var)`` on every leaf; ``leaf_centers`` defaults
    to ``-centers``, giving the anti-aligned two-bump state used by the
    relaxation experiments.  That default is leaf-exchangeable with a
    swap-symmetric edge marginal (the component list is closed under
    root-leaf reflection), carries negative root-leaf covariance, and its
    leaf-leaf covariance strictly exceeds the conditional-independence
    reference — the excess that the relaxation experiments track.  Pass
    ``leaf_centers=centers`` for a plain mixture of IID products.
    """
    if len(centers) != len(weights):
        raise ValueError("centers and weights must have equal length")
    if leaf_centers is None:
        leaf_centers = tuple(-c for c in centers)
    if len(leaf_centers) != len(centers):
        raise ValueError("leaf_centers and centers must have equal length")
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    x = grid.axis.nodes()
    norm = np.sqrt(2.0 * np.pi * var)
    values = np.zeros(grid.shape)
    for c, lc, wt in zip(centers, leaf_centers, weights):
        root = np.exp(-0.5 * np.square(x - c) / var) / norm
        leaf = np.exp(-0.5 * np.square(x - lc) / var) / norm
        comp = root
        for _ in range(grid.arity - 1):
            comp = np.multiply.outer(comp, leaf)
        values += wt * comp
    return _normalized(grid, values, grid.arity - 1)


def correlated_mixture(
    grid: TensorGrid,
    var: float,
    cov: float,
    components: int = 15,
) -> JointDensity:
    """Exchangeable Gaussian state with prescribed edge second moments.

    Gauss-Hermite mixture over component centers ``c ~ N(0, |cov|)`` of
    products ``N(c, var - |cov|)`` on the root and ``N(sign(cov) c, ...)``
    on the leaves.  The quadrature limit is the exchangeable Gaussian with
    coordinate variance ``var``, root-leaf covariance ``cov``, and leaf-leaf
    covariance ``|cov|`` — which strictly exceeds the conditional-independence
    reference ``cov^2/var``, so the state carries positive conditional
    mutual information between leaves given the root.  Matching ``(var,
    cov)`` to a stationary edge makes the edge free energy start at its
    terminal value, isolating the transient driven by that excess.
    """
    if not var > abs(cov) or cov == 0.0:
        raise ValueError(f"need var > |cov| > 0, got var={var}, cov={cov}")
    if components < 2:
        raise ValueError(f"need at least 2 components, got {components}")
    nodes, wts = np.polynomial.hermite_e.hermegauss(components)
    centers = np.sqrt(abs(cov)) * nodes
    sign = 1.0 if cov > 0 else -1.0
    return gaussian_mixture(
        grid,
        centers=tuple(centers),
        var=var - abs(cov),
        weights=tuple(wts / wts.sum()),
        leaf_centers=tuple(sign * centers),
    )


# ---------------------------------------------------------------------------
# binary serialization

_HEADER = struct.Struct("<4sIIIdd")


def save_density(density: JointDensity, path) -> None:
    """Write a density to the package's binary format.

    Layout (little-endian): magic ``MLFE``, u32 format version, u32 kappa,
    u32 points per axis, f64 lower, f64 upper, then ``points**(1 + kappa)``
    f64 values in row-major order.
    """
    ax = density.axis
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, density.kappa, ax.points, ax.lower, ax.upper)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(density.values, dtype="<f8").tobytes())


def load_density(path) -> JointDensity:
    """Read a density written by :func:`save_density`."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError("truncated density file: short header")
        magic, version, kappa, points, lower, upper = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {version}")
        count = points ** (1 + kappa)
        data = np.frombuffer(fh.read(count * 8), dtype="<f8")
        if data.size != count:
            raise ValueError("truncated density file: short payload")
    grid = TensorGrid(Axis(lower, upper, points), 1 + kappa)
    return JointDensity(grid, data.reshape(grid.shape).copy(), kappa)
