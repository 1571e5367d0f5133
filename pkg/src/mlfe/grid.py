"""Uniform symmetric grids, trapezoid quadrature, and finite differences.

Every density in the package lives on a tensor power of a single 1-D axis:
a uniform grid on ``[-L, L]`` shared by all coordinates.  This module owns
that axis, the induced tensor grid, quadrature weights, and the gradient
stencils used by the functionals.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class Axis:
    """Uniform 1-D grid on a symmetric interval ``[lower, upper]``.

    ``lower`` must equal ``-upper`` (densities here are compared against
    origin-symmetric references, so the grid never breaks that symmetry
    by construction).  Node ``i`` sits at ``lower + i * h``.
    """

    lower: float
    upper: float
    points: int

    def __post_init__(self) -> None:
        if not self.lower < self.upper:
            raise ValueError(f"axis needs lower < upper, got [{self.lower}, {self.upper}]")
        if self.lower != -self.upper:
            raise ValueError(f"axis must be symmetric about 0, got [{self.lower}, {self.upper}]")
        if self.points < 2:
            raise ValueError(f"axis needs at least 2 points, got {self.points}")

    @property
    def h(self) -> float:
        """Node spacing ``(upper - lower) / (points - 1)``."""
        return (self.upper - self.lower) / (self.points - 1)

    def nodes(self) -> np.ndarray:
        """All node coordinates, ascending, shape ``(points,)``."""
        return _nodes(self.lower, self.upper, self.points)


@lru_cache(maxsize=64)
def _nodes(lower: float, upper: float, points: int) -> np.ndarray:
    x = np.linspace(lower, upper, points)
    x.setflags(write=False)
    return x


def default_axis(points: int = 64, half_width: float = 6.0) -> Axis:
    """The standard state-space window ``[-6, 6]``."""
    return Axis(-half_width, half_width, points)


@dataclass(frozen=True)
class TensorGrid:
    """Tensor power of one shared :class:`Axis`.

    ``arity`` is the number of coordinates (root plus leaves, so
    ``1 + kappa``); arrays defined on the grid have shape
    ``(axis.points,) * arity`` in row-major order with coordinate 0 (the
    root) on the first array axis.
    """

    axis: Axis
    arity: int

    def __post_init__(self) -> None:
        if not 2 <= self.arity <= 4:
            raise ValueError(f"tensor arity must be in [2, 4], got {self.arity}")
        if self.axis.points < 8:
            raise ValueError(f"tensor grids need >= 8 points per axis, got {self.axis.points}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.axis.points,) * self.arity

    @property
    def size(self) -> int:
        return self.axis.points**self.arity

    def to_linear(self, multi: tuple[int, ...]) -> int:
        """Row-major linear index of a multi-index."""
        return int(np.ravel_multi_index(multi, self.shape))

    def to_multi(self, linear: int) -> tuple[int, ...]:
        """Multi-index of a row-major linear index."""
        return tuple(int(i) for i in np.unravel_index(linear, self.shape))


def trapezoid_weights(axis: Axis) -> np.ndarray:
    """Composite trapezoid quadrature weights for ``axis``.

    Interior nodes get weight ``h``, the two endpoints ``h / 2``; the
    weights sum to ``upper - lower`` exactly up to rounding.
    """
    w = np.full(axis.points, axis.h)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def integrate(values: np.ndarray, weights: np.ndarray) -> float:
    """Tensor trapezoid integral of ``values`` with the same 1-D ``weights``
    applied along every array axis."""
    out = values
    for _ in range(values.ndim):
        out = np.tensordot(out, weights, axes=([-1], [0]))
    return float(out)


def contract_axis(values: np.ndarray, weights: np.ndarray, axis_index: int) -> np.ndarray:
    """Integrate out one coordinate: ``sum_k w[k] * values[..., k, ...]``."""
    if not -values.ndim <= axis_index < values.ndim:
        raise ValueError(f"axis_index {axis_index} out of range for ndim {values.ndim}")
    return np.tensordot(values, weights, axes=([axis_index], [0]))


def central_gradient(values: np.ndarray, h: float, axis_index: int) -> np.ndarray:
    """Second-order finite-difference gradient along one array axis.

    Central differences at interior nodes, one-sided second-order stencils
    at the two boundary nodes.
    """
    if not -values.ndim <= axis_index < values.ndim:
        raise ValueError(f"axis_index {axis_index} out of range for ndim {values.ndim}")
    return np.gradient(values, h, axis=axis_index, edge_order=2)


def log_gradient(values: np.ndarray, h: float, axis_index: int, floor: float = LOG_FLOOR) -> np.ndarray:
    """Gradient of ``log(max(values, floor))`` along one array axis.

    The floor keeps far-tail zeros from producing ``-inf``; whoever
    consumes the result is expected to mask the region ``values <= floor``
    out of any integral.
    """
    return central_gradient(np.log(np.maximum(values, floor)), h, axis_index)
