"""Confining/interaction potential pairs and derived coercivity data.

A model is a pair ``(U, W)``: a confining potential ``U`` acting on each
vertex and an even interaction potential ``W`` acting across each edge of
the kappa-regular tree.  Two families are supported:

* ``Quadratic(alpha, beta)``:   ``U(x) = ((alpha + beta) / 2) x**2``,
  ``W(x) = -(beta / 4) x**2``.  The full drift on a vertex with kappa
  neighbors at positions ``y_v`` is then
  ``alpha * x + (beta / 2) * sum_v (y_v - x) + beta * x`` rearranged so
  that ``beta`` measures attraction toward the neighbor average.
* ``QuarticDoubleWell(a4, a2, beta)``:  ``U(x) = a4 x**4 - a2 x**2`` with
  the same quadratic interaction ``W(x) = -(beta / 4) x**2``.

``W`` is an even polynomial in both families, so ``W(-x) == W(x)`` and
``W'(-x) == -W'(x)`` hold exactly in floating point, and ``W(0) == 0``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .grid import Axis, trapezoid_weights


class NotCoercive(ValueError):
    """The interaction overwhelms the confinement: no Gaussian profile
    ``q`` makes the per-edge energy dominate ``q(x) + q(y)``."""


@dataclass(frozen=True)
class Quadratic:
    """Quadratic confinement with quadratic (Curie-Weiss type) interaction."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    def u(self, x):
        return 0.5 * (self.alpha + self.beta) * np.square(x)

    def du(self, x):
        return (self.alpha + self.beta) * np.asarray(x)

    def w(self, x):
        return -0.25 * self.beta * np.square(x)

    def dw(self, x):
        return -0.5 * self.beta * np.asarray(x)

    def to_json(self) -> dict:
        return {"family": "quadratic", "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class QuarticDoubleWell:
    """Double-well confinement ``a4 x^4 - a2 x^2`` with quadratic interaction."""

    a4: float
    a2: float
    beta: float

    def __post_init__(self) -> None:
        if not self.a4 > 0:
            raise ValueError(f"a4 must be positive, got {self.a4}")
        if self.a2 < 0:
            raise ValueError(f"a2 must be nonnegative, got {self.a2}")

    def u(self, x):
        x2 = np.square(x)
        return (self.a4 * x2 - self.a2) * x2

    def du(self, x):
        x = np.asarray(x)
        return (4.0 * self.a4 * np.square(x) - 2.0 * self.a2) * x

    def w(self, x):
        return -0.25 * self.beta * np.square(x)

    def dw(self, x):
        return -0.5 * self.beta * np.asarray(x)

    def to_json(self) -> dict:
        return {"family": "quartic", "a4": self.a4, "a2": self.a2, "beta": self.beta}


Family = Union[Quadratic, QuarticDoubleWell]


def family_from_json(fragment: dict) -> Family:
    """Inverse of ``Family.to_json``; rejects unknown families and keys."""
    frag = dict(fragment)
    name = frag.pop("family", None)
    if name == "quadratic":
        keys = {"alpha", "beta"}
        cls = Quadratic
    elif name == "quartic":
        keys = {"a4", "a2", "beta"}
        cls = QuarticDoubleWell
    else:
        raise ValueError(f"unknown potential family: {name!r}")
    unknown = set(frag) - keys
    if unknown:
        raise ValueError(f"unknown potential keys: {sorted(unknown)}")
    missing = keys - set(frag)
    if missing:
        raise ValueError(f"missing potential keys: {sorted(missing)}")
    return cls(**{k: float(frag[k]) for k in keys})


@dataclass(frozen=True)
class PotentialPair:
    """A potential family together with the tree degree ``kappa``."""

    family: Family
    kappa: int

    def __post_init__(self) -> None:
        if self.kappa not in (2, 3):
            raise ValueError(f"kappa must be 2 or 3, got {self.kappa}")

    # plain delegation so call sites read pair.u(x) etc.
    def u(self, x):
        return self.family.u(x)

    def du(self, x):
        return self.family.du(x)

    def w(self, x):
        return self.family.w(x)

    def dw(self, x):
        return self.family.dw(x)

    def to_json(self) -> dict:
        return self.family.to_json()


def b(pair: PotentialPair, x: np.ndarray) -> np.ndarray:
    """Root drift magnitude ``U'(x_0) + sum_v W'(x_0 - x_v)``.

    ``x`` has the neighborhood layout: shape ``(..., 1 + kappa)`` with the
    root in slot 0.  Returns shape ``(...,)``.  (The process itself moves
    with drift ``-b``; this is the sign that appears inside the energy
    functionals.)
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 1 + pair.kappa:
        raise ValueError(f"expected {1 + pair.kappa} coordinates, got {x.shape[-1]}")
    x0 = x[..., 0]
    out = pair.du(x0)
    for v in range(1, 1 + pair.kappa):
        out = out + pair.dw(x0 - x[..., v])
    return out


def g(pair: PotentialPair, x: np.ndarray) -> np.ndarray:
    """Neighborhood energy ``U(x_0) + (1/2) sum_v W(x_0 - x_v)``.

    The half weight counts each tree edge once when the energy is summed
    over overlapping neighborhoods.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 1 + pair.kappa:
        raise ValueError(f"expected {1 + pair.kappa} coordinates, got {x.shape[-1]}")
    x0 = x[..., 0]
    out = pair.u(x0)
    for v in range(1, 1 + pair.kappa):
        out = out + 0.5 * pair.w(x0 - x[..., v])
    return out


def q_energy(pair: PotentialPair, x, y) -> np.ndarray:
    """Two-site edge energy ``Q(x, y) = U(x) + U(y) + 2 W(x - y)``.

    Only defined for ``kappa == 2``, where the tree is the doubly infinite
    chain and the stationary law factorizes over edges with Gibbs factor
    ``exp(-Q / 2)``.
    """
    if pair.kappa != 2:
        raise ValueError(f"Q is a chain (kappa = 2) object, got kappa = {pair.kappa}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return pair.u(x) + pair.u(y) + 2.0 * pair.w(x - y)


@dataclass(frozen=True)
class CoercivityProfile:
    """Gaussian comparison profile ``q(x) = (c_q / 2) x**2``.

    Satisfies ``Q(x, y) >= q(x) + q(y) - 2 * offset`` pointwise (kappa = 2;
    for kappa = 3 the same holds for the per-edge tree energy scaled by
    kappa).  For the quadratic family ``offset == 0`` and the inequality is
    tight along the diagonal.  ``r_q = integral exp(-q)``, and
    ``lower_bound = -log r_q - offset`` bounds the neighborhood free energy
    from below uniformly over admissible densities.
    """

    c_q: float
    r_q: float
    offset: float
    lower_bound: float

    def q(self, x):
        return 0.5 * self.c_q * np.square(x)


def coercivity_profile(pair: PotentialPair) -> CoercivityProfile:
    """Build the Gaussian coercivity profile of a potential pair.

    Quadratic family: the curvature is ``alpha - (kappa - 1) * beta`` for
    attractive interactions (``beta > 0``; at kappa = 2 this is
    ``alpha - |beta|``) and ``alpha - |beta|`` for repulsive ones; raises
    :class:`NotCoercive` when that curvature is nonpositive.  Quartic
    family: unit curvature always works because quartic growth dominates
    every quadratic, at the price of a positive ``offset`` absorbing the
    bounded core region where the comparison fails.

    ``r_q`` is evaluated by trapezoid quadrature on a wide auxiliary axis
    rather than in closed form, so the reported bound is exactly the one
    the discrete functionals see.
    """
    fam = pair.family
    if isinstance(fam, Quadratic):
        if fam.beta >= 0:
            c_q = fam.alpha - (pair.kappa - 1) * fam.beta
        else:
            c_q = fam.alpha - abs(fam.beta)
        if c_q <= 0:
            raise NotCoercive(
                f"alpha = {fam.alpha} does not dominate the interaction beta = {fam.beta} "
                f"at kappa = {pair.kappa}"
            )
        offset = 0.0
    elif isinstance(fam, QuarticDoubleWell):
        c_q = 1.0
        # smallest offset with a4 x^4 - (a2 + max(beta, 0)) x^2 >= q(x) - offset
        s = 0.5 * c_q + fam.a2 + max(fam.beta, 0.0)
        offset = s * s / (4.0 * fam.a4)
    else:  # pragma: no cover - the two families above are exhaustive
        raise TypeError(f"unknown family {type(fam)!r}")
    wide = Axis(-24.0, 24.0, 4097)
    x = wide.nodes()
    r_q = float(trapezoid_weights(wide) @ np.exp(-0.5 * c_q * np.square(x)))
    return CoercivityProfile(
        c_q=c_q, r_q=r_q, offset=offset, lower_bound=-float(np.log(r_q)) - offset
    )


@dataclass(frozen=True)
class LsiConstants:
    """Log-Sobolev data of the quadratic model.

    ``c_lsi = 2 / alpha`` and ``c_poincare = 1 / alpha`` are the constants
    of the Gaussian with curvature ``alpha``; ``drift_ratio_root`` and
    ``drift_ratio_leaf`` are the ``|beta| / alpha`` Lipschitz ratios of the
    interaction gradient against the confinement curvature, which control
    the perturbative regime of exponential relaxation.
    """

    c_lsi: float
    c_poincare: float
    drift_ratio_root: float
    drift_ratio_leaf: float


def lsi_constants_quadratic(alpha: float, beta: float) -> LsiConstants:
    """Log-Sobolev/Poincaré constants and drift ratios for ``Quadratic``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    ratio = abs(beta) / alpha
    return LsiConstants(
        c_lsi=2.0 / alpha,
        c_poincare=1.0 / alpha,
        drift_ratio_root=ratio,
        drift_ratio_leaf=ratio,
    )
