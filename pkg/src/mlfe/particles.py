"""Stochastic particle mirror of the density flow.

Each particle carries one root neighborhood: a state vector
``(X_0, X_1, ..., X_kappa)``.  The root coordinate moves with the exact
drift ``-b(X)``; each leaf moves with ``-gamma_hat(X_v, X_0)``, where
``gamma_hat`` is a binned regression estimate of the conditional field
learned from the whole ensemble before every step (the particle analogue
of freezing ``gamma``).  All coordinates carry independent
variance-``2 dt`` Gaussian increments and reflect at the box walls; a
random leaf permutation per particle enforces exchangeability in law.

Runs are bit-reproducible: one ``numpy`` PCG64 generator seeded from the
configuration drives every draw in a fixed order (normals first, then the
permutation uniforms, once per step).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Optional

import numpy as np

from .grid import Axis
from .potentials import PotentialPair


@dataclass
class ParticleEnsemble:
    """A population of root neighborhoods.

    ``states`` has shape ``(n, 1 + kappa)`` with the root in column 0;
    ``rng`` is the generator owned by this run (``rng_seed`` records how
    it was created); ``t`` is the current time.
    """

    states: np.ndarray
    kappa: int
    axis: Axis
    rng: np.random.Generator
    rng_seed: int
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.states.ndim != 2 or self.states.shape[1] != 1 + self.kappa:
            raise ValueError(
                f"states must be (n, {1 + self.kappa}), got {self.states.shape}"
            )

    @property
    def n(self) -> int:
        return self.states.shape[0]


def sample_gaussian_product(
    n: int,
    kappa: int,
    axis: Axis,
    seed: int,
    mean: float = 0.0,
    var: float = 1.0,
) -> ParticleEnsemble:
    """IID ``N(mean, var)`` start for all coordinates of all particles."""
    if n < 1:
        raise ValueError(f"need at least one particle, got {n}")
    rng = np.random.Generator(np.random.PCG64(seed))
    states = mean + np.sqrt(var) * rng.standard_normal((n, 1 + kappa))
    np.clip(states, axis.lower, axis.upper, out=states)
    return ParticleEnsemble(states=states, kappa=kappa, axis=axis, rng=rng, rng_seed=seed)


@dataclass(frozen=True)
class BinnedGamma:
    """Binned regression estimate of the conditional interaction term.

    ``table[i, j]`` estimates ``E[W'(X_0 - X_other) | X_0 in cell i,
    X_neighbor in cell j]`` from ensemble deposits; ``counts`` are the
    deposit counts.  Cells with fewer than ``n_min`` deposits fall back to
    the bare two-body field (no conditional term).
    """

    axis: Axis
    bins: int
    n_min: int
    table: np.ndarray
    counts: np.ndarray

    def _cell(self, x: np.ndarray) -> np.ndarray:
        span = self.axis.upper - self.axis.lower
        idx = np.floor((x - self.axis.lower) / span * self.bins).astype(np.int64)
        return np.clip(idx, 0, self.bins - 1)

    def evaluate(self, pair: PotentialPair, x_self: np.ndarray, x_root: np.ndarray) -> np.ndarray:
        """``gamma_hat(x_self, x_root)`` for arrays of positions.

        ``x_self`` occupies the conditioning root slot (a leaf is the root
        of its own neighborhood); ``x_root`` is its known neighbor.
        """
        closed = pair.du(x_self) + pair.dw(x_self - x_root)
        i = self._cell(x_self)
        j = self._cell(x_root)
        cond = self.table[i, j]
        ok = self.counts[i, j] >= self.n_min
        return np.where(ok, closed + (pair.kappa - 1) * cond, closed)


def estimate_gamma(
    pair: PotentialPair,
    ensemble: ParticleEnsemble,
    bins: int = 48,
    n_min: int = 20,
) -> BinnedGamma:
    """Learn the binned conditional field from the current ensemble.

    For every ordered pair of distinct leaves ``(v, w)`` each particle
    deposits ``W'(X_0 - X_w)`` into the cell ``(cell(X_0), cell(X_v))``:
    the value seen from the root toward one neighbor, keyed by the root
    and a *different* neighbor, which is exactly the conditional mean the
    leaf drift needs.
    """
    if ensemble.n < 1000:
        raise ValueError(f"estimator needs >= 1000 particles, got {ensemble.n}")
    if bins < 2:
        raise ValueError(f"need >= 2 bins, got {bins}")
    ax = ensemble.axis
    span = ax.upper - ax.lower
    states = ensemble.states
    root = states[:, 0]
    cell_root = np.clip(
        np.floor((root - ax.lower) / span * bins).astype(np.int64), 0, bins - 1
    )
    keys = []
    values = []
    for v in range(1, 1 + ensemble.kappa):
        cell_v = np.clip(
            np.floor((states[:, v] - ax.lower) / span * bins).astype(np.int64),
            0,
            bins - 1,
        )
        for w in range(1, 1 + ensemble.kappa):
            if w == v:
                continue
            keys.append(cell_root * bins + cell_v)
            values.append(pair.dw(root - states[:, w]))
    flat = np.concatenate(keys)
    vals = np.concatenate(values)
    sums = np.bincount(flat, weights=vals, minlength=bins * bins)
    counts = np.bincount(flat, minlength=bins * bins)
    with np.errstate(invalid="ignore"):
        table = np.where(counts > 0, sums / np.maximum(counts, 1), 0.0)
    return BinnedGamma(
        axis=ax,
        bins=bins,
        n_min=n_min,
        table=table.reshape(bins, bins),
        counts=counts.reshape(bins, bins),
    )


def _reflect(x: np.ndarray, axis: Axis) -> np.ndarray:
    span = axis.upper - axis.lower
    y = np.mod(x - axis.lower, 2.0 * span)
    return axis.upper - np.abs(y - span)


_PERMS3 = np.array(list(permutations(range(3))))


def em_step(
    pair: PotentialPair,
    ensemble: ParticleEnsemble,
    dt: float,
    binned: Optional[BinnedGamma] = None,
    bins: int = 48,
    n_min: int = 20,
) -> ParticleEnsemble:
    """One Euler--Maruyama step of the whole ensemble (in place).

    The conditional-field estimate is taken before the move (pass
    ``binned`` to reuse one already built from this pre-step state).
    Draw order per step: one ``(n, 1 + kappa)`` block of standard normals,
    then one ``(n,)`` block of uniforms for the leaf permutation.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if binned is None:
        binned = estimate_gamma(pair, ensemble, bins=bins, n_min=n_min)
    states = ensemble.states
    n, _ = states.shape
    noise = ensemble.rng.standard_normal(states.shape) * np.sqrt(2.0 * dt)
    u = ensemble.rng.random(n)

    root = states[:, 0]
    drift_root = pair.du(root)
    for v in range(1, 1 + ensemble.kappa):
        drift_root = drift_root + pair.dw(root - states[:, v])
    new = np.empty_like(states)
    new[:, 0] = root - drift_root * dt + noise[:, 0]
    for v in range(1, 1 + ensemble.kappa):
        gamma_v = binned.evaluate(pair, states[:, v], root)
        new[:, v] = states[:, v] - gamma_v * dt + noise[:, v]
    new = _reflect(new, ensemble.axis)

    if ensemble.kappa == 2:
        swap = u < 0.5
        new[swap, 1], new[swap, 2] = new[swap, 2].copy(), new[swap, 1].copy()
    else:
        choice = np.minimum((u * 6).astype(np.int64), 5)
        leaf_perm = _PERMS3[choice]  # (n, 3) of leaf offsets
        new[:, 1:] = np.take_along_axis(new[:, 1:], leaf_perm, axis=1)
    ensemble.states = new
    ensemble.t += dt
    return ensemble


@dataclass(frozen=True)
class MomentRow:
    """One output row of :func:`moment_series`."""

    t: float
    mean0: float
    var0: float
    cov01: float
    se_var0: float
    se_cov01: float


MOMENT_HEADER = ("t", "mean0", "var0", "cov01", "se_var0", "se_cov01")


def moments(ensemble: ParticleEnsemble) -> MomentRow:
    """Root mean/variance and root-leaf covariance with Monte Carlo
    standard errors (delta method on centered moments)."""
    s = ensemble.states
    n = s.shape[0]
    c0 = s[:, 0] - s[:, 0].mean()
    c1 = s[:, 1] - s[:, 1].mean()
    var0 = float(np.mean(c0 * c0))
    cov01 = float(np.mean(c0 * c1))
    se_var0 = float(np.sqrt(max(np.mean(c0**4) - var0**2, 0.0) / n))
    se_cov01 = float(np.sqrt(max(np.mean((c0 * c1) ** 2) - cov01**2, 0.0) / n))
    return MomentRow(
        t=ensemble.t,
        mean0=float(s[:, 0].mean()),
        var0=var0,
        cov01=cov01,
        se_var0=se_var0,
        se_cov01=se_cov01,
    )


def moment_series(
    pair: PotentialPair,
    ensemble: ParticleEnsemble,
    dt: float,
    t_end: float,
    output_every: int = 50,
    bins: int = 48,
    n_min: int = 20,
) -> list[MomentRow]:
    """Advance the ensemble to ``t_end`` and collect moment rows.

    Rows are recorded at ``t = 0``, after every ``output_every`` steps,
    and at the final step.
    """
    steps = int(round(t_end / dt))
    rows = [moments(ensemble)]
    for k in range(1, steps + 1):
        em_step(pair, ensemble, dt, bins=bins, n_min=n_min)
        if k % output_every == 0 or k == steps:
            rows.append(moments(ensemble))
    return rows
