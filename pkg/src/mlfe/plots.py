"""Deterministic matplotlib figures for the report paths.

Figures are rendered headless to SVG through an in-memory buffer and
written atomically.  Two knobs make the output byte-stable across runs:
a fixed ``svg.hashsalt`` (element ids stop depending on process state)
and a suppressed creation date in the SVG metadata.
"""

from __future__ import annotations

import io
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "mlfe"

from matplotlib import pyplot as plt  # noqa: E402  (backend must be set first)

from .serialize import atomic_write_bytes


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def energy_figure(
    times: Sequence[float],
    h_kappa: Sequence[float],
    h_hat2: Optional[Sequence[float]],
    lower_bound: float,
    path,
) -> None:
    """Free energy and the edge functional against time."""
    rows = 2 if h_hat2 is not None else 1
    fig, axes = plt.subplots(rows, 1, figsize=(7, 3.2 * rows), sharex=True, squeeze=False)
    ax = axes[0, 0]
    ax.plot(times, h_kappa, lw=1.5, color="tab:blue")
    ax.axhline(lower_bound, color="tab:gray", lw=0.8, ls="--", label="coercivity bound")
    ax.set_ylabel("free energy")
    ax.legend(loc="best", fontsize=8)
    ax.grid(alpha=0.3)
    if h_hat2 is not None:
        ax2 = axes[1, 0]
        ax2.plot(times, h_hat2, lw=1.5, color="tab:orange")
        ax2.set_ylabel("edge functional")
        ax2.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("t")
    fig.tight_layout()
    _save(fig, path)


def compare_figure(
    times: Sequence[float],
    h_kappa: Sequence[float],
    h_star: float,
    fit_window: tuple[float, float],
    slope: float,
    intercept: float,
    path,
) -> None:
    """Relaxation toward the stationary free-energy density.

    Left: the free energy with the spectral limit; right: the log gap with
    the least-squares decay fit over ``fit_window``.
    """
    import numpy as np

    times = np.asarray(times)
    h = np.asarray(h_kappa)
    gap = h - h_star
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))
    ax1.plot(times, h, lw=1.5, color="tab:blue", label="free energy")
    ax1.axhline(h_star, color="tab:red", lw=1.0, ls="--", label="spectral limit")
    ax1.set_xlabel("t")
    ax1.set_ylabel("free energy")
    ax1.legend(fontsize=8)
    ax1.grid(alpha=0.3)
    positive = gap > 0
    ax2.plot(times[positive], np.log(gap[positive]), lw=1.2, color="tab:blue", label="log gap")
    tfit = np.linspace(fit_window[0], fit_window[1], 50)
    ax2.plot(tfit, intercept + slope * tfit, color="tab:red", lw=1.0, ls="--",
             label=f"slope {slope:.3f}")
    ax2.set_xlabel("t")
    ax2.set_ylabel("log(free energy gap)")
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def chain_figure(
    ns: Sequence[int],
    per_site: Sequence[float],
    increments: Sequence[float],
    h_star: float,
    path,
) -> None:
    """Finite-chain estimators of the free-energy density against n."""
    fig, ax = plt.subplots(figsize=(6.5, 3.6))
    ax.plot(ns, per_site, "o-", ms=4, lw=1.0, color="tab:blue", label="per-site log Z / (2n+1)")
    ax.plot(ns, [-v for v in increments], "s-", ms=4, lw=1.0, color="tab:green",
            label="-(per-site increment)")
    ax.axhline(-h_star, color="tab:red", lw=1.0, ls="--", label="spectral value")
    ax.set_xlabel("n")
    ax.set_ylabel("per-site log partition")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def particle_figure(rows, grid_rows, path) -> None:
    """Particle moments (with 3-SE bands) against the density-flow curves."""
    ts = [r.t for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.6))
    for ax, attr, se_attr, label in (
        (ax1, "var0", "se_var0", "root variance"),
        (ax2, "cov01", "se_cov01", "root-leaf covariance"),
    ):
        vals = [getattr(r, attr) for r in rows]
        ses = [getattr(r, se_attr) for r in rows]
        ax.plot(ts, vals, lw=1.2, color="tab:blue", label="particles")
        ax.fill_between(
            ts,
            [v - 3 * s for v, s in zip(vals, ses)],
            [v + 3 * s for v, s in zip(vals, ses)],
            color="tab:blue",
            alpha=0.2,
            label="+/- 3 SE",
        )
        if grid_rows is not None:
            ax.plot(
                [g[0] for g in grid_rows],
                [g[1 if attr == "var0" else 2] for g in grid_rows],
                "o--",
                ms=4,
                lw=1.0,
                color="tab:red",
                label="density flow",
            )
        ax.set_xlabel("t")
        ax.set_ylabel(label)
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def nu0_figure(x, nu0, path) -> None:
    """Stationary single-site density."""
    fig, ax = plt.subplots(figsize=(6.0, 3.4))
    ax.plot(x, nu0, lw=1.5, color="tab:blue")
    ax.set_xlabel("x")
    ax.set_ylabel("single-site density")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    _save(fig, path)
