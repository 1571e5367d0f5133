"""Command-line interface.

``mlfe <command> --config <path> [--out DIR] [--threads N]``

Commands: ``flow`` (density evolution + functional series), ``cayley``
(stationary law), ``chain`` (transfer-operator diagnostics), ``particles``
(stochastic mirror), ``compare-mrf`` (relaxation of the free energy toward
the spectral stationary value).

Every command reads one strict JSON configuration (unknown keys are
rejected), writes its tables/figures atomically under ``out_dir``, and
emits single-line JSON diagnostics on stderr.  Exit codes: 0 success,
2 configuration/validation error, 3 numerical failure.

Thread control: ``--threads`` (or the ``MLFE_THREADS`` environment
variable) caps the BLAS thread pools; it is applied before the numerical
modules are imported, so this module keeps its imports light.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


class ConfigError(ValueError):
    """The configuration file violates the schema."""


def _diag(**payload: Any) -> None:
    sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    sys.stderr.flush()


def _require(mapping: dict, where: str, allowed: set[str], required: set[str]) -> None:
    if not isinstance(mapping, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(mapping)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass(frozen=True)
class GridSpec:
    half_width: float = 6.0
    points: int = 64


@dataclass(frozen=True)
class InitSpec:
    type: str = "gaussian_mixture"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ParticleSpec:
    n: int = 200000
    seed: int = 0
    bins: int = 48


@dataclass(frozen=True)
class ChainSpec:
    n_list: tuple[int, ...] = (1, 2, 4, 8, 16, 32, 64)


@dataclass(frozen=True)
class RunConfig:
    kappa: int
    potentials: dict
    grid: GridSpec
    flow: dict
    init: InitSpec
    particles: ParticleSpec
    chain: ChainSpec
    out_dir: str


def load_config(path: str) -> RunConfig:
    """Parse and validate a configuration file (strict: unknown keys fail)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc

    _require(
        raw,
        "config",
        {"kappa", "potentials", "grid", "flow", "init", "particles", "chain", "out_dir"},
        {"kappa", "potentials", "out_dir"},
    )
    kappa = raw["kappa"]
    if not isinstance(kappa, int) or kappa not in (2, 3):
        raise ConfigError(f"kappa must be 2 or 3, got {kappa!r}")

    grid_raw = raw.get("grid", {})
    _require(grid_raw, "grid", {"half_width", "points"}, set())
    grid = GridSpec(
        half_width=float(grid_raw.get("half_width", 6.0)),
        points=int(grid_raw.get("points", 64)),
    )

    flow_raw = raw.get("flow", {})
    _require(flow_raw, "flow", {"dt", "t_end", "output_every"}, set())

    init_raw = raw.get("init", {})
    _require(init_raw, "init", {"type", "params"}, set())
    init = InitSpec(
        type=init_raw.get("type", "gaussian_mixture"),
        params=dict(init_raw.get("params", {})),
    )
    if init.type not in ("gaussian_product", "gaussian_mixture", "correlated_mixture", "cayley"):
        raise ConfigError(f"unknown init type {init.type!r}")

    particles_raw = raw.get("particles", {})
    _require(particles_raw, "particles", {"n", "seed", "bins"}, set())
    particles = ParticleSpec(
        n=int(particles_raw.get("n", 200000)),
        seed=int(particles_raw.get("seed", 0)),
        bins=int(particles_raw.get("bins", 48)),
    )

    chain_raw = raw.get("chain", {})
    _require(chain_raw, "chain", {"n_list"}, set())
    n_list = chain_raw.get("n_list", [1, 2, 4, 8, 16, 32, 64])
    if not isinstance(n_list, list) or not all(isinstance(n, int) and n >= 1 for n in n_list):
        raise ConfigError("chain.n_list must be a list of integers >= 1")

    out_dir = raw["out_dir"]
    if not isinstance(out_dir, str) or not out_dir:
        raise ConfigError("out_dir must be a nonempty string")

    return RunConfig(
        kappa=kappa,
        potentials=raw["potentials"],
        grid=grid,
        flow=dict(flow_raw),
        init=init,
        particles=particles,
        chain=ChainSpec(n_list=tuple(n_list)),
        out_dir=out_dir,
    )


def _apply_threads(threads: Optional[int]) -> None:
    if threads is None:
        env = os.environ.get("MLFE_THREADS")
        if env is None:
            return
        try:
            threads = int(env)
        except ValueError as exc:
            raise ConfigError(f"MLFE_THREADS must be an integer, got {env!r}") from exc
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    for var in _THREAD_VARS:
        os.environ[var] = str(threads)


# ---------------------------------------------------------------------------
# command bodies (numerical imports stay inside so thread caps apply first)


def _build_pair(cfg: RunConfig):
    from .potentials import PotentialPair, family_from_json

    try:
        family = family_from_json(cfg.potentials)
        return PotentialPair(family=family, kappa=cfg.kappa)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_axis(cfg: RunConfig):
    from .grid import Axis

    try:
        return Axis(-cfg.grid.half_width, cfg.grid.half_width, cfg.grid.points)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_flow_config(cfg: RunConfig):
    from .flow import FlowConfig

    try:
        return FlowConfig(
            dt=float(cfg.flow.get("dt", 1e-3)),
            t_end=float(cfg.flow.get("t_end", 1.5)),
            output_every=int(cfg.flow.get("output_every", 10)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _build_init(cfg: RunConfig, pair, axis):
    from .grid import TensorGrid
    from .measures import gaussian_mixture, gaussian_product

    grid = TensorGrid(axis, 1 + cfg.kappa)
    params = cfg.init.params
    try:
        if cfg.init.type == "gaussian_product":
            allowed = {"mean", "var"}
            _require(params, "init.params", allowed, set())
            return gaussian_product(grid, mean=float(params.get("mean", 0.0)),
                                    var=float(params.get("var", 1.0)))
        if cfg.init.type == "gaussian_mixture":
            allowed = {"centers", "var", "weights", "leaf_centers"}
            _require(params, "init.params", allowed, set())
            centers = tuple(float(c) for c in params.get("centers", (0.5841, -0.5841)))
            weights = tuple(float(w) for w in params.get("weights", (0.5, 0.5)))
            leaf_centers = params.get("leaf_centers")
            if leaf_centers is not None:
                leaf_centers = tuple(float(c) for c in leaf_centers)
            return gaussian_mixture(grid, centers=centers,
                                    var=float(params.get("var", 0.41470)),
                                    weights=weights, leaf_centers=leaf_centers)
        if cfg.init.type == "correlated_mixture":
            from .measures import correlated_mixture

            allowed = {"var", "cov", "components"}
            _require(params, "init.params", allowed, {"var", "cov"})
            return correlated_mixture(grid, var=float(params["var"]),
                                      cov=float(params["cov"]),
                                      components=int(params.get("components", 15)))
        # cayley init
        from .cayley import solve_fixed_point

        allowed = {"damping", "tol"}
        _require(params, "init.params", allowed, set())
        solution = solve_fixed_point(
            pair, axis,
            damping=float(params.get("damping", 0.5)),
            tol=float(params.get("tol", 1e-10)),
        )
        return solution.joint
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_flow(cfg: RunConfig, out_dir: str) -> None:
    from . import plots
    from .flow import run
    from .functionals import CSV_HEADER, reports_to_rows
    from .measures import save_density
    from .serialize import write_csv

    pair = _build_pair(cfg)
    axis = _build_axis(cfg)
    fcfg = _build_flow_config(cfg)
    init = _build_init(cfg, pair, axis)
    result = run(pair, init, fcfg)
    write_csv(os.path.join(out_dir, "flow_report.csv"), CSV_HEADER, reports_to_rows(result.reports))
    save_density(result.final.density, os.path.join(out_dir, "density_final.mlfe"))
    times = [r.t for r in result.reports]
    h = [r.h_kappa for r in result.reports]
    hh2 = [r.h_hat2 for r in result.reports] if cfg.kappa == 2 else None
    plots.energy_figure(times, h, hh2, result.reports[0].lower_bound,
                        os.path.join(out_dir, "flow_energy.svg"))
    _diag(event="flow_complete", steps=fcfg.steps(), reports=len(result.reports),
          out_dir=out_dir, final_t=result.final.t)


def cmd_cayley(cfg: RunConfig, out_dir: str) -> None:
    from . import plots
    from .cayley import solve_fixed_point, stationarity_residuals
    from .grid import trapezoid_weights
    from .serialize import atomic_write_text, write_csv

    pair = _build_pair(cfg)
    axis = _build_axis(cfg)
    solution = solve_fixed_point(pair, axis)
    residuals = stationarity_residuals(pair, solution)
    x = axis.nodes()
    write_csv(os.path.join(out_dir, "cayley_nu0.csv"), ("x", "nu0"),
              list(zip(x.tolist(), solution.nu0.tolist())))
    import numpy as np

    w = trapezoid_weights(axis)
    mean = float(np.dot(w, x * solution.nu0))
    variance = float(np.dot(w, (x - mean) ** 2 * solution.nu0))
    summary = {
        "iterations": solution.iterations,
        "residual_linf": solution.residual_linf,
        "z_nu0": solution.z_nu0,
        "nu0_mean": mean,
        "nu0_variance": variance,
        "gradient_identity_linf": residuals.gradient_identity_linf,
        "dissipation": residuals.dissipation,
        "gamma_identity_linf": residuals.gamma_identity_linf,
    }
    atomic_write_text(os.path.join(out_dir, "cayley_summary.json"),
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
    plots.nu0_figure(x, solution.nu0, os.path.join(out_dir, "cayley_nu0.svg"))
    _diag(event="cayley_complete", iterations=solution.iterations,
          residual_linf=solution.residual_linf, out_dir=out_dir)


def cmd_chain(cfg: RunConfig, out_dir: str) -> None:
    from . import plots
    from .chain import chain_report, h_star_spectral
    from .serialize import atomic_write_text, write_csv

    pair = _build_pair(cfg)
    axis = _build_axis(cfg)
    h_star = h_star_spectral(pair, axis)
    rows = [chain_report(pair, axis, n, h_star=h_star) for n in cfg.chain.n_list]
    write_csv(
        os.path.join(out_dir, "chain_report.csv"),
        ("n", "log_z", "per_site_log_z", "increment_estimate",
         "h_star_spectral", "lift_entropy", "lift_entropy_per_site"),
        [
            (r.n, r.log_z, r.per_site_log_z, r.increment_estimate,
             r.h_star_spectral, r.lift_entropy, r.lift_entropy_per_site)
            for r in rows
        ],
    )
    atomic_write_text(os.path.join(out_dir, "h_star.json"),
                      json.dumps({"h_star": h_star, "points": axis.points}, sort_keys=True) + "\n")
    plots.chain_figure([r.n for r in rows], [r.per_site_log_z for r in rows],
                       [r.increment_estimate for r in rows], h_star,
                       os.path.join(out_dir, "chain.svg"))
    _diag(event="chain_complete", h_star=h_star, rows=len(rows), out_dir=out_dir)


def cmd_particles(cfg: RunConfig, out_dir: str) -> None:
    from . import plots
    from .particles import MOMENT_HEADER, moment_series, sample_gaussian_product
    from .serialize import write_csv

    pair = _build_pair(cfg)
    axis = _build_axis(cfg)
    fcfg = _build_flow_config(cfg)
    params = cfg.init.params
    if cfg.init.type != "gaussian_product":
        raise ConfigError("particles currently start from init.type = 'gaussian_product'")
    _require(params, "init.params", {"mean", "var"}, set())
    ensemble = sample_gaussian_product(
        cfg.particles.n, cfg.kappa, axis, cfg.particles.seed,
        mean=float(params.get("mean", 0.0)), var=float(params.get("var", 1.0)),
    )
    rows = moment_series(pair, ensemble, fcfg.dt, fcfg.t_end,
                         output_every=fcfg.output_every, bins=cfg.particles.bins)
    write_csv(
        os.path.join(out_dir, "particles_moments.csv"),
        MOMENT_HEADER,
        [(r.t, r.mean0, r.var0, r.cov01, r.se_var0, r.se_cov01) for r in rows],
    )
    plots.particle_figure(rows, None, os.path.join(out_dir, "particles.svg"))
    _diag(event="particles_complete", n=cfg.particles.n, rows=len(rows), out_dir=out_dir)


def cmd_compare_mrf(cfg: RunConfig, out_dir: str) -> None:
    import numpy as np

    from . import plots
    from .chain import h_star_spectral
    from .flow import run
    from .functionals import CSV_HEADER, reports_to_rows
    from .serialize import atomic_write_text, write_csv

    pair = _build_pair(cfg)
    if pair.kappa != 2:
        raise ConfigError("compare-mrf is a kappa = 2 experiment")
    axis = _build_axis(cfg)
    fcfg = _build_flow_config(cfg)
    init = _build_init(cfg, pair, axis)
    result = run(pair, init, fcfg)
    h_star = h_star_spectral(pair, axis)

    times = np.array([r.t for r in result.reports])
    h = np.array([r.h_kappa for r in result.reports])
    gap = h - h_star
    lo, hi = 0.5, fcfg.t_end
    sel = (times >= lo - 1e-12) & (times <= hi + 1e-12) & (gap > 0)
    slope, intercept, r2 = float("nan"), float("nan"), float("nan")
    if sel.sum() >= 3:
        ts, ys = times[sel], np.log(gap[sel])
        slope, intercept = np.polyfit(ts, ys, 1)
        pred = intercept + slope * ts
        ss_res = float(np.sum((ys - pred) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
        slope, intercept = float(slope), float(intercept)

    write_csv(os.path.join(out_dir, "compare_mrf.csv"), CSV_HEADER,
              reports_to_rows(result.reports))
    summary = {
        "h_star": h_star,
        "fit_window": [lo, hi],
        "slope": slope,
        "intercept": intercept,
        "r_squared": r2,
        "final_gap": float(gap[-1]),
    }
    atomic_write_text(os.path.join(out_dir, "compare_mrf.json"),
                      json.dumps(summary, sort_keys=True, indent=2) + "\n")
    plots.compare_figure(times.tolist(), h.tolist(), h_star, (lo, hi), slope, intercept,
                         os.path.join(out_dir, "compare_mrf.svg"))
    _diag(event="compare_mrf_complete", h_star=h_star, slope=slope, r_squared=r2,
          out_dir=out_dir)


_COMMANDS = {
    "flow": cmd_flow,
    "cayley": cmd_cayley,
    "chain": cmd_chain,
    "particles": cmd_particles,
    "compare-mrf": cmd_compare_mrf,
}


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(prog="mlfe", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
        p.add_argument("--out", default=None, help="override the configured out_dir")
        p.add_argument("--threads", type=int, default=None,
                       help="cap BLAS thread pools (default: MLFE_THREADS or library default)")
    args = parser.parse_args(argv)

    try:
        _apply_threads(args.threads)
        cfg = load_config(args.config)
        out_dir = args.out if args.out is not None else cfg.out_dir
        os.makedirs(out_dir, exist_ok=True)
        _COMMANDS[args.command](cfg, out_dir)
        return EXIT_OK
    except ConfigError as exc:
        _diag(event="error", kind="validation", detail=str(exc))
        return EXIT_CONFIG
    except (ArithmeticError, RuntimeError) as exc:
        _diag(event="error", kind="numerical", detail=str(exc))
        return EXIT_NUMERICAL
    except ValueError as exc:
        _diag(event="error", kind="validation", detail=str(exc))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
