"""End-to-end acceptance gate.

Ten numbered criteria, each printing exactly one verdict line
``[PASS|FAIL] criterion k -- <name>: <measured values>`` so a full run
reads as a checklist.  The minute-long relaxation run is computed once
and shared; every other flow run happens inside its criterion and
registers its per-step ledger for the closing conservation sweep.
"""

import numpy as np

from mlfe.chain import fisher_interior_vertex, lift_entropy, lift_marginal_check, log_partition, per_site_increment
from mlfe.flow import FlowConfig, run
from mlfe.functionals import dissipation_residual, h_kappa, i_kappa, window
from mlfe.grid import Axis, TensorGrid, trapezoid_weights
from mlfe.measures import correlated_mixture, gaussian_product
from mlfe.particles import moment_series, sample_gaussian_product
from mlfe.cayley import solve_fixed_point

import conftest
import helpers


# per-step ledgers of every flow run the gate executes, by run name
LEDGERS: dict[str, list] = {}


def verdict(k: int, name: str, ok: bool, detail: str) -> str:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {k} -- {name}: {detail}"
    print(f"\n{line}")
    return line


def test_criterion_1_free_energy_monotone(relaxation):
    LEDGERS["relaxation"] = relaxation.result.ledger
    hs = [r.h_kappa for r in relaxation.result.reports]
    max_inc = float(np.max(np.diff(hs)))
    allowance = 1e-6 * abs(hs[0])
    ok = max_inc < allowance
    line = verdict(
        1,
        "free energy monotone",
        ok,
        f"max increment {max_inc:.3e} vs allowance {allowance:.3e} over {len(hs)} reports",
    )
    assert ok, line


def test_criterion_2_dissipation_identity(pair, relaxation):
    resid = dissipation_residual(window(relaxation.result.reports, 0.1, 0.5))

    # halve the mesh and the step together; same report cadence
    ax128 = Axis(-6.0, 6.0, 128)
    grid128 = TensorGrid(ax128, 3)
    init = conftest.correlated_start(solve_fixed_point(pair, ax128), grid128)
    fine = run(pair, init, FlowConfig(dt=5e-4, t_end=0.5, output_every=20))
    LEDGERS["halved resolution"] = fine.ledger
    resid_fine = dissipation_residual(window(fine.reports, 0.1, 0.5))

    ok = resid < 0.05 and resid >= 3.0 * resid_fine
    line = verdict(
        2,
        "energy balance",
        ok,
        f"residual {resid:.3e} (< 0.05), refinement ratio {resid / resid_fine:.2f} (>= 3)",
    )
    assert ok, line


def test_criterion_3_edge_functional_transient(relaxation):
    sel = [r for r in relaxation.result.reports if 0.05 < r.t < 1.0]
    rise_edge = helpers.segment_rise([r.h_hat2 for r in sel])
    rise_h = helpers.segment_rise([r.h_kappa for r in sel])
    ok = rise_edge > 1e-4 and rise_h < 1e-4
    line = verdict(
        3,
        "edge functional rises while free energy falls",
        ok,
        f"edge rise {rise_edge:.3e} (> 1e-4), free-energy rise {rise_h:.3e} (< 1e-4)",
    )
    assert ok, line


def test_criterion_4_stationary_fixed_point(pair, axis64, grid64, cayley64):
    dissipation = i_kappa(pair, cayley64.joint)
    var = helpers.edge_moments(cayley64.joint)[1]
    s_star = helpers.stationary_site_variance(2.0, 1.5)
    var_rel = abs(var - s_star) / s_star

    w = trapezoid_weights(axis64)
    tvs = []

    def track(report, density):
        diff = np.abs(density.values - cayley64.joint.values)
        tvs.append(0.5 * float(np.einsum("a,b,c,abc->", w, w, w, diff)))

    result = run(
        pair, cayley64.joint, FlowConfig(dt=1e-3, t_end=1.0, output_every=100), on_report=track
    )
    LEDGERS["stationary hold"] = result.ledger
    tv_max = max(tvs)

    ok = (
        cayley64.iterations < 200
        and dissipation < 1e-3
        and var_rel < 1e-3
        and tv_max < 1e-3
    )
    line = verdict(
        4,
        "stationary law solved and preserved",
        ok,
        f"{cayley64.iterations} iterations, dissipation {dissipation:.2e}, "
        f"variance error {var_rel:.2e}, max TV over t <= 1 {tv_max:.2e}",
    )
    assert ok, line


def test_criterion_5_renormalized_entropy(pair, axis64, grid64, h_star64, cayley64):
    inc_err = abs(per_site_increment(pair, axis64, 64) - h_star64)
    fe_err = abs(h_kappa(pair, cayley64.joint) - h_star64)

    nu = gaussian_product(grid64, mean=0.3, var=0.5)
    per_site = lift_entropy(pair, nu, 64) / 129.0
    gap = h_kappa(pair, nu) - h_star64
    lift_rel = abs(per_site - gap) / abs(gap)

    ok = inc_err < 1e-4 and fe_err < 1e-3 and lift_rel < 0.01
    line = verdict(
        5,
        "free-energy density limits agree",
        ok,
        f"increment vs spectral {inc_err:.2e} (< 1e-4), spectral vs stationary {fe_err:.2e} "
        f"(< 1e-3), lift-entropy rate vs excess {lift_rel:.2%} (< 1%)",
    )
    assert ok, line


def test_criterion_6_brute_force_oracles(pair):
    coarse = Axis(-6.0, 6.0, 24)
    lp_err = abs(log_partition(pair, coarse, 1) - helpers.brute_log_partition_n1(pair, coarse))

    nu = correlated_mixture(TensorGrid(coarse, 3), var=0.9, cov=-0.3)
    closed = lift_entropy(pair, nu, 2)
    brute = helpers.brute_lift_entropy_n2(pair, nu)
    lift_rel = abs(closed - brute) / abs(brute)

    worst = 0.0
    check2 = lift_marginal_check(nu, 2)
    nu12 = correlated_mixture(TensorGrid(Axis(-6.0, 6.0, 12), 3), var=0.9, cov=-0.3)
    check3 = lift_marginal_check(nu12, 3)
    for c in (check2, check3):
        worst = max(
            worst, c.mass_defect, c.mean_defect, c.second_moment_defect, c.neighbor_product_defect
        )

    ok = lp_err < 1e-10 and lift_rel < 0.01 and worst < 1e-6
    line = verdict(
        6,
        "chain quantities vs direct quadrature",
        ok,
        f"log-partition error {lp_err:.1e} (< 1e-10), lift-entropy mismatch {lift_rel:.1e} "
        f"(< 1e-2), worst lift-marginal defect {worst:.1e} (< 1e-6)",
    )
    assert ok, line


def test_criterion_7_interior_window_identity(pair, grid64):
    nu = gaussian_product(grid64, var=1.0)
    report = fisher_interior_vertex(pair, nu)
    reference = i_kappa(pair, nu)
    rel = abs(report.total - reference) / reference
    cross_rel = abs(report.cross) / report.total
    ok = rel < 0.03 and cross_rel < 0.01
    line = verdict(
        7,
        "windowed dissipation matches the neighborhood functional",
        ok,
        f"relative mismatch {rel:.2e} (< 3%), cross term {cross_rel:.2e} of total (< 1%)",
    )
    assert ok, line


def test_criterion_8_exponential_relaxation(relaxation, h_star64):
    pts = [(r.t, r.h_kappa - h_star64) for r in relaxation.result.reports if r.t >= 0.5]
    ts = [t for t, gap in pts if gap > 0]
    gaps = [gap for _, gap in pts if gap > 0]
    slope, _, r2 = helpers.loglinear_fit(ts, gaps)
    ok = slope < 0 and r2 > 0.99
    line = verdict(
        8,
        "exponential approach to the stationary value",
        ok,
        f"slope {slope:.3f} (< 0), R^2 {r2:.5f} (> 0.99) over t in [0.5, 3]",
    )
    assert ok, line


def test_criterion_9_particle_grid_cross_validation(pair, grid64):
    targets = (0.25, 0.5, 1.0)
    grid_moments = {}

    def capture(report, density):
        t = round(report.t, 10)
        if any(abs(t - s) < 1e-9 for s in targets):
            _, var0, cov = helpers.edge_moments(density)
            grid_moments[t] = (var0, cov)

    result = run(
        pair,
        gaussian_product(grid64, var=1.0),
        FlowConfig(dt=1e-3, t_end=1.0, output_every=50),
        on_report=capture,
    )
    LEDGERS["cross-validation grid run"] = result.ledger

    ensemble = sample_gaussian_product(200000, 2, grid64.axis, seed=20260818, var=1.0)
    rows = moment_series(pair, ensemble, dt=1e-3, t_end=1.0, output_every=50)
    by_t = {round(r.t, 10): r for r in rows}

    worst = 0.0
    details = []
    for t in targets:
        g_var, g_cov = grid_moments[t]
        row = by_t[t]
        for name, grid_value, mc_value, se in (
            ("var", g_var, row.var0, row.se_var0),
            ("cov", g_cov, row.cov01, row.se_cov01),
        ):
            pull = abs(mc_value - grid_value) / (3.0 * se)
            worst = max(worst, pull)
            details.append(f"{name}@{t:g} {pull:.2f}")
    ok = worst < 1.0
    line = verdict(
        9,
        "particle ensemble matches the grid moments",
        ok,
        "deviation / (3 SE): " + ", ".join(details) + f"; worst {worst:.2f} (< 1)",
    )
    assert ok, line


def test_criterion_10_conservation_and_symmetry(relaxation):
    LEDGERS.setdefault("relaxation", relaxation.result.ledger)
    mass = max(e.mass_defect for entries in LEDGERS.values() for e in entries)
    min_value = min(e.min_value for entries in LEDGERS.values() for e in entries)
    leaf = max(e.leaf_exchange_defect for entries in LEDGERS.values() for e in entries)
    steps = sum(len(entries) for entries in LEDGERS.values())
    ok = mass < 1e-12 and min_value > 0 and leaf < 1e-12
    line = verdict(
        10,
        "per-step conservation across all gate runs",
        ok,
        f"worst mass defect {mass:.1e} (< 1e-12), min value {min_value:.1e} (> 0), "
        f"worst leaf-exchange defect {leaf:.1e} (< 1e-12) over {steps} steps "
        f"in {len(LEDGERS)} runs",
    )
    assert ok, line
