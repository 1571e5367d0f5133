"""Chain diagnostics: partition functions, lifts, and the window identity."""

import numpy as np
import pytest

from mlfe.chain import (
    MemoryGuardError,
    chain_report,
    fisher_interior_vertex,
    h_star_spectral,
    lift_entropy,
    lift_marginal_check,
    log_partition,
    per_site_increment,
    transfer_operator,
)
from mlfe.functionals import i_kappa
from mlfe.grid import Axis, TensorGrid
from mlfe.measures import correlated_mixture, gaussian_product
from mlfe.potentials import PotentialPair, Quadratic

import helpers


AX = Axis(-6.0, 6.0, 64)
PAIR = PotentialPair(Quadratic(2.0, 1.5), 2)

COARSE = Axis(-6.0, 6.0, 24)
COARSE_GRID = TensorGrid(COARSE, 3)


def test_transfer_operator_symmetric_positive():
    op = transfer_operator(PAIR, AX)
    assert np.array_equal(op.kernel, op.kernel.T)
    assert np.all(op.kernel > 0)


def test_log_partition_against_direct_quadrature():
    # same quadrature, two very different summation orders
    brute = helpers.brute_log_partition_n1(PAIR, COARSE)
    assert log_partition(PAIR, COARSE, 1) == pytest.approx(brute, abs=1e-10)
    with pytest.raises(ValueError):
        log_partition(PAIR, AX, 0)


def test_log_partition_gaussian_determinant_oracle():
    # the quadratic chain energy is (1/2) x^T A x with tridiagonal A, so
    # log Z^n has an exact determinant expression; the wide axis keeps the
    # quadrature truncation below the comparison tolerance
    wide = Axis(-8.0, 8.0, 128)
    for n in (2, 4):
        closed = helpers.chain_log_partition_gaussian(2.0, 1.5, n)
        assert log_partition(PAIR, wide, n) == pytest.approx(closed, abs=1e-8)


def test_increment_estimator_converges_geometrically(h_star64):
    errs = [abs(per_site_increment(PAIR, AX, n) - h_star64) for n in (2, 4, 8)]
    assert errs[0] < 2e-2
    assert errs[1] < errs[0] / 100
    assert errs[2] < 1e-9
    with pytest.raises(ValueError):
        per_site_increment(PAIR, AX, 1)


def test_plain_per_site_ratio_carries_boundary_offset(h_star64):
    # log Z^n/(2n+1) approaches h_star only at O(1/n): the open chain ends
    # contribute a fixed log-normalizer that the increment estimator cancels
    rep = chain_report(PAIR, AX, 64, h_star=h_star64)
    assert abs(rep.per_site_log_z - (-h_star64)) > 1e-3
    assert abs(rep.increment_estimate - h_star64) < 1e-10


def test_spectral_limit_matches_stationary_free_energy(pair, h_star64, cayley64):
    from mlfe.functionals import h_kappa

    assert h_kappa(pair, cayley64.joint) == pytest.approx(h_star64, abs=1e-8)


def test_lift_entropy_closed_formula_vs_brute_force():
    nu = correlated_mixture(COARSE_GRID, var=0.9, cov=-0.3)
    brute = helpers.brute_lift_entropy_n2(PAIR, nu)
    closed = lift_entropy(PAIR, nu, 2)
    assert closed == pytest.approx(brute, rel=1e-10)


def test_lift_entropy_validation():
    nu = gaussian_product(COARSE_GRID, var=1.0)
    with pytest.raises(ValueError):
        lift_entropy(PAIR, nu, 0)
    pair3 = PotentialPair(Quadratic(2.0, 1.5), 3)
    nu3 = gaussian_product(TensorGrid(COARSE, 4), var=1.0)
    with pytest.raises(ValueError):
        lift_entropy(pair3, nu3, 2)


def test_lift_marginal_check_consistency():
    nu = correlated_mixture(COARSE_GRID, var=0.9, cov=-0.3)
    for site in (-1, 0, 1):
        check = lift_marginal_check(nu, 2, site=site)
        assert check.mass_defect < 1e-10
        assert check.mean_defect < 1e-10
        assert check.second_moment_defect < 1e-10
        assert check.neighbor_product_defect < 1e-10
    with pytest.raises(ValueError):
        lift_marginal_check(nu, 2, site=2)


def test_lift_memory_guard():
    nu = gaussian_product(TensorGrid(AX, 3), var=1.0)
    with pytest.raises(MemoryGuardError):
        lift_marginal_check(nu, 3)  # 64^7 doubles


def test_fisher_window_matches_brute_force():
    nu = correlated_mixture(COARSE_GRID, var=0.9, cov=-0.3)
    report = fisher_interior_vertex(PAIR, nu)
    root_b, leaf_b, cross_b = helpers.brute_fisher_window(PAIR, nu)
    assert report.root_part == pytest.approx(root_b, rel=1e-10)
    assert report.leaf_part == pytest.approx(leaf_b, rel=1e-10)
    assert report.cross == pytest.approx(cross_b, abs=1e-10)
    assert report.total == pytest.approx(root_b + leaf_b, rel=1e-10)


def test_fisher_window_product_reduces_to_dissipation():
    # on a product the two conditional scores vanish identically, so the
    # window total collapses onto the neighborhood dissipation functional
    grid = TensorGrid(AX, 3)
    nu = gaussian_product(grid, var=1.0)
    report = fisher_interior_vertex(PAIR, nu)
    assert report.leaf_part == pytest.approx(0.0, abs=1e-20)
    assert report.cross == pytest.approx(0.0, abs=1e-12)
    assert report.total == pytest.approx(i_kappa(PAIR, nu), rel=1e-10)


def test_fisher_window_validation():
    pair3 = PotentialPair(Quadratic(2.0, 1.5), 3)
    nu3 = gaussian_product(TensorGrid(COARSE, 4), var=1.0)
    with pytest.raises(ValueError):
        fisher_interior_vertex(pair3, nu3)


def test_chain_report_row(h_star64):
    nu = gaussian_product(TensorGrid(AX, 3), var=0.8)
    rep = chain_report(PAIR, AX, 4, density=nu, h_star=h_star64)
    assert rep.n == 4
    assert rep.log_z == pytest.approx(log_partition(PAIR, AX, 4))
    assert rep.lift_entropy == pytest.approx(lift_entropy(PAIR, nu, 4))
    assert rep.lift_entropy_per_site == pytest.approx(rep.lift_entropy / 9)
    bare = chain_report(PAIR, AX, 1, h_star=h_star64)
    assert bare.lift_entropy is None
    assert np.isnan(bare.increment_estimate)
