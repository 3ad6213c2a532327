import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphalab import genfun, models
from alphalab.errors import InvalidInputError, SelectorInconsistencyError
from alphalab.spectral import compute_fk
from alphalab.subdiff import (clarke_subdiff, critical_level_set, hull_contains, inclusion_at,
                              inclusion_check, limsup_subdiff, mean_value_point)

GRID = np.linspace(-0.05, 0.05, 101)


def test_clarke_abs_at_kink():
    est = clarke_subdiff(GRID, np.abs(GRID), 0.0)
    lo, hi = est.interval
    assert lo == pytest.approx(-1.0, abs=1e-9) and hi == pytest.approx(1.0, abs=1e-9)


def test_clarke_smooth_point():
    x = 1.0 + GRID
    lo, hi = clarke_subdiff(x, x**2 / 2, 1.0).interval
    assert lo == pytest.approx(1.0, abs=1e-3) and hi == pytest.approx(1.0, abs=1e-3)


def test_clarke_min_of_parabolas():
    x = 0.5 + GRID
    f = np.minimum(x**2, (x - 1) ** 2)
    lo, hi = clarke_subdiff(x, f, 0.5).interval
    assert lo == pytest.approx(-1.0, abs=1e-3) and hi == pytest.approx(1.0, abs=1e-3)


def test_clarke_needs_samples():
    with pytest.raises(InvalidInputError):
        clarke_subdiff(np.array([0.0, 1.0, 2.0]), np.zeros(3), 1.0, radii=[0.5])


def test_clarke_two_variables():
    ax = np.linspace(-0.05, 0.05, 21)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    est = clarke_subdiff((ax, ax), np.abs(X) + Y, (0.0, 0.0))
    P = est.polytope
    assert P[:, 0].min() == pytest.approx(-1, abs=1e-6) and P[:, 0].max() == pytest.approx(1, abs=1e-6)
    assert np.allclose(P[:, 1], 1.0, atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), at=st.floats(-0.02, 0.02))
def test_clarke_scaling_equivariance(c, at):
    f = np.abs(GRID) + 0.3 * GRID**2
    a = clarke_subdiff(GRID, f, at)
    b = clarke_subdiff(GRID, c * f, at)
    lo, hi = sorted((c * a.interval[0], c * a.interval[1]))
    assert b.interval[0] == pytest.approx(lo, abs=1e-9) and b.interval[1] == pytest.approx(hi, abs=1e-9)


def test_limsup_constant_family():
    fam = {k: (GRID, np.sin(GRID)) for k in (1, 2, 4)}
    lo, hi = limsup_subdiff(fam, 0.0).interval
    assert lo == pytest.approx(1.0, abs=1e-3) and hi == pytest.approx(1.0, abs=1e-3)


def test_limsup_abs_family():
    fam = {k: (GRID, np.abs(GRID) + 1.0 / k) for k in (2, 4, 8)}
    est = limsup_subdiff(fam, 0.0)
    assert est.interval == pytest.approx((-1.0, 1.0))
    ks = sorted({w[0] for w in est.witnesses})
    assert ks == [2, 4, 8]
    assert {round(w[2]) for w in est.witnesses} == {-1, 1}


def test_limsup_needs_three_k():
    with pytest.raises(InvalidInputError):
        limsup_subdiff({1: (GRID, GRID), 2: (GRID, GRID)}, 0.0)


@pytest.mark.filterwarnings("ignore:limsup witness")
def test_limsup_inside_clarke_of_limit():
    # f_k -> |x| uniformly; the limsup set sits inside the Clarke set of |x|
    fam = {k: (GRID, np.sqrt(GRID**2 + 1.0 / k**4)) for k in (4, 8, 16)}
    lo, hi = limsup_subdiff(fam, 0.0).interval
    clo, chi = clarke_subdiff(GRID, np.abs(GRID), 0.0).interval
    assert clo - 1e-6 <= lo <= hi <= chi + 1e-6


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-0.04, -0.01), b=st.floats(0.01, 0.04), s=st.floats(-2, 2))
def test_mean_value_scan(a, b, s):
    f = np.abs(GRID - 0.003) + s * GRID**2
    lam3, mean, (lo, hi) = mean_value_point(GRID, f, a, b, tol=1e-12)
    assert a < lam3 < b and lo <= mean <= hi


def test_level_set_pendulum():
    W = genfun.build_discrete_action(models.pendulum(), 0.0, 1, 16)
    fk, sv = compute_fk(models.pendulum(), 0.0, 1, N=16, return_value=True)
    L = critical_level_set(W, fk, 0.1, certificate=sv.certificate)
    assert all(abs(cp.value - 1.0) <= 0.1 for cp in L.points)
    assert not any(abs(cp.value + 1.0) < 0.5 for cp in L.points)


def test_level_set_zero_and_integrable():
    W = genfun.build_discrete_action(models.zero(), 0.0, 1, 8)
    L = critical_level_set(W, 0.0)
    assert len(L.points) == 1 and L.points[0].value == 0.0
    W = genfun.build_discrete_action(models.integrable([0, 0, 0.5]), 0.6, 2, 8)
    L = critical_level_set(W, 0.18)
    assert L.points and all(cp.degenerate for cp in L.points)


def test_level_set_inconsistency():
    W = genfun.build_discrete_action(models.zero(), 0.0, 1, 8)
    with pytest.raises(SelectorInconsistencyError):
        critical_level_set(W, 5.0, 1e-3)


def test_hull_contains_2d():
    P = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    assert hull_contains(P, [0.2, 0.2], 0.0)[0]
    ok, d = hull_contains(P, [1.0, 1.0], 0.0)
    # max-norm distance is attained at (0.5, 0.5)
    assert not ok and d == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("H,lam", [
    (models.integrable([0, 1.0, 0.5]), 0.4),
    (models.pendulum(), 0.3),
    (models.zero(), 0.0),
])
def test_inclusion_examples(H, lam):
    rep = inclusion_at(H, lam, 2, N=16)
    assert rep["ok"], rep


def test_inclusion_flat_pendulum_zero_slope():
    rep = inclusion_at(models.pendulum(), 0.0, 1, N=16)
    assert rep["ok"] and np.allclose(rep["subdiff"], 0.0, atol=1e-6)


def test_inclusion_mismatched_inputs():
    W1 = genfun.build_discrete_action(models.zero(), 0.0, 1, 8)
    W2 = genfun.build_discrete_action(models.zero(), 0.0, 2, 8)
    est = clarke_subdiff(GRID, np.abs(GRID), 0.0)
    with pytest.raises(InvalidInputError):
        inclusion_check(W2, est, critical_level_set(W1, 0.0))
