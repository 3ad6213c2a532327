import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from alphalab import genfun, models, spectral
from alphalab.errors import FeasibilityError, InvalidInputError, NotApplicableError
from alphalab.persistence import CubicalGrid, relative_essential_classes
from alphalab.spectral import (compute_fk, extrapolate, homogenize, spectral_invariant_continuation,
                               spectral_invariant_min, spectral_invariant_minimax)

FREE = models.integrable([0.0, 0.0, 0.5])
PEND = models.pendulum(1.0)


def test_calibration_orientation():
    assert spectral.calibrate_orientation() == -1


def test_min_integrable_value():
    W = genfun.build_discrete_action(FREE, 1.0, 1, 16)
    sv = spectral_invariant_min(W)
    assert sv.value == pytest.approx(0.5, abs=1e-12)
    assert sv.certificate.value == sv.value


def test_zero_hamiltonian():
    for k in (1, 3):
        assert compute_fk(models.zero(), 0.7, k, N=8) == 0.0


@pytest.mark.parametrize("k", [1, 2, 4])
def test_pendulum_flat_value(k):
    fk, sv = compute_fk(PEND, 0.0, k, "min", N=16, return_value=True)
    assert fk == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(sv.certificate.displacement, 0.0, atol=1e-9)


@pytest.mark.parametrize("lam", [-1.5, 0.0, 0.8, 2.0])
def test_integrable_k_independent(lam):
    H = models.integrable([0.0, 1.0, 0.5])
    vals = [compute_fk(H, lam, k, N=16) for k in (1, 2, 5)]
    assert np.allclose(vals, lam + 0.5 * lam**2, atol=1e-12)


def test_persistence_toy_selector():
    # W(q; xi) = -xi^2 + cos(2 pi q): top class is born at the maximum of cos
    R = 2.0
    grid = CubicalGrid((np.arange(64) / 64, np.linspace(-R, R, 41)))
    P = grid.points()
    V = -P[..., 1] ** 2 + np.cos(2 * np.pi * P[..., 0])
    (top,) = relative_essential_classes(V, grid, -R**2 + 1 + 1e-9, 2)
    (bottom,) = relative_essential_classes(V, grid, -R**2 + 1 + 1e-9, 1)
    assert top.birth == pytest.approx(1.0, abs=1e-12)
    assert bottom.birth == pytest.approx(-1.0, abs=1e-12)


def test_persistence_quadratic_form_is_zero():
    W = genfun.build_discrete_action(models.zero(), 0.0, 1, 2, coarse=True)
    assert spectral_invariant_minimax(W).value == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
def test_persistence_agrees_with_min(lam):
    W = genfun.build_discrete_action(PEND, lam, 1, 2, coarse=True)
    a = spectral_invariant_minimax(W)
    b = spectral_invariant_min(W)
    assert abs(a.value - b.value) <= a.error_bar + b.error_bar + 1e-9


def test_persistence_guard():
    W = genfun.build_discrete_action(PEND, 0.0, 2, 4)
    with pytest.raises(FeasibilityError):
        spectral_invariant_minimax(W)


def test_continuation_identical_endpoints():
    W = genfun.build_discrete_action(PEND, 0.5, 1, 16)
    sv = spectral_invariant_continuation(W, W)
    assert sv.error_bar == 0.0
    assert sv.value == pytest.approx(spectral_invariant_min(W).value)


def test_continuation_matches_tonelli_selector():
    W0 = genfun.build_discrete_action(FREE, 2.0, 1, 16)
    W1 = genfun.build_discrete_action(PEND, 2.0, 1, 16)
    sv = spectral_invariant_continuation(W0, W1, steps=20)
    assert sv.value == pytest.approx(spectral_invariant_min(W1).value, abs=sv.error_bar + 1e-8)


@pytest.mark.parametrize("lam", [0.0, 0.5])
def test_continuation_doublewell_within_oh_bound(lam):
    eps = 0.05
    H = models.linear_combination([models.doublewell_p(0.0), models.cosine_perturbation(eps)], [1.0, 1.0])
    fk = compute_fk(H, lam, 2, "continuation", N=16)
    assert abs(fk - (lam**2 - 1) ** 2 / 4) <= eps + 1e-9


def test_unknown_backend():
    with pytest.raises(InvalidInputError):
        compute_fk(PEND, 0.0, 1, "magic", N=16)


def test_min_rejects_nonconvex():
    W = genfun.build_discrete_action(models.linear_combination(
        [models.doublewell_p(0.0), models.cosine_perturbation(0.05)], [1, 1]), 0.0, 1, 16)
    with pytest.raises(NotApplicableError):
        spectral_invariant_min(W)


def test_extrapolate_rules():
    # O(1/k) tail gets a Richardson step
    ks = [1, 2, 4, 8]
    est, gap, used = extrapolate(ks, [1 + 1 / k for k in ks])
    assert used and est == pytest.approx(1.0) and gap == pytest.approx(1 / 8)
    est, gap, used = extrapolate(ks, [2.0] * 4)
    assert not used and est == 2.0 and gap == 0.0


def test_homogenize_free_particle():
    grid = np.linspace(-2, 2, 9)
    curve = homogenize(FREE, grid, (1, 2, 4), N=16)
    assert np.max(np.abs(curve.alpha - grid**2 / 2)) <= 1e-3
    assert curve.lipschitz_constant <= 2.0 + 1e-9
    assert curve.to_csv().splitlines()[0] == "lambda,f_1,f_2,f_4,alpha,err"
    assert '"backend": "min"' in curve.to_json()


def test_homogenize_doublewell_not_convexified():
    grid = np.array([-1.2, 0.0, 0.6])
    curve = homogenize(models.doublewell_p(0.0), grid, (1, 2), N=16)
    assert np.allclose(curve.alpha, (grid**2 - 1) ** 2 / 4, atol=1e-10)
    assert curve.alpha[1] > 0.2


def test_homogenize_validation():
    with pytest.raises(InvalidInputError):
        homogenize(FREE, [0.0], (4, 2))


def test_homogenize_pendulum_equi_lipschitz_and_stabilising():
    grid = np.linspace(1.0, 2.0, 6)
    curve = homogenize(PEND, grid, (1, 2, 4, 8), N=32)
    # |df_k / dlam| <= max |dH/dp| over the explored window
    assert curve.lipschitz_constant <= 2.0 + np.sqrt(2 * 2) + 1e-6
    diffs = [np.max(np.abs(curve.fk(b) - curve.fk(a))) for a, b in zip(curve.ks, curve.ks[1:])]
    assert all(d2 <= d1 + 1e-9 for d1, d2 in zip(diffs, diffs[1:]))


def test_mvz_suite_integrable_and_pendulum():
    rep = spectral.property_suite_mvz(models.integrable([0, 1.0, 0.5]), 0.7, 2, N=16)
    assert rep["homogeneity_defect"] <= 1e-10
    bump = models.bump(0.3, 0.0, 0.2, 1.0, 1.0)
    rep = spectral.property_suite_mvz(PEND, 0.0, 1, N=16, perturbation=bump, delta=0.01)
    assert rep["lipschitz_ok"]


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(-2.5, 2.5), delta=st.floats(-0.2, 0.2))
def test_oh_bound_random_shift(lam, delta):
    # G = delta * bump: |f_k(H) - f_k(H + G)| <= sup|G|
    H = PEND
    G = models.bump(0.5, lam, 0.2, 1.0, delta)
    Hd = spectral._keep_convexity(H, models.linear_combination([H, G], [1.0, 1.0]))
    assume(Hd.convex)
    a = compute_fk(H, lam, 1, N=16)
    b = compute_fk(Hd, lam, 1, N=16)
    assert abs(a - b) <= abs(delta) + 1e-9
