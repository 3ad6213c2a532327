import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphalab import genfun, models
from alphalab.errors import InvalidInputError
from alphalab.genfun import (action_gradient, action_hessian, action_value, build_discrete_action,
                             find_critical_points, reduced_hessian_index)
from alphalab.spectral import spectral_invariant


def _fd_grad(W, x, h=1e-6):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (action_value(W, x + e) - action_value(W, x - e)) / (2 * h)
    return g


def test_zero_hamiltonian_single_critical_value():
    W = build_discrete_action(models.zero(), 0.0, 1, 16)
    cps = find_critical_points(W, count=4)
    assert len(cps) == 1
    assert cps[0].value == 0.0 and cps[0].morse_index == 0


def test_zero_hamiltonian_value_is_quadratic_term(rng):
    W = build_discrete_action(models.zero(), 0.0, 2, 8)
    x = rng.normal(size=W.size)
    q, p = W.unpack(x)
    assert action_value(W, x) == pytest.approx(-np.sum(p * np.diff(q, axis=0)))


@pytest.mark.parametrize("lam", [-1.0, 0.5, 1.0])
@pytest.mark.parametrize("k", [1, 3])
def test_integrable_critical_value(lam, k):
    H = models.integrable([0.0, 1.0, 0.5])
    W = build_discrete_action(H, lam, k, 16)
    cps = find_critical_points(W, count=3)
    h = lam + 0.5 * lam**2
    assert all(c.value == pytest.approx(k * h, abs=1e-10) for c in cps)
    assert all(c.degenerate for c in cps)
    # lifted displacement k h'(lam)
    assert all(c.displacement[0] == pytest.approx(k * (1 + lam), abs=1e-10) for c in cps)


def test_pendulum_constant_chords():
    W = build_discrete_action(models.pendulum(), 0.0, 1, 16)
    cps = find_critical_points(W, count=8)
    values = sorted(c.value for c in cps)
    assert values[0] == pytest.approx(-1.0, abs=1e-9)
    assert values[-1] == pytest.approx(1.0, abs=1e-6)
    for c in cps:
        assert c.grad_norm <= 1e-9
        assert np.allclose(c.lambda_partial, 0.0, atol=1e-12)


def test_gradient_matches_finite_differences(rng):
    W = build_discrete_action(models.pendulum(), 0.7, 2, 8)
    for _ in range(3):
        x = rng.normal(scale=0.5, size=W.size)
        g = action_gradient(W, x)
        assert np.allclose(g, _fd_grad(W, x), rtol=1e-6, atol=1e-7)


def test_hessian_matches_gradient_differences(rng):
    W = build_discrete_action(models.kicked(0.1), 0.3, 1, 8)
    x = rng.normal(scale=0.5, size=W.size)
    Hm = action_hessian(W, x).toarray()
    h = 1e-6
    for i in range(0, W.size, 3):
        e = np.zeros(W.size)
        e[i] = h
        col = (action_gradient(W, x + e) - action_gradient(W, x - e)) / (2 * h)
        assert np.allclose(Hm[:, i], col, atol=1e-6)


def test_index_matches_dense_eigensolver():
    W = build_discrete_action(models.pendulum(), 0.0, 1, 16)
    cp = min(find_critical_points(W, count=8), key=lambda c: c.value)
    index, degenerate = reduced_hessian_index(W, cp)
    Hd = action_hessian(W, cp.vars).toarray()[W.n:, W.n:]
    brute = int(np.sum(np.linalg.eigvalsh(Hd) < 0)) - W.m * W.n
    assert index == brute and not degenerate


def test_quartic_is_flagged_degenerate():
    W = build_discrete_action(models.integrable([0, 0, 0, 0, 1.0]), 0.0, 1, 16)
    cps = find_critical_points(W, count=3)
    assert cps and all("degenerate-critical-point" in c.flags for c in cps)


def test_orbit_correspondence():
    # a critical point reproduces the symplectic-Euler orbit of K from (q_0, 0)
    W = build_discrete_action(models.pendulum(), 2.0, 2, 16)
    cp = find_critical_points(W, count=4)[0]
    q, p = W.unpack(cp.vars)
    qq, pp = q[0].copy(), np.zeros(1)
    for i in range(W.m):
        # p_{i+1} = p_i - tau dK/dq(q_i, p_{i+1}); q_{i+1} = q_i + tau dK/dp(q_i, p_{i+1})
        pn = pp.copy()
        for _ in range(50):
            pn = pp - W.tau * W.K.grad_q(qq, pn)
        qq = qq + W.tau * W.K.grad_p(qq, pn)
        pp = pn
        assert np.allclose(pp, p[i], atol=1e-6) and np.allclose(qq, q[i + 1], atol=1e-6)


def test_value_action_gap_first_order():
    gaps = []
    for N in (16, 32):
        W = build_discrete_action(models.pendulum(), 2.0, 1, N)
        cp = find_critical_points(W, count=4)[0]
        gaps.append(genfun.value_gap_to_flow(W, cp))
    assert gaps[1] < 0.7 * gaps[0]


def test_lambda_partial_equals_displacement():
    W = build_discrete_action(models.pendulum(), 2.0, 2, 16)
    for cp in find_critical_points(W, count=4):
        assert np.allclose(cp.lambda_partial, -W.orientation * cp.displacement, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(lam=st.floats(-2, 2), k=st.integers(1, 3))
def test_translation_identity(lam, k):
    # K-chord action = H-chord action on the translated path + the class pairing
    H = models.pendulum()
    W = build_discrete_action(H, lam, k, 16)
    cp = spectral_invariant(W, "min").certificate
    q, p = W.unpack(cp.vars)
    pH = p + W.momentum_offset
    tau = W.tau
    a_H = np.sum(tau * H(q[:-1], pH) - pH[:, 0] * np.diff(q[:, 0]))
    pairing = W.momentum_offset[0] * (q[-1, 0] - q[0, 0])
    assert cp.value == pytest.approx(a_H + pairing, abs=1e-9)


def test_critical_point_json_roundtrip():
    W = build_discrete_action(models.pendulum(), 0.0, 1, 8)
    cps = find_critical_points(W, count=4)
    back = genfun.critical_points_from_json(genfun.critical_points_to_json(W, cps))
    assert [c.value for c in back] == [c.value for c in cps]


def test_invalid_parameters():
    with pytest.raises(InvalidInputError):
        build_discrete_action(models.pendulum(), 0.0, 0, 16)
    with pytest.raises(InvalidInputError):
        build_discrete_action(models.pendulum(), 0.0, 1, 2)
    with pytest.raises(InvalidInputError):
        find_critical_points(build_discrete_action(models.zero(), 0.0, 1, 8), count=0)
