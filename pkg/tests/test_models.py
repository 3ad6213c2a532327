import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import ellipk

from alphalab import models
from alphalab.errors import InvalidInputError
from alphalab.models import (CotangentPoint, OneFormClass, PerturbedFamily, check_geometrically_bounded,
                             hamiltonian_vector_field, integrate_flow, perturbed_eval, shift_by_form)

ZOO = [
    models.zero(),
    models.integrable([0.0, 1.0, 0.5]),
    models.pendulum(1.0),
    models.doublewell_p(0.05),
    models.kicked(0.1),
    models.bump(0.3, 0.2, 0.2, 1.0, 1.0),
    models.cosine_perturbation(0.05),
]


def _fd(H, q, p, t, h=1e-6):
    gq = (H(q + h, p, t) - H(q - h, p, t)) / (2 * h)
    gp = (H(q, p + h, t) - H(q, p - h, t)) / (2 * h)
    return gq, gp


@pytest.mark.parametrize("H", ZOO, ids=lambda H: H.name)
def test_partials_match_finite_differences(H, rng):
    q = rng.uniform(0, 1, 50)
    p = rng.uniform(-2, 2, 50)
    for t in (0.0, 0.3):
        gq, gp = _fd(H, q, p, t)
        scale = 1 + np.abs(gq) + np.abs(gp)
        assert np.all(np.abs(H.grad_q(q, p, t)[..., 0] - gq) <= 1e-6 * scale)
        assert np.all(np.abs(H.grad_p(q, p, t)[..., 0] - gp) <= 1e-6 * scale)


@pytest.mark.parametrize("H", [m for m in ZOO if m.time_dependent], ids=lambda H: H.name)
def test_time_periodic(H, rng):
    q, p, t = rng.uniform(0, 1, 20), rng.uniform(-2, 2, 20), rng.uniform(0, 1)
    assert np.allclose(H(q, p, t), H(q, p, t + 1.0), rtol=0, atol=1e-12)


def test_cotangent_point_lift():
    z = CotangentPoint([2.75], [0.1])
    assert np.allclose(z.q, 0.75, atol=1e-12)


def test_shift_by_form():
    H = models.integrable([0, 0, 0.5])
    assert shift_by_form(H, 0.0)(0.2, 0.7) == pytest.approx(0.245)
    K = shift_by_form(H, OneFormClass([1.0]))
    assert K(0.4, 3.0) == pytest.approx((3.0 - 1.0) ** 2 / 2)


def test_shift_doublewell_against_substitution(rng):
    H = models.doublewell_p(0.0)
    K = shift_by_form(H, 0.5)
    q, p = rng.uniform(0, 1, 100), rng.uniform(-3, 3, 100)
    assert np.allclose(K(q, p), ((p - 0.5) ** 2 - 1) ** 2 / 4, rtol=0, atol=1e-12)


def test_shift_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        shift_by_form(models.pendulum(), [1.0, 2.0])


def test_vector_field_examples():
    v = hamiltonian_vector_field(models.integrable([0, 0, 0.5]), CotangentPoint([0.3], [2.0]))
    assert np.allclose(np.concatenate(v), [2.0, 0.0])
    cos = models.linear_combination([models.pendulum(), models.integrable([0, 0, 0.5])], [1.0, -1.0])
    v = hamiltonian_vector_field(cos, CotangentPoint([0.25], [0.4]))
    assert np.allclose(np.concatenate(v), [0.0, 2 * np.pi])
    H = models.pendulum()
    qd, pd = hamiltonian_vector_field(H, CotangentPoint([0.1], [0.3]))
    gq, gp = _fd(H, 0.1, 0.3, 0.0)
    assert qd[0] == pytest.approx(gp, rel=1e-7) and pd[0] == pytest.approx(-gq, rel=1e-7)


def test_free_motion():
    tr = integrate_flow(models.integrable([0, 0, 0.5]), CotangentPoint([0.0], [1.0]), (0, 1), 0.01)
    assert tr.q[-1, 0] == pytest.approx(1.0, abs=1e-12)
    assert tr.p[-1, 0] == pytest.approx(1.0, abs=1e-12)


def test_fixed_point_is_stationary():
    tr = integrate_flow(models.pendulum(), ([0.0], [0.0]), (0, 5), 0.05)
    assert np.max(np.abs(tr.q)) < 1e-14 and np.max(np.abs(tr.p)) < 1e-14


def test_rotation_period_matches_quadrature():
    # E = p^2/2 + cos(2 pi q) = 1.5; period of one full turn
    E = 1.5
    k2 = 2.0 / (E + 1.0)
    # q-integral of dq / sqrt(2(E - cos 2 pi q)) over one period
    T_exact = 2.0 / (np.pi * np.sqrt(2 * (E + 1))) * ellipk(k2)
    H = models.pendulum()
    p0 = np.sqrt(2 * (E - 1.0))
    tr = integrate_flow(H, ([0.0], [p0]), (0, 2.0), 1e-3)
    qs = tr.q[:, 0]
    i = np.argmax(qs >= 1.0)
    t_cross = tr.t[i - 1] + (1.0 - qs[i - 1]) / (qs[i] - qs[i - 1]) * (tr.t[i] - tr.t[i - 1])
    assert t_cross == pytest.approx(T_exact, abs=1e-4)


def test_energy_drift_quadratic_in_tau():
    H = models.pendulum()
    drifts = []
    for tau in (0.02, 0.01):
        tr = integrate_flow(H, ([0.1], [0.9]), (0, 5), tau)
        drifts.append(np.max(np.abs(H(tr.q[:, 0], tr.p[:, 0]) - H(0.1, 0.9))))
    assert drifts[1] < drifts[0] / 3


def test_time_one_map_is_symplectic(rng):
    H = models.pendulum()
    h = 1e-6
    for _ in range(3):
        z = rng.uniform([0, -1], [1, 1])
        J = np.zeros((2, 2))
        for j in range(2):
            e = np.eye(2)[j] * h
            a = integrate_flow(H, ([z[0] + e[0]], [z[1] + e[1]]), (0, 1), 0.01)
            b = integrate_flow(H, ([z[0] - e[0]], [z[1] - e[1]]), (0, 1), 0.01)
            J[:, j] = (np.array([a.q[-1, 0], a.p[-1, 0]]) - np.array([b.q[-1, 0], b.p[-1, 0]])) / (2 * h)
        assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-4)


@settings(max_examples=20, deadline=None)
@given(lam=st.floats(-2, 2), q0=st.floats(0, 1))
def test_shift_consistency(lam, q0):
    H = models.pendulum()
    K = shift_by_form(H, lam)
    a = integrate_flow(K, ([q0], [0.0]), (0, 1), 0.05)
    # K(q, p) = H(q, p - lam): the K-orbit through p = 0 is the H-orbit through p = -lam
    b = integrate_flow(H, ([q0], [-lam]), (0, 1), 0.05)
    assert np.allclose(a.q, b.q, atol=1e-8)
    assert np.allclose(a.p - lam, b.p, atol=1e-8)


def test_bad_tau():
    with pytest.raises(InvalidInputError):
        integrate_flow(models.pendulum(), ([0.0], [0.0]), (0, 1), 0.0)


def test_geometrically_bounded():
    rep = check_geometrically_bounded(models.integrable([0, 0, 0.5]), [[-1.0], [1.0]], 5.0, 2.0)
    assert rep["passed"] and rep["max_excursion"] == 0.0
    bound = np.sqrt(2 * (1 + 2.0**2 / 2)) + 1.0
    rep = check_geometrically_bounded(models.pendulum(), [[-2.0], [0.0], [2.0]], 50.0, bound,
                                      n_samples=8, tau=0.02)
    assert rep["passed"]


def test_escaping_flow_detected():
    # H = p^2/2 - t-periodic push: p grows linearly, never returns
    push = models.HamiltonianModel(
        name="push", dim=1,
        func=lambda q, p, t: 0.5 * p[..., 0] ** 2 - 3.0 * q[..., 0],
        dq=lambda q, p, t: np.full_like(q, -3.0),
        dp=lambda q, p, t: p.copy(),
    )
    rep = check_geometrically_bounded(push, [[0.0]], 10.0, 5.0, n_samples=2)
    assert not rep["passed"]


def test_perturbed_family(rng):
    base = models.pendulum()
    K1 = models.bump(0.0, 0.0, 0.2, 1.0, 1.0)
    F = PerturbedFamily(base, [K1])
    assert perturbed_eval(F, [0.0])(0.3, 0.2) == pytest.approx(base(0.3, 0.2))
    H = perturbed_eval(F, [0.1])
    q, p = rng.uniform(0, 1, 30), rng.uniform(-1, 1, 30)
    assert np.allclose(H(q, p), base(q, p) + 0.1 * K1(q, p))
    assert np.allclose(H.grad_p(q, p), base.grad_p(q, p) + 0.1 * K1.grad_p(q, p))
    with pytest.raises(InvalidInputError):
        perturbed_eval(F, [0.1, 0.2])


def test_registry():
    H = models.make_model("pendulum", amplitude=2.0)
    assert H(0.0, 0.0) == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        models.make_model("nope")
