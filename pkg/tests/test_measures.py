import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphalab import genfun, measures, models
from alphalab.errors import InvalidInputError
from alphalab.measures import (EmpiricalMeasure, action_of_measure, adiabatic_limit, barycenter,
                               battery_distance, chord_from_critical_point, chord_measure, closedness_residual,
                               dirac, extract_chords, invariance_residual, measure_stats, rotation_vector,
                               suspend, suspend_and_reduce, uniform_circle_measure)
from alphalab.spectral import compute_fk

PEND = models.pendulum()
H2 = models.integrable([0.0, 0.0, 0.5])


def _chord(H, lam, k, N=32):
    fk, sv = compute_fk(H, lam, k, N=N, return_value=True)
    W = genfun.build_discrete_action(H, lam, k, N)
    return chord_from_critical_point(W, sv.certificate), fk


def test_weights_validated():
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure([[0.0], [0.5]], [[0.0], [0.0]], [0.5, 0.6])
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure([[0.0]], [[0.0]], [-1.0])


def test_dirac_at_fixed_point():
    m = dirac([0.0], [0.0])
    assert np.allclose(rotation_vector(m, PEND), 0.0)
    assert action_of_measure(m, PEND) == pytest.approx(1.0)
    assert invariance_residual(m, PEND) == 0.0


@pytest.mark.parametrize("p0", [-1.3, 0.0, 0.7])
def test_uniform_circle_integrable(p0):
    H = models.integrable([0.0, 1.0, 0.5])
    m = uniform_circle_measure(p0)
    assert rotation_vector(m, H)[0] == pytest.approx(1 + p0)
    assert action_of_measure(m, H) == pytest.approx(p0 + p0**2 / 2 - p0 * (1 + p0))
    assert invariance_residual(m, H) <= 1e-12
    assert closedness_residual(m, H) <= 1e-12


def test_barycenter_examples():
    a, b = dirac([0.0], [0.0]), dirac([0.5], [0.0])
    assert battery_distance(barycenter([a, b], [1.0, 0.0]), a) == 0.0
    half = barycenter([a, b], [0.5, 0.5])
    assert np.allclose(rotation_vector(half, PEND), 0.0)
    assert action_of_measure(half, PEND) == pytest.approx(0.0)
    with pytest.raises(InvalidInputError):
        barycenter([a, b], [0.7, 0.7])


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0, 1), p0=st.floats(-2, 2), p1=st.floats(-2, 2))
def test_barycenter_linearity(r, p0, p1):
    a = uniform_circle_measure(p0, 16)
    b = measures.EmpiricalMeasure([[0.1], [0.4]], [[p1], [-p1]], [0.25, 0.75])
    c = barycenter([a, b], [r, 1 - r])
    sa, sb, sc = (measure_stats(x, PEND) for x in (a, b, c))
    assert np.allclose(sc.rho, r * sa.rho + (1 - r) * sb.rho, atol=1e-12)
    assert sc.action == pytest.approx(r * sa.action + (1 - r) * sb.action, abs=1e-12)


def test_rotating_chords_symmetric_pair():
    c1, _ = _chord(PEND, 2.0, 2)
    c2, _ = _chord(PEND, -2.0, 2)
    half = barycenter([chord_measure(c1), chord_measure(c2)], [0.5, 0.5])
    assert abs(rotation_vector(half, PEND)[0]) <= 1e-9


def test_extract_pendulum_flat():
    fk, sv = compute_fk(PEND, 0.0, 2, N=16, return_value=True)
    chords = extract_chords(PEND, 0.0, 2, fk, N=16, certificate=sv.certificate)
    c = chords[0]
    assert np.allclose(c.displacement, 0) and c.action == pytest.approx(2.0, abs=1e-9)
    m = chord_measure(c)
    assert np.allclose(m.q % 1.0, m.q[0] % 1.0) and np.allclose(m.p, 0.0)


def test_extract_integrable_straight():
    H = models.integrable([0.0, 1.0, 0.5])
    lam, k = 0.5, 4
    chords = extract_chords(H, lam, k, lam + lam**2 / 2, N=16)
    for c in chords:
        assert c.displacement[0] == pytest.approx(k * (1 + lam))
        assert c.endpoint_error() <= 1e-9
        m = chord_measure(c)
        # step tau h'(lam) = 3/32: the 64 atoms sit on 32 q-fibres
        assert m.size == 64
        assert np.unique(np.round(m.q[:, 0] % 1.0, 9)).size == 32


def test_extract_zero():
    chords = extract_chords(models.zero(), 0.0, 1, 0.0, N=8)
    assert chords and all(c.action == 0.0 for c in chords)


def test_rotating_chord_on_energy_level():
    c, fk = _chord(PEND, 2.0, 2, N=64)
    E = PEND(c.q[:-1], 0.5 * (c.p[:-1] + c.p[1:]))
    assert np.ptp(E) <= 0.05


def test_rho_matches_displacement():
    for N in (32, 64):
        c, _ = _chord(PEND, 2.0, 2, N=N)
        m = chord_measure(c, "left")
        assert rotation_vector(m, PEND)[0] == pytest.approx(c.displacement[0] / c.k, abs=1e-12)
        m = chord_measure(c)
        assert abs(rotation_vector(m, PEND)[0] - c.displacement[0] / c.k) <= 2.0 / N


def test_invariance_residual_halves():
    res = []
    for k in (4, 8, 16):
        c, _ = _chord(PEND, 2.0, k, N=32)
        res.append(invariance_residual(chord_measure(c), PEND))
    ratios = np.array(res[1:]) / np.array(res[:-1])
    assert np.all(np.abs(ratios - 0.5) <= 0.1)


def test_csv_roundtrip():
    m = suspend(uniform_circle_measure(0.3, 8), models.kicked(0.1), s_count=4)
    back = EmpiricalMeasure.from_csv("# manifest: test\n" + m.to_csv())
    assert np.allclose(back.q, m.q) and np.allclose(back.s, m.s) and np.allclose(back.weights, m.weights)


def test_adiabatic_constant_family():
    last, rep = adiabatic_limit(lambda lam: PEND, [0, 0, 0], [([0.0], [0.0])] * 3, [2, 4, 8])
    assert max(rep["cauchy"]) <= 1e-15 and rep["invariance_residual"] <= 1e-15


def test_adiabatic_integrable_shift():
    ks = [8, 16, 32, 64]
    lams = [1 + 1.0 / k for k in ks]
    last, rep = adiabatic_limit(lambda lam: H2, lams, [([0.0], [l]) for l in lams], ks,
                                lambda_inf=1.0, reference=uniform_circle_measure(1.0, 512))
    d = np.array(rep["distance_to_reference"])
    assert np.all(d * np.array(ks) <= 3.0)
    assert rep["residual_ok"]


def test_suspension_of_fixed_point():
    nu = suspend(dirac([0.0], [0.0]), models.kicked(0.1), s_count=8)
    m, rep = suspend_and_reduce(nu, models.kicked(0.1))
    assert np.allclose(m.q, 0.0, atol=1e-12) and np.allclose(m.p, 0.0, atol=1e-12)
    assert rep["marginal_ok"]


def test_suspension_roundtrip_autonomous():
    c, _ = _chord(PEND, 2.0, 4, N=32)
    m0 = chord_measure(c)
    nu = suspend(m0, PEND, s_count=8)
    m1, rep = suspend_and_reduce(nu, PEND)
    assert battery_distance(m1, m0) <= 1e-3
    assert rep["identity_error"] <= 1e-3


def test_suspension_requires_time():
    with pytest.raises(InvalidInputError):
        suspend_and_reduce(dirac([0.0], [0.0]), PEND)


def test_nonautonomous_stats_consistent():
    m = uniform_circle_measure(0.8, 64)
    assert measures.rotation_vector_nonaut(m, H2)[0] == pytest.approx(rotation_vector(m, H2)[0], abs=1e-9)
    assert measures.action_nonaut(m, H2) == pytest.approx(action_of_measure(m, H2), abs=1e-9)


def test_periodic_orbit_rotation():
    # p = 1 under p^2/2 closes after one period with unit lifted displacement
    assert measures.rotation_vector_nonaut(dirac([0.2], [1.0]), models.kicked(0.0))[0] == pytest.approx(1.0)


def test_certificate_on_degenerate_circle_is_kept():
    H = models.doublewell_p(0.0)
    fk, sv = compute_fk(H, 0.0, 2, N=16, return_value=True)
    chords = extract_chords(H, 0.0, 2, fk, N=16, certificate=sv.certificate)
    assert fk == pytest.approx(0.25) and chords
