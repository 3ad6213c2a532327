"""End-to-end acceptance runs; each test prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines bypass capture).
"""
import time

import numpy as np
import pytest

from alphalab import models
from alphalab.measures import (battery_distance, chord_measure, suspend, suspend_and_reduce,
                               adiabatic_limit, uniform_circle_measure)
from alphalab.oracle import oracle_twist_alpha, separatrix_width
from alphalab.spectral import (compute_fk, homogenize, property_suite_mvz, sup_difference,
                               _keep_convexity)
from alphalab.subdiff import clarke_subdiff, inclusion_at
from alphalab.verify import (TOL_C1, _chord, localize, verify_main_theorem,
                             verify_nonautonomous)

PEND = models.pendulum()
DW = models.doublewell_p(0.0)
CAL = models.integrable([0.0, 1.0, 0.5])


@pytest.fixture
def say(capsys):
    def _say(n, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    return _say


def test_c01_calibration(say):
    grid = np.linspace(-2, 2, 41)
    t0 = time.perf_counter()
    curve = homogenize(CAL, grid, (1, 2, 4, 8, 16), N=16, keep_certificates=False)
    dt = time.perf_counter() - t0
    err = float(np.max(np.abs(curve.alpha - (grid + grid**2 / 2))))
    ok = err <= 1e-3 and dt <= 60.0
    say(1, ok, f"max |alpha - (l + l^2/2)| = {err:.2e} (<= 1e-3), runtime {dt:.1f}s (<= 60s)")
    assert ok


def test_c02_pendulum_oracle(say):
    grid = np.linspace(-3, 3, 41)
    curve = homogenize(PEND, grid, (1, 2, 4, 8, 16), N=16, keep_certificates=False)
    ref = oracle_twist_alpha(PEND, grid)
    err = float(np.max(np.abs(curve.alpha - ref)))
    flat = np.abs(grid) <= 0.95 * separatrix_width()
    flat_err = float(np.max(np.abs(curve.alpha[flat] - 1.0)))
    ok = err <= 2e-2 and flat_err <= 2e-2
    say(2, ok, f"max |alpha - oracle| = {err:.2e}, flat-part error {flat_err:.2e} (<= 2e-2)")
    assert ok


def test_c03_doublewell(say):
    grid = np.linspace(-1.5, 1.5, 31)
    curve = homogenize(DW, grid, (1, 2, 4, 8, 16), N=16, keep_certificates=False)
    err = float(np.max(np.abs(curve.alpha - (grid**2 - 1) ** 2 / 4)))
    a0 = float(curve.alpha[15])
    ok = abs(a0 - 0.25) <= 1e-2 and err <= 1e-2
    say(3, ok, f"alpha(0) = {a0:.5f} (0.25 +- 1e-2), max pointwise error {err:.2e} (<= 1e-2)")
    assert ok


def test_c04_main_theorem(say):
    cases = [(PEND, "pendulum", 0.5), (PEND, "pendulum", 2.0), (DW, "double-well", 0.0),
             (DW, "double-well", 1.0)]
    bad = []
    for H, name, lam in cases:
        rep = verify_main_theorem(H, lam)
        print(f"{name} lambda={lam}\n{rep.summary()}")
        if not rep.passed:
            bad.append(f"{name}@{lam}")
    ok = not bad
    say(4, ok, "main theorem reports pass for all four cases" if ok else f"failing: {bad}")
    assert ok


@pytest.mark.parametrize("name", ["calibration", "pendulum", "double-well"])
def test_c05_inclusion(say, name):
    H = {"calibration": CAL, "pendulum": PEND, "double-well": DW}[name]
    grid = np.linspace(-2, 2, 9)
    if name == "pendulum":
        grid = np.append(grid, 4 / np.pi)
    viol = []
    for lam in grid:
        rep = inclusion_at(H, float(lam), 4, N=16)
        if not rep["ok"]:
            viol.append((float(lam), rep["distance"]))
    ok = not viol
    say(5, ok, f"{name}: {len(viol)} inclusion violations over {grid.size} classes at k=4")
    assert ok


def test_c06_adiabatic(say):
    H = models.integrable([0.0, 0.0, 0.5])
    ks = np.array([8, 16, 32, 64, 128])
    lams = 1.0 + 1.0 / ks
    _, rep = adiabatic_limit(lambda lam: H, lams, [([0.0], [l]) for l in lams], ks,
                             lambda_inf=1.0, reference=uniform_circle_measure(1.0, 512))
    d = np.array(rep["distance_to_reference"])
    slope = -np.polyfit(np.log(ks), np.log(d), 1)[0]
    C = float(np.max(d * ks))
    ok = 0.8 <= slope <= 1.2 and rep["residual_ok"]
    say(6, ok, f"fitted decay exponent {slope:.3f} (in [0.8, 1.2]), d <= {C:.3f}/k, "
               f"invariance residual {rep['invariance_residual']:.2e} <= {rep['bound']:.2e}")
    assert ok


def test_c07_suspension_roundtrip(say):
    c, _ = _chord(PEND, 2.0, 8, 32, "auto", 0)
    m0 = chord_measure(c)
    m1, red = suspend_and_reduce(suspend(m0, PEND, s_count=8), PEND)
    gap = battery_distance(m1, m0)
    rep = verify_nonautonomous(models.kicked(0.1), 1.5)
    push = rep.measured["pushforward_residual"]
    bound = rep.tolerances["pushforward"]
    ok = gap <= 1e-3 and push <= bound
    say(7, ok, f"roundtrip battery distance {gap:.2e} (<= 1e-3); kicked push-forward "
               f"residual {push:.3e} <= C/k_max = {bound:.3e}")
    assert ok


def test_c08_localize(say):
    K1 = models.bump(0.0, 0.0, 0.2, 1.0, 1.0)
    K2 = models.bump(0.5, 0.0, 0.2, 1.0, 1.0)
    rep = localize(PEND, [K1, K2])
    eta = rep.predicted["eta"]
    ints = rep.measured["integrals"]
    e1, e2 = abs(ints[0] - eta[0]), abs(eta[1])
    ok = e1 <= 1e-2 and e2 <= 1e-2
    say(8, ok, f"eta = ({eta[0]:.4f}, {eta[1]:.4f}), |int K1 dm - eta1| = {e1:.2e}, |eta2| = {e2:.2e} (<= 1e-2)")
    assert ok


def test_c09_mvz(say, rng):
    lines, ok = [], True
    # homogeneity, integrable: exact up to round-off
    hom_int = max(property_suite_mvz(CAL, lam, k, N=16)["homogeneity_defect"]
                  for lam in (-1.0, 0.3, 1.7) for k in (1, 2, 4))
    ok &= hom_int <= 1e-6
    lines.append(f"integrable homogeneity defect {hom_int:.1e} (<= 1e-6)")
    # homogeneity, pendulum: |l_2k - 2 l_k| = 2k |f_2k - f_k| against 2k C1 (tau + 1/k)
    worst = 0.0
    for lam in (0.5, 2.0, 3.0):
        for k in (1, 2, 4):
            r = property_suite_mvz(PEND, lam, k, N=16)
            worst = max(worst, r["homogeneity_defect"] / (2 * k * TOL_C1 * (1 / 16 + 1 / k)))
    ok &= worst <= 1.0
    lines.append(f"pendulum homogeneity defect / tol <= {worst:.3f}")
    # Oh-Lipschitz: 100 random perturbation pairs
    viol = 0
    for _ in range(100):
        H = PEND if rng.random() < 0.5 else models.integrable([0.0, 0.0, 0.5])
        lam = float(rng.uniform(-2.5, 2.5))
        G = models.bump(float(rng.uniform(0, 1)), float(rng.uniform(-2, 2)), 0.3, 2.0,
                        float(rng.uniform(-0.1, 0.1)))
        Hd = _keep_convexity(H, models.linear_combination([H, G], [1.0, 1.0]))
        assert Hd.convex
        a = compute_fk(H, lam, 2, N=16)
        b = compute_fk(Hd, lam, 2, N=16)
        viol += abs(a - b) > sup_difference(H, Hd, lam) + 1e-9
    ok &= viol == 0
    lines.append(f"{viol} Oh-bound violations in 100 pairs")
    # displaceable bump: -B bracketed through H_d = -B + d cos(2 pi q)
    B = models.bump(0.0, 0.0, 0.2, 0.5, 1.0)
    d = 0.01
    cos_q = models.linear_combination([PEND, models.integrable([0.0, 0.0, 0.5])], [1.0, -1.0])
    Hd = models.linear_combination([B, cos_q], [-1.0, d])
    decay = []
    for k in (1, 2, 4, 8):
        fk = compute_fk(Hd, 0.0, k, "continuation", N=16, steps=10)
        decay.append(abs(fk) + d <= 2.0 / k)
    ok &= all(decay)
    lines.append(f"displaceable -bump |f_k| + |d| <= 2 max|H|/k at k=1,2,4,8: {decay}")
    say(9, ok, "; ".join(lines))
    assert ok


def test_c10_clarke_unit(say):
    grid = np.linspace(-0.1, 0.1, 201)
    est = clarke_subdiff(grid, np.abs(grid), 0.0)
    lo, hi = est.interval
    e0 = max(abs(lo + 1), abs(hi - 1))
    f = np.sin(grid) + grid**2
    e1 = 0.0
    for x0 in (-0.05, 0.0, 0.05):
        s = clarke_subdiff(grid, f, x0)
        e1 = max(e1, s.diameter, abs(np.mean(s.interval) - (np.cos(x0) + 2 * x0)))
    e1 = max(e1, max(abs(v - 1.0) for v in clarke_subdiff(grid, grid, 0.03).interval))
    ok = e0 <= 1e-3 and e1 <= 1e-3
    say(10, ok, f"d|l|(0) endpoint error {e0:.1e}, smooth-point singleton error {e1:.1e} (<= 1e-3)")
    assert ok
