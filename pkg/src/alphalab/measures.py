"""Chords, empirical measures on the cotangent bundle and their statistics.

A measure is a finite list of weighted atoms ``(q_lift, p[, s])``; keeping
the lifted base coordinate makes rotation vectors well defined without any
unwrapping.  Weak convergence is monitored through a fixed, versioned
battery of smooth test observables.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import conventions
from .errors import EscapeError, InvalidInputError, SelectorInconsistencyError
from .genfun import CriticalPoint, DiscreteAction, build_discrete_action
from .models import HamiltonianModel, integrate_flow
from .subdiff import critical_level_set

__all__ = [
    "Observable",
    "Battery",
    "default_battery",
    "Chord",
    "EmpiricalMeasure",
    "MeasureStats",
    "chord_from_critical_point",
    "extract_chords",
    "chord_measure",
    "barycenter",
    "rotation_vector",
    "action_of_measure",
    "invariance_residual",
    "closedness_residual",
    "pushforward_residual",
    "battery_moments",
    "battery_distance",
    "measure_stats",
    "adiabatic_limit",
    "suspend",
    "suspend_and_reduce",
    "rotation_vector_nonaut",
    "action_nonaut",
    "uniform_circle_measure",
    "dirac",
]

TWO_PI = 2.0 * math.pi


# --------------------------------------------------------------------------
# test observables

@dataclass(frozen=True)
class Observable:
    """Smooth function of ``(q, p)`` with its partial derivatives (arrays ``(..., n)``)."""

    name: str
    f: Callable
    fq: Callable
    fp: Callable
    base_only: bool = False


def _cutoff(p, R):
    """``chi(|p|)``: 1 on ``|p| <= R``, 0 on ``|p| >= 2R``, smooth in between; with derivative."""
    x = np.abs(p) / R - 1.0

    def psi(y):
        return np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)

    def dpsi(y):
        yy = np.where(y > 0, y, 1.0)
        return np.where(y > 0, np.exp(-1.0 / yy) / yy**2, 0.0)

    a, b = psi(1.0 - x), psi(x)
    da, db = -dpsi(1.0 - x), dpsi(x)
    s = a + b
    chi = np.where(x <= 0, 1.0, np.where(x >= 1, 0.0, a / np.where(s > 0, s, 1.0)))
    dchi_dx = np.where((x > 0) & (x < 1), (da * s - a * (da + db)) / np.where(s > 0, s, 1.0) ** 2, 0.0)
    return chi, dchi_dx * np.sign(p) / R


def _make_obs(name, g, gq, gp, i, R, base_only=False):
    """Observable ``g(q_i, p_i) * prod_j chi(p_j)`` (base observables skip the cutoff)."""
    if base_only:
        def f(q, p):
            return g(q[..., i], p[..., i])

        def fq(q, p):
            out = np.zeros(np.broadcast_shapes(q.shape, p.shape))
            out[..., i] = gq(q[..., i], p[..., i])
            return out

        def fp(q, p):
            return np.zeros(np.broadcast_shapes(q.shape, p.shape))

        return Observable(name, f, fq, fp, True)

    def chi_all(p):
        c, dc = _cutoff(p, R)
        return np.prod(c, axis=-1), c, dc

    def f(q, p):
        C, _, _ = chi_all(p)
        return g(q[..., i], p[..., i]) * C

    def fq(q, p):
        C, _, _ = chi_all(p)
        out = np.zeros(np.broadcast_shapes(q.shape, p.shape))
        out[..., i] = gq(q[..., i], p[..., i]) * C
        return out

    def fp(q, p):
        C, c, dc = chi_all(p)
        G = g(q[..., i], p[..., i])
        n = p.shape[-1]
        out = np.empty(np.broadcast_shapes(q.shape, p.shape))
        for j in range(n):
            others = np.prod(np.delete(c, j, axis=-1), axis=-1) if n > 1 else 1.0
            out[..., j] = G * dc[..., j] * others
        out[..., i] += gp(q[..., i], p[..., i]) * C
        return out

    return Observable(name, f, fq, fp, False)


@dataclass(frozen=True)
class Battery:
    version: str
    observables: tuple

    def __iter__(self):
        return iter(self.observables)

    def __len__(self):
        return len(self.observables)

    def base(self) -> "Battery":
        return Battery(self.version + ":base", tuple(o for o in self.observables if o.base_only))


def default_battery(n: int = 1, p_cutoff: float = 8.0) -> Battery:
    """Trigonometric moments in ``q`` times low powers of ``p``, cut off at ``|p| ~ p_cutoff``.

    Per coordinate: ``cos, sin`` of ``2 pi q`` (also as base observables
    without cutoff), ``p``, ``p^2``, ``p cos``, ``p sin``.
    """
    c = lambda q, p: np.cos(TWO_PI * q)
    s = lambda q, p: np.sin(TWO_PI * q)
    dc = lambda q, p: -TWO_PI * np.sin(TWO_PI * q)
    ds = lambda q, p: TWO_PI * np.cos(TWO_PI * q)
    zero = lambda q, p: np.zeros(np.broadcast_shapes(np.shape(q), np.shape(p)))
    one = lambda q, p: np.ones(np.broadcast_shapes(np.shape(q), np.shape(p)))
    obs = []
    for i in range(n):
        obs += [
            _make_obs(f"cos(2pi q{i})", c, dc, zero, i, p_cutoff, base_only=True),
            _make_obs(f"sin(2pi q{i})", s, ds, zero, i, p_cutoff, base_only=True),
            _make_obs(f"chi*cos(2pi q{i})", c, dc, zero, i, p_cutoff),
            _make_obs(f"chi*sin(2pi q{i})", s, ds, zero, i, p_cutoff),
            _make_obs(f"chi*p{i}", lambda q, p: p, zero, one, i, p_cutoff),
            _make_obs(f"chi*p{i}^2", lambda q, p: p * p, zero, lambda q, p: 2 * p, i, p_cutoff),
            _make_obs(f"chi*p{i}cos", lambda q, p: p * np.cos(TWO_PI * q),
                      lambda q, p: -TWO_PI * p * np.sin(TWO_PI * q),
                      lambda q, p: np.cos(TWO_PI * q), i, p_cutoff),
            _make_obs(f"chi*p{i}sin", lambda q, p: p * np.sin(TWO_PI * q),
                      lambda q, p: TWO_PI * p * np.cos(TWO_PI * q),
                      lambda q, p: np.sin(TWO_PI * q), i, p_cutoff),
        ]
    return Battery(f"{conventions.BATTERY_VERSION}/n={n}/R={p_cutoff:g}", tuple(obs))


# --------------------------------------------------------------------------
# measures

@dataclass
class EmpiricalMeasure:
    """Weighted atoms.  ``q`` is lifted; ``s`` (optional) is a time-circle coordinate."""

    q: np.ndarray
    p: np.ndarray
    weights: np.ndarray
    s: Optional[np.ndarray] = None

    def __post_init__(self):
        self.q = np.atleast_2d(np.asarray(self.q, dtype=float))
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.q.shape != self.p.shape or self.q.shape[0] != self.weights.size:
            raise InvalidInputError("atoms need matching q, p and weights")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvalidInputError("weights must be nonnegative and sum to 1")
        if self.s is not None:
            self.s = np.asarray(self.s, dtype=float).ravel()
            if self.s.size != self.weights.size:
                raise InvalidInputError("time coordinates must match the atoms")

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def size(self) -> int:
        return self.weights.size

    def expect(self, values) -> np.ndarray:
        """Weighted sum of per-atom values (leading axis = atoms)."""
        return np.tensordot(self.weights, np.asarray(values, dtype=float), axes=(0, 0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.n
        head = [f"q{i}" for i in range(n)] + [f"q{i}_lift" for i in range(n)] + [f"p{i}" for i in range(n)]
        if self.s is not None:
            head.append("s")
        w.writerow(head + ["weight"])
        for j in range(self.size):
            row = [repr(float(x)) for x in np.mod(self.q[j], 1.0)]
            row += [repr(float(x)) for x in self.q[j]] + [repr(float(x)) for x in self.p[j]]
            if self.s is not None:
                row.append(repr(float(self.s[j])))
            w.writerow(row + [repr(float(self.weights[j]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "EmpiricalMeasure":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        head, body = rows[0], np.array(rows[1:], dtype=float)
        n = sum(1 for h in head if h.endswith("_lift"))
        q = body[:, n:2 * n]
        p = body[:, 2 * n:3 * n]
        s = body[:, 3 * n] if "s" in head else None
        return cls(q, p, body[:, -1], s)


def dirac(q, p) -> EmpiricalMeasure:
    return EmpiricalMeasure(np.atleast_2d(q), np.atleast_2d(p), [1.0])


def uniform_circle_measure(p0, count: int = 256, q_offset: float = 0.0) -> EmpiricalMeasure:
    """Uniform measure on ``{p = p0}`` in one degree of freedom (``count`` equispaced atoms)."""
    q = (np.arange(count) + q_offset) / count
    return EmpiricalMeasure(q[:, None], np.full((count, 1), float(p0)), np.full(count, 1.0 / count))


@dataclass
class MeasureStats:
    rho: np.ndarray
    action: float
    invariance_residual: float
    closedness_residual: float
    test_battery_id: str

    def __post_init__(self):
        vals = np.r_[np.ravel(self.rho), self.action, self.invariance_residual, self.closedness_residual]
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("measure statistics must be finite")

    def to_record(self) -> dict:
        return {"rho": np.asarray(self.rho).tolist(), "action": self.action,
                "invariance_residual": self.invariance_residual,
                "closedness_residual": self.closedness_residual,
                "battery": self.test_battery_id}


def rotation_vector(m: EmpiricalMeasure, H: HamiltonianModel, t=0.0) -> np.ndarray:
    """``int dH/dp dm``."""
    return m.expect(H.grad_p(m.q, m.p, t))


def action_of_measure(m: EmpiricalMeasure, H: HamiltonianModel, t=0.0) -> float:
    """``int (H - p . dH/dp) dm``."""
    vals = H(m.q, m.p, t) - np.sum(m.p * H.grad_p(m.q, m.p, t), axis=-1)
    return float(m.expect(vals))


def _bracket(obs: Observable, H: HamiltonianModel, q, p, t=0.0):
    """Derivative of ``obs`` along the flow: ``f_q . H_p - f_p . H_q``."""
    return (np.sum(obs.fq(q, p) * H.grad_p(q, p, t), axis=-1)
            - np.sum(obs.fp(q, p) * H.grad_q(q, p, t), axis=-1))


def invariance_residual(m: EmpiricalMeasure, H: HamiltonianModel, battery: Battery | None = None,
                        t=0.0) -> float:
    """``max_f |int {f, H} dm|`` over the battery."""
    battery = battery or default_battery(m.n)
    return float(max(abs(m.expect(_bracket(o, H, m.q, m.p, t))) for o in battery))


def closedness_residual(m: EmpiricalMeasure, H: HamiltonianModel, battery: Battery | None = None,
                        t=0.0) -> float:
    """Invariance residual restricted to observables of ``q`` alone."""
    battery = (battery or default_battery(m.n)).base()
    return float(max(abs(m.expect(_bracket(o, H, m.q, m.p, t))) for o in battery))


def battery_moments(m: EmpiricalMeasure, battery: Battery | None = None) -> np.ndarray:
    battery = battery or default_battery(m.n)
    return np.array([m.expect(o.f(m.q, m.p)) for o in battery])


def battery_distance(a: EmpiricalMeasure, b: EmpiricalMeasure, battery: Battery | None = None) -> float:
    """``max_f |int f da - int f db|`` (bounded-Lipschitz surrogate)."""
    battery = battery or default_battery(a.n)
    return float(np.max(np.abs(battery_moments(a, battery) - battery_moments(b, battery))))


def pushforward_residual(m: EmpiricalMeasure, H: HamiltonianModel, T: float = 1.0,
                         tau: float = 1e-2, battery: Battery | None = None, t0: float = 0.0) -> float:
    """``max_f |int f o phi^T dm - int f dm|`` with the flow from ``t0`` to ``t0 + T``."""
    battery = battery or default_battery(m.n)
    traj = integrate_flow(H, (m.q, m.p), (t0, t0 + T), tau)
    moved = EmpiricalMeasure(traj.q[-1], traj.p[-1], m.weights)
    return battery_distance(moved, m, battery)


def measure_stats(m: EmpiricalMeasure, H: HamiltonianModel, battery: Battery | None = None) -> MeasureStats:
    battery = battery or default_battery(m.n)
    return MeasureStats(rotation_vector(m, H), action_of_measure(m, H),
                        invariance_residual(m, H, battery), closedness_residual(m, H, battery),
                        battery.version)


def barycenter(ms: Sequence[EmpiricalMeasure], r: Sequence[float]) -> EmpiricalMeasure:
    """Convex combination ``sum r_i m_i`` (atoms concatenated)."""
    r = np.asarray(r, dtype=float)
    if len(ms) == 0 or r.shape != (len(ms),):
        raise InvalidInputError("one weight per measure is required")
    if np.any(r < 0) or abs(r.sum() - 1.0) > 1e-12:
        raise InvalidInputError("barycentric weights must be nonnegative and sum to 1")
    keep = [(mi, ri) for mi, ri in zip(ms, r) if ri > 0]
    q = np.concatenate([mi.q for mi, _ in keep])
    p = np.concatenate([mi.p for mi, _ in keep])
    w = np.concatenate([ri * mi.weights for mi, ri in keep])
    w = w / w.sum()
    s = None
    if all(mi.s is not None for mi, _ in keep):
        s = np.concatenate([mi.s for mi, _ in keep])
    return EmpiricalMeasure(q, p, w, s)


# --------------------------------------------------------------------------
# chords

@dataclass
class Chord:
    """Discrete chord of ``H`` from the graph of ``lam`` back to it after time ``k``.

    ``q`` (lifted) and ``p`` are the samples in the coordinates of ``H``:
    ``q[i]`` at time ``i tau`` and ``p[i]`` the momentum carried by the step
    ``i-1 -> i`` (``p[0] = p[m] = lam`` at a critical point).  ``action`` is
    ``int (H - p qdot) dt`` along the chord.
    """

    q: np.ndarray
    p: np.ndarray
    times: np.ndarray
    lam: np.ndarray
    k: int
    tau: float
    action: float
    displacement: np.ndarray
    value: float
    time_dependent: bool = False
    certificate: Optional[CriticalPoint] = field(default=None, repr=False)

    @property
    def m(self) -> int:
        return self.q.shape[0] - 1

    def endpoint_error(self) -> float:
        return float(max(np.max(np.abs(self.p[0] - self.lam)), np.max(np.abs(self.p[-1] - self.lam))))


def chord_from_critical_point(W: DiscreteAction, cp: CriticalPoint) -> Chord:
    q, pk = W.unpack(cp.vars)
    off = W.momentum_offset
    p = np.concatenate([np.zeros((1, W.n)), pk], axis=0) + off
    dq = np.diff(q, axis=0)
    tt = W.times if W.H.time_dependent else 0.0
    action = float(W.tau * np.sum(W.H(q[:-1], p[1:], tt)) - np.sum(p[1:] * dq))
    return Chord(q, p, np.arange(W.m + 1) * W.tau, W.lam.copy(), W.k, W.tau, action,
                 q[-1] - q[0], cp.value, W.H.time_dependent, cp)


def extract_chords(H: HamiltonianModel, lam, k: int, f_value: float, delta: float | None = None,
                   N: int | None = None, certificate: CriticalPoint | None = None,
                   seed: int = 0, count: int = 8, W: DiscreteAction | None = None) -> list[Chord]:
    """Chords in the critical level ``k f_value`` of ``W_{k, lam}``.

    Each chord satisfies ``action = -<lam, displacement> + k f_value`` within
    ``delta``; the certificate (when given) must be among them.
    """
    W = W if W is not None else build_discrete_action(H, lam, k, N)
    level = critical_level_set(W, f_value, delta, certificate=certificate, count=count, seed=seed)
    chords = []
    for cp in level.points:
        c = chord_from_critical_point(W, cp)
        target = -float(np.dot(W.lam, c.displacement)) + k * f_value
        if abs(c.action - target) > level.delta + 1e-9 * (1 + abs(target)):
            raise SelectorInconsistencyError(
                f"chord action {c.action:.12g} misses its level {target:.12g}")
        chords.append(c)
    if certificate is not None:
        ok = any(np.allclose(_mod_q(W, c.certificate.vars), _mod_q(W, certificate.vars), atol=1e-6)
                 for c in chords)
        if not ok:
            raise SelectorInconsistencyError("the selector certificate is not among the extracted chords")
    return chords


def _mod_q(W, x):
    from .genfun import _canonical

    return _canonical(W, x)


def chord_measure(c: Chord, rule: str = "midpoint") -> EmpiricalMeasure:
    """Time average along a chord with weight ``1/m`` per step.

    ``rule="midpoint"`` pairs ``q[i]`` with ``(p[i] + p[i+1]) / 2`` (both at
    time ``i tau`` to second order); ``"left"`` pairs it with ``p[i+1]``, the
    momentum used by the step, which reproduces ``displacement / k`` exactly
    as the rotation vector.
    """
    m = c.m
    if rule == "midpoint":
        p = 0.5 * (c.p[:-1] + c.p[1:])
    elif rule == "left":
        p = c.p[1:]
    else:
        raise InvalidInputError(f"unknown quadrature rule {rule!r}")
    s = np.mod(c.times[:-1], 1.0) if c.time_dependent else None
    return EmpiricalMeasure(c.q[:-1].copy(), p, np.full(m, 1.0 / m), s)


# --------------------------------------------------------------------------
# adiabatic limits

def adiabatic_limit(flow_family: Callable[[float], HamiltonianModel], lambda_seq, x_seq, k_seq,
                    battery: Battery | None = None, lambda_inf: float | None = None,
                    reference: EmpiricalMeasure | None = None, tau: float = 0.01,
                    escape_radius: float = 1e3, C: float | None = None):
    """Orbit measures ``nu_k`` of ``x_k`` under the flow of ``flow_family(lambda_k)``.

    ``nu_k`` averages the orbit over ``[0, k]`` (trapezoid rule in time).
    Returns ``(nu_last, report)``; the report holds the Cauchy table of
    battery distances between consecutive measures, the distances to
    ``reference`` when given, and the invariance residual of the last measure
    for the limiting flow with the bound ``C / k_last`` (``C`` defaults to
    twice the largest sup-norm of a battery observable on the atoms).
    """
    lams = [float(l) for l in lambda_seq]
    ks = [float(k) for k in k_seq]
    if not (len(lams) == len(ks) == len(x_seq)) or len(ks) == 0:
        raise InvalidInputError("lambda_seq, x_seq and k_seq must have equal nonzero length")
    lam_inf = lams[-1] if lambda_inf is None else float(lambda_inf)
    measures = []
    for lam, x, k in zip(lams, x_seq, ks):
        H = flow_family(lam)
        traj = integrate_flow(H, x, (0.0, k), tau, escape_radius=escape_radius)
        if traj.escaped:
            raise EscapeError(f"orbit left |p| <= {escape_radius:g} for lambda={lam:g}")
        q = traj.q.reshape(traj.q.shape[0], -1)
        p = traj.p.reshape(traj.p.shape[0], -1)
        w = np.full(q.shape[0], 1.0)
        w[0] = w[-1] = 0.5
        measures.append(EmpiricalMeasure(q, p, w / w.sum()))
    battery = battery or default_battery(measures[0].n)
    cauchy = [battery_distance(a, b, battery) for a, b in zip(measures, measures[1:])]
    report = {"k": ks, "lambda": lams, "cauchy": cauchy, "battery": battery.version}
    if reference is not None:
        report["distance_to_reference"] = [battery_distance(mu, reference, battery) for mu in measures]
    last = measures[-1]
    res = invariance_residual(last, flow_family(lam_inf), battery)
    if C is None:
        C = 2.0 * max(float(np.max(np.abs(o.f(last.q, last.p)))) for o in battery)
    report.update({"invariance_residual": res, "bound": C / ks[-1],
                   "residual_ok": bool(res <= C / ks[-1])})
    if len(cauchy) >= 2 and cauchy[-1] > cauchy[0] * 1.5 + 1e-12:
        report["warning"] = "battery distances are not decreasing"
        warnings.warn("adiabatic sequence does not look Cauchy", RuntimeWarning)
    return last, report


# --------------------------------------------------------------------------
# suspension and reduction for time-periodic Hamiltonians

def _flow_points(H, q, p, t0, t1, tau):
    if t1 == t0:
        return q, p
    traj = integrate_flow(H, (q, p), (t0, t1), tau)
    return traj.q[-1], traj.p[-1]


def suspend(m: EmpiricalMeasure, H: HamiltonianModel, s_count: int = 16, tau: float = 0.005) -> EmpiricalMeasure:
    """``nu`` on ``T*M x S^1`` with ``int G dnu = int_0^1 int G(phi_s x, s) dm ds`` (midpoint rule in ``s``)."""
    ss = (np.arange(s_count) + 0.5) / s_count
    qs, ps, ws, sv = [], [], [], []
    for s in ss:
        q, p = _flow_points(H, m.q, m.p, 0.0, float(s), tau)
        qs.append(q)
        ps.append(p)
        ws.append(m.weights / s_count)
        sv.append(np.full(m.size, s))
    return EmpiricalMeasure(np.concatenate(qs), np.concatenate(ps), np.concatenate(ws), np.concatenate(sv))


def suspend_and_reduce(nu: EmpiricalMeasure, H: HamiltonianModel, tau: float = 0.005,
                       marginal_bins: int = 8, marginal_tol: float = 0.05,
                       battery: Battery | None = None, check_identity: bool = True):
    """Pull atoms back to the time-0 fibre and forget ``s``.

    Each atom ``(x, s)`` becomes ``phi_s^{-1} x`` where ``phi_s`` is the flow
    of ``H`` from time 0 to ``s``.  Returns ``(m, report)``.  The report has
    the largest deviation of the ``s``-marginal from uniform (binned) and,
    with ``check_identity``, the battery discrepancy in
    ``int G dnu = int_0^1 int G(phi_s x, s) dm ds`` for ``G = f`` and
    ``G = f cos(2 pi s)``.
    """
    if nu.s is None:
        raise InvalidInputError("suspension measures need a time coordinate")
    s = np.mod(nu.s, 1.0)
    q = np.empty_like(nu.q)
    p = np.empty_like(nu.p)
    for sv in np.unique(s):
        sel = s == sv
        q[sel], p[sel] = _flow_points(H, nu.q[sel], nu.p[sel], float(sv), 0.0, tau)
    m = EmpiricalMeasure(q, p, nu.weights.copy())
    hist, _ = np.histogram(s, bins=marginal_bins, range=(0.0, 1.0), weights=nu.weights)
    dev = float(np.max(np.abs(hist * marginal_bins - 1.0)))
    report = {"marginal_deviation": dev, "marginal_ok": dev <= marginal_tol}
    if dev > marginal_tol:
        report["warning"] = "non-uniform time marginal"
        warnings.warn("time marginal of the suspension measure is not uniform", RuntimeWarning)
    if check_identity:
        battery = battery or default_battery(m.n)
        lhs, rhs = _identity_sides(nu, m, H, battery, tau, np.unique(s))
        report["identity_error"] = float(np.max(np.abs(lhs - rhs)))
    return m, report


def _identity_sides(nu, m, H, battery, tau, s_values):
    def G_moments(qq, pp, ss, w):
        out = []
        for o in battery:
            v = o.f(qq, pp)
            out.append(np.sum(w * v))
            out.append(np.sum(w * v * np.cos(2 * np.pi * ss)))
        return np.array(out)

    lhs = G_moments(nu.q, nu.p, np.mod(nu.s, 1.0), nu.weights)
    # right side: same s-quadrature as nu (its distinct time values, equally weighted)
    rhs = np.zeros_like(lhs)
    for sv in s_values:
        qq, pp = _flow_points(H, m.q, m.p, 0.0, float(sv), tau)
        rhs += G_moments(qq, pp, np.full(m.size, sv), m.weights) / len(s_values)
    return lhs, rhs


def _time_one_trajectories(m: EmpiricalMeasure, H: HamiltonianModel, tau: float):
    return integrate_flow(H, (m.q, m.p), (0.0, 1.0), tau)


def rotation_vector_nonaut(m: EmpiricalMeasure, H: HamiltonianModel, tau: float = 0.005) -> np.ndarray:
    """Average lifted displacement of the atoms over one period."""
    traj = _time_one_trajectories(m, H, tau)
    return m.expect(traj.q[-1] - traj.q[0])


def action_nonaut(m: EmpiricalMeasure, H: HamiltonianModel, tau: float = 0.005) -> float:
    """``int int_0^1 (H_t - p . dH_t/dp)(phi^t x) dt dm`` (trapezoid rule in ``t``)."""
    traj = _time_one_trajectories(m, H, tau)
    vals = np.stack([H(traj.q[j], traj.p[j], traj.t[j])
                     - np.sum(traj.p[j] * H.grad_p(traj.q[j], traj.p[j], traj.t[j]), axis=-1)
                     for j in range(traj.t.size)])
    per_atom = trapezoid(vals, traj.t, axis=0)
    return float(m.expect(per_atom))


def stats_to_json(stats: MeasureStats, **extra) -> str:
    return json.dumps({"manifest": conventions.manifest(**extra), "stats": stats.to_record()}, indent=1)


__all__ += ["stats_to_json"]
