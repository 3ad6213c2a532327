"""Selected critical values of discrete actions and the homogenized alpha-function.

Three selectors are provided for the class of the whole torus:

``min``
    For fibre-convex Hamiltonians the momenta can be eliminated and the
    selected value is the global maximum of the reduced action (the
    discrete Lagrangian minimiser).  Models that do not depend on ``q``
    have a single critical value and are handled for any fibre shape.
``persistence``
    Birth value of the top relative class in the sublevel filtration of
    the action, on a cubical grid.  Limited to at most four variables.
``continuation``
    Tracks the selected critical point along the straight homotopy from a
    reference Hamiltonian with a known selector.

``homogenize`` evaluates ``f_k(lam) = l(W_{k,lam}) / k`` on a grid of classes
and extrapolates ``k -> infinity``.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import conventions
from .errors import (AmbiguityError, FeasibilityError, InvalidInputError, NoCriticalPointError,
                     NotApplicableError, WindowExhaustionError)
from .genfun import (CriticalPoint, DiscreteAction, action_value, build_discrete_action,
                     critical_point, dynamic_programming_start, find_critical_points,
                     maximize_reduced_action, polish, reduced_hessian_index)
from .models import HamiltonianModel, integrable, linear_combination
from .persistence import CubicalGrid, relative_essential_classes, require_class, sinh_axis

__all__ = [
    "SpectralValue",
    "AlphaCurve",
    "spectral_invariant_min",
    "spectral_invariant_minimax",
    "spectral_invariant_continuation",
    "spectral_invariant",
    "compute_fk",
    "homogenize",
    "property_suite_mvz",
    "calibrate_orientation",
    "q_average",
    "sup_difference",
    "BACKENDS",
]

BACKENDS = ("auto", "min", "persistence", "continuation")


@dataclass
class SpectralValue:
    """A selected critical value with the critical point realising it."""

    value: float
    certificate: CriticalPoint
    method: str
    error_bar: float = 0.0
    flags: list = field(default_factory=list)

    def to_record(self) -> dict:
        return {"value": self.value, "method": self.method, "error_bar": self.error_bar,
                "flags": list(self.flags), "certificate": self.certificate.to_record()}


def _certify(W: DiscreteAction, cp: CriticalPoint, method: str, error_bar: float = 0.0,
             flags=()) -> SpectralValue:
    if cp.grad_norm > 1e-8:
        raise NoCriticalPointError(f"certificate is not critical (residual {cp.grad_norm:.2e})")
    return SpectralValue(cp.value, cp, method, float(error_bar), list(flags))


# --------------------------------------------------------------------------
# min backend

def _fibre_only_value(W: DiscreteAction, seed: int) -> SpectralValue:
    cps = find_critical_points(W, count=2, seed=seed, box=0.0)
    if not cps:
        raise NoCriticalPointError("no critical point found for a q-independent model")
    vals = np.array([c.value for c in cps])
    spread = float(np.ptp(vals))
    best = cps[int(np.argmax(vals))]
    return _certify(W, best, "min", error_bar=spread, flags=["q-independent"])


def spectral_invariant_min(W: DiscreteAction, seed: int = 0, n_starts: int = 4,
                           extra_starts: Sequence = ()) -> SpectralValue:
    """Selector for fibre-convex models: the largest critical value.

    Starts: a lattice dynamic-programming path (one degree of freedom), plus
    straight paths from ``n_starts`` base points at the drift velocity of
    ``K`` on the zero section and at rest, plus ``extra_starts`` (arrays of
    base coordinates of shape ``(m + 1, n)``).  Each start is driven to a
    local maximum of the reduced action; the largest value wins.

    Raises ``NotApplicableError`` when the fibre Hessian is not positive
    definite along some path, and ``NoCriticalPointError`` when every start
    fails.
    """
    if W.H.q_independent and not W.H.time_dependent:
        return _fibre_only_value(W, seed)
    starts = []
    if W.n == 1:
        starts.append(dynamic_programming_start(W))
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0.0, 1.0 / max(n_starts, 1), size=W.n)
    t = np.arange(W.m + 1) * W.tau
    for j in range(n_starts):
        q0 = (j / n_starts + offset) % 1.0
        v = W.K.grad_p(q0, np.zeros(W.n), 0.0)
        starts.append(q0 + t[:, None] * v)
        starts.append(np.broadcast_to(q0, (W.m + 1, W.n)).copy())
    starts.extend(np.asarray(s, dtype=float).reshape(W.m + 1, W.n) for s in extra_starts)
    best: Optional[CriticalPoint] = None
    for q in starts:
        cp = maximize_reduced_action(W, q)
        if cp is not None and (best is None or cp.value > best.value):
            best = cp
    if best is None:
        raise NoCriticalPointError("reduced-action ascent failed from every start")
    best = critical_point(W, best.vars, with_index=True)
    return _certify(W, best, "min", error_bar=10.0 * best.grad_norm * np.sqrt(W.size))


# --------------------------------------------------------------------------
# persistence backend

def _reduced_vars_to_full(W: DiscreteAction, y: np.ndarray) -> np.ndarray:
    """``(q_0, p_1, e_1, ..., p_{m-1}, e_{m-1})`` -> full variables with ``p_m = 0``."""
    m = W.m
    q = np.empty(m + 1)
    p = np.zeros(m)
    q[0] = y[0]
    for j in range(1, m):
        p[j - 1] = y[2 * j - 1]
        q[j] = q[j - 1] + y[2 * j]
    t = (m - 1) * W.tau if W.H.time_dependent else 0.0
    q[m] = q[m - 1] + W.tau * float(W.K.grad_p(q[m - 1], 0.0, t)[..., 0])
    return W.pack(q[:, None], p[:, None])


def _reduced_value(W: DiscreteAction, Y: np.ndarray) -> np.ndarray:
    """Vectorised value of the action with ``p_m = 0`` on points ``Y[..., D]``."""
    m, tau = W.m, W.tau
    shp = Y.shape[:-1]
    q = np.empty(shp + (m,))
    q[..., 0] = Y[..., 0]
    p = np.zeros(shp + (m,))
    for j in range(1, m):
        p[..., j - 1] = Y[..., 2 * j - 1]
        q[..., j] = q[..., j - 1] + Y[..., 2 * j]
    total = np.zeros(shp)
    for i in range(m):
        t = i * tau if W.H.time_dependent else 0.0
        total += tau * W.K(q[..., i], p[..., i], t)
        if i + 1 < m:
            total -= p[..., i] * (q[..., i + 1] - q[..., i])
    return total


def spectral_invariant_minimax(W: DiscreteAction, counts: Sequence[int] | None = None,
                               radius_factor: float = 4.0, seed: int = 0,
                               max_enlarge: int = 3) -> SpectralValue:
    """Selector from the sublevel persistence of the action on a cubical grid.

    The last momentum is set to zero, which removes the final base variable
    without changing critical points or values.  The remaining variables are
    the periodic ``q_0`` and ``D - 1`` fibre coordinates, written in the
    eigenbasis of the fibre Hessian of the ``q``-averaged problem and
    centred at its critical point.  The window extends in each eigen
    direction until the quadratic term exceeds ``radius_factor`` times the
    oscillation of the remainder.  ``b`` is set just above the maximum of
    the action on the exit faces (negative directions), and the selected
    value is the birth of the unique essential class of degree ``d + 1``
    in ``H_*(K, K_b)``, ``d`` the number of negative directions.

    Guards: one degree of freedom and at most four grid variables.
    """
    if W.n != 1:
        raise NotApplicableError("grid persistence is implemented for one degree of freedom")
    D = 2 * W.m - 1
    if D > 4:
        raise FeasibilityError(
            f"grid persistence needs at most 4 variables, W has {D} after reduction; "
            "use the continuation backend")
    # critical points, needed for the window checks and certificates
    cps = find_critical_points(W, count=8, seed=seed, box=0.5)
    if not cps:
        raise NoCriticalPointError("no critical points to anchor the window")
    crit_vals = np.array([c.value for c in cps])

    # centre: straight chord of the q-averaged problem
    qs = (np.arange(64) + 0.5) / 64
    drift = float(np.mean(W.K.grad_p(qs, 0.0 * qs, 0.0)))
    centre = np.zeros(D)
    centre[2::2] = W.tau * drift

    def value_at(U, basis, q0):
        Y = np.concatenate([q0[..., None], centre[1:] + U @ basis.T], axis=-1)
        return _reduced_value(W, Y)

    if D == 1:
        basis = np.zeros((0, 0))
        evals = np.zeros(0)
    else:
        h = 1e-4
        Hs = np.zeros((D - 1, D - 1))
        eye = np.eye(D - 1)
        for q0 in qs[::8]:
            for a in range(D - 1):
                for c in range(D - 1):
                    pts = np.array([centre[1:] + h * (s1 * eye[a] + s2 * eye[c])
                                    for s1, s2 in ((1, 1), (1, -1), (-1, 1), (-1, -1))])
                    Y = np.concatenate([np.full((4, 1), q0), pts], axis=1)
                    f = _reduced_value(W, Y)
                    Hs[a, c] += (f[0] - f[1] - f[2] + f[3]) / (4 * h * h)
        Hs /= len(qs[::8])
        evals, basis = np.linalg.eigh(0.5 * (Hs + Hs.T))
        if np.any(np.abs(evals) < 1e-6):
            raise NotApplicableError("fibre Hessian of the averaged action is degenerate")
    d = int(np.sum(evals < 0))

    # oscillation of the non-quadratic remainder over the base circle
    span = float(np.ptp(crit_vals)) + float(np.ptp(value_at(np.zeros((qs.size, D - 1)), basis, qs)))
    span = max(span, 1e-3)
    counts = list(counts) if counts is not None else ([256] if D == 1 else [48, 31, 31])
    if len(counts) != D:
        raise InvalidInputError(f"need {D} grid counts")
    qaxis = np.arange(counts[0]) / counts[0]
    neg = np.where(evals < 0)[0] + 1
    # every critical value lies above b; the exit faces must lie below it
    b = float(crit_vals.min()) - 0.5 * span
    base = np.sqrt(2.0 * radius_factor * span / np.maximum(np.abs(evals), 1e-12))
    scale = np.ones(D - 1)
    cls = None
    for _ in range(4 * (max_enlarge + 1)):
        radii = scale * base
        axes = [qaxis] + [sinh_axis(r, c) for r, c in zip(radii, counts[1:])]
        grid = CubicalGrid(tuple(axes))
        P = grid.points()
        vals = value_at(P[..., 1:], basis, P[..., 0])
        if neg.size:
            exit_mask = np.zeros(vals.shape, dtype=bool)
            for j in neg:
                sl = [slice(None)] * D
                sl[j] = [0, counts[j] - 1]
                exit_mask[tuple(sl)] = True
            if np.max(vals[exit_mask]) >= b:
                scale[neg - 1] *= 1.5
                continue
        try:
            cls = require_class(relative_essential_classes(vals, grid, b, d + 1), f"degree-{d + 1}")
        except WindowExhaustionError:
            scale *= 1.5
            continue
        break
    if cls is None:
        raise WindowExhaustionError("window enlargement did not isolate the selected class")

    vertex = cls.vertex
    y = np.array([ax[i] for ax, i in zip(grid.axes, vertex)])
    u = y[1:]
    y_full = np.concatenate([[y[0]], centre[1:] + basis @ u]) if D > 1 else y
    # first- and second-order variation of the sampled action at the birth vertex
    first, second = 0.0, 0.0
    for j in range(D):
        side = []
        for sgn in (-1, 1):
            idx = list(vertex)
            idx[j] = idx[j] + sgn
            if j == 0:
                idx[0] %= counts[0]
            elif not 0 <= idx[j] < counts[j]:
                continue
            side.append(vals[tuple(idx)])
        if side:
            first = max(first, float(np.max(np.abs(np.array(side) - cls.birth))))
        if len(side) == 2:
            second = max(second, 0.5 * abs(side[0] + side[1] - 2 * cls.birth))
    cert = polish(W, _reduced_vars_to_full(W, y_full))
    if cert is None or abs(cert.value - cls.birth) > 2 * first + 1e-9:
        cert = min(cps, key=lambda c: abs(c.value - cls.birth))
    err = abs(cert.value - cls.birth) + second
    return _certify(W, cert, "minimax-persistence", error_bar=err,
                    flags=[f"birth={cls.birth:.12g}", f"b={b:.6g}", f"index_shift={d}"])


# --------------------------------------------------------------------------
# continuation backend

def q_average(H: HamiltonianModel, samples: int = 256) -> HamiltonianModel:
    """Integrable reference ``hbar(p) = int_0^1 int_0^1 H(q, p, t) dq dt`` (one degree of freedom)."""
    if H.dim != 1:
        raise NotApplicableError("q-averaging is implemented for one degree of freedom")
    qs = (np.arange(samples) + 0.5) / samples
    ts = qs if H.time_dependent else np.array([0.0])

    def avg(fn, p):
        p = np.asarray(p, dtype=float)
        q = qs.reshape((-1,) + (1,) * p.ndim + (1,))
        pp = p[None, ..., None]
        return np.mean([np.mean(fn(q, pp, t), axis=0) for t in ts], axis=0)

    def func(q, p, t):
        return avg(lambda qq, pp, tt: H.func(qq, pp, tt), p[..., 0]) + 0.0 * q[..., 0]

    def dp(q, p, t):
        return avg(lambda qq, pp, tt: H.dp(qq, pp, tt)[..., 0], p[..., 0])[..., None] + 0.0 * q

    def dq(q, p, t):
        return np.zeros(np.broadcast_shapes(q.shape, p.shape))

    def hess(q, p, t):
        shape = np.broadcast_shapes(q.shape, p.shape) + (1,)
        hpp = avg(lambda qq, pp, tt: H.hessian(qq, pp, tt)[2][..., 0, 0], p[..., 0])
        z = np.zeros(shape)
        return z, z, np.broadcast_to(hpp[..., None, None], shape)

    return HamiltonianModel(f"average({H.name})", 1, func, dq, dp, hess,
                            fiber_growth=H.fiber_growth, q_independent=True, convex=H.convex,
                            params={"averaged": H.name})


def sup_difference(H: HamiltonianModel, G: HamiltonianModel, lam, p_window: float = 4.0,
                   samples: int = 128, refine: int = 4) -> float:
    """Sampled ``sup |H - G|`` over ``q`` in the circle, ``|p - lam| <= p_window`` and ``t``.

    The grid maximum is refined by ``refine`` rounds of zooming onto the best
    sample, so smooth differences are resolved to high relative accuracy.
    """
    lam = float(np.atleast_1d(lam)[0])
    ts = np.linspace(0, 1, 9)[:-1] if (H.time_dependent or G.time_dependent) else [0.0]
    best = 0.0
    for t in ts:
        qc, pc, hq, hp = 0.5, lam, 0.5, p_window
        for _ in range(refine + 1):
            qs = qc + np.linspace(-hq, hq, samples)
            ps = pc + np.linspace(-hp, hp, samples)
            Q, P = np.meshgrid(qs, ps, indexing="ij")
            D = np.abs(H(Q, P, t) - G(Q, P, t))
            i, j = np.unravel_index(np.argmax(D), D.shape)
            best = max(best, float(D[i, j]))
            qc, pc = qs[i], ps[j]
            hq, hp = 4 * hq / samples, min(4 * hp / samples, p_window - abs(ps[j] - lam) + 1e-300)
    return best


def _sup_hessian_difference(H, G, lam, p_window: float = 4.0, samples: int = 48) -> float:
    lam = float(np.atleast_1d(lam)[0])
    qs = np.arange(samples) / samples
    ps = lam + np.linspace(-p_window, p_window, samples)
    Q, P = np.meshgrid(qs, ps, indexing="ij")
    ts = np.linspace(0, 1, 5)[:-1] if (H.time_dependent or G.time_dependent) else [0.0]
    out = 0.0
    for t in ts:
        for a, b in zip(H.hessian(Q, P, t), G.hessian(Q, P, t)):
            out = max(out, float(np.max(np.abs(a - b))))
    return out


def _homotopy(W_ref: DiscreteAction, W_target: DiscreteAction, s: float) -> DiscreteAction:
    Hs = linear_combination([W_ref.H, W_target.H], [1.0 - s, s], name=f"homotopy(s={s:.4g})")
    return DiscreteAction(Hs, W_target.lam, W_target.k, W_target.N, W_target.orientation)


def spectral_invariant_continuation(W_ref: DiscreteAction, W_target: DiscreteAction,
                                    steps: int = 20, seed: int = 0,
                                    newton_tol: float = 1e-10) -> SpectralValue:
    """Follow the selected critical point along ``H_s = (1 - s) H_ref + s H_target``.

    The reference must be q-independent (its critical points form one
    circle, all at the selected level) or fibre-convex (selector from the
    min backend).  From a circle the first step keeps the largest of the
    critical points it splits into, which carries the top class.  Each
    step is a Newton correction from the previous point; the step is
    rejected with ``AmbiguityError`` when Newton fails, the index changes,
    the Hessian becomes singular, or the value jumps by more than the
    bound ``k * ds * sup|H_target - H_ref|``.  ``error_bar`` accumulates the
    value uncertainty implied by the Newton residuals.
    """
    for attr in ("k", "N", "orientation"):
        if getattr(W_ref, attr) != getattr(W_target, attr):
            raise InvalidInputError(f"reference and target disagree in {attr}")
    if not np.allclose(W_ref.lam, W_target.lam):
        raise InvalidInputError("reference and target must share the class")
    if steps < 1:
        raise InvalidInputError("steps must be >= 1")
    if W_ref.H is W_target.H:
        sv = spectral_invariant_min(W_ref, seed=seed)
        return SpectralValue(sv.value, sv.certificate, "continuation", 0.0, ["identical-endpoints"])

    sup = sup_difference(W_ref.H, W_target.H, W_ref.lam)
    k = W_ref.k
    err = 0.0
    flags = []
    svals = [j / steps for j in range(1, steps + 1)]

    def value_slack(cp):
        return cp.grad_norm * np.sqrt(cp.vars.size) * (1.0 + np.max(np.abs(cp.vars)))

    if W_ref.H.q_independent and not W_ref.H.time_dependent:
        # the split of the critical circle is perturbative only while
        # s k^2 |D^2 (H_target - H_ref)| is small; refine the first steps
        curv = _sup_hessian_difference(W_ref.H, W_target.H, W_ref.lam)
        s1 = min(svals[0], 0.05 / max(k * k * curv, 1e-300))
        head = []
        while s1 < svals[0]:
            head.append(s1)
            s1 *= 2.0
        svals = head + svals
        ref_cps = find_critical_points(W_ref, count=2, seed=seed, box=0.0)
        if not ref_cps:
            raise NoCriticalPointError("reference has no critical point")
        ref_value = ref_cps[0].value
        W1 = _homotopy(W_ref, W_target, svals[0])
        base = ref_cps[0].vars
        q, p = W_ref.unpack(base)
        starts = [W_ref.pack(q - q[0] + c, p) for c in (np.arange(16) / 16.0)]
        branches = []
        for x0 in starts:
            cp = polish(W1, x0, tol=newton_tol)
            if cp is not None:
                branches.append(cp)
        branches = _distinct(W1, branches)
        if not branches:
            raise AmbiguityError("the reference circle did not split into critical points")
        cur = max(branches, key=lambda c: c.value)
        if abs(cur.value - ref_value) > k * svals[0] * sup + 1e-9:
            raise AmbiguityError("first step left the value bracket",
                                 branches=[b.value for b in branches])
        flags.append(f"morse-bott-start({len(branches)} branches, s1={svals[0]:.3g})")
        err += value_slack(cur)
        s_prev = svals[0]
        svals = svals[1:]
        W_prev = W1
    else:
        sv = spectral_invariant_min(W_ref, seed=seed)
        cur = sv.certificate
        err += sv.error_bar
        branches = []
        s_prev = 0.0
        W_prev = W_ref
    index0 = cur.full_index
    others = [c for c in branches if c is not cur]
    for j, s in enumerate(svals):
        bracket = k * (s - s_prev) * sup
        s_prev = s
        Ws = _homotopy(W_ref, W_target, s)
        nxt = polish(Ws, cur.vars, tol=newton_tol)
        if nxt is None or nxt.degenerate or nxt.full_index != index0:
            alts = find_critical_points(Ws, count=8, seed=seed)
            near = [c.value for c in alts if abs(c.value - cur.value) <= bracket + 1e-9]
            reason = ("Newton failed" if nxt is None else
                      "degenerate Hessian" if nxt.degenerate else "index changed")
            raise AmbiguityError(f"continuation lost the branch at s={s:.4g}: {reason}",
                                 branches=near)
        if abs(nxt.value - cur.value) > bracket + 1e-9:
            raise AmbiguityError(f"value jump beyond the bracket at s={s:.4g}",
                                 branches=[cur.value, nxt.value])
        # competing branches must not cross the tracked value during the step;
        # fresh ones are continued back to the previous step for the check,
        # and a pair born during the step must not appear inside the bracket
        same = 1e-9 * (1.0 + abs(nxt.value))

        def side(a, b):
            d = a - b
            return 0 if abs(d) <= same else int(np.sign(d))

        moved = []
        for o in others:
            o2 = polish(Ws, o.vars, tol=newton_tol)
            if o2 is None or _same_point(Ws, o2, nxt):
                continue
            s_old, s_new = side(o.value, cur.value), side(o2.value, nxt.value)
            if s_old and s_new and s_old != s_new:
                raise AmbiguityError(f"branches cross at s={s:.4g}",
                                     branches=[nxt.value, o2.value])
            moved.append(o2)
        fresh = [c for c in find_critical_points(Ws, count=4, seed=seed + j + 1, with_index=False)
                 if not _same_point(Ws, c, nxt)
                 and not any(_same_point(Ws, c, o) for o in moved)]
        for c in fresh:
            back = polish(W_prev, c.vars, tol=newton_tol)
            s_new = side(c.value, nxt.value)
            if back is None:
                if s_new and abs(c.value - nxt.value) <= bracket:
                    raise AmbiguityError(f"critical points born inside the bracket at s={s:.4g}",
                                         branches=[nxt.value, c.value])
                continue
            s_old = side(back.value, cur.value)
            if s_old and s_new and s_old != s_new:
                raise AmbiguityError(f"branches cross at s={s:.4g}",
                                     branches=[nxt.value, c.value])
        others = _distinct(Ws, moved + fresh)
        cur = nxt
        W_prev = Ws
        err += value_slack(cur)
    cur = critical_point(W_target, cur.vars)
    return _certify(W_target, cur, "continuation", error_bar=err, flags=flags)


def _same_point(W, a, b, tol=1e-6):
    from .genfun import dedup_critical_points

    return len(dedup_critical_points(W, [a, b], tol=tol)) == 1


def _distinct(W, cps, tol=1e-6):
    from .genfun import dedup_critical_points

    return dedup_critical_points(W, cps, tol=tol)


# --------------------------------------------------------------------------
# dispatch

def _choose_backend(H: HamiltonianModel, backend: str) -> str:
    if backend not in BACKENDS:
        raise InvalidInputError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    if backend != "auto":
        return backend
    if (H.q_independent and not H.time_dependent) or H.convex:
        return "min"
    return "continuation"


def spectral_invariant(W: DiscreteAction, backend: str = "auto", seed: int = 0,
                       reference: HamiltonianModel | None = None, **opts) -> SpectralValue:
    """Dispatch to one of the selector backends.

    The continuation backend starts from ``reference`` (default: the
    ``q``-average of the model) and, on an ambiguity, retries ``refinements``
    times with four times as many homotopy steps before giving up.
    """
    which = _choose_backend(W.H, backend)
    if which == "min":
        return spectral_invariant_min(W, seed=seed, **opts)
    if which == "persistence":
        return spectral_invariant_minimax(W, seed=seed, **opts)
    ref = reference if reference is not None else q_average(W.H)
    W_ref = DiscreteAction(ref, W.lam, W.k, W.N, W.orientation)
    steps = opts.pop("steps", 20)
    refinements = opts.pop("refinements", 1)
    for attempt in range(refinements + 1):
        try:
            return spectral_invariant_continuation(W_ref, W, steps=steps, seed=seed, **opts)
        except AmbiguityError:
            if attempt == refinements:
                raise
            steps *= 4


def compute_fk(H: HamiltonianModel, lam, k: int, backend: str = "auto", N: int | None = None,
               seed: int = 0, return_value: bool = False, coarse: bool = False, **opts):
    """``f_k(lam) = l(W_{k, lam}) / k``; with ``return_value`` also the :class:`SpectralValue`."""
    W = build_discrete_action(H, lam, k, N, coarse=coarse)
    sv = spectral_invariant(W, backend=backend, seed=seed, **opts)
    fk = sv.value / k
    return (fk, sv) if return_value else fk


# --------------------------------------------------------------------------
# homogenization

@dataclass
class AlphaCurve:
    """Per-k normalised spectral values on a grid of classes and their extrapolation."""

    lambdas: np.ndarray
    per_k: dict
    alpha: np.ndarray
    error: np.ndarray
    lipschitz_constant: float
    convention: int
    backend: str
    N: int | None
    seed: int
    certificates: dict = field(default_factory=dict, repr=False)
    flags: list = field(default_factory=list)

    @property
    def ks(self) -> list:
        return sorted(self.per_k)

    def fk(self, k: int) -> np.ndarray:
        return self.per_k[k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda"] + [f"f_{k}" for k in self.ks] + ["alpha", "err"])
        for i, lam in enumerate(self.lambdas):
            w.writerow([repr(float(lam))] + [repr(float(self.per_k[k][i])) for k in self.ks]
                       + [repr(float(self.alpha[i])), repr(float(self.error[i]))])
        return buf.getvalue()

    def to_json(self, **extra) -> str:
        payload = {
            "manifest": conventions.manifest(orientation=self.convention, **extra),
            "backend": self.backend,
            "N": self.N,
            "seed": self.seed,
            "lambdas": [float(x) for x in self.lambdas],
            "per_k": {str(k): [float(v) for v in self.per_k[k]] for k in self.ks},
            "alpha": [float(v) for v in self.alpha],
            "error": [float(v) for v in self.error],
            "lipschitz_constant": self.lipschitz_constant,
            "flags": list(self.flags),
        }
        return json.dumps(payload, indent=1)


def extrapolate(ks: Sequence[int], values: Sequence[float]) -> tuple[float, float, bool]:
    """Extrapolate ``f_k -> f_infinity`` from a doubling schedule.

    Uses ``2 f_K - f_{K/2}`` when the last two gaps shrink by a ratio in
    ``[1/4, 3/4]`` (an ``O(1/k)`` tail), else ``f_K``.  Returns
    ``(estimate, |f_K - f_{K/2}|, richardson_used)``.
    """
    ks = list(ks)
    v = np.asarray(values, dtype=float)
    if len(ks) < 2:
        return float(v[-1]), float("nan"), False
    gap = abs(v[-1] - v[-2])
    if len(ks) >= 3 and ks[-1] == 2 * ks[-2] and ks[-2] == 2 * ks[-3]:
        prev = abs(v[-2] - v[-3])
        if prev > 0 and 0.25 <= gap / prev <= 0.75:
            return float(2 * v[-1] - v[-2]), gap, True
        if prev == 0 and gap == 0:
            return float(v[-1]), 0.0, False
    return float(v[-1]), gap, False


def homogenize(H: HamiltonianModel, lambda_grid, k_schedule: Sequence[int] = (1, 2, 4, 8, 16),
               backend: str = "auto", N: int | None = None, seed: int = 0,
               orientation: int | None = None, keep_certificates: bool = True,
               **opts) -> AlphaCurve:
    """Evaluate ``f_k`` on a grid of classes (one degree of freedom) and extrapolate.

    ``alpha`` is the extrapolation of :func:`extrapolate` per grid point and
    ``error = |f_K - f_{K/2}| + backend error bar``.  Non-monotone
    stabilisation (``max |f_2k - f_k|`` growing with ``k``) is recorded in
    ``flags`` rather than raised.
    """
    ks = [int(k) for k in k_schedule]
    if not ks or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidInputError("k_schedule must be increasing positive integers")
    lams = np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if lams.ndim != 1 or not np.all(np.isfinite(lams)):
        raise InvalidInputError("lambda_grid must be a finite 1-D array")
    if H.dim != 1:
        raise NotApplicableError("homogenize grids are one-dimensional; call compute_fk per class")
    orient = conventions.ORIENTATION if orientation is None else orientation
    if N is None:
        N = max(int(_auto_N(H, lam)) for lam in lams)
    which = _choose_backend(H, backend)
    per_k = {k: np.empty(lams.size) for k in ks}
    bars = np.zeros(lams.size)
    certs = {}
    for i, lam in enumerate(lams):
        for k in ks:
            W = DiscreteAction(H, lam, k, N, orient)
            sv = spectral_invariant(W, backend=which, seed=seed, **opts)
            per_k[k][i] = sv.value / k
            bars[i] = max(bars[i], sv.error_bar / k)
            if keep_certificates:
                certs[(k, i)] = sv
    alpha = np.empty(lams.size)
    err = np.empty(lams.size)
    for i in range(lams.size):
        a, gap, _ = extrapolate(ks, [per_k[k][i] for k in ks])
        alpha[i] = a
        err[i] = (0.0 if np.isnan(gap) else gap) + bars[i]
    flags = []
    if lams.size > 1:
        slopes = [np.max(np.abs(np.diff(per_k[k]) / np.diff(lams))) for k in ks]
        lip = float(max(slopes))
    else:
        lip = float("nan")
    diffs = [float(np.max(np.abs(per_k[b] - per_k[a]))) for a, b in zip(ks, ks[1:])]
    if any(d2 > d1 * (1 + 1e-6) + 1e-12 for d1, d2 in zip(diffs, diffs[1:])):
        flags.append("non-monotone-stabilisation")
        warnings.warn("max |f_2k - f_k| is not decreasing along the schedule", RuntimeWarning)
    return AlphaCurve(lams, per_k, alpha, err, lip, orient, which, N, seed, certs, flags)


def _auto_N(H, lam):
    from .genfun import auto_substeps

    return auto_substeps(H, lam)


# --------------------------------------------------------------------------
# properties

def property_suite_mvz(H: HamiltonianModel, lam, k: int, N: int | None = None,
                       perturbation: HamiltonianModel | None = None, delta: float = 0.01,
                       backend: str = "auto", seed: int = 0, tol: float = 1e-6) -> dict:
    """Check iterate homogeneity and the Hofer-Lipschitz bound at one class.

    * homogeneity: ``|l(W_{2k}) - 2 l(W_k)|``
    * Lipschitz: ``|f_k(H) - f_k(H + delta G)| <= delta sup|G| + tol`` for the
      given perturbation ``G`` (skipped when absent)

    Displaceable decay is checked separately with :func:`displaceable_decay`.
    """
    N = N if N is not None else _auto_N(H, lam)
    l1 = compute_fk(H, lam, k, backend, N, seed) * k
    l2 = compute_fk(H, lam, 2 * k, backend, N, seed) * 2 * k
    report = {"lambda": float(np.atleast_1d(lam)[0]), "k": k, "N": N,
              "l_k": l1, "l_2k": l2, "homogeneity_defect": abs(l2 - 2 * l1)}
    if perturbation is not None:
        Hd = linear_combination([H, perturbation], [1.0, delta])
        Hd = _keep_convexity(H, Hd)
        f0 = l1 / k
        f1 = compute_fk(Hd, lam, k, backend, N, seed)
        bound = delta * sup_difference(perturbation, _zero_like(H), lam)
        report.update({"f_k": f0, "f_k_perturbed": f1, "lipschitz_bound": bound,
                       "lipschitz_ok": bool(abs(f1 - f0) <= bound + tol)})
    return report


def _zero_like(H):
    from .models import zero

    return zero(H.dim)


def _keep_convexity(H, Hd):
    """Flag ``Hd`` convex when the fibre Hessian stays positive on a sample."""
    from dataclasses import replace

    if not H.convex:
        return Hd
    # fine enough to resolve the curvature of bumps of width >= 0.2
    qs = np.linspace(0, 1, 129)
    ps = np.linspace(-8, 8, 513)
    Q, P = np.meshgrid(qs, ps, indexing="ij")
    ts = np.linspace(0, 1, 5)[:-1] if Hd.time_dependent else [0.0]
    ok = all(np.all(Hd.hessian(Q, P, t)[2][..., 0, 0] > 0) for t in ts)
    return replace(Hd, convex=bool(ok))


def displaceable_decay(H: HamiltonianModel, lam, ks: Sequence[int] = (1, 2, 4, 8),
                       N: int = 16, backend: str = "auto", seed: int = 0) -> dict:
    """``f_k(lam)`` for a compactly supported ``H`` next to the bound ``2 max|H| / k``."""
    supH = sup_difference(H, _zero_like(H), lam, p_window=8.0)
    rows = []
    for k in ks:
        fk = compute_fk(H, lam, k, backend, N, seed)
        rows.append({"k": k, "f_k": fk, "bound": 2 * supH / k, "ok": bool(abs(fk) <= 2 * supH / k + 1e-9)})
    return {"sup_H": supH, "rows": rows, "ok": all(r["ok"] for r in rows)}


def calibrate_orientation(lam: float = 1.0, k: int = 1, N: int = 16) -> int:
    """Return the orientation for which ``h(p) = p + p^2/2`` has ``f_k(lam) = h(lam)``."""
    H = integrable([0.0, 1.0, 0.5])
    target = lam + 0.5 * lam**2
    hits = []
    for o in (-1, 1):
        W = DiscreteAction(H, lam, k, N, o)
        sv = _fibre_only_value(W, 0)
        if abs(sv.value / k - target) < 1e-9:
            hits.append(o)
    if len(hits) != 1:
        raise InvalidInputError(f"calibration fixture is ambiguous at lam={lam}: {hits}")
    return hits[0]


__all__ += ["extrapolate", "displaceable_decay"]
