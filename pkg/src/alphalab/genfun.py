"""Broken symplectic action functionals standing in for generating functions.

For a class ``lam``, ``k`` unit time intervals split into ``N`` substeps each
(``tau = 1/N``, ``m = k N``), the discrete action is

    W(q_0, p_1, q_1, ..., p_m, q_m) =
        sum_{i<m} tau K(q_i, p_{i+1}, t_i) - p_{i+1} . (q_{i+1} - q_i)

with ``K(q, p, t) = H(q, p - ORIENTATION * lam, t)``.  Stationarity in
``p_{i+1}`` and in the interior ``q_i`` is the symplectic Euler scheme for K;
stationarity in ``q_0`` and ``q_m`` forces ``p_0 = p_m = 0``, so critical
points are discrete chords of K from the zero section to itself, and their
values are the discrete actions ``int (K - p qdot) dt`` of those chords.

Variables are stored interleaved, ``[q_0, p_1, q_1, ..., p_m, q_m]``, which
makes every Hessian banded with half-bandwidth ``2n - 1``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import conventions
from .errors import InvalidInputError, NotApplicableError
from .models import HamiltonianModel, OneFormClass, _as_class, shift_by_form

__all__ = [
    "DiscreteAction",
    "CriticalPoint",
    "build_discrete_action",
    "auto_substeps",
    "action_value",
    "action_gradient",
    "action_hessian",
    "lambda_partial",
    "critical_point",
    "polish",
    "find_critical_points",
    "maximize_reduced_action",
    "dynamic_programming_start",
    "reduced_hessian_index",
    "dedup_critical_points",
    "value_gap_to_flow",
    "critical_points_to_json",
    "critical_points_from_json",
]

DEGENERACY_THRESHOLD = 1e-8


@dataclass(frozen=True)
class DiscreteAction:
    """Finite-dimensional broken action ``W_{k, lam}`` of a Hamiltonian."""

    H: HamiltonianModel
    lam: np.ndarray
    k: int
    N: int
    orientation: int = conventions.ORIENTATION
    K: HamiltonianModel = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lam", _as_class(self.lam, self.H.dim))
        object.__setattr__(self, "K", shift_by_form(self.H, self.orientation * self.lam))

    @property
    def n(self) -> int:
        return self.H.dim

    @property
    def tau(self) -> float:
        return 1.0 / self.N

    @property
    def m(self) -> int:
        return self.k * self.N

    @property
    def size(self) -> int:
        return (2 * self.m + 1) * self.n

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.m) * self.tau

    @property
    def momentum_offset(self) -> np.ndarray:
        """Add to a momentum of K to obtain the momentum of H."""
        return -self.orientation * self.lam

    def _t(self):
        # time-independent models never see the time grid
        return self.times if self.H.time_dependent else 0.0

    # ---- packing -------------------------------------------------------
    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        n, m = self.n, self.m
        body = x[n:].reshape(m, 2, n)
        q = np.concatenate([x[:n][None], body[:, 1]], axis=0)
        return q, body[:, 0]

    def pack(self, q, p):
        q = np.asarray(q, dtype=float).reshape(self.m + 1, self.n)
        p = np.asarray(p, dtype=float).reshape(self.m, self.n)
        return np.concatenate([q[0], np.stack([p, q[1:]], axis=1).ravel()])

    def q_index(self, i: int) -> int:
        return 0 if i == 0 else self.n + (2 * i - 1) * self.n

    def p_index(self, i: int) -> int:
        return self.n + 2 * (i - 1) * self.n

    def straight_chord(self, q0) -> np.ndarray:
        """Chord of K ignoring the q-forces: ``p = 0`` and ``q`` drifting at ``dK/dp``."""
        q0 = np.broadcast_to(np.asarray(q0, dtype=float), (self.n,))
        q = np.empty((self.m + 1, self.n))
        q[0] = q0
        p = np.zeros((self.m, self.n))
        for i in range(self.m):
            t = i * self.tau
            q[i + 1] = q[i] + self.tau * self.K.grad_p(q[i], p[i], t)
        return self.pack(q, p)


def auto_substeps(H: HamiltonianModel, lam, window: float = 3.0, start: int = 16,
                  cap: int = 1024, samples: int = 64) -> int:
    """Double ``N`` from ``start`` until ``tau * max |D^2 H| < 1/2`` near ``graph(lam)``."""
    lam = _as_class(lam, H.dim)
    qs = (np.arange(samples) + 0.5) / samples
    ps = np.linspace(-window, window, samples)
    Q, P = np.meshgrid(qs, ps, indexing="ij")
    q = np.repeat(Q[..., None], H.dim, axis=-1)
    p = P[..., None] + lam
    worst = 0.0
    for t in ([0.0, 0.25, 0.5, 0.75] if H.time_dependent else [0.0]):
        hqq, hqp, hpp = H.hessian(q, p, t)
        worst = max(worst, float(np.max(np.abs(hqq))), float(np.max(np.abs(hqp))),
                    float(np.max(np.abs(hpp))))
    N = start
    while worst / N >= 0.5 and N < cap:
        N *= 2
    return N


def build_discrete_action(H: HamiltonianModel, lam, k: int, N: int | None = None,
                          orientation: int | None = None, coarse: bool = False) -> DiscreteAction:
    """Construct ``W_{k, lam}``; ``N`` defaults to :func:`auto_substeps`.

    ``N < 4`` is rejected unless ``coarse=True`` (used by the grid persistence
    backend, whose cost is exponential in the number of variables).
    """
    if isinstance(lam, OneFormClass):
        lam = lam.coeffs
    if int(k) != k or k < 1:
        raise InvalidInputError("k must be an integer >= 1")
    if N is None:
        N = auto_substeps(H, lam)
    if int(N) != N or N < 1 or (N < 4 and not coarse):
        raise InvalidInputError("N must be an integer >= 4 (or >= 1 with coarse=True)")
    if orientation is None:
        orientation = conventions.ORIENTATION
    if orientation not in (-1, 1):
        raise InvalidInputError("orientation must be +1 or -1")
    return DiscreteAction(H, lam, int(k), int(N), orientation)


# --------------------------------------------------------------------------
# value, gradient, Hessian

def action_value(W: DiscreteAction, x) -> float:
    q, p = W.unpack(x)
    kin = W.tau * np.sum(W.K(q[:-1], p, W._t()))
    return float(kin - np.sum(p * (q[1:] - q[:-1])))


def action_gradient(W: DiscreteAction, x) -> np.ndarray:
    q, p = W.unpack(x)
    tt = W._t()
    gq = np.zeros_like(q)
    gq[:-1] += W.tau * W.K.grad_q(q[:-1], p, tt) + p
    gq[1:] -= p
    gp = W.tau * W.K.grad_p(q[:-1], p, tt) - (q[1:] - q[:-1])
    return W.pack(gq, gp)


def _hessian_entries(W: DiscreteAction, x):
    """COO triplets of the Hessian (both triangles)."""
    q, p = W.unpack(x)
    n, m, tau = W.n, W.m, W.tau
    tt = W._t()
    hqq, hqp, hpp = W.K.hessian(q[:-1], p, tt)
    eye = np.eye(n)
    iq = np.array([W.q_index(i) for i in range(m + 1)])
    ip = np.array([W.p_index(i) for i in range(1, m + 1)])
    a = np.arange(n)
    rows, cols, vals = [], [], []

    def block(r0, c0, blocks, symmetric=True):
        # r0, c0: (m,) base indices; blocks: (m, n, n)
        R = (r0[:, None, None] + a[None, :, None]) + 0 * a[None, None, :]
        C = (c0[:, None, None] + a[None, None, :]) + 0 * a[None, :, None]
        rows.append(R.ravel()); cols.append(C.ravel()); vals.append(blocks.ravel())
        if symmetric:
            rows.append(C.ravel()); cols.append(R.ravel()); vals.append(blocks.ravel())

    block(iq[:-1], iq[:-1], tau * hqq, symmetric=False)
    block(iq[:-1], ip, tau * hqp + eye)
    block(iq[1:], ip, np.broadcast_to(-eye, (m, n, n)))
    block(ip, ip, tau * hpp, symmetric=False)
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def action_hessian(W: DiscreteAction, x) -> sp.csc_matrix:
    r, c, v = _hessian_entries(W, x)
    return sp.csc_matrix((v, (r, c)), shape=(W.size, W.size))


def _banded_upper(r, c, v, size, u):
    ab = np.zeros((u + 1, size))
    keep = r <= c
    np.add.at(ab, (u + r[keep] - c[keep], c[keep]), v[keep])
    return ab


def _hessian_eigenvalues(W: DiscreteAction, x, drop_q0: bool) -> np.ndarray:
    r, c, v = _hessian_entries(W, x)
    size = W.size
    if drop_q0:
        n = W.n
        keep = (r >= n) & (c >= n)
        r, c, v, size = r[keep] - n, c[keep] - n, v[keep], size - n
    u = 2 * W.n - 1
    return sla.eigvals_banded(_banded_upper(r, c, v, size, u), lower=False)


def lambda_partial(W: DiscreteAction, x) -> np.ndarray:
    """Derivative of ``W`` in the class at fixed variables.

    ``dK/dlam = -orientation * dH/dp``; at a critical point this sum equals
    ``-orientation`` times the lifted displacement ``q_m - q_0``.
    """
    q, p = W.unpack(x)
    tt = W._t()
    return -W.orientation * W.tau * np.sum(W.K.grad_p(q[:-1], p, tt), axis=0)


# --------------------------------------------------------------------------
# critical points

@dataclass
class CriticalPoint:
    """Critical point of a discrete action with its diagnostics."""

    vars: np.ndarray
    value: float
    grad_norm: float
    lambda_partial: np.ndarray
    displacement: np.ndarray
    morse_index: Optional[int] = None
    degenerate: bool = False
    min_abs_eigenvalue: Optional[float] = None
    flags: list = field(default_factory=list)
    # negative eigenvalues of the full Hessian minus ``m n``; unlike the
    # fibre index it can only change through a degenerate critical point
    full_index: Optional[int] = None

    def to_record(self) -> dict:
        return {
            "vars": self.vars.tolist(),
            "value": self.value,
            "grad_norm": self.grad_norm,
            "index": self.morse_index,
            "lambda_partial": np.asarray(self.lambda_partial).tolist(),
            "displacement": np.asarray(self.displacement).tolist(),
            "degenerate": self.degenerate,
            "flags": list(self.flags),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CriticalPoint":
        return cls(
            vars=np.asarray(rec["vars"], dtype=float),
            value=float(rec["value"]),
            grad_norm=float(rec["grad_norm"]),
            lambda_partial=np.asarray(rec["lambda_partial"], dtype=float),
            displacement=np.asarray(rec.get("displacement", rec["lambda_partial"]), dtype=float),
            morse_index=rec.get("index"),
            degenerate=bool(rec.get("degenerate", False)),
            flags=list(rec.get("flags", [])),
        )


def _canonical(W: DiscreteAction, x) -> np.ndarray:
    """Translate all base coordinates by the integer vector putting ``q_0`` in [0, 1)."""
    x = np.array(x, dtype=float)
    shift = np.floor(x[: W.n] + 1e-12)
    q, p = W.unpack(x)
    return W.pack(q - shift, p)


def critical_point(W: DiscreteAction, x, with_index: bool = True) -> CriticalPoint:
    """Evaluate a candidate critical point and its diagnostics."""
    x = _canonical(W, x)
    g = action_gradient(W, x)
    q, _ = W.unpack(x)
    cp = CriticalPoint(
        vars=x,
        value=action_value(W, x),
        grad_norm=float(np.max(np.abs(g))),
        lambda_partial=lambda_partial(W, x),
        displacement=q[-1] - q[0],
    )
    if with_index:
        (cp.morse_index, cp.degenerate, cp.min_abs_eigenvalue,
         cp.full_index) = _index_and_degeneracy(W, x)
        if cp.degenerate:
            cp.flags.append("degenerate-critical-point")
    return cp


def _index_and_degeneracy(W: DiscreteAction, x):
    ev_full = _hessian_eigenvalues(W, x, drop_q0=False)
    ev_xi = _hessian_eigenvalues(W, x, drop_q0=True)
    min_abs = float(np.min(np.abs(ev_full)))
    index = int(np.sum(ev_xi < 0)) - W.m * W.n
    full = int(np.sum(ev_full < 0)) - W.m * W.n
    return index, min_abs < DEGENERACY_THRESHOLD, min_abs, full


def reduced_hessian_index(W: DiscreteAction, cp: CriticalPoint):
    """Index of the Hessian in the fibre variables, relative to the background form.

    Returns ``(index, degenerate)``; the background quadratic form alone has
    index 0.  ``degenerate`` is set when the full Hessian has an eigenvalue of
    modulus below ``1e-8`` (e.g. along a circle of critical points).
    """
    index, degenerate, _, _ = _index_and_degeneracy(W, cp.vars)
    return index, degenerate


def polish(W: DiscreteAction, x0, tol: float = 1e-10, maxiter: int = 60,
           with_index: bool = True) -> Optional[CriticalPoint]:
    """Newton iteration on ``grad W = 0`` with a Levenberg-Marquardt fallback.

    Returns ``None`` when no critical point is reached.
    """
    x = np.array(x0, dtype=float)
    g = action_gradient(W, x)
    merit = 0.5 * float(g @ g)
    mu = 0.0
    eye = sp.identity(W.size, format="csc")
    for _ in range(maxiter):
        if np.max(np.abs(g)) < tol:
            return critical_point(W, x, with_index=with_index)
        J = action_hessian(W, x)
        step = None
        if mu == 0.0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                try:
                    step = spla.spsolve(J, -g)
                except Exception:
                    step = None
            if step is not None and not np.all(np.isfinite(step)):
                step = None
        accepted = False
        for _ in range(30):
            if step is None:
                mu = max(mu, 1e-10 * (1.0 + abs(J).max()))
                JtJ = (J @ J + mu * eye).tocsc()
                step = spla.spsolve(JtJ, -(J @ g))
            xn = x + step
            gn = action_gradient(W, xn)
            mn = 0.5 * float(gn @ gn)
            if np.isfinite(mn) and mn < merit:
                x, g, merit = xn, gn, mn
                mu = mu / 4.0 if mu > 1e-14 else 0.0
                accepted = True
                break
            step = None
            mu = max(4.0 * mu, 1e-10 * (1.0 + abs(J).max()))
        if not accepted:
            break
    if np.max(np.abs(g)) < tol:
        return critical_point(W, x, with_index=with_index)
    return None


def dedup_critical_points(W: DiscreteAction, cps: Iterable[CriticalPoint],
                          tol: float = 1e-6) -> list[CriticalPoint]:
    """Remove duplicates modulo integer translations of the base coordinates."""
    n = W.n
    qmask = W.pack(np.ones((W.m + 1, n)), np.zeros((W.m, n))).reshape(-1) > 0
    # for q-independent models critical points come in circles; keep one
    modulo_circle = W.H.q_independent and not W.H.time_dependent
    out: list[CriticalPoint] = []
    for cp in cps:
        x = _canonical(W, cp.vars)
        if modulo_circle:
            x = x - np.where(qmask, np.tile(x[:n], x.size // n), 0.0)
        for other in out:
            y = other.vars
            if modulo_circle:
                y = y - np.where(qmask, np.tile(y[:n], y.size // n), 0.0)
            d = x - y
            # q_0 near 0 and near 1 describe the same point
            shift = np.round(d[:n])
            d = d.reshape(-1, n) - np.where(qmask.reshape(-1, n), shift, 0.0)
            if np.max(np.abs(d)) < tol:
                break
        else:
            out.append(cp)
    return out


def find_critical_points(W: DiscreteAction, count: int = 8, seed: int = 0,
                         box: float = 0.5, extra_starts: Sequence = (),
                         with_index: bool = True) -> list[CriticalPoint]:
    """Multistart Newton search for critical points of ``W``.

    Starts are straight chords of K from ``count`` base points (a regular
    grid shifted by a seeded random offset), each also perturbed by seeded
    momentum noise of size ``box``; ``extra_starts`` are appended verbatim.
    Results are deduplicated and deterministic for a given seed.
    """
    if count < 1:
        raise InvalidInputError("multistart count must be >= 1")
    rng = np.random.default_rng(seed)
    offset = rng.uniform(0, 1.0 / count, size=W.n)
    starts = []
    for j in range(count):
        q0 = (j / count + offset) % 1.0
        x = W.straight_chord(q0)
        starts.append(x)
        if box > 0:
            q, p = W.unpack(x)
            noise = rng.normal(scale=box, size=p.shape)
            starts.append(W.pack(q, p + noise))
    starts.extend(np.asarray(s, dtype=float) for s in extra_starts)
    found = []
    for x0 in starts:
        cp = polish(W, x0, with_index=with_index)
        if cp is not None:
            found.append(cp)
    return dedup_critical_points(W, found)


# --------------------------------------------------------------------------
# Lagrangian reduction for fibre-convex models

def _solve_momenta(W: DiscreteAction, q, p0=None, tol=1e-13, maxiter=60):
    """Solve ``tau dK/dp(q_i, p) = q_{i+1} - q_i`` for every step."""
    n, tau = W.n, W.tau
    tt = W._t()
    dq = q[1:] - q[:-1]
    p = np.zeros_like(dq) if p0 is None else p0.copy()
    for _ in range(maxiter):
        res = tau * W.K.grad_p(q[:-1], p, tt) - dq
        if np.max(np.abs(res)) < tol * (1.0 + np.max(np.abs(dq))):
            break
        _, _, hpp = W.K.hessian(q[:-1], p, tt)
        A = tau * hpp
        if n == 1:
            a = A[:, 0, 0]
            if np.any(a <= 0):
                raise NotApplicableError("Hamiltonian is not fibre-convex along the path")
            step = res / a[:, None]
        else:
            if np.any(np.linalg.eigvalsh(A) <= 0):
                raise NotApplicableError("Hamiltonian is not fibre-convex along the path")
            step = np.linalg.solve(A, res[..., None])[..., 0]
        # keep Newton from leaping across flat regions of super-quadratic K
        big = np.max(np.abs(step), axis=-1, keepdims=True)
        limit = 1.0 + np.max(np.abs(p), axis=-1, keepdims=True)
        p = p - step * np.minimum(1.0, limit / np.maximum(big, 1e-300))
    _, _, hpp = W.K.hessian(q[:-1], p, tt)
    if np.any(np.linalg.eigvalsh(hpp) <= 0):
        raise NotApplicableError("Hamiltonian is not fibre-convex along the path")
    return p


def _reduced(W: DiscreteAction, qflat, p0=None, need_hess=True):
    """Value, gradient and banded Hessian of the reduced function ``R(q)``."""
    n, m, tau = W.n, W.m, W.tau
    q = qflat.reshape(m + 1, n)
    p = _solve_momenta(W, q, p0)
    x = W.pack(q, p)
    val = action_value(W, x)
    q_u, _ = W.unpack(action_gradient(W, x))
    grad = q_u.ravel()
    if not need_hess:
        return val, grad, None, p
    tt = W._t()
    hqq, hqp, hpp = W.K.hessian(q[:-1], p, tt)
    eye = np.eye(n)
    Ainv = np.linalg.inv(tau * hpp)
    IC = eye + tau * hqp
    diag = np.zeros((m + 1, n, n))
    diag[:-1] += tau * hqq - IC @ Ainv @ np.swapaxes(IC, -1, -2)
    diag[1:] -= Ainv
    lower = Ainv @ np.swapaxes(IC, -1, -2)  # block (q_{i+1}, q_i)
    u = 2 * n - 1
    size = (m + 1) * n
    ab = np.zeros((u + 1, size))
    a = np.arange(n)
    base = np.arange(m + 1) * n
    R = base[:, None, None] + a[None, :, None] + 0 * a[None, None, :]
    C = base[:, None, None] + a[None, None, :] + 0 * a[None, :, None]
    keep = R <= C
    np.add.at(ab, (u + R[keep] - C[keep], C[keep]), diag[keep])
    # upper block (q_i, q_{i+1}) is the transpose of `lower`
    Ru = base[:-1, None, None] + a[None, :, None] + 0 * a[None, None, :]
    Cu = base[1:, None, None] + a[None, None, :] + 0 * a[None, :, None]
    up = np.swapaxes(lower, -1, -2)
    np.add.at(ab, (u + Ru.ravel() - Cu.ravel(), Cu.ravel()), up.ravel())
    return val, grad, ab, p


def maximize_reduced_action(W: DiscreteAction, q_start, tol: float = 1e-11,
                            maxiter: int = 200) -> Optional[CriticalPoint]:
    """Local maximum of ``W`` after eliminating momenta, for fibre-convex K.

    For convex K each step momentum is a function of ``(q_i, q_{i+1})``, and
    the reduced function ``R(q) = W(q, p(q))`` has the same critical points
    and values as ``W``.  A damped Newton ascent (banded Cholesky with a
    Levenberg shift) drives ``grad R`` to zero.
    """
    n, m = W.n, W.m
    u = 2 * n - 1
    q = np.asarray(q_start, dtype=float).reshape(m + 1, n).ravel().copy()
    val, grad, ab, p = _reduced(W, q)
    mu = 0.0
    for _ in range(maxiter):
        if np.max(np.abs(grad)) < tol:
            break
        neg = -ab  # Hessian of -R, upper banded
        scale = 1.0 + np.max(np.abs(neg[u]))
        accepted = False
        for _ in range(40):
            trial = neg.copy()
            trial[u] += mu
            try:
                c = sla.cholesky_banded(trial, lower=False)
            except np.linalg.LinAlgError:
                mu = max(4.0 * mu, 1e-8 * scale)
                continue
            step = sla.cho_solve_banded((c, False), grad)
            try:
                v2, g2, ab2, p2 = _reduced(W, q + step, p)
            except NotApplicableError:
                mu = max(4.0 * mu, 1e-8 * scale)
                continue
            if v2 >= val - 1e-14 * (1.0 + abs(val)):
                q, val, grad, ab, p = q + step, v2, g2, ab2, p2
                mu = mu / 4.0 if mu > 1e-12 * scale else 0.0
                accepted = True
                break
            mu = max(4.0 * mu, 1e-8 * scale)
        if not accepted:
            break
    if np.max(np.abs(grad)) > 1e-8:
        return None
    x = W.pack(q.reshape(m + 1, n), p)
    cp = polish(W, x, with_index=False)
    return cp


def _lagrangian_table(K: HamiltonianModel, qg, vg, t, p_window):
    """``L(q, v) = max_p [p v - K(q, p, t)]`` on a grid, ``+inf`` where ``v`` is out of reach."""
    Q, V = np.meshgrid(qg, vg, indexing="ij")
    q = Q[..., None]
    p = np.zeros_like(q)
    for _ in range(80):
        res = K.grad_p(q, p, t) - V[..., None]
        _, _, hpp = K.hessian(q, p, t)
        a = hpp[..., 0, 0]
        if np.any(a <= 0):
            raise NotApplicableError("Hamiltonian is not fibre-convex on the search window")
        step = res[..., 0] / a
        p[..., 0] = np.clip(p[..., 0] - step, -p_window, p_window)
        if np.max(np.abs(step)) < 1e-12:
            break
    L = p[..., 0] * V - K(q, p, t)
    reach = np.abs(K.grad_p(q, p, t)[..., 0] - V) < 1e-8
    return np.where(reach, L, np.inf)


def dynamic_programming_start(W: DiscreteAction, p_window: float = 4.0,
                              coarse_steps: int = 16, resolution: int = 12) -> np.ndarray:
    """Approximate global maximiser of the reduced action by dynamic programming.

    The base circle is replaced by a lattice of spacing ``delta`` and time by
    ``coarse_steps`` steps per unit; each coarse step moves an integer number
    of lattice sites.  The optimal lattice path (free endpoints) is lifted,
    interpolated onto the fine time grid and returned as base coordinates
    ``q`` of shape ``(m + 1, 1)``, ready for :func:`maximize_reduced_action`.
    Only ``n = 1`` is supported.
    """
    if W.n != 1:
        raise NotApplicableError("lattice search is implemented for one degree of freedom")
    Nc = min(W.N, coarse_steps)
    if W.N % Nc:
        Nc = W.N
    tau_c = 1.0 / Nc
    G = Nc * resolution
    delta = 1.0 / G
    qg = np.arange(G) * delta
    # velocities reachable with |p| <= p_window somewhere on the circle
    probe = np.linspace(-p_window, p_window, 41)
    Qp, Pp = np.meshgrid(qg, probe, indexing="ij")
    v = W.K.grad_p(Qp[..., None], Pp[..., None], 0.0)[..., 0]
    jmin = int(np.floor(v.min() * tau_c / delta))
    jmax = int(np.ceil(v.max() * tau_c / delta))
    js = np.arange(jmin, jmax + 1)
    vg = js * delta / tau_c
    mc = W.k * Nc
    tables = {}

    def table(i):
        t = (i * tau_c) % 1.0 if W.H.time_dependent else 0.0
        key = round(t, 12)
        if key not in tables:
            tables[key] = -tau_c * _lagrangian_table(W.K, qg, vg, t, p_window)
        return tables[key]

    val = np.zeros(G)
    back = np.empty((mc, G), dtype=np.int64)
    for i in range(mc):
        r = table(i)  # (G, J): reward for leaving site g with jump js[j]
        best = np.full(G, -np.inf)
        arg = np.zeros(G, dtype=np.int64)
        for j, jump in enumerate(js):
            cand = np.roll(val + r[:, j], jump)
            better = cand > best
            best[better] = cand[better]
            arg[better] = j
        val = best
        back[i] = arg
    g = int(np.argmax(val))
    path = np.empty(mc + 1)
    sites = np.empty(mc + 1, dtype=np.int64)
    sites[mc] = g
    lift = 0.0
    path[mc] = 0.0
    for i in range(mc - 1, -1, -1):
        jump = js[back[i, sites[i + 1]]]
        sites[i] = (sites[i + 1] - jump) % G
        path[i] = path[i + 1] - jump * delta
    path += qg[sites[0]] - path[0]
    tc = np.arange(mc + 1) * tau_c
    tf = np.arange(W.m + 1) * W.tau
    return np.interp(tf, tc, path)[:, None]


# --------------------------------------------------------------------------
# serialisation

def critical_points_to_json(W: DiscreteAction, cps: Sequence[CriticalPoint]) -> str:
    payload = {
        "manifest": conventions.manifest(),
        "model": W.H.name,
        "params": W.H.params,
        "lambda": W.lam.tolist(),
        "k": W.k,
        "N": W.N,
        "orientation": W.orientation,
        "critical_points": [cp.to_record() for cp in cps],
    }
    return json.dumps(payload, indent=1, default=float)


def critical_points_from_json(text: str) -> list[CriticalPoint]:
    payload = json.loads(text)
    return [CriticalPoint.from_record(r) for r in payload["critical_points"]]


def value_gap_to_flow(W: DiscreteAction, cp: CriticalPoint, substeps: int = 8) -> float:
    """``|cp.value - action of the midpoint-integrated chord of K from (q_0, 0)|``."""
    from .models import integrate_flow

    q, _ = W.unpack(cp.vars)
    traj = integrate_flow(W.K, (q[0], np.zeros(W.n)), (0.0, float(W.k)),
                          W.tau / substeps)
    h = np.diff(traj.t)
    qm = 0.5 * (traj.q[1:] + traj.q[:-1])
    pm = 0.5 * (traj.p[1:] + traj.p[:-1])
    tm = 0.5 * (traj.t[1:] + traj.t[:-1])
    kin = W.K(qm, pm, tm if W.H.time_dependent else 0.0)
    action = float(np.sum(h * kin) - np.sum(pm * np.diff(traj.q, axis=0)))
    return abs(cp.value - action)


