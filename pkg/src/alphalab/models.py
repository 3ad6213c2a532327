"""Hamiltonians on the cotangent bundle of the torus and their flows.

Points are stored with the base coordinate lifted to the universal cover, so
rotation numbers never need unwrapping.  All arrays carry a trailing axis of
length ``n`` (the base dimension); batch axes come first.

Conventions: the Liouville form is ``p dq``, the Hamiltonian vector field is
``X_H = (dH/dp, -dH/dq)`` and the action of a path is ``int (H - p qdot) dt``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IntegrationError, InvalidInputError

TWO_PI = 2.0 * math.pi

__all__ = [
    "CotangentPoint",
    "HamiltonianModel",
    "OneFormClass",
    "PerturbedFamily",
    "Trajectory",
    "as_coords",
    "shift_by_form",
    "linear_combination",
    "hamiltonian_vector_field",
    "integrate_flow",
    "check_geometrically_bounded",
    "perturbed_eval",
    "integrable",
    "pendulum",
    "doublewell_p",
    "kicked",
    "bump",
    "cosine_perturbation",
    "tabulated",
    "zero",
    "make_model",
    "MODEL_REGISTRY",
]


def as_coords(x, n: int) -> np.ndarray:
    """Return ``x`` as a float array whose last axis has length ``n``.

    For ``n == 1`` a bare scalar or an array not ending in a length-1 axis is
    interpreted as a batch of one-dimensional coordinates.
    """
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return x[..., None]
    if x.shape[-1] != n:
        raise InvalidInputError(f"expected trailing dimension {n}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class CotangentPoint:
    """A point of T*T^n with its base coordinate lifted to R^n."""

    q_lift: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q_lift", np.atleast_1d(np.asarray(self.q_lift, dtype=float)))
        object.__setattr__(self, "p", np.atleast_1d(np.asarray(self.p, dtype=float)))
        if self.q_lift.shape != self.p.shape:
            raise InvalidInputError("q and p must have the same shape")

    @property
    def q(self) -> np.ndarray:
        return np.mod(self.q_lift, 1.0)

    @property
    def n(self) -> int:
        return self.q_lift.shape[-1]


@dataclass(frozen=True)
class OneFormClass:
    """Cohomology class sum_i lambda_i dq_i on T^n."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or not np.all(np.isfinite(c)):
            raise InvalidInputError("one-form coefficients must be a finite vector")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]


def _as_class(lam, n: int) -> np.ndarray:
    if isinstance(lam, OneFormClass):
        lam = lam.coeffs
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (n,):
        raise InvalidInputError(f"class of dimension {lam.shape} does not match base dimension {n}")
    if not np.all(np.isfinite(lam)):
        raise InvalidInputError("class coefficients must be finite")
    return lam


@dataclass(frozen=True)
class HamiltonianModel:
    """A Hamiltonian ``H(q, p, t)`` with exact first partials.

    ``func`` maps arrays ``q, p`` of shape ``(..., n)`` and a time ``t`` to
    energies of shape ``(...)``; ``dq`` and ``dp`` return arrays of shape
    ``(..., n)``.  ``hess`` is optional and returns ``(H_qq, H_qp, H_pp)``
    with ``H_qp[..., a, b] = d^2H / dq_a dp_b``; when absent, second
    derivatives are taken by central differences of the exact gradients.
    """

    name: str
    dim: int
    func: Callable
    dq: Callable
    dp: Callable
    hess: Optional[Callable] = None
    time_dependent: bool = False
    fiber_growth: str = "quadratic"
    q_independent: bool = False
    convex: bool = False
    params: dict = field(default_factory=dict)

    def _args(self, q, p):
        q = as_coords(q, self.dim)
        p = as_coords(p, self.dim)
        return q, p

    def __call__(self, q, p, t=0.0):
        q, p = self._args(q, p)
        return np.asarray(self.func(q, p, t), dtype=float)

    energy = __call__

    def grad_q(self, q, p, t=0.0):
        q, p = self._args(q, p)
        return np.broadcast_to(np.asarray(self.dq(q, p, t), dtype=float),
                               np.broadcast_shapes(q.shape, p.shape))

    def grad_p(self, q, p, t=0.0):
        q, p = self._args(q, p)
        return np.broadcast_to(np.asarray(self.dp(q, p, t), dtype=float),
                               np.broadcast_shapes(q.shape, p.shape))

    def hessian(self, q, p, t=0.0):
        q, p = self._args(q, p)
        shape = np.broadcast_shapes(q.shape, p.shape)
        q = np.broadcast_to(q, shape)
        p = np.broadcast_to(p, shape)
        if self.hess is not None:
            hqq, hqp, hpp = self.hess(q, p, t)
            full = shape + (self.dim,)
            return (np.broadcast_to(hqq, full), np.broadcast_to(hqp, full),
                    np.broadcast_to(hpp, full))
        return _fd_hessian(self, q, p, t)


def _fd_hessian(H: HamiltonianModel, q, p, t, h=1e-5):
    n = H.dim
    hqq = np.empty(q.shape + (n,))
    hqp = np.empty(q.shape + (n,))
    hpp = np.empty(q.shape + (n,))
    for b in range(n):
        e = np.zeros(n)
        e[b] = h
        gq_plus, gq_minus = H.dq(q + e, p, t), H.dq(q - e, p, t)
        gp_plus, gp_minus = H.dp(q, p + e, t), H.dp(q, p - e, t)
        gq_pplus, gq_pminus = H.dq(q, p + e, t), H.dq(q, p - e, t)
        hqq[..., :, b] = (gq_plus - gq_minus) / (2 * h)
        hpp[..., :, b] = (gp_plus - gp_minus) / (2 * h)
        hqp[..., :, b] = (gq_pplus - gq_pminus) / (2 * h)
    hqq = 0.5 * (hqq + np.swapaxes(hqq, -1, -2))
    hpp = 0.5 * (hpp + np.swapaxes(hpp, -1, -2))
    return hqq, hqp, hpp


# --------------------------------------------------------------------------
# derived models

def shift_by_form(H: HamiltonianModel, a) -> HamiltonianModel:
    """Return ``K(q, p, t) = H(q, p - lambda, t)`` for the class ``a``."""
    lam = _as_class(a, H.dim)
    if not np.any(lam):
        return H
    hess = None
    if H.hess is not None:
        hess = lambda q, p, t: H.hess(q, p - lam, t)  # noqa: E731
    return replace(
        H,
        name=f"{H.name}|shift{lam.tolist()}",
        func=lambda q, p, t: H.func(q, p - lam, t),
        dq=lambda q, p, t: H.dq(q, p - lam, t),
        dp=lambda q, p, t: H.dp(q, p - lam, t),
        hess=hess,
        params={**H.params, "shift": lam.tolist()},
    )


def linear_combination(models: Sequence[HamiltonianModel], weights: Sequence[float],
                       name: str | None = None) -> HamiltonianModel:
    """Pointwise ``sum_i w_i H_i`` with exact partials."""
    models = list(models)
    weights = [float(w) for w in weights]
    if len(models) != len(weights) or not models:
        raise InvalidInputError("need one weight per model")
    n = models[0].dim
    if any(m.dim != n for m in models):
        raise InvalidInputError("all models must share the base dimension")
    pairs = [(m, w) for m, w in zip(models, weights) if w != 0.0]
    if not pairs:
        return zero(n)

    def func(q, p, t):
        return sum(w * m.func(q, p, t) for m, w in pairs)

    def dq(q, p, t):
        return sum(w * np.asarray(m.dq(q, p, t)) for m, w in pairs)

    def dp(q, p, t):
        return sum(w * np.asarray(m.dp(q, p, t)) for m, w in pairs)

    hess = None
    if all(m.hess is not None for m, _ in pairs):
        def hess(q, p, t):
            parts = [(m.hess(q, p, t), w) for m, w in pairs]
            shape = np.broadcast_shapes(q.shape, p.shape) + (n,)
            return tuple(
                sum(w * np.broadcast_to(h[j], shape) for h, w in parts) for j in range(3)
            )

    growth = {m.fiber_growth for m, _ in pairs}
    return HamiltonianModel(
        name=name or "+".join(f"{w:g}*{m.name}" for m, w in pairs),
        dim=n,
        func=func,
        dq=dq,
        dp=dp,
        hess=hess,
        time_dependent=any(m.time_dependent for m, _ in pairs),
        fiber_growth=growth.pop() if len(growth) == 1 else "mixed",
        q_independent=all(m.q_independent for m, _ in pairs),
        convex=False,
        params={"components": [m.name for m, _ in pairs], "weights": [w for _, w in pairs]},
    )


# --------------------------------------------------------------------------
# model zoo

def zero(n: int = 1) -> HamiltonianModel:
    def func(q, p, t):
        return np.zeros(np.broadcast_shapes(q.shape, p.shape)[:-1])

    def grad(q, p, t):
        return np.zeros(np.broadcast_shapes(q.shape, p.shape))

    def hess(q, p, t):
        z = np.zeros(np.broadcast_shapes(q.shape, p.shape) + (n,))
        return z, z, z

    return HamiltonianModel("zero", n, func, grad, grad, hess, fiber_growth="compactly-supported",
                            q_independent=True)


def integrable(h_poly_coeffs: Sequence[float]) -> HamiltonianModel:
    """``H = h(p) = sum_j c_j p^j`` on T*T^1 (coefficients in increasing degree)."""
    c = np.asarray(h_poly_coeffs, dtype=float)
    poly = np.polynomial.Polynomial(c)
    d1, d2 = poly.deriv(1), poly.deriv(2)
    deg = len(np.trim_zeros(c, "b")) - 1
    convex = deg >= 2 and bool(np.all(d2(np.linspace(-50.0, 50.0, 20001)) > 0))

    def func(q, p, t):
        return poly(p[..., 0]) + 0.0 * q[..., 0]

    def dq(q, p, t):
        return np.zeros(np.broadcast_shapes(q.shape, p.shape))

    def dp(q, p, t):
        return d1(p) + 0.0 * q

    def hess(q, p, t):
        shape = np.broadcast_shapes(q.shape, p.shape) + (1,)
        z = np.zeros(shape)
        return z, z, np.broadcast_to(d2(p)[..., None], shape)

    growth = "quadratic" if deg == 2 else f"polynomial-degree-{deg}"
    return HamiltonianModel("integrable", 1, func, dq, dp, hess, fiber_growth=growth,
                            q_independent=True, convex=bool(convex),
                            params={"h_poly_coeffs": c.tolist()})


def pendulum(amplitude: float = 1.0) -> HamiltonianModel:
    """``H = p^2/2 + a cos(2 pi q)``; the maximum of the potential sits at ``q = 0``."""
    a = float(amplitude)

    def func(q, p, t):
        return 0.5 * p[..., 0] ** 2 + a * np.cos(TWO_PI * q[..., 0])

    def dq(q, p, t):
        return -a * TWO_PI * np.sin(TWO_PI * q) + 0.0 * p

    def dp(q, p, t):
        return p + 0.0 * q

    def hess(q, p, t):
        shape = np.broadcast_shapes(q.shape, p.shape) + (1,)
        hqq = np.broadcast_to((-a * TWO_PI**2 * np.cos(TWO_PI * q))[..., None], shape)
        return hqq, np.zeros(shape), np.ones(shape)

    return HamiltonianModel("pendulum", 1, func, dq, dp, hess, convex=True,
                            params={"amplitude": a})


def doublewell_p(epsilon: float = 0.0) -> HamiltonianModel:
    """Non-convex ``H = (p^2 - 1)^2 / 4 + eps cos(2 pi q)``."""
    eps = float(epsilon)

    def func(q, p, t):
        return 0.25 * (p[..., 0] ** 2 - 1.0) ** 2 + eps * np.cos(TWO_PI * q[..., 0])

    def dq(q, p, t):
        return -eps * TWO_PI * np.sin(TWO_PI * q) + 0.0 * p

    def dp(q, p, t):
        return p * (p**2 - 1.0) + 0.0 * q

    def hess(q, p, t):
        shape = np.broadcast_shapes(q.shape, p.shape) + (1,)
        hqq = np.broadcast_to((-eps * TWO_PI**2 * np.cos(TWO_PI * q))[..., None], shape)
        hpp = np.broadcast_to((3 * p**2 - 1.0)[..., None], shape)
        return hqq, np.zeros(shape), hpp

    return HamiltonianModel("doublewell_p", 1, func, dq, dp, hess,
                            fiber_growth="polynomial-degree-4", q_independent=(eps == 0.0),
                            params={"epsilon": eps})


def kicked(amplitude: float = 0.1, kick: Callable | None = None) -> HamiltonianModel:
    """``H = p^2/2 + kick(t) cos(2 pi q)``, one-periodic in ``t``.

    The default kick profile is ``amplitude * (1 + cos 2 pi t)``.
    """
    a = float(amplitude)
    if kick is None:
        def kick(t):
            return a * (1.0 + np.cos(TWO_PI * np.asarray(t, dtype=float)))

    def func(q, p, t):
        return 0.5 * p[..., 0] ** 2 + kick(t) * np.cos(TWO_PI * q[..., 0])

    def dq(q, p, t):
        return -np.asarray(kick(t))[..., None] * TWO_PI * np.sin(TWO_PI * q) + 0.0 * p

    def dp(q, p, t):
        return p + 0.0 * q

    def hess(q, p, t):
        shape = np.broadcast_shapes(q.shape, p.shape) + (1,)
        k = np.asarray(kick(t))[..., None, None]
        hqq = np.broadcast_to(-k * TWO_PI**2 * np.cos(TWO_PI * q)[..., None], shape)
        return hqq, np.zeros(shape), np.ones(shape)

    return HamiltonianModel("kicked", 1, func, dq, dp, hess, time_dependent=True, convex=True,
                            params={"amplitude": a})


def _bump1d(x):
    """C-infinity bump with value 1 at 0, supported on (-1, 1); returns (phi, phi', phi'')."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    xs = np.where(inside, x, 0.0)
    s = 1.0 - xs**2
    phi = np.where(inside, np.exp(1.0 - 1.0 / s), 0.0)
    g = -2.0 * xs / s**2
    gp = -(2.0 + 6.0 * xs**2) / s**3
    return phi, np.where(inside, phi * g, 0.0), np.where(inside, phi * (g**2 + gp), 0.0)


def bump(center_q: float = 0.0, center_p: float = 0.0, width_q: float = 0.2,
         width_p: float = 0.5, height: float = 1.0) -> HamiltonianModel:
    """Compactly supported ``height * phi((q-q0)/wq) * phi((p-p0)/wp)`` on T*T^1.

    ``phi`` is the standard smooth bump normalised to ``phi(0) = 1``; the
    q-offset is wrapped to ``[-1/2, 1/2)`` so ``width_q < 1/2`` is required.
    """
    if not 0 < width_q < 0.5 or width_p <= 0:
        raise InvalidInputError("bump widths must satisfy 0 < width_q < 1/2, width_p > 0")
    cq, cp, wq, wp, h = map(float, (center_q, center_p, width_q, width_p, height))

    def parts(q, p):
        dqv = (q[..., 0] - cq + 0.5) % 1.0 - 0.5
        a, a1, a2 = _bump1d(dqv / wq)
        b, b1, b2 = _bump1d((p[..., 0] - cp) / wp)
        return a, a1 / wq, a2 / wq**2, b, b1 / wp, b2 / wp**2

    def func(q, p, t):
        a, _, _, b, _, _ = parts(q, p)
        return h * a * b

    def dq(q, p, t):
        a, a1, _, b, _, _ = parts(q, p)
        return (h * a1 * b)[..., None]

    def dp(q, p, t):
        a, _, _, b, b1, _ = parts(q, p)
        return (h * a * b1)[..., None]

    def hess(q, p, t):
        a, a1, a2, b, b1, b2 = parts(q, p)
        return ((h * a2 * b)[..., None, None], (h * a1 * b1)[..., None, None],
                (h * a * b2)[..., None, None])

    return HamiltonianModel("bump", 1, func, dq, dp, hess, fiber_growth="compactly-supported",
                            params=dict(center_q=cq, center_p=cp, width_q=wq, width_p=wp,
                                        height=h))


def cosine_perturbation(epsilon: float = 0.05, width_p: float = 8.0) -> HamiltonianModel:
    """``eps cos(2 pi q) phi(p / width_p)`` with the smooth bump ``phi`` (so ``sup = |eps|``)."""
    eps, wp = float(epsilon), float(width_p)
    if wp <= 0:
        raise InvalidInputError("width_p must be positive")

    def parts(q, p):
        b, b1, b2 = _bump1d(p[..., 0] / wp)
        return np.cos(TWO_PI * q[..., 0]), np.sin(TWO_PI * q[..., 0]), b, b1 / wp, b2 / wp**2

    def func(q, p, t):
        c, _, b, _, _ = parts(q, p)
        return eps * c * b

    def dq(q, p, t):
        _, s, b, _, _ = parts(q, p)
        return (-eps * TWO_PI * s * b)[..., None]

    def dp(q, p, t):
        c, _, _, b1, _ = parts(q, p)
        return (eps * c * b1)[..., None]

    def hess(q, p, t):
        c, s, b, b1, b2 = parts(q, p)
        return ((-eps * TWO_PI**2 * c * b)[..., None, None], (-eps * TWO_PI * s * b1)[..., None, None],
                (eps * c * b2)[..., None, None])

    return HamiltonianModel("cosine_perturbation", 1, func, dq, dp, hess,
                            fiber_growth="compactly-supported",
                            params={"epsilon": eps, "width_p": wp})


def tabulated(q_grid, p_grid, values, name: str = "tabulated") -> HamiltonianModel:
    """Autonomous model from values on a ``(q, p)`` grid via bicubic splines.

    ``q_grid`` must cover one period ``[0, 1)``; the table is wrapped so the
    spline is periodic in ``q`` to within interpolation error.
    """
    from scipy.interpolate import RectBivariateSpline

    q_grid = np.asarray(q_grid, dtype=float)
    p_grid = np.asarray(p_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape != (q_grid.size, p_grid.size):
        raise InvalidInputError("values must have shape (len(q_grid), len(p_grid))")
    # three periods of padding on each side keep the interior spline periodic
    qq = np.concatenate([q_grid[-3:] - 1.0, q_grid, q_grid[:3] + 1.0])
    vv = np.concatenate([values[-3:], values, values[:3]], axis=0)
    spline = RectBivariateSpline(qq, p_grid, vv, kx=3, ky=3)

    def ev(q, p, dx=0, dy=0):
        qm = np.mod(q[..., 0], 1.0)
        qb, pb = np.broadcast_arrays(qm, p[..., 0])
        return spline.ev(qb.ravel(), pb.ravel(), dx=dx, dy=dy).reshape(qb.shape)

    def hess(q, p, t):
        return (ev(q, p, 2, 0)[..., None, None], ev(q, p, 1, 1)[..., None, None],
                ev(q, p, 0, 2)[..., None, None])

    return HamiltonianModel(
        name, 1,
        func=lambda q, p, t: ev(q, p),
        dq=lambda q, p, t: ev(q, p, 1, 0)[..., None],
        dp=lambda q, p, t: ev(q, p, 0, 1)[..., None],
        hess=hess,
        fiber_growth="superlinear",
        params={"grid_shape": list(values.shape)},
    )


MODEL_REGISTRY: dict[str, Callable[..., HamiltonianModel]] = {
    "integrable": integrable,
    "pendulum": pendulum,
    "doublewell_p": doublewell_p,
    "kicked": kicked,
    "bump": bump,
    "cosine_perturbation": cosine_perturbation,
    "zero": zero,
}


def make_model(name: str, **params) -> HamiltonianModel:
    """Instantiate a registered model by name."""
    try:
        factory = MODEL_REGISTRY[name]
    except KeyError:
        raise InvalidInputError(f"unknown model {name!r}; known: {sorted(MODEL_REGISTRY)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# perturbed families

@dataclass(frozen=True)
class PerturbedFamily:
    """``H_lambda = H + sum_i lambda_i K_i`` with a fixed list of directions."""

    base: HamiltonianModel
    directions: tuple

    def __post_init__(self):
        object.__setattr__(self, "directions", tuple(self.directions))
        if any(K.dim != self.base.dim for K in self.directions):
            raise InvalidInputError("directions must share the base dimension")

    @property
    def size(self) -> int:
        return len(self.directions)


def perturbed_eval(F: PerturbedFamily, lam) -> HamiltonianModel:
    """Return the member ``H + sum lambda_i K_i`` of a perturbed family."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (F.size,):
        raise InvalidInputError(f"expected {F.size} perturbation parameters, got {lam.shape}")
    if not np.all(np.isfinite(lam)):
        raise InvalidInputError("perturbation parameters must be finite")
    if not np.any(lam):
        return F.base
    return linear_combination([F.base, *F.directions], [1.0, *lam.tolist()],
                              name=f"{F.base.name}+perturbation{lam.tolist()}")


# --------------------------------------------------------------------------
# dynamics

def hamiltonian_vector_field(H: HamiltonianModel, z: CotangentPoint, t: float = 0.0):
    """Return ``(qdot, pdot) = (dH/dp, -dH/dq)`` at ``z``."""
    return H.grad_p(z.q_lift, z.p, t), -H.grad_q(z.q_lift, z.p, t)


@dataclass
class Trajectory:
    """Sampled solution of Hamilton's equations with lifted base coordinates."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    escaped: bool = False

    def point(self, i: int) -> CotangentPoint:
        return CotangentPoint(self.q[i], self.p[i])

    @property
    def end(self) -> CotangentPoint:
        return self.point(-1)


def _midpoint_step(H, q, p, t, h, tol, maxiter):
    n = H.dim
    yq, yp = q + 0.5 * h * H.grad_p(q, p, t), p - 0.5 * h * H.grad_q(q, p, t)
    tm = t + 0.5 * h
    eye = np.eye(2 * n)
    for _ in range(maxiter):
        gq = yq - q - 0.5 * h * H.grad_p(yq, yp, tm)
        gp = yp - p + 0.5 * h * H.grad_q(yq, yp, tm)
        res = np.concatenate([gq, gp], axis=-1)
        err = np.max(np.abs(res)) if res.size else 0.0
        if err < tol:
            return 2 * yq - q, 2 * yp - p
        hqq, hqp, hpp = H.hessian(yq, yp, tm)
        jx = np.concatenate([
            np.concatenate([np.swapaxes(hqp, -1, -2), hpp], axis=-1),
            np.concatenate([-hqq, -hqp], axis=-1),
        ], axis=-2)
        step = np.linalg.solve(eye - 0.5 * h * jx, -res[..., None])[..., 0]
        yq = yq + step[..., :n]
        yp = yp + step[..., n:]
        if not np.all(np.isfinite(step)):
            break
    return None


def _symplectic_euler_step(H, q, p, t, h, tol, maxiter):
    n = H.dim
    P = p - h * H.grad_q(q, p, t)
    eye = np.eye(n)
    for _ in range(maxiter):
        res = P - p + h * H.grad_q(q, P, t)
        if np.max(np.abs(res)) < tol:
            return q + h * H.grad_p(q, P, t), P
        _, hqp, _ = H.hessian(q, P, t)
        P = P - np.linalg.solve(eye + h * hqp, res[..., None])[..., 0]
        if not np.all(np.isfinite(P)):
            break
    return None


def integrate_flow(H: HamiltonianModel, z0, t_span, tau: float, method: str = "midpoint",
                   escape_radius: float | None = None, tol: float = 1e-13,
                   maxiter: int = 50) -> Trajectory:
    """Integrate Hamilton's equations from ``z0`` over ``t_span = (t0, t1)``.

    ``z0`` is a :class:`CotangentPoint` or a pair ``(q, p)`` of arrays with
    shape ``(..., n)``; batches are integrated together.  ``t1 < t0`` runs the
    flow backwards.  The number of steps is ``ceil(|t1 - t0| / tau)`` with the
    step shrunk to land exactly on ``t1``.

    ``method`` is ``"midpoint"`` (implicit midpoint, symmetric, second order)
    or ``"symplectic_euler"`` (the first-order scheme used by the discrete
    action).  If ``escape_radius`` is given, integration stops as soon as any
    ``|p|`` exceeds it and the returned trajectory is flagged ``escaped``.
    """
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    t0, t1 = map(float, t_span)
    if not (np.isfinite(t0) and np.isfinite(t1)):
        raise InvalidInputError("t_span must be finite")
    if isinstance(z0, CotangentPoint):
        q, p = z0.q_lift, z0.p
    else:
        q, p = z0
    q = as_coords(q, H.dim).copy()
    p = as_coords(p, H.dim).copy()
    q, p = np.broadcast_arrays(q, p)
    q, p = q.copy(), p.copy()
    steps = max(1, int(math.ceil(abs(t1 - t0) / tau - 1e-12)))
    h = (t1 - t0) / steps
    step = {"midpoint": _midpoint_step, "symplectic_euler": _symplectic_euler_step}.get(method)
    if step is None:
        raise InvalidInputError(f"unknown integration method {method!r}")
    scale = 1.0 + max(np.max(np.abs(q)), np.max(np.abs(p)))
    ts = [t0]
    qs, ps = [q], [p]
    escaped = False
    for i in range(steps):
        t = t0 + i * h
        out = step(H, q, p, t, h, tol * scale, maxiter)
        if out is None:
            raise IntegrationError(f"Newton iteration failed at step {i} (t={t:.6g})", step_index=i)
        q, p = out
        ts.append(t0 + (i + 1) * h)
        qs.append(q)
        ps.append(p)
        if escape_radius is not None and np.max(np.abs(p)) > escape_radius:
            escaped = True
            break
    return Trajectory(np.array(ts), np.stack(qs), np.stack(ps), escaped)


def check_geometrically_bounded(H: HamiltonianModel, lambdas, T: float, bound: float,
                                n_samples: int = 16, tau: float = 0.01) -> dict:
    """Flow sample points of the graphs of the given classes for time ``T``.

    The flow is declared bounded when ``max |p|`` stays below ``bound`` over
    the horizon.  This is a finite-horizon surrogate for the unbounded-time
    definition and is reported as such.
    """
    if not (np.isfinite(T) and T > 0) or n_samples < 1:
        raise InvalidInputError("need a finite positive horizon and at least one sample")
    lams = np.asarray(lambdas, dtype=float).reshape(-1, H.dim)
    grid = (np.arange(n_samples) + 0.5) / n_samples
    mesh = np.stack(np.meshgrid(*([grid] * H.dim), indexing="ij"), axis=-1).reshape(-1, H.dim)
    q0 = np.repeat(mesh[None], len(lams), axis=0).reshape(-1, H.dim)
    p0 = np.repeat(lams[:, None], len(mesh), axis=1).reshape(-1, H.dim)
    traj = integrate_flow(H, (q0, p0), (0.0, T), tau, escape_radius=10.0 * bound)
    max_p = float(np.max(np.abs(traj.p)))
    excursion = float(np.max(np.abs(traj.p - p0[None])))
    return {
        "max_abs_p": max_p,
        "max_excursion": excursion,
        "bound": float(bound),
        "horizon": float(T),
        "escaped": traj.escaped,
        "passed": bool(not traj.escaped and np.isfinite(max_p) and max_p <= bound),
        "surrogate": "finite-horizon sample of graph points",
    }
