"""Aubry-Mather alpha-function of convex one-degree-of-freedom Hamiltonians.

Independent of the generating-function machinery: the Lagrangian is
obtained by convex conjugation, the minimal average action ``beta(rho)`` by
minimising the discrete action of closed loops winding once around the
circle in time ``1/|rho|``, and ``alpha`` as the Legendre-Fenchel transform
of ``beta``.  For autonomous systems with one degree of freedom every
minimising measure of non-zero rotation number lives on a rotational
invariant circle, so loops winding once suffice.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import InvalidInputError, NotApplicableError
from .models import HamiltonianModel

__all__ = ["legendre_momentum", "lagrangian", "beta_function", "oracle_twist_alpha",
           "TwistOracle", "separatrix_width"]


def _check_convex(H: HamiltonianModel, window: float = 20.0, samples: int = 64):
    if H.dim != 1:
        raise NotApplicableError("the twist oracle handles one degree of freedom")
    if H.time_dependent:
        raise NotApplicableError("the twist oracle handles autonomous Hamiltonians")
    qs = np.arange(samples) / samples
    ps = np.linspace(-window, window, 4 * samples + 1)
    Q, P = np.meshgrid(qs, ps, indexing="ij")
    hpp = H.hessian(Q, P, 0.0)[2][..., 0, 0]
    if not np.all(hpp > 0):
        raise NotApplicableError(f"{H.name} is not strictly convex in p on |p| <= {window}")


def legendre_momentum(H: HamiltonianModel, q, v, tol: float = 1e-12, maxiter: int = 200):
    """Solve ``dH/dp(q, p) = v`` for ``p`` (vectorised, safeguarded Newton)."""
    q, v = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(v, dtype=float))
    shape = q.shape
    q, v = q.ravel(), v.ravel()

    def hp(p):
        return H.grad_p(q[:, None], p[:, None], 0.0)[:, 0]

    lo = np.full(q.shape, -1.0)
    hi = np.full(q.shape, 1.0)
    for _ in range(200):
        bad_lo = hp(lo) > v
        bad_hi = hp(hi) < v
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, 2.0 * lo, lo)
        hi = np.where(bad_hi, 2.0 * hi, hi)
    p = 0.5 * (lo + hi)
    for _ in range(maxiter):
        r = hp(p) - v
        lo = np.where(r < 0, p, lo)
        hi = np.where(r > 0, p, hi)
        a = H.hessian(q[:, None], p[:, None], 0.0)[2][:, 0, 0]
        newton = p - r / a
        inside = (newton > lo) & (newton < hi)
        p_new = np.where(inside, newton, 0.5 * (lo + hi))
        if np.max(np.abs(p_new - p)) < tol * (1.0 + np.max(np.abs(p))):
            p = p_new
            break
        p = p_new
    return p.reshape(shape)


def lagrangian(H: HamiltonianModel, q, v):
    """``L(q, v)`` together with ``dL/dq = -dH/dq`` and ``dL/dv = p``."""
    p = legendre_momentum(H, q, v)
    qq = np.asarray(q, dtype=float)[..., None]
    pp = p[..., None]
    L = p * v - H(qq, pp, 0.0)
    return L, -H.grad_q(qq, pp, 0.0)[..., 0], p


def _loop_action(H, T: float, M: int, direction: int, x_inner0=None):
    """Minimal midpoint-rule action of loops ``x_0 = 0 -> x_M = direction`` in time ``T``."""
    h = T / M

    def fun(inner):
        x = np.concatenate([[0.0], inner, [float(direction)]])
        xm = 0.5 * (x[1:] + x[:-1])
        v = np.diff(x) / h
        L, Lq, Lv = lagrangian(H, xm, v)
        val = h * np.sum(L)
        # d/dx_i of h L(xm_{i-1}, v_{i-1}) + h L(xm_i, v_i)
        g = np.zeros(M + 1)
        g[:-1] += 0.5 * h * Lq - Lv
        g[1:] += 0.5 * h * Lq + Lv
        return val, g[1:-1]

    if x_inner0 is None:
        x_inner0 = direction * np.arange(1, M) / M
    res = minimize(fun, x_inner0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": 1e-11, "ftol": 1e-15})
    return float(res.fun), res.x


class TwistOracle:
    """Cached ``beta`` and ``alpha`` for one convex model.

    ``h`` is the time step of the loop discretisation; ``rho_max`` bounds the
    searched rotation numbers; ``richardson`` combines steps ``h`` and
    ``h/2`` to cancel the leading discretisation error; loops with ``|rho| < rho_min`` are not used
    (``beta`` is convex, so the interval ``(0, rho_min)`` is covered by
    interpolation between ``beta(0)`` and ``beta(rho_min)`` in the search).
    """

    def __init__(self, H: HamiltonianModel, h: float = 0.02, rho_max: float = 4.0,
                 rho_min: float = 0.05, grid: int = 41, richardson: bool = True):
        _check_convex(H)
        if h <= 0 or rho_max <= rho_min or rho_min <= 0:
            raise InvalidInputError("need h > 0 and 0 < rho_min < rho_max")
        self.H = H
        self.h = float(h)
        self.richardson = bool(richardson)
        self.rho_max = float(rho_max)
        self.rho_min = float(rho_min)
        pos = np.geomspace(rho_min, rho_max, grid // 2)
        self.rho_grid = np.concatenate([-pos[::-1], [0.0], pos])
        self._beta = lru_cache(maxsize=None)(self._beta_uncached)
        self.beta_grid = np.array([self._beta(float(r)) for r in self.rho_grid])

    def beta0(self) -> float:
        """``min_q L(q, 0) = -max_q min_p H(q, p)``."""
        qs = np.arange(2000) / 2000
        L, _, _ = lagrangian(self.H, qs, np.zeros_like(qs))
        i = int(np.argmin(L))
        res = minimize_scalar(lambda x: float(lagrangian(self.H, x, 0.0)[0]),
                              bounds=(qs[i] - 1e-3, qs[i] + 1e-3), method="bounded",
                              options={"xatol": 1e-10})
        return float(min(res.fun, L[i]))

    def _beta_uncached(self, rho: float) -> float:
        if rho == 0.0:
            return self.beta0()
        T = 1.0 / abs(rho)
        M = max(16, int(np.ceil(T / self.h)))
        val, x = _loop_action(self.H, T, M, int(np.sign(rho)))
        if self.richardson:
            # midpoint rule is second order in the step
            fine0 = np.interp(np.arange(1, 2 * M) / 2, np.arange(M + 1),
                              np.concatenate([[0.0], x, [np.sign(rho)]]))
            fine, _ = _loop_action(self.H, T, 2 * M, int(np.sign(rho)), fine0)
            val = (4.0 * fine - val) / 3.0
        return abs(rho) * val

    def beta(self, rho) -> float:
        return self._beta(float(rho))

    def alpha(self, lam: float) -> float:
        """``max_rho [lam rho - beta(rho)]`` with Brent refinement around the grid argmax."""
        lam = float(lam)
        vals = lam * self.rho_grid - self.beta_grid
        i = int(np.argmax(vals))
        best = float(vals[i])
        lo = self.rho_grid[max(i - 1, 0)]
        hi = self.rho_grid[min(i + 1, self.rho_grid.size - 1)]
        # never evaluate loops inside (-rho_min, rho_min) \ {0}
        segments = []
        if lo < 0 < hi or self.rho_grid[i] == 0.0:
            segments = [(lo, -self.rho_min), (self.rho_min, hi)]
        else:
            segments = [(lo, hi)]
        for a, b in segments:
            if b <= a:
                continue
            res = minimize_scalar(lambda r: -(lam * r - self.beta(r)), bounds=(a, b),
                                  method="bounded", options={"xatol": 1e-6})
            best = max(best, -float(res.fun))
        if abs(self.rho_grid[i]) >= self.rho_max * 0.999:
            raise InvalidInputError(f"alpha({lam}) needs rotation numbers beyond rho_max={self.rho_max}")
        return best

    def alpha_slope(self, lam: float, dl: float = 1e-3) -> float:
        """Central difference of ``alpha``, i.e. the rotation number of the minimising circle."""
        return (self.alpha(lam + dl) - self.alpha(lam - dl)) / (2 * dl)


def beta_function(H: HamiltonianModel, rhos, h: float = 0.02) -> np.ndarray:
    """Minimal average action at the given rotation numbers."""
    orc = TwistOracle(H, h=h, grid=3)
    return np.array([orc.beta(r) for r in np.atleast_1d(rhos)])


def oracle_twist_alpha(H: HamiltonianModel, lam, h: float = 0.02, rho_max: float = 4.0,
                       oracle: TwistOracle | None = None):
    """Mather's alpha at ``lam`` (scalar or array) for a convex autonomous model."""
    orc = oracle if oracle is not None else TwistOracle(H, h=h, rho_max=rho_max)
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    out = np.array([orc.alpha(x) for x in lam_arr])
    return float(out[0]) if np.ndim(lam) == 0 else out


def separatrix_width(amplitude: float = 1.0, samples: int = 200001) -> float:
    """``int_0^1 sqrt(2 a (1 - cos 2 pi q)) dq`` (``4 sqrt(a) / pi``): edge of the flat part."""
    q = (np.arange(samples) + 0.5) / samples
    return float(np.mean(np.sqrt(2.0 * amplitude * (1.0 - np.cos(2 * np.pi * q)))))
