"""Clarke and limsup subdifferentials of sampled Lipschitz functions.

Gradients are never taken at the point of interest.  Slopes are sampled on
the grid around it; they are grouped into clusters (in one variable, by
splitting the sorted slopes at unusually large gaps) and each cluster is
extrapolated back to the point.  The estimate is the convex hull of the
extrapolated cluster values.  In two variables the hull of all sampled
gradients is used, which can only be larger than the true set.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import InvalidInputError, SelectorInconsistencyError
from .genfun import (CriticalPoint, DiscreteAction, critical_point, find_critical_points,
                     value_gap_to_flow)

__all__ = [
    "SubdiffEstimate",
    "CriticalLevelSet",
    "segment_slopes",
    "clarke_subdiff",
    "limsup_subdiff",
    "critical_level_set",
    "inclusion_check",
    "mean_value_point",
    "hull_contains",
    "inclusion_at",
]

GAP_FACTOR = 5.0


@dataclass
class SubdiffEstimate:
    """Polytope estimate of a subdifferential at ``at``.

    ``polytope`` holds hull vertices, shape ``(v, n)``; for one variable it is
    the pair of interval endpoints.  ``tolerance`` bounds the extrapolation
    error of the cluster values.  ``witnesses`` (limsup only) lists
    ``(k, lambda_k, eta_k)`` realising the hull vertices.
    """

    at: np.ndarray
    polytope: np.ndarray
    samples: list
    radii: list
    method: str
    tolerance: float = 0.0
    witnesses: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    per_radius: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.polytope.shape[1]

    @property
    def interval(self) -> tuple:
        if self.dim != 1:
            raise InvalidInputError("interval view needs one variable")
        return float(self.polytope[0, 0]), float(self.polytope[-1, 0])

    @property
    def diameter(self) -> float:
        P = self.polytope
        return float(np.max(np.linalg.norm(P[:, None] - P[None], axis=-1)))

    def to_json(self) -> str:
        return json.dumps({
            "at": np.asarray(self.at).tolist(),
            "polytope": self.polytope.tolist(),
            "method": self.method,
            "tolerance": self.tolerance,
            "radii": [float(r) for r in self.radii],
            "samples": [[np.asarray(a).tolist(), np.asarray(g).tolist()] for a, g in self.samples],
            "witnesses": [[int(k), np.asarray(l).tolist(), np.asarray(e).tolist()]
                          for k, l, e in self.witnesses],
            "flags": list(self.flags),
        }, indent=1)


@dataclass
class CriticalLevelSet:
    lambda0: np.ndarray
    level: float
    points: list
    delta: float
    k: int

    def normalised_partials(self) -> np.ndarray:
        """``(1/k) dW/dlam`` at every member, shape ``(len, n)``."""
        return np.array([np.atleast_1d(cp.lambda_partial) / self.k for cp in self.points])


# --------------------------------------------------------------------------
# one variable

def segment_slopes(grid, values):
    """Slopes of consecutive samples, located at segment midpoints."""
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidInputError("grid and values must be matching 1-D arrays")
    if np.any(np.diff(x) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    return 0.5 * (x[1:] + x[:-1]), np.diff(y) / np.diff(x)


def _clusters_1d(slopes: np.ndarray, floor: float) -> list[np.ndarray]:
    """Index groups of sorted slopes split at gaps larger than ``GAP_FACTOR`` x median gap."""
    order = np.argsort(slopes, kind="stable")
    s = slopes[order]
    if s.size < 2:
        return [order]
    gaps = np.diff(s)
    med = float(np.median(gaps))
    cut = max(GAP_FACTOR * med, floor)
    breaks = np.nonzero(gaps > cut)[0]
    return [order[a:b] for a, b in zip(np.r_[0, breaks + 1], np.r_[breaks + 1, s.size])]


def _extrapolate_cluster(mid, slopes, at):
    """Value at ``at`` of a linear fit of slope against position (constant if too few)."""
    if mid.size >= 3 and np.ptp(mid) > 0:
        A = np.stack([np.ones_like(mid), mid - at], axis=1)
        coef, *_ = np.linalg.lstsq(A, slopes, rcond=None)
        # the intercept bias of a linear fit to a curved slope profile is of
        # the order of the fit residual; twice the residual covers it
        resid = float(np.max(np.abs(A @ coef - slopes)))
        return float(coef[0]), 2.0 * resid
    return float(np.mean(slopes)), float(np.ptp(slopes)) if slopes.size else 0.0


def _clarke_1d(grid, values, at, radius, floor):
    mid, sl = segment_slopes(grid, values)
    near = np.abs(mid - at) <= radius
    if np.count_nonzero(np.abs(np.asarray(grid) - at) <= radius) < 3:
        h = float(np.max(np.diff(grid)))
        raise InvalidInputError(
            f"radius {radius:g} around {at:g} holds fewer than 3 samples; "
            f"need grid spacing <= {radius / 1.5:g} (current {h:g})")
    mid, sl = mid[near], sl[near]
    reps, tol = [], 0.0
    clusters = _clusters_1d(sl, floor)
    for idx in clusters:
        v, r = _extrapolate_cluster(mid[idx], sl[idx], at)
        reps.append(v)
        tol = max(tol, r)
    reps = np.array(reps)
    smallest = min(idx.size for idx in clusters)
    return (np.array([[reps.min()], [reps.max()]]), [(m, s) for m, s in zip(mid, sl)], tol,
            smallest)


# --------------------------------------------------------------------------
# two variables

def _clarke_nd(grid, values, at, radius):
    axes = [np.asarray(a, dtype=float) for a in grid]
    vals = np.asarray(values, dtype=float)
    grads = np.stack(np.gradient(vals, *axes), axis=-1)
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    near = np.linalg.norm(pts - at, axis=-1) <= radius
    n = len(axes)
    if np.count_nonzero(near) < 2 * n + 1:
        raise InvalidInputError(f"radius {radius:g} holds fewer than {2 * n + 1} samples")
    G = grads[near]
    P = pts[near]
    if n == 2 and np.linalg.matrix_rank(G - G.mean(0), tol=1e-10) == 2:
        from scipy.spatial import ConvexHull

        verts = G[ConvexHull(G).vertices]
    else:
        # degenerate hull: keep the extreme samples along each axis
        verts = np.unique(np.concatenate([G[np.argmin(G, 0)], G[np.argmax(G, 0)]]), axis=0)
    spacing = max(float(np.max(np.diff(a))) for a in axes)
    return verts, [(p, g) for p, g in zip(P, G)], spacing


def clarke_subdiff(grid, values, lambda0, radii: Sequence[float] | None = None,
                   floor: float = 1e-9) -> SubdiffEstimate:
    """Clarke subdifferential estimate of sampled ``f`` at ``lambda0``.

    ``grid`` is a 1-D array (one variable) or a sequence of axis arrays for a
    tensor grid (``values`` then has the mesh shape).  ``radii`` default to a
    geometric sequence from 8 to 2 grid spacings.  In one variable the
    polytope comes from the smallest radius at which every cluster holds at
    least three slopes (so that it can be extrapolated), otherwise from the
    smallest radius; all radii are kept in ``per_radius``.
    """
    one_d = np.ndim(grid) == 1 and np.ndim(grid[0]) == 0
    at = np.atleast_1d(np.asarray(lambda0, dtype=float))
    if one_d:
        h = float(np.max(np.diff(np.asarray(grid, dtype=float))))
    else:
        h = max(float(np.max(np.diff(np.asarray(a, dtype=float)))) for a in grid)
    radii = sorted((float(r) for r in (radii if radii is not None else (8 * h, 4 * h, 2 * h))),
                   reverse=True)
    if not radii or radii[-1] <= 0:
        raise InvalidInputError("radii must be positive")
    per = []
    pick = None
    for j, r in enumerate(radii):
        if one_d:
            poly, samples, tol, smallest = _clarke_1d(grid, values, float(at[0]), r, floor)
            if smallest >= 3:
                pick = j
        else:
            poly, samples, tol = _clarke_nd(grid, values, at, r)
        per.append((r, poly, samples, tol))
    r, poly, samples, tol = per[-1 if pick is None else pick]
    est = SubdiffEstimate(at, poly, samples, radii, "clarke-fd", tolerance=tol,
                          per_radius=[(rr, pp) for rr, pp, _, _ in per])
    # shrinking radii can only shrink the set; a growing one signals noise
    for rr, pp, _, tt in per[: (len(per) - 1 if pick is None else pick)]:
        if one_d and (poly[0, 0] < pp[0, 0] - tt - tol - 1e-9 or poly[-1, 0] > pp[-1, 0] + tt + tol + 1e-9):
            est.flags.append(f"inner estimate leaves the radius-{rr:g} estimate")
    return est


# --------------------------------------------------------------------------
# limsup over a family

def limsup_subdiff(fk_family: Mapping[int, tuple], lambda0: float,
                   radius: float | None = None) -> SubdiffEstimate:
    """Accumulation set of gradients of ``f_k`` at points tending to ``lambda0``.

    ``fk_family`` maps ``k`` to ``(grid, values)`` (one variable).  For each
    ``k`` the segment slopes within ``r_k = radius * k_min / k`` (at least two
    grid spacings) are collected; the estimate is the intersection over ``K``
    of the hulls of all samples with ``k >= K``.  ``witnesses`` gives, for each
    ``k``, the sample closest to each end of the estimate.
    """
    ks = sorted(int(k) for k in fk_family)
    if len(ks) < 3:
        raise InvalidInputError("limsup needs at least three values of k")
    at = float(lambda0)
    if radius is None:
        grid0 = np.asarray(fk_family[ks[0]][0], dtype=float)
        radius = 8 * float(np.max(np.diff(grid0)))
    per_k = {}
    radii = []
    for k in ks:
        grid, vals = fk_family[k]
        grid = np.asarray(grid, dtype=float)
        h = float(np.max(np.diff(grid)))
        r = max(radius * ks[0] / k, 2 * h)
        radii.append(r)
        mid, sl = segment_slopes(grid, vals)
        near = np.abs(mid - at) <= r
        if not np.any(near):
            raise InvalidInputError(f"no samples of f_{k} within {r:g} of {at:g}")
        per_k[k] = (mid[near], sl[near])
    lo, hi = -np.inf, np.inf
    for K in ks:
        allv = np.concatenate([per_k[k][1] for k in ks if k >= K])
        lo, hi = max(lo, allv.min()), min(hi, allv.max())
    flags = []
    if lo > hi:
        # tails do not overlap: report the last hull and flag it
        lo, hi = per_k[ks[-1]][1].min(), per_k[ks[-1]][1].max()
        flags.append("empty-intersection")
    diam = [float(np.ptp(per_k[k][1])) for k in ks]
    if diam[-1] > diam[0] * 1.5 + 1e-9:
        flags.append("divergent-witness")
        warnings.warn("limsup witness diameter grows with k", RuntimeWarning)
    witnesses = []
    samples = []
    for k in ks:
        mid, sl = per_k[k]
        samples.extend((m, s) for m, s in zip(mid, sl))
        for target in (lo, hi):
            j = int(np.argmin(np.abs(sl - target) + 1e-12 * np.abs(mid - at)))
            witnesses.append((k, float(mid[j]), float(sl[j])))
    return SubdiffEstimate(np.array([at]), np.array([[lo], [hi]]), samples, radii,
                           "limsup-sequence", tolerance=0.0, witnesses=witnesses, flags=flags)


# --------------------------------------------------------------------------
# critical level sets and the inclusion test

def critical_level_set(W: DiscreteAction, f_value: float, delta: float | None = None,
                       certificate: CriticalPoint | None = None, count: int = 8, seed: int = 0,
                       extra_starts: Sequence = ()) -> CriticalLevelSet:
    """Critical points of ``W`` with ``|value - k f_value| <= delta``.

    The spectral certificate (when given) seeds the search and must be found
    again.  The default ``delta`` is ten times the sum of the Newton tolerance
    and the gap between the certificate value and the flow action of its
    chord.
    """
    level = W.k * float(f_value)
    starts = list(extra_starts)
    if certificate is not None:
        starts.append(certificate.vars)
    if delta is None:
        gap = value_gap_to_flow(W, certificate) if certificate is not None else 0.0
        delta = 10.0 * (1e-8 + gap)
    cps = find_critical_points(W, count=count, seed=seed, extra_starts=starts)
    members = [cp for cp in cps if abs(cp.value - level) <= delta]
    if certificate is not None and not any(_same_class(W, cp.vars, certificate.vars) for cp in members):
        # on a degenerate critical manifold Newton may drift along it; the
        # certificate itself is still a member if it is critical at the level
        cp = critical_point(W, certificate.vars)
        if cp.grad_norm > 1e-8 or abs(cp.value - level) > delta:
            raise SelectorInconsistencyError("the selector certificate is not in its critical level set")
        members.append(cp)
    if not members:
        raise SelectorInconsistencyError(
            f"no critical value within {delta:g} of the selected level {level:g}")
    return CriticalLevelSet(W.lam.copy(), level, members, float(delta), W.k)


def _same_class(W, a, b, tol=1e-6) -> bool:
    from .genfun import _canonical

    return bool(np.allclose(_canonical(W, a), _canonical(W, b), atol=tol))


def hull_contains(points: np.ndarray, v: np.ndarray, margin: float) -> tuple[bool, float]:
    """Whether ``v`` is within ``margin`` (max-norm) of the convex hull of ``points``.

    Returns ``(inside, distance)`` with the max-norm distance to the hull.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if P.shape[1] == 1:
        d = max(P.min() - v[0], v[0] - P.max(), 0.0)
        return bool(d <= margin), float(d)
    J, n = P.shape
    # minimise s subject to |P^T w - v| <= s, w >= 0, sum w = 1
    c = np.r_[np.zeros(J), 1.0]
    A = np.block([[P.T, -np.ones((n, 1))], [-P.T, -np.ones((n, 1))]])
    b = np.r_[v, -v]
    res = linprog(c, A_ub=A, b_ub=b, A_eq=np.r_[np.ones(J), 0.0][None], b_eq=[1.0],
                  bounds=[(0, None)] * J + [(0, None)], method="highs")
    d = float(res.x[-1]) if res.success else np.inf
    return bool(d <= margin), d


def inclusion_check(W: DiscreteAction, subdiff: SubdiffEstimate, level_set: CriticalLevelSet,
                    margin: float | None = None) -> dict:
    """Check ``subdiff`` against the hull of ``(1/k) dW/dlam`` over the level set.

    ``margin`` defaults to the extrapolation tolerance of the estimate plus
    ``1e-6``.  Returns a report with the worst max-norm distance.
    """
    if level_set.k != W.k or not np.allclose(level_set.lambda0, W.lam):
        raise InvalidInputError("level set and action belong to different (k, lambda)")
    if margin is None:
        margin = subdiff.tolerance + 1e-6
    C = level_set.normalised_partials()
    worst = 0.0
    violations = []
    for v in subdiff.polytope:
        ok, d = hull_contains(C, v, margin)
        worst = max(worst, d)
        if not ok:
            violations.append(np.asarray(v).tolist())
    return {
        "lambda": W.lam.tolist(),
        "k": W.k,
        "subdiff": subdiff.polytope.tolist(),
        "hull_points": C.tolist(),
        "margin": float(margin),
        "distance": float(worst),
        "violations": violations,
        "ok": not violations,
    }


def inclusion_at(H, lambda0: float, k: int, N: int = 16, h: float = 1e-3, half_width: int = 4,
                 backend: str = "auto", seed: int = 0, margin: float | None = None) -> dict:
    """Run :func:`inclusion_check` for ``f_k`` of ``H`` at one class.

    ``f_k`` is sampled on ``lambda0 + h * [-half_width, half_width]``; the
    certificates of all sampled classes seed the level-set search so every
    branch met within the sampling radius is represented.  A kink within the
    sampling radius ``r`` of ``lambda0`` leaves its branches at most
    ``k r diam`` apart in value at ``lambda0`` (``diam`` the width of the
    estimate), which sets the level tolerance.
    """
    from .genfun import build_discrete_action
    from .spectral import compute_fk

    offs = np.arange(-half_width, half_width + 1)
    grid = lambda0 + h * offs
    vals, certs = [], []
    for lam in grid:
        fk, sv = compute_fk(H, lam, k, backend, N, seed, return_value=True)
        vals.append(fk)
        certs.append(sv.certificate)
    est = clarke_subdiff(grid, np.array(vals), lambda0)
    r = max(abs(m - lambda0) for m, _ in est.samples) + 0.5 * h
    delta = 10.0 * (1e-8 + k * r * est.diameter)
    W = build_discrete_action(H, lambda0, k, N)
    c = half_width
    level = critical_level_set(W, vals[c], delta, certificate=certs[c], seed=seed,
                               extra_starts=[cp.vars for cp in certs])
    rep = inclusion_check(W, est, level, margin)
    rep["f_k"] = float(vals[c])
    rep["delta"] = level.delta
    return rep


def mean_value_point(grid, values, a: float, b: float, tol: float = 0.0,
                     direction: Optional[int] = None):
    """Grid point in ``(a, b)`` whose local slope interval contains the mean slope.

    The local interval at an interior grid point is spanned by its two
    adjacent segment slopes (inflated by ``tol``).  With ``direction=+1`` the
    first point whose interval reaches at least the mean slope is returned
    (``-1``: at most).  Returns ``(lambda3, mean_slope, (lo, hi))``.
    """
    x = np.asarray(grid, dtype=float)
    y = np.asarray(values, dtype=float)
    ia, ib = int(np.argmin(np.abs(x - a))), int(np.argmin(np.abs(x - b)))
    if ib - ia < 2:
        raise InvalidInputError("need at least one interior grid point between a and b")
    mean = (y[ib] - y[ia]) / (x[ib] - x[ia])
    _, sl = segment_slopes(x, y)
    for i in range(ia + 1, ib):
        lo, hi = min(sl[i - 1], sl[i]) - tol, max(sl[i - 1], sl[i]) + tol
        if direction == 1 and hi >= mean:
            return float(x[i]), float(mean), (float(lo), float(hi))
        if direction == -1 and lo <= mean:
            return float(x[i]), float(mean), (float(lo), float(hi))
        if direction is None and lo <= mean <= hi:
            return float(x[i]), float(mean), (float(lo), float(hi))
    raise InvalidInputError("no grid point satisfies the mean value scan")
