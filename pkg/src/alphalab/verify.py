"""Falsifiable numerical versions of the statements about alpha and invariant measures.

Every routine returns a :class:`TheoremReport` listing the predicted and the
measured quantities together with the tolerance used for each comparison.
The tolerance budget is explicit: ``tol_rho = C1 (tau + 1/k_max)`` and
``tol_A = C2 (tau + 1/k_max) + error bar of the alpha estimate``.
"""

from __future__ import annotations

import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import conventions
from .errors import AlphaLabError, InvalidInputError, NotApplicableError
from .genfun import DiscreteAction, build_discrete_action
from .measures import (EmpiricalMeasure, action_nonaut, action_of_measure, barycenter,
                       chord_from_critical_point, chord_measure, default_battery, extract_chords,
                       invariance_residual, measure_stats, pushforward_residual,
                       rotation_vector, rotation_vector_nonaut, suspend_and_reduce)
from .models import (HamiltonianModel, PerturbedFamily, check_geometrically_bounded,
                     linear_combination, perturbed_eval, zero)
from .oracle import TwistOracle, oracle_twist_alpha
from .spectral import (_keep_convexity, compute_fk, extrapolate, homogenize, spectral_invariant,
                       sup_difference)
from .subdiff import clarke_subdiff, limsup_subdiff, mean_value_point

__all__ = [
    "THEOREM_IDS", "TOL_C1", "TOL_C2", "Check", "TheoremReport", "oracle_twist_alpha",
    "verify_main_theorem", "verify_clarke_corollary", "barycentric_weights",
    "rotation_gap_certificate", "kam_gap", "localize", "verify_nonautonomous",
    "tolerance_constants",
]

THEOREM_IDS = ("main_thm", "maincor", "rotation_gap", "kam_gap", "local", "nonautonomous")

# Frozen tolerance constants.  On the integrable fixtures the measured errors
# are at round-off level (see ``tolerance_constants``), so they cannot set a
# scale by themselves; the constants are fixed at one.
TOL_C1 = 1.0
TOL_C2 = 1.0

# residuals below this are exact invariance (Dirac at a fixed point, invariant circles)
RESIDUAL_FLOOR = 1e-9


@dataclass
class Check:
    name: str
    measured: float
    predicted: float
    tolerance: float
    kind: str = "abs"   # "abs": |m - p| <= tol, "ge": m >= p - tol, "le": m <= p + tol
    ok: bool = field(init=False)

    def __post_init__(self):
        m, p, t = float(self.measured), float(self.predicted), float(self.tolerance)
        if self.kind == "abs":
            self.ok = bool(abs(m - p) <= t)
        elif self.kind == "ge":
            self.ok = bool(m >= p - t)
        elif self.kind == "le":
            self.ok = bool(m <= p + t)
        else:
            raise InvalidInputError(f"unknown check kind {self.kind!r}")

    def line(self) -> str:
        rel = {"abs": "~", "ge": ">=", "le": "<="}[self.kind]
        return (f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.measured:.6g} {rel} "
                f"{self.predicted:.6g} (tol {self.tolerance:.3g})")


@dataclass
class TheoremReport:
    """Outcome of one experiment; ``passed`` holds iff every check holds and nothing was skipped."""

    theorem_id: str
    inputs: dict
    predicted: dict = field(default_factory=dict)
    measured: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    skipped: Optional[str] = None
    artifacts: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    objects: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.theorem_id not in THEOREM_IDS:
            raise InvalidInputError(f"unknown theorem id {self.theorem_id!r}")

    @property
    def passed(self) -> bool:
        return self.skipped is None and bool(self.checks) and all(c.ok for c in self.checks)

    def add(self, name, measured, predicted, tolerance, kind="abs") -> Check:
        c = Check(name, float(measured), float(predicted), float(tolerance), kind)
        self.checks.append(c)
        return c

    def to_record(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "inputs": _jsonable(self.inputs),
            "predicted": _jsonable(self.predicted),
            "measured": _jsonable(self.measured),
            "tolerances": _jsonable(self.tolerances),
            "checks": [{"name": c.name, "measured": c.measured, "predicted": c.predicted,
                        "tolerance": c.tolerance, "kind": c.kind, "ok": c.ok} for c in self.checks],
            "skipped": self.skipped,
            "pass": self.passed,
            "artifacts": list(self.artifacts),
            "notes": list(self.notes),
        }

    def to_json(self, **extra) -> str:
        rec = self.to_record()
        rec["manifest"] = conventions.manifest(**extra)
        return json.dumps(rec, indent=1)

    def summary(self) -> str:
        head = f"[{self.theorem_id}] " + ("SKIPPED: " + self.skipped if self.skipped
                                          else ("PASS" if self.passed else "FAIL"))
        return "\n".join([head] + ["  " + c.line() for c in self.checks])

    def write(self, out_dir: str, prefix: str | None = None) -> list:
        """Write the report JSON and any measures/curves it holds; returns the paths."""
        os.makedirs(out_dir, exist_ok=True)
        stem = prefix or self.theorem_id
        paths = []
        for name, obj in self.objects.items():
            if isinstance(obj, EmpiricalMeasure):
                path = os.path.join(out_dir, f"{stem}_{name}.csv")
                _write_text(path, obj.to_csv())
                paths.append(path)
            elif hasattr(obj, "to_csv") and hasattr(obj, "per_k"):
                path = os.path.join(out_dir, f"{stem}_{name}.csv")
                _write_text(path, obj.to_csv())
                paths.append(path)
        self.artifacts = sorted(set(self.artifacts) | set(paths))
        path = os.path.join(out_dir, f"{stem}.json")
        _write_text(path, self.to_json())
        return self.artifacts + [path]


def _write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, HamiltonianModel):
        return {"name": x.name, "params": _jsonable(x.params)}
    return x


# --------------------------------------------------------------------------
# plumbing

def _options(config, defaults: dict) -> dict:
    config = dict(config or {})
    unknown = sorted(set(config) - set(defaults))
    if unknown:
        raise InvalidInputError(f"unknown option(s) {unknown}; allowed: {sorted(defaults)}")
    out = {**defaults, **config}
    ks = out.get("ks")
    if ks is not None:
        ks = tuple(int(k) for k in ks)
        if len(ks) < 3 or any(k < 1 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
            raise InvalidInputError("ks must hold at least three increasing positive integers")
        out["ks"] = ks
    return out


@contextmanager
def _stage(name: str):
    """Tag errors raised inside a pipeline stage with the stage name."""
    try:
        yield
    except AlphaLabError as e:
        if getattr(e, "stage", None) is None:
            e.stage = name
            msg = e.args[0] if e.args else ""
            e.args = (f"[{name}] {msg}",) + tuple(e.args[1:])
        raise


def _budget(opts, N, error_bar=0.0):
    tau = 1.0 / N
    kmax = opts["ks"][-1]
    return (opts["C1"] * (tau + 1.0 / kmax),
            opts["C2"] * (tau + 1.0 / kmax) + float(error_bar))


def _local_curve(H, lam, opts):
    w, h = int(opts["half_width"]), float(opts["h"])
    grid = lam + h * np.arange(-w, w + 1)
    with _stage("homogenize"):
        curve = homogenize(H, grid, opts["ks"], backend=opts["backend"], N=opts["N"],
                           seed=opts["seed"])
    return curve, w


def _chord(H, lam, k, N, backend, seed, sv=None, extract=True):
    """Chord realising the selector at ``(lam, k)`` and its :class:`SpectralValue`."""
    W = build_discrete_action(H, lam, k, N)
    if sv is None:
        with _stage("spectral"):
            sv = spectral_invariant(W, backend=backend, seed=seed)
    if extract:
        with _stage("extract_chords"):
            extract_chords(H, lam, k, sv.value / k, N=N, certificate=sv.certificate,
                           seed=seed, count=2, W=W)
    c = chord_from_critical_point(W, sv.certificate)
    return c, sv


def _battery_bound(m: EmpiricalMeasure, battery) -> float:
    """``2 max_f sup |f|`` on the atoms: the boundary term of a chord average."""
    return 2.0 * max(float(np.max(np.abs(o.f(m.q, m.p)))) for o in battery)


def barycentric_weights(eta: float, a: float, b: float) -> tuple[float, float]:
    """Weights ``(r, 1 - r)`` with ``r a + (1 - r) b = eta`` (clipped to ``[0, 1]``)."""
    if abs(b - a) < 1e-14:
        return 0.5, 0.5
    r = float(np.clip((b - eta) / (b - a), 0.0, 1.0))
    return r, 1.0 - r


def _witness_measure(H, est, kmax, N, backend, seed, eta):
    """Mix the ``k_max`` witness chords of a limsup estimate so the rotation hits ``eta``.

    Atoms carry ``s = t mod 1``.  Returns ``(measure, [(lambda_k, rho_k)], weights)``.
    """
    lam_w = sorted({round(w[1], 12) for w in est.witnesses if w[0] == kmax})
    members = []
    for lw in lam_w:
        c, _ = _chord(H, lw, kmax, N, backend, seed)
        base = chord_measure(c)
        # displacement / k is the rotation vector of the chord in any time convention
        members.append((lw, EmpiricalMeasure(base.q, base.p, base.weights, np.mod(c.times[:-1], 1.0)),
                        float(c.displacement[0]) / kmax))
    if len(members) == 1:
        return members[0][1], [(members[0][0], members[0][2])], [1.0]
    members.sort(key=lambda t: t[2])
    (la, ma, ra), (lb, mb, rb) = members[0], members[-1]
    r = barycentric_weights(eta, ra, rb)
    return barycenter([ma, mb], r), [(la, ra), (lb, rb)], list(r)


def _residual_series(H, lam, curve, i0, battery, N):
    out = []
    for k in curve.ks:
        sv = curve.certificates[(k, i0)]
        W = DiscreteAction(H, np.atleast_1d(lam), k, N, curve.convention)
        m = chord_measure(chord_from_critical_point(W, sv.certificate))
        out.append(invariance_residual(m, H, battery))
    return out


def _halving_checks(report, ks, residuals, band):
    for (k1, r1), (k2, r2) in zip(zip(ks, residuals), zip(ks[1:], residuals[1:])):
        name = f"residual ratio k={k1}->{k2}"
        if max(r1, r2) <= RESIDUAL_FLOOR:
            report.add(name + " (exactly invariant)", max(r1, r2), 0.0, RESIDUAL_FLOOR, "le")
        else:
            ratio = r2 / r1 if r1 > 0 else np.inf
            report.add(name, ratio, k1 / k2, band * k1 / k2, "abs")


# --------------------------------------------------------------------------
# main theorem

MAIN_DEFAULTS = dict(ks=(4, 8, 16), N=64, h=0.01, half_width=2, backend="auto", seed=0,
                     C1=TOL_C1, C2=TOL_C2, halving_band=0.2, bounded_check=True,
                     oracle_check=True)


def verify_main_theorem(H: HamiltonianModel, lam: float, config: dict | None = None) -> TheoremReport:
    """Realise a limsup subgradient ``eta`` of ``alpha`` at ``lam`` by chord measures.

    Pipeline: ``f_k`` on a small grid around ``lam`` -> limsup estimate with
    witnesses -> chords of ``W_{k_max}`` at the witnesses -> barycentre ``m``
    with ``rho(m) = eta``.  Checks ``|rho(m) - eta|``, ``|A(m) - (alpha - eta
    lam)|``, the invariance residual against ``C / k_max`` and the halving of
    the residual of the centre chords as ``k`` doubles.
    """
    opts = _options(config, MAIN_DEFAULTS)
    if H.time_dependent:
        raise NotApplicableError("time-dependent models go through verify_nonautonomous")
    if H.dim != 1:
        raise NotApplicableError("the verification grid is one-dimensional")
    lam = float(lam)
    rep = TheoremReport("main_thm", {"model": H, "lambda": lam, **opts})
    if opts["bounded_check"]:
        with _stage("geometric_bound"):
            gb = check_geometrically_bounded(H, [lam], T=float(opts["ks"][-1]), bound=1e3)
        rep.measured["geometric_bound"] = gb
        if not gb["passed"]:
            raise NotApplicableError(f"[geometric_bound] flow of the graph of {lam} is not bounded")
    curve, i0 = _local_curve(H, lam, opts)
    N, kmax = curve.N, opts["ks"][-1]
    fam = {k: (curve.lambdas, curve.per_k[k]) for k in curve.ks}
    with _stage("limsup_subdiff"):
        est = limsup_subdiff(fam, lam, radius=opts["half_width"] * opts["h"])
    lo, hi = est.interval
    eta = 0.5 * (lo + hi)
    alpha = float(curve.alpha[i0])
    tol_rho, tol_A = _budget(opts, N, curve.error[i0])

    battery = default_battery(1)
    m, members, weights = _witness_measure(H, est, kmax, N, curve.backend, opts["seed"], eta)
    stats = measure_stats(m, H, battery)
    rho = float(stats.rho[0])
    bound = _battery_bound(m, battery) / kmax

    series = _residual_series(H, lam, curve, i0, battery, N)
    rep.predicted.update({"eta": eta, "action": alpha - eta * lam, "alpha": alpha,
                          "limsup_interval": [lo, hi]})
    rep.measured.update({"stats": stats.to_record(), "rho": rho, "action": stats.action,
                         "witnesses": members, "weights": weights,
                         "residual_series": dict(zip(curve.ks, series)),
                         "subdiff_flags": est.flags})
    rep.tolerances.update({"rho": tol_rho, "action": tol_A, "residual_bound": bound,
                           "halving_band": opts["halving_band"]})
    rep.add("rotation vector = eta", rho, eta, tol_rho)
    rep.add("action = alpha - eta lambda", stats.action, alpha - eta * lam, tol_A)
    rep.add("invariance residual <= C/k_max", stats.invariance_residual, bound, 0.0, "le")
    _halving_checks(rep, curve.ks, series, opts["halving_band"])
    if opts["oracle_check"] and H.convex:
        with _stage("oracle"):
            orc = TwistOracle(H)
            slope = orc.alpha_slope(lam)
        rep.predicted["oracle_slope"] = slope
        rep.add("eta against the twist-oracle slope", eta, slope, tol_rho)
    rep.objects.update({"measure": m, "curve": curve, "subdiff": est})
    return rep


# --------------------------------------------------------------------------
# barycentres at corners

CLARKE_DEFAULTS = dict(ks=(4, 8, 16), N=32, h=0.02, half_width=8, backend="auto", seed=0,
                       C1=TOL_C1, C2=TOL_C2, smooth_tol=0.02)


def verify_clarke_corollary(H: HamiltonianModel, lam: float, config: dict | None = None) -> TheoremReport:
    """At a corner of ``alpha``, realise an interior Clarke subgradient as a barycentre.

    ``eta`` is the midpoint of the widest gap between sampled slopes inside
    the Clarke interval of ``f_{k_max}``; it is written as a convex
    combination of the slopes nearest to the interval ends, and the chord
    measures there are mixed with the same weights.  A point whose Clarke
    interval is narrower than ``smooth_tol`` yields a skipped report.
    """
    opts = _options(config, CLARKE_DEFAULTS)
    if H.time_dependent or H.dim != 1:
        raise NotApplicableError("corner barycentres need an autonomous model with one degree of freedom")
    lam = float(lam)
    rep = TheoremReport("maincor", {"model": H, "lambda": lam, **opts})
    curve, i0 = _local_curve(H, lam, opts)
    N, kmax = curve.N, opts["ks"][-1]
    fk = curve.per_k[kmax]
    with _stage("clarke_subdiff"):
        est = clarke_subdiff(curve.lambdas, fk, lam)
    a, b = est.interval
    rep.measured["clarke_interval"] = [a, b]
    slopes = np.array(sorted(s for _, s in est.samples))
    inside = slopes[(slopes > a) & (slopes < b)]
    pts = np.r_[a, inside, b]
    gaps = np.diff(pts)
    j = int(np.argmax(gaps))
    if b - a <= opts["smooth_tol"] or gaps[j] <= opts["smooth_tol"]:
        rep.skipped = (f"no subgradient away from the sampled slopes: Clarke interval "
                       f"[{a:.4g}, {b:.4g}] (smooth point)")
        rep.objects.update({"curve": curve, "subdiff": est})
        return rep
    eta = 0.5 * (pts[j] + pts[j + 1])
    mids = np.array([m for m, _ in est.samples])
    sls = np.array([s for _, s in est.samples])
    ends = []
    for target in (a, b):
        i = int(np.argmin(np.abs(sls - target) + 1e-12 * np.abs(mids - lam)))
        ends.append(float(mids[i]))
    members = []
    for lw in ends:
        c, _ = _chord(H, lw, kmax, N, curve.backend, opts["seed"])
        mk = chord_measure(c)
        members.append((mk, float(rotation_vector(mk, H)[0]), action_of_measure(mk, H)))
    (ma, ra, Aa), (mb, rb, Ab) = members
    r = barycentric_weights(eta, ra, rb)
    m = barycenter([ma, mb], r)
    stats = measure_stats(m, H)
    rho = float(stats.rho[0])
    alpha = float(curve.alpha[i0])
    tol_rho, tol_A = _budget(opts, N, curve.error[i0])
    rep.predicted.update({"eta": eta, "action": alpha - eta * lam, "alpha": alpha})
    rep.measured.update({"rho": rho, "action": stats.action, "weights": list(r),
                         "extreme_lambdas": ends, "extreme_rho": [ra, rb],
                         "extreme_action": [Aa, Ab], "stats": stats.to_record()})
    rep.tolerances.update({"rho": tol_rho, "action": tol_A, "linearity": 1e-10})
    rep.add("rho linear under mixing", rho, r[0] * ra + r[1] * rb, 1e-10)
    rep.add("action linear under mixing", stats.action, r[0] * Aa + r[1] * Ab, 1e-10)
    rep.add("rotation vector = eta", rho, eta, tol_rho)
    rep.add("action = alpha - eta lambda", stats.action, alpha - eta * lam, tol_A)
    rep.objects.update({"measure": m, "curve": curve, "subdiff": est})
    return rep


# --------------------------------------------------------------------------
# rotation gaps

GAP_DEFAULTS = dict(ks=(4, 8, 16), N=16, h=0.05, backend="auto", seed=0, C1=TOL_C1)


def rotation_gap_certificate(H: HamiltonianModel, lambda1: float, lambda2: float, gap: float,
                             config: dict | None = None) -> TheoremReport:
    """Certify a measure with ``rho (lambda2 - lambda1) >= gap`` from ``alpha(lambda2) - alpha(lambda1) >= gap``.

    The mean-value scan of the alpha curve locates ``lambda3`` with a local
    slope at least the mean slope; the chord measure of ``W_{k_max}`` at
    ``lambda3`` is the certificate.
    """
    opts = _options(config, GAP_DEFAULTS)
    l1, l2, gap = float(lambda1), float(lambda2), float(gap)
    if l1 == l2:
        raise InvalidInputError("lambda1 and lambda2 must differ")
    if not gap > 0:
        raise NotApplicableError(f"the gap must be positive (got {gap:g})")
    if H.time_dependent or H.dim != 1:
        raise NotApplicableError("rotation gaps are computed for autonomous one-degree-of-freedom models")
    rep = TheoremReport("rotation_gap", {"model": H, "lambda1": l1, "lambda2": l2, "gap": gap, **opts})
    lo, hi = min(l1, l2), max(l1, l2)
    n = max(3, int(round((hi - lo) / opts["h"])) + 1)
    grid = np.linspace(lo, hi, n)
    with _stage("homogenize"):
        curve = homogenize(H, grid, opts["ks"], backend=opts["backend"], N=opts["N"], seed=opts["seed"])
    N, kmax = curve.N, opts["ks"][-1]
    a1 = float(curve.alpha[0] if l1 == lo else curve.alpha[-1])
    a2 = float(curve.alpha[-1] if l2 == hi else curve.alpha[0])
    measured_gap = a2 - a1
    gap_tol = float(curve.error[0] + curve.error[-1])
    rep.measured.update({"alpha_gap": measured_gap, "alpha_gap_error": gap_tol})
    if measured_gap < gap - gap_tol:
        raise NotApplicableError(f"alpha({l2:g}) - alpha({l1:g}) = {measured_gap:.6g} is below the gap {gap:g}")
    sign = 1 if l2 > l1 else -1
    with _stage("mean_value"):
        lam3, mean, (slo, shi) = mean_value_point(curve.lambdas, curve.alpha, lo, hi, direction=sign)
    eta = shi if sign > 0 else slo
    c, _ = _chord(H, lam3, kmax, N, curve.backend, opts["seed"])
    m = chord_measure(c)
    stats = measure_stats(m, H)
    rho = float(stats.rho[0])
    tol = opts["C1"] * (1.0 / N + 1.0 / kmax) * (hi - lo) + gap_tol
    rep.predicted.update({"gap": gap, "mean_slope": mean})
    rep.measured.update({"lambda3": lam3, "eta": eta, "rho": rho, "stats": stats.to_record()})
    rep.tolerances["gap"] = tol
    rep.add("<eta, lambda2 - lambda1> >= gap", eta * (l2 - l1), gap, tol, "ge")
    rep.add("rho (lambda2 - lambda1) >= gap", rho * (l2 - l1), gap, tol, "ge")
    rep.objects.update({"measure": m, "curve": curve})
    return rep


KAM_DEFAULTS = dict(GAP_DEFAULTS, p_window=8.0, oracle_check=True)


def kam_gap(h: HamiltonianModel, K: HamiltonianModel, epsilon: float, a1: float, a2: float,
            config: dict | None = None) -> TheoremReport:
    """Rotation gap for ``h + K`` from the gap of the integrable ``h`` and ``sup |K| <= epsilon``.

    Gates: ``sup |K| <= epsilon`` (sampled) and ``h(a1) - h(a2) > 3 epsilon``.
    The certified alpha gap is ``h(a1) - h(a2) - 2 epsilon``; the report checks
    ``<rho, a1 - a2> >= epsilon`` (the stated constant) and records the margin
    against the sharper certified gap.
    """
    opts = _options(config, KAM_DEFAULTS)
    eps, a1, a2 = float(epsilon), float(a1), float(a2)
    if not h.q_independent or h.time_dependent:
        raise InvalidInputError("h must be an autonomous integrable model")
    if eps < 0:
        raise InvalidInputError("epsilon must be non-negative")
    supK = sup_difference(K, zero(K.dim), 0.5 * (a1 + a2), p_window=opts["p_window"])
    rep_inputs = {"h": h, "K": K, "epsilon": eps, "a1": a1, "a2": a2, **opts}
    if supK > eps * (1 + 1e-9) + 1e-12:
        raise NotApplicableError(f"sup|K| = {supK:.6g} exceeds epsilon = {eps:g}")
    ha1 = float(h(np.zeros((1, 1)), np.full((1, 1), a1), 0.0)[0])
    ha2 = float(h(np.zeros((1, 1)), np.full((1, 1), a2), 0.0)[0])
    if not ha1 - ha2 > 3 * eps:
        raise NotApplicableError(f"h(a1) - h(a2) = {ha1 - ha2:.6g} is not above 3 epsilon = {3 * eps:g}")
    sharp = ha1 - ha2 - 2 * eps
    H = h if eps == 0 else _keep_convexity(h, linear_combination([h, K], [1.0, 1.0],
                                                                name=f"{h.name}+{K.name}"))
    sub = {k: opts[k] for k in GAP_DEFAULTS}
    inner = rotation_gap_certificate(H, a2, a1, sharp, sub)
    rep = TheoremReport("kam_gap", rep_inputs, dict(inner.predicted), dict(inner.measured),
                        dict(inner.tolerances), objects=dict(inner.objects))
    rho = inner.measured["rho"]
    tol = inner.tolerances["gap"]
    rep.predicted.update({"statement_bound": eps, "certified_gap": sharp})
    rep.measured.update({"sup_K": supK, "h_gap": ha1 - ha2,
                         "pairing_a2_minus_a1": rho * (a2 - a1)})
    rep.add("<rho, a1 - a2> >= epsilon", rho * (a1 - a2), eps, tol, "ge")
    rep.add("<rho, a1 - a2> >= h(a1) - h(a2) - 2 epsilon", rho * (a1 - a2), sharp, tol, "ge")
    rep.checks.extend(inner.checks)
    if opts["oracle_check"] and H.convex:
        with _stage("oracle"):
            orc = TwistOracle(H)
            oa = [orc.alpha(a1), orc.alpha(a2)]
        curve = inner.objects["curve"]
        pa = [float(np.interp(a, curve.lambdas, curve.alpha)) for a in (a1, a2)]
        rep.measured["oracle_alpha"] = oa
        rep.measured["pipeline_alpha"] = pa
        for a, o, p in zip((a1, a2), oa, pa):
            rep.add(f"alpha({a:g}) against the twist oracle", p, o, 2e-2)
    return rep


# --------------------------------------------------------------------------
# localisation

LOCAL_DEFAULTS = dict(ks=(4, 8, 16), N=16, box=0.02, points=5, backend="auto", seed=0, tol=1e-2)


def localize(H: HamiltonianModel, directions: Sequence[HamiltonianModel],
             config: dict | None = None) -> TheoremReport:
    """``E(lambda) = alpha_{H + sum lambda_i K_i}(0)``: Clarke gradient at 0 against ``int K_i dm``.

    ``E`` is extrapolated from ``f_k`` at class 0 on a tensor grid of
    ``points`` values per direction in ``[-box, box]``; ``m`` is the chord
    measure of the unperturbed selector at class 0 and ``k_max``.
    """
    opts = _options(config, LOCAL_DEFAULTS)
    F = PerturbedFamily(H, tuple(directions))
    d = F.size
    if d < 1 or d > 3:
        raise InvalidInputError("localize handles one to three directions")
    if H.time_dependent or H.dim != 1:
        raise NotApplicableError("localize is implemented for autonomous one-degree-of-freedom models")
    if opts["points"] < 3 or opts["points"] % 2 == 0:
        raise InvalidInputError("points must be odd and at least 3")
    rep = TheoremReport("local", {"model": H, "directions": list(directions), **opts})
    axis = np.linspace(-opts["box"], opts["box"], int(opts["points"]))
    N, ks = int(opts["N"]), opts["ks"]
    E = np.empty((axis.size,) * d)
    center_sv = None
    with _stage("homogenize"):
        for idx in np.ndindex(E.shape):
            lam_vec = axis[list(idx)]
            Hl = H if not np.any(lam_vec) else _keep_convexity(H, perturbed_eval(F, lam_vec))
            vals = []
            for k in ks:
                fk, sv = compute_fk(Hl, 0.0, k, opts["backend"], N, opts["seed"], return_value=True)
                vals.append(fk)
                if not np.any(lam_vec) and k == ks[-1]:
                    center_sv = sv
            E[idx] = extrapolate(ks, vals)[0]
    with _stage("clarke_subdiff"):
        if d == 1:
            est = clarke_subdiff(axis, E, 0.0)
        else:
            est = clarke_subdiff([axis] * d, E, np.zeros(d))
    eta = est.polytope.mean(axis=0)
    c, _ = _chord(H, 0.0, ks[-1], N, opts["backend"], opts["seed"], sv=center_sv)
    m = chord_measure(c)
    integrals = [float(m.expect(K(m.q, m.p, 0.0))) for K in F.directions]
    rep.predicted["eta"] = eta.tolist()
    rep.measured.update({"integrals": integrals, "clarke_polytope": est.polytope.tolist(),
                         "E_center": float(E[(axis.size // 2,) * d])})
    rep.tolerances["integral"] = opts["tol"]
    for i, (v, e) in enumerate(zip(integrals, eta)):
        rep.add(f"int K_{i + 1} dm = eta_{i + 1}", v, e, opts["tol"])
    rep.objects.update({"measure": m, "subdiff": est})
    return rep


# --------------------------------------------------------------------------
# time-periodic models

NONAUT_DEFAULTS = dict(ks=(4, 8, 16), N=32, h=0.01, half_width=2, backend="auto", seed=0,
                       C1=TOL_C1, C2=TOL_C2, flow_tau=0.005)


def verify_nonautonomous(H: HamiltonianModel, lam: float, config: dict | None = None) -> TheoremReport:
    """Chord measure on phase space x circle, reduced to a time-one-map measure.

    The chord of ``W_{k_max}`` carries the time ``s = t mod 1`` of each step;
    pulling every atom back to ``s = 0`` gives ``m``.  Checks the time-one
    rotation vector and action of ``m`` against ``eta`` and ``alpha - eta
    lam``, and the push-forward residual of ``m`` under the time-one map
    against ``C / k_max``.
    """
    opts = _options(config, NONAUT_DEFAULTS)
    if H.dim != 1:
        raise NotApplicableError("the verification grid is one-dimensional")
    lam = float(lam)
    rep = TheoremReport("nonautonomous", {"model": H, "lambda": lam, **opts})
    curve, i0 = _local_curve(H, lam, opts)
    N, kmax = curve.N, opts["ks"][-1]
    fam = {k: (curve.lambdas, curve.per_k[k]) for k in curve.ks}
    with _stage("limsup_subdiff"):
        est = limsup_subdiff(fam, lam, radius=opts["half_width"] * opts["h"])
    lo, hi = est.interval
    eta = 0.5 * (lo + hi)
    nu, members, weights = _witness_measure(H, est, kmax, N, curve.backend, opts["seed"], eta)
    tau = float(opts["flow_tau"])
    with _stage("suspend_and_reduce"):
        m, red = suspend_and_reduce(nu, H, tau=tau)
    rho = float(rotation_vector_nonaut(m, H, tau)[0])
    action = action_nonaut(m, H, tau)
    battery = default_battery(1)
    push = pushforward_residual(m, H, 1.0, tau, battery)
    bound = _battery_bound(m, battery) / kmax
    alpha = float(curve.alpha[i0])
    tol_rho, tol_A = _budget(opts, N, curve.error[i0])
    rep.predicted.update({"eta": eta, "action": alpha - eta * lam, "alpha": alpha,
                          "limsup_interval": [lo, hi]})
    rep.measured.update({"rho": rho, "action": action, "pushforward_residual": push,
                         "reduction": red, "witnesses": members, "weights": weights})
    rep.tolerances.update({"rho": tol_rho, "action": tol_A, "pushforward": bound})
    rep.add("rotation vector = eta", rho, eta, tol_rho)
    rep.add("action = alpha - eta lambda", action, alpha - eta * lam, tol_A)
    rep.add("push-forward residual <= C/k_max", push, bound, 0.0, "le")
    rep.objects.update({"measure": m, "suspension": nu, "curve": curve})
    return rep


# --------------------------------------------------------------------------
# tolerance constants

def tolerance_constants(ks: Sequence[int] = (4, 8, 16), N: int = 16, lam: float = 0.7) -> dict:
    """Observed ``|rho - eta|`` and ``|A - (alpha - eta lam)|`` over ``tau + 1/k`` on ``h = p^2/2``.

    These ratios calibrate ``TOL_C1`` and ``TOL_C2``; on the integrable fixture
    they are at round-off level, far below the frozen constants.
    """
    from .models import integrable

    rep = verify_main_theorem(integrable([0.0, 0.0, 0.5]), lam,
                              {"ks": tuple(ks), "N": N, "bounded_check": False})
    scale = 1.0 / N + 1.0 / ks[-1]
    return {"C1_observed": abs(rep.measured["rho"] - rep.predicted["eta"]) / scale,
            "C2_observed": abs(rep.measured["action"] - rep.predicted["action"]) / scale,
            "C1": TOL_C1, "C2": TOL_C2}
