"""Command-line front end: ``python3 -m alphalab <command> --config run.json --out DIR``.

Commands: ``alpha``, ``subdiff``, ``chords``, ``measure``, ``verify``,
``oracle`` and ``localize``.  Configs are JSON or YAML files; unknown keys
are rejected before any computation.  Every output file carries the
conventions manifest (JSON files as a ``manifest`` field, CSV files as
``#`` comment lines).  A run directory whose ``run_manifest.json`` matches
the content hash of the request and whose files are unchanged is reused.

Exit codes: 0 success, 1 a verification check failed, 2 invalid
configuration (field-level diagnostics on stderr as JSON), 3 a numerical
stage failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import __version__, conventions
from .errors import AlphaLabError, InvalidInputError
from .models import MODEL_REGISTRY, HamiltonianModel, make_model

COMMANDS = ("alpha", "subdiff", "chords", "measure", "verify", "oracle", "localize")
BACKEND_CHOICES = ("auto", "min", "persistence", "continuation")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERICS = 0, 1, 2, 3


class ConfigError(InvalidInputError):
    """Configuration rejected; ``errors`` lists ``{"field", "error"}`` records."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['error']}" for e in self.errors))


# --------------------------------------------------------------------------
# configuration

@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"name": "pendulum", "params": {}})
    lambdas: list = field(default_factory=lambda: [0.0])
    lambda0: Optional[float] = None
    k: int = 16
    k_schedule: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    N: Optional[int] = None
    backend: str = "auto"
    seed: int = 0
    theorem: Optional[str] = None
    verify: dict = field(default_factory=dict)
    gap: dict = field(default_factory=dict)
    kam: dict = field(default_factory=dict)
    directions: list = field(default_factory=list)
    oracle: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return asdict(self)


_FIELDS = set(RunConfig.__dataclass_fields__)


def _model_spec(value, name: str, errors: list) -> Optional[dict]:
    if isinstance(value, str):
        value = {"name": value, "params": {}}
    if not isinstance(value, dict):
        errors.append({"field": name, "error": "expected a model name or {name, params}"})
        return None
    extra = set(value) - {"name", "params"}
    if extra:
        errors.append({"field": name, "error": f"unknown key(s) {sorted(extra)}"})
    mname = value.get("name")
    if mname not in MODEL_REGISTRY:
        errors.append({"field": f"{name}.name",
                       "error": f"unknown model {mname!r}; known: {sorted(MODEL_REGISTRY)}"})
        return None
    params = value.get("params", {}) or {}
    if not isinstance(params, dict):
        errors.append({"field": f"{name}.params", "error": "expected a mapping"})
        return None
    try:
        make_model(mname, **params)
    except (TypeError, InvalidInputError) as e:
        errors.append({"field": f"{name}.params", "error": str(e)})
        return None
    return {"name": mname, "params": dict(params)}


def _is_int(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) \
        and np.isfinite(x)


def validate_config(raw: dict) -> RunConfig:
    """Check every field of a raw mapping; raises :class:`ConfigError` listing all problems."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError([{"field": "<root>", "error": "config must be a mapping"}])
    for key in sorted(set(raw) - _FIELDS):
        errors.append({"field": key, "error": "unknown key"})
    cfg = RunConfig()
    if "model" in raw:
        spec = _model_spec(raw["model"], "model", errors)
        if spec:
            cfg.model = spec
    if "lambdas" in raw:
        lam = raw["lambdas"]
        if isinstance(lam, dict):
            if set(lam) != {"start", "stop", "num"}:
                errors.append({"field": "lambdas", "error": "range needs exactly start, stop, num"})
            elif not (_is_num(lam["start"]) and _is_num(lam["stop"]) and _is_int(lam["num"])
                      and lam["num"] >= 1):
                errors.append({"field": "lambdas", "error": "start/stop must be finite, num a positive integer"})
            else:
                cfg.lambdas = np.linspace(lam["start"], lam["stop"], lam["num"]).tolist()
        elif isinstance(lam, list) and lam and all(_is_num(x) for x in lam):
            if any(b <= a for a, b in zip(lam, lam[1:])):
                errors.append({"field": "lambdas", "error": "values must be strictly increasing"})
            cfg.lambdas = [float(x) for x in lam]
        else:
            errors.append({"field": "lambdas", "error": "expected a non-empty list of numbers or {start, stop, num}"})
    if "lambda0" in raw:
        if raw["lambda0"] is not None and not _is_num(raw["lambda0"]):
            errors.append({"field": "lambda0", "error": "expected a finite number"})
        else:
            cfg.lambda0 = None if raw["lambda0"] is None else float(raw["lambda0"])
    if "k" in raw:
        if not _is_int(raw["k"]) or raw["k"] < 1:
            errors.append({"field": "k", "error": "must be a positive integer"})
        else:
            cfg.k = int(raw["k"])
    if "k_schedule" in raw:
        ks = raw["k_schedule"]
        if not (isinstance(ks, list) and ks and all(_is_int(k) for k in ks)):
            errors.append({"field": "k_schedule", "error": "expected a non-empty list of integers"})
        elif any(k < 1 for k in ks):
            errors.append({"field": "k_schedule", "error": "every k must be a positive integer"})
        elif any(b <= a for a, b in zip(ks, ks[1:])):
            errors.append({"field": "k_schedule", "error": "must be strictly increasing"})
        else:
            cfg.k_schedule = [int(k) for k in ks]
    if "N" in raw:
        if raw["N"] is not None and (not _is_int(raw["N"]) or raw["N"] < 1):
            errors.append({"field": "N", "error": "must be a positive integer or null"})
        else:
            cfg.N = None if raw["N"] is None else int(raw["N"])
    if "backend" in raw:
        if raw["backend"] not in BACKEND_CHOICES:
            errors.append({"field": "backend", "error": f"must be one of {list(BACKEND_CHOICES)}"})
        else:
            cfg.backend = raw["backend"]
    if "seed" in raw:
        if not _is_int(raw["seed"]) or raw["seed"] < 0:
            errors.append({"field": "seed", "error": "must be a non-negative integer"})
        else:
            cfg.seed = int(raw["seed"])
    if "theorem" in raw:
        from .verify import THEOREM_IDS

        if raw["theorem"] not in THEOREM_IDS:
            errors.append({"field": "theorem", "error": f"must be one of {list(THEOREM_IDS)}"})
        else:
            cfg.theorem = raw["theorem"]
    for key in ("verify", "gap", "kam", "oracle"):
        if key in raw:
            if not isinstance(raw[key], dict):
                errors.append({"field": key, "error": "expected a mapping"})
            else:
                setattr(cfg, key, dict(raw[key]))
    if cfg.gap:
        extra = set(cfg.gap) - {"lambda1", "lambda2", "gap"}
        if extra:
            errors.append({"field": "gap", "error": f"unknown key(s) {sorted(extra)}"})
    if cfg.kam:
        extra = set(cfg.kam) - {"h", "K", "epsilon", "a1", "a2"}
        if extra:
            errors.append({"field": "kam", "error": f"unknown key(s) {sorted(extra)}"})
        for sub in ("h", "K"):
            if sub in cfg.kam:
                spec = _model_spec(cfg.kam[sub], f"kam.{sub}", errors)
                if spec:
                    cfg.kam[sub] = spec
    if cfg.oracle:
        extra = set(cfg.oracle) - {"h", "rho_max"}
        if extra:
            errors.append({"field": "oracle", "error": f"unknown key(s) {sorted(extra)}"})
    if "directions" in raw:
        if not isinstance(raw["directions"], list):
            errors.append({"field": "directions", "error": "expected a list of model specs"})
        else:
            specs = [_model_spec(d, f"directions[{i}]", errors) for i, d in enumerate(raw["directions"])]
            cfg.directions = [s for s in specs if s]
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError([{"field": "<file>", "error": str(e)}]) from None
    try:
        if path.endswith((".yaml", ".yml")):
            import yaml

            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except Exception as e:  # parser errors differ between formats
        raise ConfigError([{"field": "<file>", "error": f"cannot parse: {e}"}]) from None
    return raw if raw is not None else {}


def _build(spec: dict) -> HamiltonianModel:
    return make_model(spec["name"], **spec["params"])


# --------------------------------------------------------------------------
# output

class RunWriter:
    """Single writer for a run directory; every file gets the conventions manifest."""

    def __init__(self, out_dir: str, key: str, manifest: dict):
        self.out_dir = out_dir
        self.key = key
        self.manifest = manifest
        self.files: dict = {}

    def json(self, name: str, payload: dict):
        payload = {"manifest": self.manifest, **payload}
        self._put(name, json.dumps(payload, indent=1, sort_keys=True, default=_default) + "\n")

    def csv(self, name: str, text: str):
        head = "# manifest: " + json.dumps(self.manifest, sort_keys=True) + "\n"
        self._put(name, head + text)

    def _put(self, name, text):
        os.makedirs(self.out_dir, exist_ok=True)
        path = os.path.join(self.out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def close(self, status: dict):
        rec = {"key": self.key, "files": self.files, "status": status, "manifest": self.manifest}
        with open(os.path.join(self.out_dir, "run_manifest.json"), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write(json.dumps(rec, indent=1, sort_keys=True) + "\n")


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, HamiltonianModel):
        return {"name": o.name, "params": o.params}
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _cached(out_dir: str, key: str) -> Optional[dict]:
    path = os.path.join(out_dir, "run_manifest.json")
    try:
        with open(path, encoding="utf-8") as fh:
            rec = json.load(fh)
    except (OSError, ValueError):
        return None
    if rec.get("key") != key:
        return None
    for name, digest in rec.get("files", {}).items():
        try:
            with open(os.path.join(out_dir, name), "rb") as fh:
                if hashlib.sha256(fh.read()).hexdigest() != digest:
                    return None
        except OSError:
            return None
    return rec


def request_key(command: str, cfg: RunConfig, extra: dict) -> str:
    blob = json.dumps({"command": command, "config": cfg.to_record(), "extra": extra,
                       "version": __version__, "orientation": conventions.ORIENTATION},
                      sort_keys=True, default=_default)
    return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# commands

def _need_lambda0(cfg: RunConfig) -> float:
    if cfg.lambda0 is None:
        raise ConfigError([{"field": "lambda0", "error": "required by this command"}])
    return cfg.lambda0


def cmd_alpha(cfg: RunConfig, w: RunWriter) -> dict:
    from .spectral import homogenize

    H = _build(cfg.model)
    curve = homogenize(H, cfg.lambdas, cfg.k_schedule, backend=cfg.backend, N=cfg.N, seed=cfg.seed,
                       keep_certificates=False)
    w.csv("alpha.csv", curve.to_csv())
    rec = json.loads(curve.to_json())
    rec.pop("manifest", None)
    w.json("alpha.json", rec)
    lines = ["lambda,alpha,lower,upper"]
    for lam, a, e in zip(curve.lambdas, curve.alpha, curve.error):
        lines.append(f"{lam!r},{a!r},{a - e!r},{a + e!r}")
    w.csv("plot_alpha.csv", "\n".join(lines) + "\n")
    return {"ok": True, "points": int(curve.lambdas.size)}


def cmd_subdiff(cfg: RunConfig, w: RunWriter) -> dict:
    from .spectral import homogenize
    from .subdiff import clarke_subdiff, limsup_subdiff

    lam0 = _need_lambda0(cfg)
    H = _build(cfg.model)
    curve = homogenize(H, cfg.lambdas, cfg.k_schedule, backend=cfg.backend, N=cfg.N, seed=cfg.seed,
                       keep_certificates=False)
    clarke = clarke_subdiff(curve.lambdas, curve.alpha, lam0)
    out = {"lambda0": lam0, "clarke": json.loads(clarke.to_json())}
    if len(curve.ks) >= 3:
        fam = {k: (curve.lambdas, curve.per_k[k]) for k in curve.ks}
        out["limsup"] = json.loads(limsup_subdiff(fam, lam0).to_json())
    w.json("subdiff.json", out)
    w.csv("alpha.csv", curve.to_csv())
    return {"ok": True, "clarke_interval": list(clarke.interval)}


def _chords(cfg: RunConfig):
    from .genfun import build_discrete_action
    from .measures import extract_chords
    from .spectral import spectral_invariant

    lam0 = _need_lambda0(cfg)
    H = _build(cfg.model)
    W = build_discrete_action(H, lam0, cfg.k, cfg.N)
    sv = spectral_invariant(W, backend=cfg.backend, seed=cfg.seed)
    chords = extract_chords(H, lam0, cfg.k, sv.value / cfg.k, certificate=sv.certificate,
                            seed=cfg.seed, W=W)
    return H, W, sv, chords


def cmd_chords(cfg: RunConfig, w: RunWriter) -> dict:
    from .genfun import _canonical
    from .measures import chord_measure, measure_stats

    H, W, sv, chords = _chords(cfg)
    rows = ["chord,i,t,q,p"]
    summary = []
    for j, c in enumerate(chords):
        for i in range(c.m + 1):
            rows.append(f"{j},{i},{c.times[i]!r},{float(c.q[i, 0])!r},{float(c.p[i, 0])!r}")
        m = chord_measure(c)
        w.csv(f"measure_{j}.csv", m.to_csv())
        st = measure_stats(m, H)
        selected = bool(np.allclose(_canonical(W, c.certificate.vars),
                                    _canonical(W, sv.certificate.vars), atol=1e-6))
        summary.append({"index": j, "action": c.action, "value": c.value,
                        "displacement": c.displacement.tolist(), "selected": selected,
                        "stats": st.to_record()})
    w.csv("chords.csv", "\n".join(rows) + "\n")
    w.json("chords.json", {"lambda0": cfg.lambda0, "k": cfg.k, "N": W.N,
                           "f_k": sv.value / cfg.k, "chords": summary})
    return {"ok": True, "chords": len(chords)}


def cmd_measure(cfg: RunConfig, w: RunWriter) -> dict:
    from .genfun import build_discrete_action
    from .measures import chord_from_critical_point, chord_measure, measure_stats
    from .spectral import spectral_invariant

    lam0 = _need_lambda0(cfg)
    H = _build(cfg.model)
    W = build_discrete_action(H, lam0, cfg.k, cfg.N)
    sv = spectral_invariant(W, backend=cfg.backend, seed=cfg.seed)
    m = chord_measure(chord_from_critical_point(W, sv.certificate))
    st = measure_stats(m, H)
    w.csv("measure.csv", m.to_csv())
    w.json("measure_stats.json", {"lambda0": lam0, "k": cfg.k, "N": W.N, "f_k": sv.value / cfg.k,
                                  "stats": st.to_record()})
    return {"ok": True, "rho": st.rho.tolist()}


def cmd_oracle(cfg: RunConfig, w: RunWriter) -> dict:
    from .oracle import TwistOracle

    H = _build(cfg.model)
    orc = TwistOracle(H, h=float(cfg.oracle.get("h", 0.02)),
                      rho_max=float(cfg.oracle.get("rho_max", 4.0)))
    vals = [orc.alpha(l) for l in cfg.lambdas]
    lines = ["lambda,alpha"] + [f"{l!r},{a!r}" for l, a in zip(cfg.lambdas, vals)]
    w.csv("oracle.csv", "\n".join(lines) + "\n")
    w.json("oracle.json", {"lambdas": cfg.lambdas, "alpha": vals, "h": orc.h,
                           "rho_max": orc.rho_max})
    return {"ok": True, "points": len(vals)}


def _report_out(rep, w: RunWriter) -> dict:
    for name, obj in rep.objects.items():
        if hasattr(obj, "weights") and hasattr(obj, "to_csv"):
            w.csv(f"{rep.theorem_id}_{name}.csv", obj.to_csv())
        elif hasattr(obj, "per_k"):
            w.csv(f"{rep.theorem_id}_{name}.csv", obj.to_csv())
    rep.artifacts = sorted(n for n in w.files)
    rec = rep.to_record()
    w.json(f"{rep.theorem_id}.json", rec)
    w.csv(f"{rep.theorem_id}_summary.txt", rep.summary() + "\n")
    return {"ok": rep.passed, "skipped": rep.skipped, "summary": rep.summary()}


def cmd_verify(cfg: RunConfig, w: RunWriter) -> dict:
    from . import verify as V

    tid = cfg.theorem
    if tid is None:
        raise ConfigError([{"field": "theorem", "error": "required by verify"}])
    opts = dict(cfg.verify)
    defaults = {"main_thm": V.MAIN_DEFAULTS, "maincor": V.CLARKE_DEFAULTS, "rotation_gap": V.GAP_DEFAULTS,
                "kam_gap": V.KAM_DEFAULTS, "local": V.LOCAL_DEFAULTS, "nonautonomous": V.NONAUT_DEFAULTS}[tid]
    unknown = sorted(set(opts) - set(defaults))
    if unknown:
        raise ConfigError([{"field": f"verify.{k}", "error": f"unknown option for {tid}"} for k in unknown])
    if tid == "kam_gap":
        kam = cfg.kam
        missing = [k for k in ("h", "K", "epsilon", "a1", "a2") if k not in kam]
        if missing:
            raise ConfigError([{"field": "kam", "error": f"missing {missing}"}])
        rep = V.kam_gap(_build(kam["h"]), _build(kam["K"]), kam["epsilon"], kam["a1"], kam["a2"], opts)
        return _report_out(rep, w)
    H = _build(cfg.model)
    if tid == "rotation_gap":
        g = cfg.gap
        missing = [k for k in ("lambda1", "lambda2", "gap") if k not in g]
        if missing:
            raise ConfigError([{"field": "gap", "error": f"missing {missing}"}])
        rep = V.rotation_gap_certificate(H, g["lambda1"], g["lambda2"], g["gap"], opts)
    elif tid == "local":
        rep = V.localize(H, [_build(d) for d in cfg.directions], opts)
    else:
        lam0 = _need_lambda0(cfg)
        fn = {"main_thm": V.verify_main_theorem, "maincor": V.verify_clarke_corollary,
              "nonautonomous": V.verify_nonautonomous}[tid]
        rep = fn(H, lam0, opts)
    return _report_out(rep, w)


def cmd_localize(cfg: RunConfig, w: RunWriter) -> dict:
    from .verify import localize

    if not cfg.directions:
        raise ConfigError([{"field": "directions", "error": "at least one direction is required"}])
    rep = localize(_build(cfg.model), [_build(d) for d in cfg.directions], dict(cfg.verify))
    return _report_out(rep, w)


HANDLERS = {"alpha": cmd_alpha, "subdiff": cmd_subdiff, "chords": cmd_chords,
            "measure": cmd_measure, "verify": cmd_verify, "oracle": cmd_oracle,
            "localize": cmd_localize}


# --------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="alphalab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="JSON or YAML run configuration")
        p.add_argument("--out", metavar="DIR", default=os.path.join("runs", name))
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--backend", choices=[c for c in BACKEND_CHOICES if c != "auto"], default=None)
        if name in ("subdiff", "chords", "measure", "verify"):
            p.add_argument("--lambda0", type=float, default=None)
        if name in ("chords", "measure"):
            p.add_argument("--k", type=int, default=None)
        if name == "verify":
            p.add_argument("--theorem", default=None)
    return ap


def _diagnostics(errors) -> str:
    return json.dumps({"status": "invalid-config", "errors": errors}, indent=1)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config)
        if isinstance(raw, dict):
            raw = dict(raw)
            for opt in ("seed", "backend", "lambda0", "k", "theorem"):
                val = getattr(args, opt, None)
                if val is not None:
                    raw[opt] = val
        cfg = validate_config(raw)
    except ConfigError as e:
        print(_diagnostics(e.errors), file=sys.stderr)
        return EXIT_CONFIG
    key = request_key(args.command, cfg, {})
    hit = _cached(args.out, key)
    if hit is not None:
        status = hit.get("status", {})
        print(json.dumps({"status": "cached", "out": args.out, **status}, default=_default))
        return EXIT_OK if status.get("ok", True) else EXIT_FAILED
    manifest = conventions.manifest(command=args.command, request=key[:16])
    writer = RunWriter(args.out, key, manifest)
    try:
        status = HANDLERS[args.command](cfg, writer)
    except ConfigError as e:
        print(_diagnostics(e.errors), file=sys.stderr)
        return EXIT_CONFIG
    except AlphaLabError as e:
        print(json.dumps({"status": "error", "type": type(e).__name__, "stage": getattr(e, "stage", None),
                          "message": str(e)}), file=sys.stderr)
        return EXIT_NUMERICS
    writer.close(status)
    print(json.dumps({"status": "done", "out": args.out, **status}, default=_default))
    return EXIT_OK if status.get("ok", True) else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
