import csv
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from alphalab import cli


def _write(tmp_path, cfg, name="run.json"):
    path = tmp_path / name
    if name.endswith(".json"):
        path.write_text(json.dumps(cfg))
    else:
        import yaml

        path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _alpha_rows(out):
    with open(os.path.join(out, "alpha.csv")) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("".join(lines))))


FREE_CFG = {"model": {"name": "integrable", "params": {"h_poly_coeffs": [0, 0, 0.5]}},
            "lambdas": {"start": -2, "stop": 2, "num": 9}, "k_schedule": [1, 2, 4], "N": 16}


def test_alpha_free_particle(tmp_path, capsys):
    out = str(tmp_path / "alpha")
    assert cli.main(["alpha", "--config", _write(tmp_path, FREE_CFG), "--out", out]) == 0
    rows = _alpha_rows(out)
    lam = np.array([float(r["lambda"]) for r in rows])
    alpha = np.array([float(r["alpha"]) for r in rows])
    assert np.allclose(alpha, lam**2 / 2, atol=1e-9)
    # every output embeds the manifest
    with open(os.path.join(out, "alpha.json")) as fh:
        assert "orientation" in json.load(fh)["manifest"]
    with open(os.path.join(out, "plot_alpha.csv")) as fh:
        assert fh.readline().startswith("# manifest:")


def test_yaml_config_and_idempotence(tmp_path, capsys):
    out = str(tmp_path / "alpha")
    path = _write(tmp_path, FREE_CFG, "run.yaml")
    assert cli.main(["alpha", "--config", path, "--out", out]) == 0
    first = {n: open(os.path.join(out, n), "rb").read() for n in os.listdir(out)}
    capsys.readouterr()
    assert cli.main(["alpha", "--config", path, "--out", out]) == 0
    assert '"cached"' in capsys.readouterr().out
    second = {n: open(os.path.join(out, n), "rb").read() for n in os.listdir(out)}
    assert first == second
    # a different seed is a different request
    assert cli.main(["alpha", "--config", path, "--out", out, "--seed", "3"]) == 0
    assert '"done"' in capsys.readouterr().out


@pytest.mark.parametrize("bad,field", [
    ({"k": -1}, "k"),
    ({"k_schedule": [4, 2]}, "k_schedule"),
    ({"model": {"name": "nope"}}, "model.name"),
    ({"frobnicate": 1}, "frobnicate"),
    ({"lambdas": {"start": 0, "stop": 1}}, "lambdas"),
])
def test_invalid_config_exit_2(tmp_path, capsys, bad, field):
    assert cli.main(["chords", "--config", _write(tmp_path, {**FREE_CFG, **bad}),
                     "--out", str(tmp_path / "o")]) == 2
    diag = json.loads(capsys.readouterr().err)
    assert diag["status"] == "invalid-config"
    assert field in [e["field"] for e in diag["errors"]]


def test_unknown_verify_option(tmp_path, capsys):
    cfg = {**FREE_CFG, "theorem": "main_thm", "lambda0": 0.5, "verify": {"foo": 1}}
    assert cli.main(["verify", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert "verify.foo" in capsys.readouterr().err


def test_numerical_error_exit_3(tmp_path, capsys):
    cfg = {"model": {"name": "doublewell_p", "params": {"epsilon": 0.05}}, "lambda0": 0.0, "k": 2, "N": 16}
    assert cli.main(["chords", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o"),
                     "--backend", "min"]) == 3
    err = json.loads(capsys.readouterr().err)
    assert err["status"] == "error" and err["type"] == "NotApplicableError"


def test_chords_and_measure(tmp_path, capsys):
    cfg = {"model": "pendulum", "N": 16}
    path = _write(tmp_path, cfg)
    out = str(tmp_path / "chords")
    assert cli.main(["chords", "--config", path, "--out", out, "--lambda0", "2.0", "--k", "2"]) == 0
    assert any(n.endswith(".csv") for n in os.listdir(out))
    out = str(tmp_path / "measure")
    assert cli.main(["measure", "--config", path, "--out", out, "--lambda0", "2.0", "--k", "2"]) == 0
    assert os.path.exists(os.path.join(out, "run_manifest.json"))


def test_verify_main_theorem_pendulum(tmp_path, capsys):
    cfg = {"model": {"name": "pendulum", "params": {"amplitude": 1.0}}, "theorem": "main_thm",
           "lambda0": 0.5}
    out = str(tmp_path / "verify")
    assert cli.main(["verify", "--config", _write(tmp_path, cfg), "--out", out]) == 0
    with open(os.path.join(out, "main_thm.json")) as fh:
        assert json.load(fh)["pass"]


def test_module_entry_point(tmp_path):
    out = str(tmp_path / "o")
    res = subprocess.run([sys.executable, "-m", "alphalab", "oracle", "--config",
                          _write(tmp_path, {"model": "pendulum", "lambdas": [0.0, 2.0]}), "--out", out],
                         capture_output=True, text=True, env={**os.environ, "ALPHALAB_THREADS": "1"})
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["status"] == "done"
