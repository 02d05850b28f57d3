import json
import math
import os

import pytest
from click.testing import CliRunner

from emergence_lab.cli import _resolve_threads, main
from emergence_lab.config import load_config, validate_config
from emergence_lab.errors import ConfigError, InputError

FULL2_SPACE = {"m": 2, "beta": 2.0, "transition": [[1, 1], [1, 1]]}
GM_SPACE = {"m": 2, "beta": 2.0, "transition": [[1, 1], [1, 0]]}


def write_config(tmp_path, obj, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj), encoding="utf-8")
    return str(path)


def entropy_config(tmp_path, space=None):
    return {
        "space": space or FULL2_SPACE,
        "experiment": "entropy",
        "parameters": {},
        "seed": 1,
        "output_dir": str(tmp_path / "out"),
    }


# ------------------------------------------------------------------- config

def test_validate_config_collects_all_violations():
    bad = {"space": {"m": 1, "beta": 0.5, "transition": [[1]]},
           "experiment": "nope", "parameters": {}, "seed": -3,
           "output_dir": "x"}
    with pytest.raises(ConfigError) as ei:
        validate_config(bad)
    pointers = {p for p, _ in ei.value.violations}
    assert {"/space/m", "/space/beta", "/experiment", "/seed"} <= pointers


def test_validate_config_missing_fields():
    with pytest.raises(ConfigError) as ei:
        validate_config({})
    pointers = {p for p, _ in ei.value.violations}
    assert {"/space", "/experiment", "/parameters", "/seed",
            "/output_dir"} <= pointers


def test_validate_emergence_epsilons_must_decrease():
    cfg = {"space": FULL2_SPACE, "experiment": "emergence",
           "parameters": {"source": {"kind": "bernoulli", "probs": [0.5, 0.5]},
                          "epsilons": [0.1, 0.2, 0.05],
                          "n_min": 10, "n_max": 100, "count": 5, "depth": 4},
           "seed": 0, "output_dir": "x"}
    with pytest.raises(ConfigError) as ei:
        validate_config(cfg)
    assert any(p == "/parameters/epsilons" for p, _ in ei.value.violations)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.json")


def test_load_config_bad_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_sha256_is_stable(tmp_path):
    cfg = entropy_config(tmp_path)
    a = validate_config(cfg).sha256()
    b = validate_config(json.loads(json.dumps(cfg))).sha256()
    assert a == b and len(a) == 64


# ------------------------------------------------------------------ threads

def test_threads_flag_beats_env(monkeypatch):
    monkeypatch.setenv("EMERGENCE_THREADS", "7")
    assert _resolve_threads(3) == 3
    assert _resolve_threads(None) == 7
    monkeypatch.setenv("EMERGENCE_THREADS", "junk")
    with pytest.raises(InputError):
        _resolve_threads(None)
    monkeypatch.delenv("EMERGENCE_THREADS")
    assert _resolve_threads(None) >= 1


# ---------------------------------------------------------------- validate

def test_cli_validate_ok(tmp_path):
    path = write_config(tmp_path, entropy_config(tmp_path))
    result = CliRunner().invoke(main, ["validate", "--config", path])
    assert result.exit_code == 0
    out = json.loads(result.output)
    assert out["valid"] and out["experiment"] == "entropy"


def test_cli_validate_reports_violations(tmp_path):
    cfg = entropy_config(tmp_path)
    del cfg["seed"]
    path = write_config(tmp_path, cfg)
    result = CliRunner().invoke(main, ["validate", "--config", path])
    assert result.exit_code == 1
    err = json.loads(result.output)
    assert err["kind"] == "config"
    assert any(v["pointer"] == "/seed" for v in err["violations"])


# --------------------------------------------------------------------- runs

def run_ok(tmp_path, cfg, subcommand):
    path = write_config(tmp_path, cfg)
    result = CliRunner().invoke(main, [subcommand, "--config", path])
    assert result.exit_code == 0, result.output
    out_dir = tmp_path / "out"
    manifest = json.loads((out_dir / "manifest.json").read_text())
    for name in manifest["files"]:
        assert (out_dir / name).is_file()
    return out_dir, manifest


def test_cli_entropy_run(tmp_path):
    out_dir, manifest = run_ok(tmp_path, entropy_config(tmp_path), "entropy")
    assert manifest["files"] == ["entropy.csv"]
    assert manifest["experiment"] == "entropy"
    lines = (out_dir / "entropy.csv").read_text().strip().split("\n")
    assert lines[0] == "m,beta,topological_entropy"
    h = float(lines[1].split(",")[2])
    assert h == pytest.approx(math.log(2), abs=1e-12)


def test_cli_pressure_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "pressure",
           "parameters": {"table": {"1": 0.0, "2": 0.0}, "lengths": [4, 8]},
           "seed": 0, "output_dir": str(tmp_path / "out")}
    out_dir, _ = run_ok(tmp_path, cfg, "pressure")
    rows = (out_dir / "pressure.csv").read_text().strip().split("\n")[1:]
    for row in rows:
        n, part, exact = row.split(",")
        assert float(exact) == pytest.approx(math.log(2), abs=1e-9)
        assert abs(float(part) - math.log(2)) <= 2.0 / int(n)


def test_cli_bowen_run(tmp_path):
    cfg = {"space": GM_SPACE, "experiment": "bowen",
           "parameters": {"table": {"1": 1.0, "2": 1.0}},
           "seed": 0, "output_dir": str(tmp_path / "out")}
    out_dir, _ = run_ok(tmp_path, cfg, "bowen")
    h, root = (out_dir / "bowen.csv").read_text().strip().split("\n")[1].split(",")
    assert float(root) == pytest.approx(float(h), abs=1e-6)


def test_cli_outer_sweep_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "outer-sweep",
           "parameters": {"kind": "entropy", "t_grid": [0.5, 1.0],
                          "depth_caps": [2, 4], "m_blk": 2},
           "seed": 0, "output_dir": str(tmp_path / "out")}
    out_dir, _ = run_ok(tmp_path, cfg, "outer-sweep")
    rows = (out_dir / "outer_sweep.csv").read_text().strip().split("\n")[1:]
    for row in rows:
        t, cap, m_val, n_val = row.split(",")
        assert float(m_val) <= float(n_val) + 1e-15


def test_cli_conditions_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "conditions",
           "parameters": {"kind": "entropy", "depth": 4, "t_grid": [0.5]},
           "seed": 0, "output_dir": str(tmp_path / "out")}
    out_dir, _ = run_ok(tmp_path, cfg, "conditions")
    rep = json.loads((out_dir / "conditions.json").read_text())
    assert rep["C3_pass"] and rep["C4_pass"]


def test_cli_emergence_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "emergence",
           "parameters": {"source": {"kind": "bernoulli", "probs": [0.5, 0.5]},
                          "epsilons": [0.3, 0.15, 0.075],
                          "n_min": 32, "n_max": 1024, "count": 8, "depth": 4},
           "seed": 3, "output_dir": str(tmp_path / "out")}
    out_dir, manifest = run_ok(tmp_path, cfg, "emergence")
    assert manifest["files"] == ["emergence.csv", "fit.json"]
    fit = json.loads((out_dir / "fit.json").read_text())
    assert "slope" in fit["exponent_fit"]


def test_cli_reproducible_bytes(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "emergence",
           "parameters": {"source": {"kind": "bernoulli", "probs": [0.4, 0.6]},
                          "epsilons": [0.3, 0.15, 0.075],
                          "n_min": 32, "n_max": 512, "count": 6, "depth": 4},
           "seed": 9, "output_dir": str(tmp_path / "out")}
    path = write_config(tmp_path, cfg)
    runner = CliRunner()
    assert runner.invoke(main, ["emergence", "--config", path]).exit_code == 0
    first = (tmp_path / "out" / "emergence.csv").read_bytes()
    assert runner.invoke(main, ["emergence", "--config", path,
                                "--threads", "2"]).exit_code == 0
    assert (tmp_path / "out" / "emergence.csv").read_bytes() == first


def test_cli_out_override(tmp_path):
    cfg = entropy_config(tmp_path)
    path = write_config(tmp_path, cfg)
    alt = tmp_path / "alt"
    result = CliRunner().invoke(main, ["entropy", "--config", path,
                                       "--out", str(alt)])
    assert result.exit_code == 0
    assert (alt / "entropy.csv").is_file()
    assert not (tmp_path / "out").exists()


def test_cli_subcommand_config_mismatch(tmp_path):
    path = write_config(tmp_path, entropy_config(tmp_path))
    result = CliRunner().invoke(main, ["bowen", "--config", path])
    assert result.exit_code == 1
    err = json.loads(result.output)
    assert err["kind"] == "input"
    out_dir = tmp_path / "out"
    # only the error report lands in the output directory
    assert sorted(p.name for p in out_dir.iterdir()) == ["error.json"]


def test_cli_error_leaves_no_partial_outputs(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "emergence",
           "parameters": {"source": {"kind": "bernoulli", "probs": [0.5, 0.5]},
                          "epsilons": [0.3, 0.15, 0.075],
                          # n_min > n_max: passes schema, fails at run time
                          "n_min": 2048, "n_max": 1024, "count": 8, "depth": 4},
           "seed": 3, "output_dir": str(tmp_path / "out")}
    path = write_config(tmp_path, cfg)
    result = CliRunner().invoke(main, ["emergence", "--config", path])
    assert result.exit_code == 1
    out_dir = tmp_path / "out"
    names = sorted(p.name for p in out_dir.iterdir())
    assert names == ["error.json"]
    err = json.loads((out_dir / "error.json").read_text())
    assert set(err) >= {"module", "operation", "kind", "detail"}


def test_cli_restricted_probe_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "restricted-probe",
           "parameters": {"word": [1], "stochastic_list": [[[0.5, 0.5],
                                                            [0.5, 0.5]]],
                          "n": 32, "m_blk": 2, "depth_cap": 4,
                          "eps": 0.5, "t": 0.6, "metric_depth": 3},
           "seed": 0, "output_dir": str(tmp_path / "out")}
    out_dir, _ = run_ok(tmp_path, cfg, "restricted-probe")
    rep = json.loads((out_dir / "restricted_probe.json").read_text())
    assert rep["value"] >= 0.0


def test_cli_construct_run(tmp_path):
    cfg = {"space": FULL2_SPACE, "experiment": "construct",
           "parameters": {"family": [[[0.2, 0.8], [0.2, 0.8]],
                                     [[0.8, 0.2], [0.8, 0.2]]],
                          "l_max": 1,
                          "eps_tilde": [0.9, 0.8, 0.7],
                          "eps_hat": [0.1, 0.1, 0.1],
                          "gamma": {f"{L},{l}": 32 for L in range(3)
                                    for l in range(L + 1)},
                          "nets": [{"level": 0, "mesh": 0.9,
                                    "nodes": [[1.0]]},
                                   {"level": 1, "mesh": 0.6,
                                    "nodes": [[1.0, 0.0], [0.5, 0.5],
                                              [0.0, 1.0]]}],
                          "metric_depth": 4},
           "seed": 5, "output_dir": str(tmp_path / "out")}
    out_dir, manifest = run_ok(tmp_path, cfg, "construct")
    assert manifest["files"] == ["blocks.csv", "itinerary.json", "orbit.json"]
    orbit = json.loads((out_dir / "orbit.json").read_text())
    assert orbit["seed"] == 5 and orbit["length"] > 0
