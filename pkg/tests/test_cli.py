import json

import pytest
import yaml

from birkhoff_lab import cli
from birkhoff_lab.errors import ConfigError


def _run(tmp_path, *args, config=None):
    argv = list(args) + ["--out", str(tmp_path / "out")]
    if config is not None:
        p = tmp_path / "cfg.yaml"
        p.write_text(yaml.safe_dump(config))
        argv += ["--config", str(p)]
    return cli.main(argv)


def test_unknown_keys_are_all_reported():
    with pytest.raises(ConfigError) as e:
        cli.resolve_config("solve-hj", {"n": 64, "bogus": 1, "solver": {"tau": 0.1, "zz": 2}})
    assert "bogus" in str(e.value) and "solver.zz" in str(e.value)
    with pytest.raises(ConfigError):
        cli.resolve_config("nope")


def test_config_error_exit_code(tmp_path, capsys):
    assert _run(tmp_path, "solve-hj", "lo", config={"colour": "red"}) == cli.EXIT_CONFIG
    assert "colour" in capsys.readouterr().err
    assert _run(tmp_path, "solve-hj") == cli.EXIT_CONFIG
    assert _run(tmp_path, "spiral-gap", config={"experiment": "solve-hj"}) == cli.EXIT_CONFIG


def test_solve_hj_writes_artifacts(tmp_path):
    code = _run(tmp_path, "solve-hj", "lo", config={"n": 256})
    assert code == cli.EXIT_OK
    out = tmp_path / "out"
    rep = json.loads((out / "report.json").read_text())
    assert rep["checks"]["residual"] and rep["residual"] < rep["threshold"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["config"]["n"] == 256 and man["config"]["model"]["kind"] == "appendix_pendulum"
    assert {"u.csv", "u.svg", "report.json"} <= set(man["artifacts"])
    assert (out / "u.csv").read_text().startswith("x,u,du_minus,du_plus")


def test_reruns_are_byte_identical(tmp_path):
    cfg = {"pairs": [[0.4, 0.04]], "seed": 7}
    assert _run(tmp_path, "spiral-gap", config=cfg) == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert _run(tmp_path, "spiral-gap", config=cfg) == 0
    second = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert first == second


def test_failed_check_exit_code(tmp_path):
    cfg = {"n": 512, "tau": 0.05, "tol_cells": 0.0,
           "grid": {"n_theta": 128, "n_p": 128, "n_max": 30}}
    assert _run(tmp_path, "inclusion-check", config=cfg) == cli.EXIT_CHECK


def test_numerical_failure_exit_code(tmp_path, capsys):
    # a band too thin to be absorbing for the time-1 map
    cfg = {"grid": {"n_theta": 64, "n_p": 64, "p_min": -0.2, "p_max": 0.2}}
    assert _run(tmp_path, "pendulum-attractor", config=cfg) == cli.EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_property_suite_seeded(tmp_path):
    cfg = {"pairs": 5, "sequences": 20, "n": 64}
    assert _run(tmp_path, "property-suite", "--seed", "3", config=cfg) == 0
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["config"]["seed"] == 3
