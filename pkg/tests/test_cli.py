import json
from pathlib import Path

import pytest

from otcalib.cli import main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(command, config, out, *extra):
    return main([command, "--config", str(CONFIGS / config), "--out", str(out), *extra])


def checks(out):
    data = json.loads((out / "report.json").read_text())
    return data, {c["name"]: c for c in data["checks"]}


def test_verify_map_uniform(tmp_path):
    assert run("verify-map", "uniform_1d.toml", tmp_path) == 0
    data, by = checks(tmp_path)
    assert data["verdict"] == "pass" and data["command"] == "verify-map"
    for name in ("lagrangian", "pushforward", "calibration-equality", "mean-curvature", "spacelike"):
        assert by[name]["passed"]
    assert (tmp_path / "graph_grid.csv").read_text().startswith("x1,")


def test_verify_map_detects_injected_rotation(tmp_path, capsys):
    assert run("verify-map", "rotation_injected.toml", tmp_path) == 1
    _, by = checks(tmp_path)
    assert not by["lagrangian"]["passed"]
    assert "lagrangian" in capsys.readouterr().err


def test_verify_map_discrete(tmp_path):
    assert run("verify-map", "discrete_2d.toml", tmp_path) == 0
    _, by = checks(tmp_path)
    assert by["cyclical-monotonicity"]["passed"] and "assignment" in by
    assert (tmp_path / "plan.csv").exists()


def test_comass_and_negative_control(tmp_path):
    assert run("comass", "sqrt1p_uniform.toml", tmp_path / "a") == 0
    assert run("comass", "negative_form.toml", tmp_path / "b") == 1
    _, by = checks(tmp_path / "b")
    assert by["comass"]["detail"]["bounded"] is False


def test_mass_compare(tmp_path):
    assert run("mass-compare", "gaussian_rotation.toml", tmp_path, "--grid", "33") == 0
    _, by = checks(tmp_path)
    assert by["mass.optimal-first"]["passed"]
    header = (tmp_path / "mass_ranking.csv").read_text().splitlines()[0]
    assert header.startswith("name,mass")
    assert (tmp_path / "mesh" / "simplices.csv").exists()


def test_mass_compare_flags_sawtooth(tmp_path):
    assert run("mass-compare", "uniform_1d.toml", tmp_path) == 0
    _, by = checks(tmp_path)
    assert any(k.startswith("mass.flagged.") for k in by)


def test_curvature(tmp_path):
    assert run("curvature", "sqrt1p_gaussian.toml", tmp_path) == 0
    _, by = checks(tmp_path)
    assert by["mtw.dual-pipeline"]["passed"] and by["riemann.fd-exact"]["passed"]
    assert (tmp_path / "curvature.csv").exists()


def test_deterministic_reports(tmp_path):
    for cmd, config in (("comass", "negative_form.toml"), ("verify-map", "discrete_2d.toml")):
        run(cmd, config, tmp_path / "1", "--seed", "5")
        run(cmd, config, tmp_path / "2", "--seed", "5")
        assert (tmp_path / "1" / "report.json").read_bytes() == (tmp_path / "2" / "report.json").read_bytes()


def test_config_errors_exit_2(tmp_path):
    assert main(["verify-map", "--config", str(tmp_path / "missing.toml")]) == 2
    assert main(["verify-map"]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("[nope]\nx = 1\n")
    assert main(["comass", "--config", str(bad)]) == 2
    assert run("verify-map", "uniform_1d.toml", tmp_path, "--seed", "-3") == 2
