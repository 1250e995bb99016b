import json

import pandas as pd
import pytest

from core import cli
from core.cli import RunConfig, apply_overrides, execute, exit_code_for, parse_overrides
from core.data import load_settings
from core.dispersion import limit_tangency
from core.errors import ConfigError, DomainError, KernelError, SolverFailure
from core.save_manager import SaveManager

PARAMS = {"d": 1.0, "big_d": 4.0, "growth": 1.0, "mu_bar": 1.0, "nu_bar": 1.0}


def _config(command, **extra):
    return {"command": command, "params": dict(PARAMS), **extra}


def _write(tmp_path, data, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


@pytest.mark.parametrize("data", [
    {"command": "speed", "params": PARAMS, "extras": 1},
    {"command": "fly", "params": PARAMS},
    {"command": "speed", "params": PARAMS, "options": {"c": 2.5}},
    {"command": "speed", "params": {"d": 1.0}},
    {"command": "speed", "params": {**PARAMS, "d": -1.0}},
    {"command": "speed", "params": PARAMS, "kernels": {"nu": {"atom": 2.0}}},
    {"command": "speed", "params": PARAMS, "grid": {"cells": 10}},
    [1, 2, 3],
])
def test_bad_configs_are_config_errors(data):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(data)


def test_settings_feed_grid_defaults():
    config = RunConfig.from_dict(_config("speed"), {"grid": {"n_intervals": 2048}})
    assert config.grid.n_intervals == 2048
    config = RunConfig.from_dict(_config("speed", grid={"n_intervals": 1024}), {"grid": {"n_intervals": 2048}})
    assert config.grid.n_intervals == 1024


def test_config_hash_is_stable():
    first = RunConfig.from_dict(_config("speed", options={"closed_form": True}))
    second = RunConfig.from_dict(json.loads(json.dumps(_config("speed", options={"closed_form": True}))))
    assert first.config_hash == second.config_hash
    assert first.search.closed_form


def test_parse_overrides():
    overrides = parse_overrides("tol=1e-8, search.c_rtol=1e-6,n_intervals=2048")
    assert overrides == {"grid": {"tol": 1e-8, "n_intervals": 2048.0}, "search": {"c_rtol": 1e-6}}
    assert parse_overrides(None) == {"grid": {}, "search": {}}
    for bad in ("tol", "tol=abc", "grid.c_rtol=1", "speed=2"):
        with pytest.raises(ConfigError):
            parse_overrides(bad)
    config = apply_overrides(RunConfig.from_dict(_config("speed")), overrides)
    assert config.grid.n_intervals == 2048
    assert config.search.c_rtol == 1e-6


def test_exit_codes():
    assert exit_code_for(ConfigError("x")) == 2
    assert exit_code_for(KernelError("x")) == 2
    assert exit_code_for(DomainError("x")) == 2
    assert exit_code_for(SolverFailure("x")) == 3
    assert exit_code_for(PermissionError("x")) == 4
    assert exit_code_for(ZeroDivisionError()) == 3


def test_execute_speed_writes_summary(tmp_path):
    config = RunConfig.from_dict(_config("speed", options={"closed_form": True}))
    save = SaveManager(tmp_path)
    summary = execute(config, save)
    c_tan, _ = limit_tangency(config.params)
    assert summary["results"]["c_star"] == pytest.approx(c_tan, rel=1e-7)
    assert summary["results"]["c_star_tangency"] == pytest.approx(c_tan)
    assert summary["results"]["chain_holds"]
    on_disk = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert on_disk["config_hash"] == config.config_hash
    assert on_disk["files"] == ["summary.json"]
    assert on_disk["status"] == "ok"


def test_execute_curves_emits_plot_bundle(tmp_path):
    config = RunConfig.from_dict(_config("curves", options={"c": 2.5, "n": 25, "closed_form": True}))
    summary = execute(config, SaveManager(tmp_path))
    assert summary["files"] == ["curves.csv", "curves.dat", "plot_curves.py", "summary.json"]
    table = pd.read_csv(tmp_path / "curves.csv")
    assert list(table.columns) == ["lambda", "psi1", "psi2"]
    assert len(table) == 25
    assert "curves.dat" in (tmp_path / "plot_curves.py").read_text(encoding="utf-8")


def test_curves_needs_speed():
    with pytest.raises(ConfigError):
        RunConfig.from_dict(_config("curves"))


@pytest.mark.parametrize("command,options", [
    ("curves", {"c": 2.5, "n": 1}),
    ("curves", {"c": "fast"}),
    ("curves", {"c": 2.5, "n": 2.5}),
    ("curves", {"c": 2.5, "margin": 0.7}),
    ("curves", {"c": 2.5, "closed_form": "yes"}),
    ("sweep-d", {"d_ladder": [100, 10]}),
    ("sweep-d", {"d_ladder": []}),
    ("sweep-d", {"d_ladder": [10, "many"]}),
    ("compare-kernels", {"eps_ladder": [0.25, 0.5]}),
    ("compare-kernels", {"halfwidth": -1.0}),
    ("perturb", {"eps_ladder": [1.5, 0.1]}),
    ("selfsim", {"c": 3.0, "lambda": True}),
    ("selfsim", {"c": 3.0, "lambda": 1.0, "eps_ladder": [0.9]}),
    ("stationary", {"ny": 40}),
    ("stationary", {"ly": float("nan")}),
    ("simulate", {"simulation": {"ny": 20}}),
    ("simulate", {"simulation": {"steps": 10}}),
])
def test_bad_option_values_are_config_errors(command, options):
    with pytest.raises(ConfigError):
        RunConfig.from_dict(_config(command, options=options))


def test_settings_feed_command_defaults():
    settings = {"curve_points": 17, "simulation": {"min_r2": 0.5, "front_fraction": 0.2}}
    curves = RunConfig.from_dict(_config("curves", options={"c": 2.5}), settings)
    assert curves.options["n"] == 17
    assert RunConfig.from_dict(_config("curves", options={"c": 2.5, "n": 5}), settings).options["n"] == 5
    block = {"lx": 20.0, "ly": 3.0, "nx": 81, "ny": 13, "t_end": 1.0, "front_fraction": 0.3}
    sim = RunConfig.from_dict(_config("simulate", options={"simulation": block}), settings).options["simulation"]
    assert sim["min_r2"] == 0.5
    assert sim["front_fraction"] == 0.3
    assert sim["nx"] == 81


def test_packaged_settings_reach_simulate(tmp_path):
    settings = load_settings()
    block = {"lx": 20.0, "ly": 3.0, "nx": 81, "ny": 13, "t_end": 1.0}
    config = RunConfig.from_dict(_config("simulate", options={"simulation": block, "reference_speed": False}),
                                 settings)
    assert config.options["simulation"]["min_r2"] == settings["simulation"]["min_r2"]
    summary = execute(config, SaveManager(tmp_path))
    assert summary["results"]["front_threshold"] == pytest.approx(settings["simulation"]["front_fraction"], rel=1e-5)
    assert "sim_front.csv" in summary["files"]


def test_run_rejects_bad_options_before_computing(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = _write(tmp_path, _config("sweep-d", options={"d_ladder": [100, 10]}))
    out = tmp_path / "out"
    assert cli.run([path, "--out", str(out)]) == 2
    record = json.loads((out / "error.json").read_text(encoding="utf-8"))
    assert record["kind"] == "ConfigError"
    assert not (out / "summary.json").exists()


def test_execute_sweep_and_cinf(tmp_path):
    search = {"closed_form": True}
    sweep = execute(RunConfig.from_dict(_config("sweep-d", search=search, options={"d_ladder": [10, 100, 1000]})),
                    SaveManager(tmp_path / "sweep"))
    cinf = execute(RunConfig.from_dict(_config("cinf", search=search)), SaveManager(tmp_path / "cinf"))
    assert sweep["results"]["converges"]
    assert sweep["results"]["c_inf"] == pytest.approx(cinf["results"]["c_inf"])
    assert "plot_sweep.py" in sweep["files"]


def test_execute_compare_kernels(tmp_path):
    data = _config("compare-kernels", search={"closed_form": True},
                   options={"kernels": ["boxcar", "triangle"], "eps_ladder": [1.0, 0.5, 0.25]})
    summary = execute(RunConfig.from_dict(data), SaveManager(tmp_path))
    assert summary["results"]["all_within_bound"]
    assert {"compare.csv", "mollified.csv"} <= set(summary["files"])
    table = pd.read_csv(tmp_path / "compare.csv")
    assert list(table["kernel"]) == ["boxcar", "triangle"]


def test_execute_stationary(tmp_path):
    data = _config("stationary", options={"ly": 5.0, "ny": 41})
    summary = execute(RunConfig.from_dict(data), SaveManager(tmp_path))
    assert summary["results"]["u_stationary"] == pytest.approx(1.0, abs=1e-6)
    assert (tmp_path / "stationary.csv").exists()


def test_run_returns_zero_on_success(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    path = _write(tmp_path, _config("speed", options={"closed_form": True}))
    out = tmp_path / "out"
    assert cli.run([path, "--out", str(out), "--threads", "2"]) == 0
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["threads"] == 2


def test_run_reports_config_errors(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    out = tmp_path / "out"
    assert cli.run([str(path), "--out", str(out)]) == 2
    record = json.loads((out / "error.json").read_text(encoding="utf-8"))
    assert record["kind"] == "ConfigError"
    assert record["exit_code"] == 2
    assert "ConfigError" in capsys.readouterr().err


def test_run_reports_domain_errors(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    # c below c_KPP has no admissible lambda window
    path = _write(tmp_path, _config("curves", options={"c": 1.0, "closed_form": True}))
    assert cli.run([path, "--out", str(tmp_path / "out")]) == 2
