import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from minimax_lab import __version__
from minimax_lab.errors import ConfigError, DomainError
from minimax_lab.harness import cli, recipes as R, runner
from minimax_lab.harness import config as C
from minimax_lab.harness.emit import Table, emit, read_csv


def quad_cfg(**over):
    cfg = {"seed": 1, "method": "gda",
           "problem": {"kind": "quad_ncsc", "ell": 1.0, "mu": 0.25, "mu_x": 0.05, "variant": "tightness"},
           "init": {"kind": "eigenvector", "x0": 1.0},
           "stop": {"t_max": 100000, "epsilon": 0.01}}
    cfg.update(over)
    return cfg


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch):
    monkeypatch.delenv(C.SEED_ENV, raising=False)


# ---------------------------------------------------------------------------
# config


def test_minimal_config_fills_schedule():
    cfg = C.resolve({"method": "gda", "problem": {"kind": "quad_ncsc", "ell": 1, "mu": 0.25, "mu_x": 0.01}})
    assert cfg.regime == "ncsc"
    assert cfg.resolved["steps"]["schedule"] == "theorem"
    assert cfg.steps.eta_x == pytest.approx(1 / 800) and cfg.steps.eta_y == pytest.approx(1 / 6)
    assert cfg.resolved["stop"]["measure"] == "grad_phi"
    assert cfg.resolved["version"] == __version__
    assert cfg.init.x[0] == 1.0 and cfg.init.y[0] == 0.0


def test_config_errors_name_the_path():
    base = {"method": "gda", "problem": {"kind": "quad_ncsc", "ell": 1, "mu": 0.25, "mu_x": 0.01}}
    with pytest.raises(ConfigError, match="steps.eta_y"):
        C.resolve(dict(base, steps={"eta_x": 0.1, "eta_y": -1}))
    with pytest.raises(ConfigError, match="steps.eta_y"):
        C.resolve(dict(base, steps={"eta_x": 0.1, "eta_y": 0}))
    with pytest.raises(ConfigError, match="momentum"):
        C.resolve(dict(base, momentum=0.9))
    with pytest.raises(ConfigError, match="steps.momentum"):
        C.resolve(dict(base, steps={"momentum": 0.9}))
    with pytest.raises(ConfigError, match="method"):
        C.resolve({"problem": base["problem"]})
    with pytest.raises(ConfigError, match="problem"):
        C.resolve({"method": "gda"})
    with pytest.raises(ConfigError, match="init.y"):
        C.resolve({"method": "gda", "problem": {"kind": "ncc_bilinear", "ell": 4, "G": 2, "D": 0.1},
                   "stop": {"epsilon": 0.1}, "init": {"x": [0.5], "y": [1.0]}})
    with pytest.raises(ConfigError, match="oracle.noise_kind"):
        C.resolve(dict(base, oracle={"noise_kind": "empirical"}))


def test_config_hash_is_stable_and_sensitive():
    a = C.resolve(quad_cfg())
    b = C.resolve(quad_cfg())
    c = C.resolve(quad_cfg(seed=2))
    assert a.config_hash == b.config_hash != c.config_hash
    assert len(a.config_hash) == 16


def test_seed_env_override(monkeypatch):
    monkeypatch.setenv(C.SEED_ENV, "77")
    assert C.resolve(quad_cfg()).seed == 77
    assert C.resolve(quad_cfg(), use_env=False).seed == 1
    monkeypatch.setenv(C.SEED_ENV, "abc")
    with pytest.raises(ConfigError, match=C.SEED_ENV):
        C.resolve(quad_cfg())


def test_gen_ogda_config_forms():
    base = {"method": "gen_ogda", "problem": {"kind": "wgan", "n_ref": 32}, "stop": {"t_max": 3}}
    cfg = C.resolve(dict(base, steps={"eta_x": 0.05, "eta_y": 0.05, "ratio_x": 0.01, "ratio_y": 0.01}))
    assert cfg.steps.eta_x2 == pytest.approx(5e-4) and cfg.steps.eta_y2 == pytest.approx(5e-4)
    assert cfg.regime == "none" and cfg.resolved["stop"]["measure"] == "grad_f_sq"
    with pytest.raises(ConfigError, match="steps.schedule"):
        C.resolve(base)
    with pytest.raises(ConfigError, match="steps.eta_x2"):
        C.resolve(dict(base, steps={"eta_x1": 0.1, "eta_y1": 0.1, "eta_y2": 0.1}))


def test_batch_schedule_config():
    cfg = C.resolve({"method": "ogda", "problem": {"kind": "quad_ncsc", "ell": 1, "mu": 0.25, "mu_x": 0.01},
                     "oracle": {"sigma": 1.0, "m_x": "schedule", "m_y": "schedule"},
                     "stop": {"epsilon": 0.1}})
    assert (cfg.oracle.m_x, cfg.oracle.m_y) == (100, 400)


def test_toml_and_json_files(tmp_path):
    j = tmp_path / "c.json"
    j.write_text(json.dumps(quad_cfg()))
    t = tmp_path / "c.toml"
    t.write_text('seed = 1\nmethod = "gda"\n[problem]\nkind = "quad_ncsc"\nell = 1.0\nmu = 0.25\n'
                 'mu_x = 0.05\nvariant = "tightness"\n[init]\nkind = "eigenvector"\nx0 = 1.0\n'
                 '[stop]\nt_max = 100000\nepsilon = 0.01\n')
    assert C.parse_config(j).resolved == C.parse_config(t).resolved
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        C.parse_config(bad)


# ---------------------------------------------------------------------------
# runs and sweeps


def test_run_is_bit_deterministic():
    a = runner.run_raw(quad_cfg(oracle={"sigma": 0.01}))
    b = runner.run_raw(quad_cfg(oracle={"sigma": 0.01}))
    assert np.array_equal(a.trajectory.x, b.trajectory.x) and a.summary == b.summary


def test_sweep_empty_grid_single_row():
    axes, rows = runner.sweep(quad_cfg(), {})
    assert axes == [] and len(rows) == 1 and rows[0]["stop_reason"] == "hit_epsilon"


def test_sweep_epsilon_grid_increasing_T():
    # |grad Phi(x0)| = mu_x x0 = 5 sits above every epsilon
    base = quad_cfg(init={"kind": "eigenvector", "x0": 100.0})
    axes, rows = runner.sweep(base, {"stop.epsilon": [0.2, 0.1, 0.05]})
    ts = [r["first_hit"] for r in rows]
    assert axes == ["stop.epsilon"] and all(t is not None for t in ts)
    assert ts[0] < ts[1] < ts[2]


def test_sweep_records_errors_without_aborting():
    base = quad_cfg(steps={"eta_x": 0.001, "eta_y": 0.1})
    _, rows = runner.sweep(base, {"steps.eta_y": [0.1, -1.0]})
    assert rows[0]["error"] is None
    assert rows[1]["stop_reason"] == "error" and "steps.eta_y" in rows[1]["error"]


def test_sweep_rejects_unknown_axis():
    with pytest.raises(ConfigError):
        runner.sweep(quad_cfg(), {"steps.momentum": [1]})


def test_sweep_parallelism_independent_and_byte_identical(tmp_path):
    grid = {"stop.epsilon": [0.2, 0.1], "oracle.sigma": [0.0, 0.001]}
    base = quad_cfg()
    a1, r1 = runner.sweep(base, grid, jobs=1)
    a2, r2 = runner.sweep(base, grid, jobs=2)
    assert a1 == a2 and r1 == r2
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit(runner.sweep_table(a1, r1), "csv", p1, {"seed": 1})
    emit(runner.sweep_table(a2, r2), "csv", p2, {"seed": 1})
    assert p1.read_bytes() == p2.read_bytes()
    # runs get distinct derived seeds
    assert len({r["seed"] for r in r1}) == len(r1)


# ---------------------------------------------------------------------------
# rate fits


def test_fit_rate_exact_power_laws():
    eps = [0.2, 0.1, 0.05, 0.025]
    # C / eps^k is an integer for these eps, so the power law is exact
    fit = runner.fit_rate([(e, round(5.0 / e ** 2)) for e in eps])
    assert abs(fit.slope - 2.0) <= 1e-12 and fit.r_squared == pytest.approx(1.0, abs=1e-12)
    fit = runner.fit_rate([(e, round(1.0 / e ** 6)) for e in eps])
    assert abs(fit.slope - 6.0) <= 1e-12


def test_fit_rate_censoring_and_errors():
    pairs = [(0.2, 25), (0.1, 100), (0.05, 400), (0.025, None), (0.0125, 10 ** 9)]
    fit = runner.fit_rate(pairs, t_max=10 ** 6)
    assert len(fit.pairs) == 3 and len(fit.dropped) == 2
    assert abs(fit.slope - 2.0) <= 1e-12
    with pytest.raises(DomainError):
        runner.fit_rate([(0.2, 25), (0.1, 100)])
    fit = runner.fit_rate(pairs[:3], kappa_pairs=[(4, 10), (16, 160)])
    assert abs(fit.kappa_slope - 2.0) <= 1e-12


# ---------------------------------------------------------------------------
# output


def test_emit_header_only_csv(tmp_path):
    p = tmp_path / "t.csv"
    emit(Table(["t", "x0"], []), "csv", p, {"seed": 3})
    text = p.read_text()
    assert text == f"# seed: 3\n# version: {__version__}\nt,x0\n"


def test_emit_roundtrip_and_determinism(tmp_path):
    table = Table(["t", "v", "flag", "note"], [[0, 0.1, True, None], [1, 1 / 3, False, "a,b"]])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit(table, "csv", a, {"config_hash": "abc"})
    emit(table, "csv", b, {"config_hash": "abc"})
    assert a.read_bytes() == b.read_bytes()
    meta, back = read_csv(a)
    assert meta["config_hash"] == "abc"
    assert back.column("v")[1] == 1 / 3
    assert b"\r" not in a.read_bytes()
    j = tmp_path / "a.json"
    emit({"x": float("nan"), "y": [1.5, np.float64(2.0)], "z": np.arange(2)}, "json", j)
    assert json.loads(j.read_text()) == {"x": None, "y": [1.5, 2.0], "z": [0, 1]}
    with pytest.raises(ValueError):
        emit(None, "csv", a)


def test_trajectory_table_columns():
    res = runner.run_raw(quad_cfg(method="ogda", record={"potentials": True}))
    tab = runner.trajectory_table(res.trajectory)
    assert tab.columns == ["t", "x0", "y0", "grad_x_norm", "grad_y_norm", "grad_f_sq", "grad_phi_norm", "r_t"]
    assert len(tab.rows) == res.trajectory.t_final + 1
    assert math.isnan(tab.rows[-1][-1])


# ---------------------------------------------------------------------------
# recipes


def test_recipe_ncsc_tightness_gda_example():
    res = R.run_recipe("ncsc_tightness_gda", {"kappa": 4, "epsilon": 0.1, "delta_phi": 1.0})
    assert res.checks["first_hit_matches_closed_form"]["passed"]
    run = res.summary["run"]
    s1 = run["rho"]
    g0 = run["mu_x"] * run["x0"]
    assert abs(run["t_sim"] - math.ceil(math.log(g0 / 0.1) / math.log(1 / s1))) <= 1


def test_recipe_ncc_eg_factor_example():
    res = R.run_recipe("ncc_tightness_eg", {"eta_LD": 0.1, "check_steps": 1000, "epsilon": 0.2})
    traj_x = [row[1] for row in res.tables["comparison.csv"].rows]
    ts = [row[0] for row in res.tables["comparison.csv"].rows]
    pred = [0.91 ** t for t in ts]
    mask = [p >= np.finfo(float).tiny for p in pred]
    assert max(abs(a - p) / p for a, p, m in zip(traj_x, pred, mask) if m) <= 1e-12
    assert res.checks["recursion_matches"]["passed"] and res.checks["dual_pinned_at_D"]["passed"]


def test_recipe_unknown_name_and_param():
    with pytest.raises(ConfigError):
        R.run_recipe("nope")
    with pytest.raises(ConfigError):
        R.run_recipe("ncsc_tightness_gda", {"bogus": 1})


def test_recipe_outputs_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["recipe", "ncsc_lowerbound", "--out", str(tmp_path / d)]) == 0
    for f in ("growth.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# ---------------------------------------------------------------------------
# CLI


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_cli_run_outputs(tmp_path):
    cfg = _write(tmp_path / "c.json", quad_cfg())
    assert cli.main(["run", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    meta, tab = read_csv(tmp_path / "o" / "trajectory.csv")
    assert tab.columns[:3] == ["t", "x0", "y0"] and "grad_phi_norm" in tab.columns
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["summary"]["stop_reason"] == "hit_epsilon"
    assert meta["config_hash"] == summary["summary"]["config_hash"]


def test_cli_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path / "bad.json", quad_cfg(steps={"eta_x": 0.1, "eta_y": -1}))
    assert cli.main(["run", "--config", bad, "--out", str(tmp_path / "o")]) == 1
    assert "steps.eta_y" in capsys.readouterr().err
    with pytest.raises(SystemExit) as e:
        cli.main(["recipe", "not_a_recipe", "--out", str(tmp_path)])
    assert e.value.code == 1
    assert cli.main(["recipe", "ncsc_tightness_gda", "--param", "t_max=10", "--out", str(tmp_path / "r")]) == 2
    assert "FAIL hit_epsilon" in capsys.readouterr().out


def test_cli_spectral_and_verify(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", quad_cfg(method="ogda", stop={"t_max": 500}))
    assert cli.main(["spectral", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["report"]["regime"] == "contracting" and doc["certificate"]["diverges"] is False
    assert cli.main(["verify-lemmas", "--config", cfg]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["passed"] and set(doc["lemmas"]) == {"primal_descent", "dual_potential", "dual_potential_sum"}
    gda = _write(tmp_path / "g.json", quad_cfg(stop={"t_max": 5}))
    assert cli.main(["verify-lemmas", "--config", gda]) == 1


def test_cli_sweep(tmp_path):
    cfg = _write(tmp_path / "c.json", quad_cfg())
    grid = _write(tmp_path / "g.json", {"stop.epsilon": [0.2, 0.1]})
    assert cli.main(["sweep", "--config", cfg, "--grid", grid, "--out", str(tmp_path / "o")]) == 0
    _, tab = read_csv(tmp_path / "o" / "sweep.csv")
    assert tab.column("stop.epsilon") == [0.2, 0.1]


def test_cli_module_entry_point(tmp_path):
    cfg = _write(tmp_path / "c.json", quad_cfg())
    env = dict(os.environ, MINIMAX_SEED="5")
    out = subprocess.run([sys.executable, "-m", "minimax_lab", "run", "--config", cfg, "--out", str(tmp_path / "o")],
                         capture_output=True, text=True, env=env)
    assert out.returncode == 0, out.stderr
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["config"]["seed"] == 5
