"""Config validation, CLI verbs, exit codes, and file outputs."""

import csv
import json
import os

import numpy as np
import pytest

from fgmpc.cli import ConfigError, ScenarioConfig, main
from fgmpc.polytope import HPolyhedron


def fig2_config(**overrides):
    cfg = {
        "plant": {"A": [[1.0]], "B": [[1.0]], "C": [[1.0], [0.0]],
                  "D": [[0.0], [1.0]], "E": [[1.0]], "F": [[0.0]]},
        "Y": {"lower": [-1.0, -0.25], "upper": [1.0, 0.25]},
        "eps": 0.2,
        "eps_terminal": 0.05,
        "Q": [[1.0]],
        "R": [[1.0]],
        "N": 2,
    }
    cfg.update(overrides)
    return cfg


def write_config(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_config_rejects_unknown_field():
    with pytest.raises(ConfigError, match="'horizon'.*unknown"):
        ScenarioConfig(fig2_config(horizon=3))
    with pytest.raises(ConfigError, match="'plant.G'.*unknown"):
        bad = fig2_config()
        bad["plant"]["G"] = [[1.0]]
        ScenarioConfig(bad)


def test_config_rejects_missing_and_malformed_fields():
    incomplete = fig2_config()
    del incomplete["Y"]
    with pytest.raises(ConfigError, match="'Y': required"):
        ScenarioConfig(incomplete)
    with pytest.raises(ConfigError, match="'plant.A'"):
        ScenarioConfig(fig2_config(plant={"A": [[1.0], [2.0, 3.0]],
                                          "B": [[1.0]], "C": [[1.0]],
                                          "D": [[0.0]], "E": [[1.0]],
                                          "F": [[0.0]]}))
    with pytest.raises(ConfigError, match="'eps'.*between 0 and 1"):
        ScenarioConfig(fig2_config(eps=1.5))
    with pytest.raises(ConfigError, match="'kind'"):
        ScenarioConfig(fig2_config(kind="LQR"))
    with pytest.raises(ConfigError, match="'x0': has size 2"):
        ScenarioConfig(fig2_config(x0=[0.1, 0.2]))
    with pytest.raises(ConfigError, match="'budget'"):
        ScenarioConfig(fig2_config(budget=0))
    with pytest.raises(ConfigError, match="'Y'"):
        ScenarioConfig(fig2_config(Y={"lower": [-1.0, -0.25]}))
    with pytest.raises(ConfigError, match="'controllers\\[0\\].kind'"):
        ScenarioConfig(fig2_config(controllers=[{"kind": "PID"}]))


def test_config_json_syntax_diagnostic(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "plant": [,]\n}')
    with pytest.raises(ConfigError, match="line 2 column"):
        ScenarioConfig.from_file(str(path))


def test_sets_exports_and_roundtrip(tmp_path, fig2, fig2_gov):
    cfg = write_config(tmp_path, fig2_config())
    out = tmp_path / "sets"
    assert main(["sets", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    names = {"T.hrep", "GammaN.hrep", "Lambda.hrep", "Reps.hrep",
             "RoaFG.hrep", "GammaN_boundary.csv"}
    assert names <= set(os.listdir(out))
    gamma = HPolyhedron.read(str(out / "GammaN.hrep"))
    built = fig2_gov["gamma"].set_xv
    assert gamma.contains_set(built, tol=1e-7)
    assert built.contains_set(gamma, tol=1e-7)
    reps = HPolyhedron.read(str(out / "Reps.hrep"))
    assert reps.contains_point([0.8]) and not reps.contains_point([0.81])
    with open(out / "GammaN_boundary.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x[0]", "v[0]"]
    pts = np.array([[float(c) for c in row] for row in rows[1:]])
    assert len(pts) > 100
    # boundary samples lie on the set's boundary: inside, with some
    # facet active
    margins = pts @ gamma.A.T - gamma.b
    assert np.all(margins <= 1e-9)
    assert np.all(np.max(margins, axis=1) >= -1e-9)


def test_sets_slices(tmp_path):
    cfg = write_config(tmp_path, fig2_config(slices=[-0.5, 0.0, 0.5]))
    out = tmp_path / "sets"
    assert main(["sets", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    for tag in ("-0.5", "0", "0.5"):
        path = out / "GammaN_slice_v{}.csv".format(tag)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["x[0]"]
        assert len(rows) == 3  # 1-D slice: two boundary endpoints


def test_sets_horizon_zero_equals_terminal(tmp_path):
    out0 = tmp_path / "n0"
    cfg = write_config(tmp_path, fig2_config(N=0))
    assert main(["sets", "--config", cfg, "--out", str(out0),
                 "--quiet"]) == 0
    T = HPolyhedron.read(str(out0 / "T.hrep"))
    gamma = HPolyhedron.read(str(out0 / "GammaN.hrep"))
    assert T.contains_set(gamma, tol=1e-9)
    assert gamma.contains_set(T, tol=1e-9)


def test_simulate_governed_run(tmp_path):
    cfg = write_config(tmp_path, fig2_config(
        kind="MPC+FG", x0=[-0.9], r=[0.7], budget=60))
    out = tmp_path / "run"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    text = (out / "metrics.txt").read_text()
    assert "audit_overall=pass" in text
    assert "kind=MPC+FG" in text
    with open(out / "trajectory.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 61
    assert rows[0][0] == "k"


def test_simulate_outside_roa_exits_nonzero(tmp_path, capsys):
    cfg = write_config(tmp_path, fig2_config(
        kind="MPC+FG", x0=[5.0], r=[0.0], budget=10))
    code = main(["simulate", "--config", cfg, "--out",
                 str(tmp_path / "x"), "--quiet"])
    assert code == 1
    assert "state outside governed ROA" in capsys.readouterr().err


def test_simulate_plain_mpc_infeasible_start(tmp_path, capsys):
    cfg = write_config(tmp_path, fig2_config(
        kind="MPC", x0=[-0.95], r=[0.8], budget=10))
    code = main(["simulate", "--config", cfg, "--out",
                 str(tmp_path / "x"), "--quiet"])
    assert code == 1
    assert "aborted at step 0" in capsys.readouterr().err


def test_compare_two_kinds(tmp_path):
    cfg = write_config(tmp_path, fig2_config(
        controllers=[{"kind": "MPC+FG"}, {"kind": "MPC+CG(LQR)"}],
        x0=[-0.2], r=[0.5], budget=40))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    table = (out / "compare.txt").read_text()
    assert table.count("  ok") == 2
    assert os.path.exists(out / "trajectory_0_mpc_fg.csv")
    assert os.path.exists(out / "trajectory_1_mpc_cg_lqr.csv")
    with open(out / "compare_z.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["k", "z_0_mpc_fg[0]", "z_1_mpc_cg_lqr[0]"]
    assert len(rows) == 41


def test_compare_identical_kinds_match(tmp_path):
    cfg = write_config(tmp_path, fig2_config(
        controllers=[{"kind": "MPC+FG"}, {"kind": "MPC+FG"}],
        x0=[-0.9], r=[0.7], budget=30))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 0
    with open(out / "compare_z.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(c) for c in row] for row in rows[1:]])
    np.testing.assert_array_equal(data[:, 1], data[:, 2])


def test_compare_reports_per_variant_errors(tmp_path):
    # the plain-MPC variant is infeasible at k=0; the governed one runs
    cfg = write_config(tmp_path, fig2_config(
        controllers=[{"kind": "MPC+FG"}, {"kind": "MPC"}],
        x0=[-0.95], r=[0.8], budget=30))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", cfg, "--out", str(out),
                 "--quiet"]) == 1
    table = (out / "compare.txt").read_text()
    assert table.count("  ok") == 1
    assert "error: closed loop aborted at step 0" in table
    assert os.path.exists(out / "trajectory_0_mpc_fg.csv")
    assert not os.path.exists(out / "trajectory_1_mpc.csv")


def test_nstar_equilibrium_is_zero(tmp_path, capsys):
    cfg = write_config(tmp_path, fig2_config(x0=[0.5], r=[0.5]))
    assert main(["nstar", "--config", cfg, "--quiet"]) == 0
    assert "N* = 0" in capsys.readouterr().out


def test_nstar_scan_log(tmp_path, capsys):
    cfg = write_config(tmp_path, fig2_config(x0=[-0.9], r=[0.5]))
    assert main(["nstar", "--config", cfg]) == 0
    out = capsys.readouterr().out
    assert "h=0 violation=" in out
    assert "N* = " in out
    n = int(out.strip().rsplit("=", 1)[1])
    assert n >= 2


def test_nstar_cap_error(tmp_path, capsys):
    cfg = write_config(tmp_path, fig2_config(x0=[-0.9], r=[0.5]))
    code = main(["nstar", "--config", cfg, "--cap", "1", "--quiet"])
    assert code == 1
    assert "no feasible horizon" in capsys.readouterr().err
