"""End-to-end command-line checks through main(): exit codes and artifacts."""

import csv
import json

import pytest

from hitchinlab.cli import main

RADIAL = {"kind": "radial_disc", "resolution": 48, "radius": 0.8}
HITCHIN3 = {"variant": "hitchin_component", "n": 3,
            "data": [{"kind": "constant", "coefficient": 1.0}], "t": 1.0}


def write_cfg(tmp_path, name, payload):
    p = tmp_path / name
    p.write_text(json.dumps(payload))
    return str(p)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_solve_writes_report_and_state(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out)])
    assert rc == 0
    assert "converged" in capsys.readouterr().out
    report = read_json(out / "report.json")
    assert report["converged"] is True
    assert report["final_residual"] <= 1e-10
    with open(out / "state.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "u_1"]
    assert len(rows) == 1 + 48


def test_solve_resolution_override(tmp_path):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out), "--resolution", "32"])
    assert rc == 0
    with open(out / "state.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 32


def test_malformed_json_is_usage_error(tmp_path, capsys):
    p = tmp_path / "broken.json"
    p.write_text('{"grid": ')
    rc = main(["solve", "--config", str(p), "--out", str(tmp_path)])
    assert rc == 1
    assert "malformed JSON" in capsys.readouterr().err


def test_missing_config_is_usage_error(tmp_path, capsys):
    rc = main(["solve", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path)])
    assert rc == 1
    assert "not found" in capsys.readouterr().err


def test_unconverged_solve_exits_two_but_reports(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL,
        "spec": dict(HITCHIN3, t=5.0),
        "solver": {"max_newton_iters": 1},
    })
    out = tmp_path / "out"
    rc = main(["solve", "--config", cfg, "--out", str(out)])
    assert rc == 2
    assert "not converged" in capsys.readouterr().err
    assert read_json(out / "report.json")["converged"] is False
    assert (out / "state.csv").exists()


def test_unknown_solver_option_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL, "spec": HITCHIN3, "solver": {"newton_tol": 1e-8}})
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 1
    assert "unknown solver options" in capsys.readouterr().err


def test_verify_nu_bounds_passes_and_is_reproducible(tmp_path):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(["verify", "--config", cfg, "--theorem", "nu-bounds",
                 "--out", str(out_a)]) == 0
    assert main(["verify", "--config", cfg, "--theorem", "nu-bounds",
                 "--out", str(out_b)]) == 0
    bytes_a = (out_a / "verdict.json").read_bytes()
    bytes_b = (out_b / "verdict.json").read_bytes()
    assert bytes_a == bytes_b
    verdict = json.loads(bytes_a)
    assert verdict["passed"] is True
    assert verdict["theorem"] == "nu-bounds"
    assert "wall_time_s" not in json.dumps(verdict)


def test_verify_monotonicity_requires_t_list(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    rc = main(["verify", "--config", cfg, "--theorem", "monotonicity",
               "--out", str(tmp_path)])
    assert rc == 1
    assert "t_list" in capsys.readouterr().err


def test_verify_sp4_rejects_wrong_variant(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    rc = main(["verify", "--config", cfg, "--theorem", "sp4-bounds",
               "--out", str(tmp_path)])
    assert rc == 1


def test_verify_sym_space_small_sample(tmp_path):
    cfg = write_cfg(tmp_path, "cfg.json", {"samples": 50, "ranks": [2, 3]})
    out = tmp_path / "out"
    rc = main(["verify", "--config", cfg, "--theorem", "sym-space-curvature",
               "--out", str(out), "--seed", "7"])
    assert rc == 0
    verdict = read_json(out / "verdict.json")
    assert verdict["passed"] and verdict["seed"] == 7


def test_verify_max_principle_violation_demo(tmp_path):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "violate": "column", "n": 3,
        "grid": {"kind": "radial_disc", "resolution": 24, "radius": 0.8}})
    out = tmp_path / "out"
    rc = main(["verify", "--config", cfg, "--theorem", "max-principle",
               "--out", str(out)])
    assert rc == 0
    verdict = read_json(out / "verdict.json")
    assert verdict["passed"] is True
    assert "positivity not asserted" in verdict["note"]
    assert verdict["conditions"]["column_dominance_ok"] is False


def test_sweep_tabulates_members(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL, "spec": HITCHIN3, "t_list": [0.5, 1.0, 2.0]})
    out = tmp_path / "out"
    rc = main(["sweep", "--config", cfg, "--out", str(out)])
    assert rc == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "morse_energy", "g_min", "g_max", "k_min", "k_max"]
    assert len(rows) == 4
    energies = [float(r[1]) for r in rows[1:]]
    assert energies == sorted(energies)
    verdict = read_json(out / "sweep.json")
    assert verdict["passed"] and verdict["morse_energy_increasing"]
    assert len(verdict["ratio_margins"]) == 2


def test_sweep_singleton_family(tmp_path):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL, "spec": HITCHIN3, "t_list": [1.0]})
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        assert len(list(csv.reader(fh))) == 2


def test_sweep_refuses_unstable_degrees(tmp_path, capsys):
    spec = {"variant": "general_cyclic", "n": 2,
            "data": [{"kind": "constant", "coefficient": 1.0},
                     {"kind": "constant", "coefficient": 1.0}],
            "degrees": [0, 0]}
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL, "spec": spec, "t_list": [0.0, 1.0]})
    rc = main(["sweep", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 1
    err = capsys.readouterr().err
    assert "refused" in err and "unstable" in err


def test_sweep_stable_degrees_proceed(tmp_path):
    spec = dict(HITCHIN3, degrees=[2, 0, -2])
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": RADIAL, "spec": spec, "t_list": [0.0, 1.0]})
    out = tmp_path / "out"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == 0


def test_sweep_requires_t_list(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": HITCHIN3})
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_bad_grid_kind_is_usage_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": {"kind": "annulus", "resolution": 32}, "spec": HITCHIN3})
    rc = main(["solve", "--config", cfg, "--out", str(tmp_path)])
    assert rc == 1
    assert "bad grid" in capsys.readouterr().err


def test_bad_datum_kind_is_usage_error(tmp_path, capsys):
    spec = {"variant": "hitchin_component", "n": 3,
            "data": [{"kind": "rational", "coefficient": 1.0}]}
    cfg = write_cfg(tmp_path, "cfg.json", {"grid": RADIAL, "spec": spec})
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "unknown datum kind" in capsys.readouterr().err


def test_torus_solve_path(tmp_path):
    spec = {"variant": "general_cyclic", "n": 3, "t": 0.5,
            "data": [{"kind": "constant", "coefficient": 1.0},
                     {"kind": "constant", "coefficient": [0.0, 1.0]},
                     {"kind": "constant", "coefficient": 2.0}]}
    cfg = write_cfg(tmp_path, "cfg.json", {
        "grid": {"kind": "torus", "resolution": [12, 12]}, "spec": spec})
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg, "--out", str(out)]) == 0
    with open(out / "state.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "y", "u_1", "u_2"]
    assert len(rows) == 1 + 144
