import json

import numpy as np
import pytest

from holoball import carleson, cli


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return path


def invoke(tmp_path, cfg, out="out", extra=()):
    path = write(tmp_path, cfg)
    command = cfg["command"] if isinstance(cfg, dict) and "command" in cfg else "lattice"
    return cli.main([command, "--config", str(path), "--out", str(tmp_path / out), *extra])


def error_record(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def body(path):
    # everything except the timestamp line
    lines = path.read_text().splitlines()
    assert '"timestamp"' in lines[1]
    return "\n".join(lines[:1] + lines[2:])


OPNORM_EQUAL = {
    "command": "opnorm",
    "seed": 2,
    "p": 2,
    "q": 2,
    "alpha": 0,
    "beta": 0,
    "phi": {"type": "diagonal", "multipliers": [0.5]},
    "psi": {"type": "diagonal", "multipliers": [0.5]},
    "N_alpha": 1000,
    "N_beta": 1000,
    "grid": {"K": 5, "directions": 4},
    "tail_gaps": [0.5, 0.25, 0.125],
    "tail_directions": 4,
    "probe_kmax": 5,
}

LATTICE = {"command": "lattice", "seed": 1, "n": 1, "r": 0.5, "R_max": 0.8, "probes": 2000, "count_queries": 200}


def test_minimal_carleson_config_echoes_defaults(tmp_path):
    cfg = {"command": "carleson", "n": 1, "lambda": 1, "alpha": 0, "r": 0.5, "seed": 7, "measure": {"type": "nu_alpha"}}
    spec = cli.parse_config(write(tmp_path, cfg))
    echo = spec.echo()
    assert echo["seed"] == 7
    assert echo["s_exp"] == 2.0
    assert echo["measure"] == {"type": "nu_alpha", "alpha": 0.0, "N": 20_000, "seed": 7}
    assert echo["grid"] == {"K": 8, "directions": 16, "refine": True, "seed": 0}
    assert len(echo["gaps"]) == 12


def test_alpha_error_names_field(tmp_path, capsys):
    cfg = {"command": "carleson", "n": 1, "lambda": 1, "alpha": -1, "r": 0.5, "seed": 7, "measure": {"type": "nu_alpha"}}
    assert invoke(tmp_path, cfg) == 1
    rec = error_record(capsys)
    assert rec["kind"] == "validation" and "alpha must exceed -1" in rec["message"]
    assert not (tmp_path / "out").exists()


def test_lt_request_needs_q_below_p(tmp_path, capsys):
    cfg = dict(OPNORM_EQUAL, q=3, quantities=["lt_quantity"])
    assert invoke(tmp_path, cfg) == 1
    assert "q < p" in error_record(capsys)["message"]


@pytest.mark.parametrize(
    "cfg",
    [
        "{not json",
        "[1, 2]",
        {"command": "bogus", "seed": 1},
        dict(LATTICE, seed=-1),
        dict(LATTICE, r=1.0),
        {k: v for k, v in LATTICE.items() if k != "seed"},
        dict(OPNORM_EQUAL, phi={"type": "affine", "A": [[0.5]], "b": [0.1]}),
    ],
)
def test_validation_errors_exit_1(tmp_path, capsys, cfg):
    assert invoke(tmp_path, cfg) == 1
    assert error_record(capsys)["exit_code"] == 1
    assert not (tmp_path / "out").exists()


def test_non_self_map_rejected(tmp_path, capsys):
    cfg = dict(OPNORM_EQUAL, phi={"type": "affine", "matrix": [[1.0]], "offset": [0.5]})
    assert invoke(tmp_path, cfg) == 1
    assert "not a self-map" in error_record(capsys)["message"]


def test_command_mismatch(tmp_path, capsys):
    path = write(tmp_path, LATTICE)
    assert cli.main(["opnorm", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "lattice" in error_record(capsys)["message"]


def test_runtime_error_exit_2_without_partial_output(tmp_path, capsys):
    cfg = {"command": "carleson", "n": 1, "lambda": 1, "alpha": 0, "r": 0.5, "seed": 1, "measure": {"type": "csv", "path": str(tmp_path / "missing.csv")}}
    assert invoke(tmp_path, cfg) == 2
    rec = error_record(capsys)
    assert rec["kind"] == "runtime" and rec["module"] == "measure"
    out = tmp_path / "out"
    assert not out.exists() or not any(out.iterdir())


def test_geometry_selftest(tmp_path):
    cfg = {"command": "geometry-selftest", "seed": 3, "N": 500}
    assert invoke(tmp_path, cfg) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["results"]["failed"] == 0 and rep["results"]["passed"] > 0
    assert rep["config"]["dims"] == [1, 2, 3]


def test_opnorm_equal_maps_all_zero(tmp_path):
    assert invoke(tmp_path, OPNORM_EQUAL) == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())["results"]
    assert rep["gamma_sup"] == 0 and rep["direct_lower"] == 0
    assert all(v is None for v in rep["ratio_diagnostics"].values())
    prof = carleson.ShellProfile.read_csv(tmp_path / "out" / "profile_essential_tail.csv")
    assert np.all(prof.values == 0)


def test_repeat_runs_are_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("HOLOBALL_THREADS", "1")
    assert invoke(tmp_path, LATTICE, out="a") == 0
    monkeypatch.setenv("HOLOBALL_THREADS", "4")
    assert invoke(tmp_path, LATTICE, out="b") == 0
    assert body(tmp_path / "a" / "report.json") == body(tmp_path / "b" / "report.json")
    assert (tmp_path / "a" / "lattice.csv").read_bytes() == (tmp_path / "b" / "lattice.csv").read_bytes()
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["results"]["coverage_failures"] == 0 and rep["results"]["count_violations"] == 0
    assert set(rep["versions"]) >= {"holoball", "numpy", "scipy", "python"}


def test_seed_override(tmp_path):
    assert invoke(tmp_path, LATTICE, out="a", extra=("--seed", "9")) == 0
    rep = json.loads((tmp_path / "a" / "report.json").read_text())
    assert rep["seeds"] == {"seed": 9} and rep["config"]["stream_seed"] == 9


def test_carleson_lt_branch(tmp_path):
    cfg = {
        "command": "carleson",
        "n": 1,
        "lambda": 0.5,
        "alpha": 0,
        "r": 0.5,
        "seed": 4,
        "measure": {"type": "point_mass", "point": [0.0]},
        "N_nu": 2000,
    }
    assert invoke(tmp_path, cfg) == 0
    res = json.loads((tmp_path / "out" / "report.json").read_text())["results"]
    assert res["lattice_seq_norm"] == pytest.approx(1.0)
    assert res["measure_total"] == 1.0


def test_emit_profile_csv(tmp_path):
    prof = carleson.ShellProfile(np.array([0.5, 0.25, 0.125]), np.array([0.1, 1 / 3, 2.0**0.5]))
    path = cli.emit_profile_csv(prof, tmp_path / "p.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 4 and lines[0] == "gap,value"
    back = carleson.ShellProfile.read_csv(path)
    np.testing.assert_array_equal(back.values, prof.values)
    with pytest.raises(ValueError):
        cli.emit_profile_csv(carleson.ShellProfile(np.zeros(0), np.zeros(0)), tmp_path / "e.csv")
    with pytest.raises(OSError):
        cli.emit_profile_csv(prof, tmp_path / "no" / "such" / "dir.csv")


def test_usage_errors_exit_1(tmp_path, capsys):
    assert cli.main(["lattice"]) == 1
    assert "--config" in error_record(capsys)["message"]
    assert cli.main(["bogus", "--config", str(write(tmp_path, LATTICE))]) == 1
