import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from tshelm.cli import main
from tshelm.config import ConfigError, RunConfig, load_config, parse_timescale
from tshelm.helmholtz import REPORT_SCHEMA


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_harmonic(capsys):
    code, out, err = run(capsys, "check", "--xq", "p1", "--xp=-q1")
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert doc["verdict"] == "hamiltonian"
    assert "verdict: hamiltonian" in err


def test_check_damped_exit_one(capsys):
    code, out, _ = run(capsys, "check", "--xq", "p1", "--xp=-q1-0.1*p1")
    assert code == 1
    doc = json.loads(out)
    jsonschema.validate(doc, REPORT_SCHEMA)
    assert abs(doc["trace_violation"] - 0.1) <= 1e-8


@pytest.mark.parametrize("name,code", [("harmonic", 0), ("pendulum", 0), ("coupled", 0), ("damped", 1),
                                       ("shear", 1), ("rotation-plus-source", 1)])
def test_check_catalog(capsys, name, code):
    assert run(capsys, "check", "--catalog", name)[0] == code


def test_check_csv(capsys):
    code, out, _ = run(capsys, "check", "--catalog", "shear", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0][:4] == ["verdict", "trace_violation", "asym_qp", "asym_pq"]
    assert rows[1][0] == "not_hamiltonian" and float(rows[1][2]) == 1.0


def test_check_out_dir(capsys, tmp_path):
    code, out, _ = run(capsys, "check", "--catalog", "harmonic", "--out", str(tmp_path))
    assert code == 0
    jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), REPORT_SCHEMA)
    assert "verdict: hamiltonian" in out


def test_check_scale_independence(capsys):
    # the time scale does not enter the algebraic conditions
    outs = []
    for ts in ("points: 0 1 2", "union: [0, 1]; 2; dense_step: 0.01"):
        code, out, _ = run(capsys, "check", "--catalog", "damped", "--timescale", ts)
        assert code == 1
        outs.append(out)
    assert outs[0] == outs[1]


def test_check_is_deterministic(capsys):
    a = run(capsys, "check", "--catalog", "pendulum", "--seed", "3")[1]
    b = run(capsys, "check", "--catalog", "pendulum", "--seed", "3")[1]
    c = run(capsys, "check", "--catalog", "pendulum", "--seed", "4")[1]
    assert a == b and a != c


def test_calculus_points(capsys):
    code, out, _ = run(capsys, "calculus", "--timescale", "points: 0 1 2", "--format", "csv")
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [float(r["mu"]) for r in rows] == [1.0, 1.0, 0.0]
    assert [float(r["nu"]) for r in rows] == [0.0, 1.0, 1.0]


def test_calculus_json(capsys, tmp_path):
    ts = "union: [0, 0.5]; 0.6; 0.8; [0.9, 1]; dense_step: 1e-3"
    code, out, _ = run(capsys, "calculus", "--timescale", ts, "--out", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "calculus.json").read_text())
    ident = doc["identities"]
    assert ident["inverse_doubly_scattered"] == 0.0
    assert ident["inverse_dense"] <= 1e-10 and ident["composition"] <= 1e-6
    junctions = [p["t"] for p in doc["points"] if p["junction"]]
    assert junctions == ["0.5", "0.9"]
    assert (tmp_path / "calculus.csv").read_text().startswith("t,right,left,sigma,rho,mu,nu,junction\n")


def test_reconstruct(capsys, tmp_path):
    code, _, _ = run(capsys, "reconstruct", "--catalog", "pendulum", "--grid-points", "5", "--out", str(tmp_path))
    assert code == 0
    summary = json.loads((tmp_path / "reconstruct.json").read_text())
    assert summary["roundtrip_residual"] <= 1e-10
    rows = list(csv.DictReader(io.StringIO((tmp_path / "hamiltonian.csv").read_text())))
    assert len(rows) == 25 and list(rows[0]) == ["q1", "p1", "H"]


def test_reconstruct_refuses_non_hamiltonian(capsys):
    code, _, err = run(capsys, "reconstruct", "--catalog", "damped")
    assert code == 2 and "--force" in err
    code, out, _ = run(capsys, "reconstruct", "--catalog", "damped", "--force", "--grid-points", "3")
    assert code == 0 and json.loads(out)["roundtrip_residual"] >= 0.01


def test_simulate(capsys, tmp_path):
    code, _, _ = run(
        capsys, "simulate", "--hamiltonian", "(q1^2 + p1^2)/2", "--timescale", "union: [0, 0.5]; 0.6; 0.7; 1",
        "--q0", "1", "--p0", "0", "--out", str(tmp_path),
    )
    assert code == 0
    summary = json.loads((tmp_path / "simulate.json").read_text())
    assert summary["residual_star1"] <= 1e-10 and summary["residual_star2"] <= 1e-8
    assert summary["junctions"] == [{"t": 0.5, "kind": "RS&LD"}]
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,kind,q1,p1,newton_iters,residual\n")
    assert (tmp_path / "energy.csv").read_text().startswith("t,H\n")


def test_simulate_from_field_and_integral_form(capsys):
    code, out, _ = run(capsys, "simulate", "--catalog", "pendulum", "--timescale", "points: 0 0.1 0.2 0.3",
                       "--form", "integral", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "t,kind,q1,p1,newton_iters,residual"
    assert len(out.splitlines()) == 5


def test_simulate_is_byte_identical(capsys, tmp_path):
    args = ["simulate", "--hamiltonian", "p1^2/2 + 1 - cos(q1)", "--timescale", "union: [0, 1]; 1.5; 2",
            "--q0", "0.5"]
    run(capsys, *args, "--out", str(tmp_path / "a"))
    run(capsys, *args, "--out", str(tmp_path / "b"))
    for name in ("trajectory.csv", "energy.csv", "simulate.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "argv,needle",
    [
        (["calculus", "--timescale", "union: [1, 0]"], "clause 1"),
        (["calculus", "--timescale", "points: 0 1; foo: 2"], "clause 2"),
        (["calculus", "--timescale", "points: 0 1"], "at least 3 points"),
        (["calculus"], "no time scale"),
        (["check", "--xq", "p1", "--xp=-q3"], "unknown identifier"),
        (["check", "--catalog", "nope"], "known: harmonic"),
        (["check"], "no field"),
        (["check", "--xq", "p1"], "both xq and xp"),
        (["simulate", "--hamiltonian", "q1^2", "--timescale", "points: 0 1 2", "--q0", "1,2"], "length 1"),
    ],
)
def test_errors_exit_two(capsys, argv, needle):
    code, _, err = run(capsys, *argv)
    assert code == 2
    assert needle in err


def test_config_file_and_flag_override(capsys, tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text(
        "timescale: 'points: 0 0.1 0.2 0.3'\n"
        "field:\n  xq: p1\n  xp: -q1 - 0.1*p1\n"
        "initial:\n  q: [1.0]\n  p: [0.0]\n"
        "solver:\n  newton_tol: 1.0e-13\n"
        "tol: 1.0e-8\n"
    )
    assert run(capsys, "check", "--config", str(cfg))[0] == 1
    # a loose tolerance on the command line wins over the file
    assert run(capsys, "check", "--config", str(cfg), "--tol", "0.5")[0] == 0
    # so does a field given as a flag
    assert run(capsys, "check", "--config", str(cfg), "--catalog", "harmonic")[0] == 0
    loaded = load_config(cfg)
    assert loaded.q0 == [1.0] and loaded.newton_tol == 1e-13


def test_config_rejects_unknown_keys(tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("timescale: 'points: 0 1 2'\ntolerance: 1\n")
    with pytest.raises(ConfigError, match="unknown config keys \\['tolerance'\\]"):
        load_config(cfg)


def test_config_errors_exit_two(capsys, tmp_path):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("[1, 2\n")
    assert run(capsys, "check", "--config", str(cfg))[0] == 2
    assert run(capsys, "check", "--config", str(tmp_path / "missing.yaml"))[0] == 2


def test_parse_timescale_grammar():
    T = parse_timescale("union: [0, 0.5]; 0.6; 0.7; dense_step: 1e-3")
    assert T.segments == ((0.0, 0.5), (0.6, 0.6), (0.7, 0.7)) and T.dense_step == 1e-3
    assert parse_timescale("points: 0 1 2").segments == ((0, 0), (1, 1), (2, 2))
    assert parse_timescale("[0, 1]; 2").segments == ((0, 1), (2, 2))
    assert parse_timescale("points: 0, 1e0, 2.").segments == ((0, 0), (1, 1), (2, 2))
    for bad in ("", "union: [0, 1", "points:", "dense_step: -1", "union: [0, 1]; ; 2", "[0,1]; [0.5, 2]"):
        with pytest.raises(ConfigError):
            parse_timescale(bad)


def test_runconfig_validation():
    with pytest.raises(ConfigError):
        RunConfig(format="xml").validate()
    with pytest.raises(ConfigError):
        RunConfig(form="other").validate()
    with pytest.raises(ConfigError):
        RunConfig(tol=0).validate()


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "tshelm.cli", "calculus", "--timescale", "points: 0 1 2", "--format", "csv"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "t,right,left,sigma,rho,mu,nu,junction"


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert "tshelm 0.1.0" in capsys.readouterr().out
