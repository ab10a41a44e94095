import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from covbridge import make_marginal, solve_bridge
from covbridge.cli import main
from covbridge.problem import load_problem

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

BB = {
    "system": {"A": [[0.0]], "B": [[1.0]], "T": 1.0},
    "marginals": {"Sigma0": [[0.0]], "SigmaT": [[0.0]]},
    "solver": {"steps": 200},
    "simulation": {"paths": 200, "step": 0.01, "seed": 3, "reverse": True, "record_paths": 4, "thin": 5},
    "verification": {"paths": 300, "step": 0.005},
}


def write_spec(tmp_path, doc, name="spec.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


def run(cmd, spec, out, *extra):
    return main([cmd, "--spec", str(spec), "--out", str(out), "--quiet", *extra])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_solve_round_trip(tmp_path):
    spec = write_spec(tmp_path, BB)
    assert run("solve", spec, tmp_path / "o") == 0
    header, rows = read_csv(tmp_path / "o" / "solution.csv")
    assert header == ["t", "Sigma_0_0", "Qinv_0_0", "Pinv_0_0", "K_0_0"]
    z = make_marginal([[0.0]])
    sol = solve_bridge(load_problem(spec).system(), z, z, steps=200)
    data = np.array([[float(v) for v in r] for r in rows])
    assert np.array_equal(data[:, 0], sol.grid)
    assert np.array_equal(data[:, 1], sol.Sigma[:, 0, 0])
    assert np.array_equal(np.isnan(data[:, 2]), np.isnan(sol.Qinv[:, 0, 0]))
    meta = json.loads((tmp_path / "o" / "metadata.json").read_text())
    assert meta["singular"] == {"Sigma0": True, "SigmaT": True}
    assert meta["nodes"] == len(rows)


def test_simulate_outputs(tmp_path):
    spec = write_spec(tmp_path, BB)
    assert run("simulate", spec, tmp_path / "o") == 0
    header, rows = read_csv(tmp_path / "o" / "moments.csv")
    assert header[:3] == ["ensemble", "t", "mean_0"] and header[-2:] == ["energy_mean", "energy_se"]
    assert {r[0] for r in rows} == {"controlled", "reverse"}
    ph, prow = read_csv(tmp_path / "o" / "paths.csv")
    assert ph == ["ensemble", "t", "path_id", "x_0"]
    assert {r[2] for r in prow} == {"0", "1", "2", "3"}


def test_simulate_is_bit_reproducible_and_seed_overrides(tmp_path):
    spec = write_spec(tmp_path, BB)
    for d in ("a", "b"):
        assert run("simulate", spec, tmp_path / d) == 0
    assert run("simulate", spec, tmp_path / "c", "--seed", "99") == 0
    for f in ("solution.csv", "moments.csv", "paths.csv", "metadata.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert (tmp_path / "a" / "moments.csv").read_bytes() != (tmp_path / "c" / "moments.csv").read_bytes()


def test_sweep_writes_table(tmp_path):
    spec = write_spec(tmp_path, BB)
    assert run("sweep", spec, tmp_path / "o") == 0
    header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert header == ["eps", "q0inv_error", "pTinv_error", "message"] and len(rows) == 7
    rep = json.loads((tmp_path / "o" / "sweep_report.json").read_text())
    assert {c["name"] for c in rep["checks"]} == {"sweep.q0inv", "sweep.pTinv"}


def test_verify_exit_code_and_report(tmp_path, capsys):
    spec = write_spec(tmp_path, BB)
    code = run("verify", spec, tmp_path / "o")
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    failing = [c["name"] for c in rep["checks"] if c["status"] == "fail"]
    assert failing == ["reciprocal.limit"]
    assert code == 5
    assert "verification failed: reciprocal.limit" in capsys.readouterr().err


@pytest.mark.parametrize(
    "doc, code",
    [
        ("{not json", 2),
        ({**BB, "extra": {}}, 2),
        ({"system": BB["system"]}, 2),
        ({**BB, "system": {"A": [[0.0]], "B": [[1.0]], "T": "one"}}, 2),
        ({**BB, "solver": {"steps": 2.5}}, 2),
        ({**BB, "marginals": {"Sigma0": [[-1.0]], "SigmaT": [[0.0]]}}, 3),
        ({**BB, "simulation": {"paths": 0}}, 3),
        ({**BB, "solver": {"method": "euler"}}, 3),
        ({**BB, "system": {"A": [[0.0, 1.0], [0.0, 0.0]], "B": [[0.0], [0.0]], "T": 1.0},
          "marginals": {"Sigma0": np.eye(2).tolist(), "SigmaT": np.eye(2).tolist()}}, 3),
    ],
)
def test_error_exit_codes(tmp_path, doc, code, capsys):
    spec = write_spec(tmp_path, doc)
    assert run("solve", spec, tmp_path / "o") == code
    assert f"error [{code}]" in capsys.readouterr().err


def test_solver_error_exit_code(tmp_path, capsys):
    doc = {**BB, "simulation": {"paths": 10, "step": 0.01, "clip": 0.0}}
    assert run("simulate", write_spec(tmp_path, doc), tmp_path / "o") == 4
    assert "clip-required" in capsys.readouterr().err


def test_missing_spec_file(tmp_path):
    assert run("solve", tmp_path / "nope.json", tmp_path / "o") == 2


@pytest.mark.parametrize("name", ["brownian_bridge", "double_integrator", "nonsingular"])
def test_shipped_problems_parse(name):
    spec = load_problem(PROBLEMS / f"{name}.json")
    m0, mT = spec.marginals()
    assert spec.system().n == m0.n == mT.n


def test_console_entry_point(tmp_path):
    spec = write_spec(tmp_path, BB)
    r = subprocess.run([sys.executable, "-m", "covbridge", "solve", "--spec", str(spec), "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "solution:" in r.stdout
