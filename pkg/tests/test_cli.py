import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from ttessel import __version__
from ttessel.cli import main
from ttessel.io import load_tessellation
from ttessel.pseudolikelihood import crtt_mple


def read_bytes(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


def csv_rows(path):
    with open(path) as fh:
        return list(csv.reader(line for line in fh if not line.startswith("#")))


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    code = main(["simulate", "--model", "crtt", "--side", "1.0", "--burnin", "400", "--period", "100",
                 "--samples", "2", "--seed", "3", "--out", str(out)])
    assert code == 0
    return out


def test_simulate_outputs(simulated):
    names = set(read_bytes(simulated))
    assert {"tessellation_0000.json", "tessellation_0001.json", "trace.csv", "simulate.json"} <= names
    rows = csv_rows(simulated / "trace.csv")
    assert rows[0] == ["iteration", "energy", "nseint", "nnbseint", "nbseint", "accepted_move_type"]
    assert len(rows) == 1 + 500
    meta = json.loads((simulated / "simulate.json").read_text())
    assert meta["version"] == __version__
    assert meta["config"]["theta"] == [0.64] and meta["config"]["burnin"] == 400
    tess = load_tessellation(simulated / "tessellation_0001.json")
    tess.check_invariants()
    saved = json.loads((simulated / "tessellation_0001.json").read_text())
    assert saved["statistics"]["nseint"] == tess.statistics_basic()[0]


def test_simulate_is_byte_identical_per_seed(tmp_path):
    argv = ["simulate", "--model", "area", "--side", "1.0", "--burnin", "300", "--period", "50",
            "--samples", "2", "--seed", "9", "--out", str(tmp_path)]
    assert main(argv) == 0
    first = read_bytes(tmp_path)
    assert main(argv) == 0
    assert read_bytes(tmp_path) == first


def test_estimate_crtt_closed_form(simulated, tmp_path):
    f = simulated / "tessellation_0000.json"
    assert main(["estimate", str(f), "--model", "crtt", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "estimate.json").read_text())
    assert res["theta_hat"][0] == pytest.approx(crtt_mple(load_tessellation(f)), rel=1e-12)
    assert res["iterations"] == 0
    rows = csv_rows(tmp_path / "nois_trace.csv")
    assert rows[0] == ["iteration", "theta1", "lpl"]


def test_estimate_angle_defaults_and_determinism(simulated, tmp_path):
    f = simulated / "tessellation_0001.json"
    argv = ["estimate", str(f), "--model", "angle", "--max-iter", "4", "--seed", "2", "--out", str(tmp_path)]
    assert main(argv) == 0
    first = read_bytes(tmp_path)
    res = json.loads(first["estimate.json"])
    assert res["config"]["delta"] == 0.005 and len(res["theta_hat"]) == 2
    assert main(argv) == 0
    assert read_bytes(tmp_path) == first


def test_config_file_overrides_flags(simulated, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "area", "max_iter": 2, "delta": -1.0}))
    out = tmp_path / "o"
    out.mkdir()
    f = simulated / "tessellation_0001.json"
    assert main(["estimate", str(f), "--model", "crtt", "--config", str(cfg), "--out", str(out)]) == 0
    res = json.loads((out / "estimate.json").read_text())
    assert res["config"]["model"] == "area" and res["iterations"] == 2


def test_study_small_and_parallel_determinism(tmp_path):
    base = ["study", "--model", "crtt", "--side", "1.0", "--side", "1.5", "--replicates", "4",
            "--burnin", "300", "--period", "60", "--seed", "5", "--chains", "2"]
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir()
    b.mkdir()
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--workers", "2", "--out", str(b)]) == 0
    rows_a = csv_rows(a / "replicates.csv")
    rows_b = csv_rows(b / "replicates.csv")
    assert rows_a == rows_b and len(rows_a) == 1 + 8
    summary = json.loads((a / "summary.json").read_text())["summary"]
    stats = summary["1.0"]["theta"][0]
    assert {"decile_first", "decile_last", "q1", "median", "q3", "iqr"} <= set(stats)
    assert stats["n"] == 4


def write_pattern(path, pts):
    with open(path, "w") as fh:
        fh.write("x,y\n")
        for x, y in pts:
            fh.write(f"{float(x)!r},{float(y)!r}\n")


def test_ppfit_poisson_and_strauss(tmp_path):
    rng = np.random.default_rng(0)
    pts = rng.uniform(size=(60, 2))
    write_pattern(tmp_path / "p.csv", pts)
    assert main(["ppfit", str(tmp_path / "p.csv"), "--rho", "6000", "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "ppfit.json").read_text())
    assert res["poisson_benchmark"] == pytest.approx(math.log(60))
    assert abs(res["theta_hat"][0] - res["poisson_benchmark"]) < 0.05
    assert main(["ppfit", str(tmp_path / "p.csv"), "--rho", "600", "--model", "strauss",
                 "--radius", "0.1", "--out", str(tmp_path)]) == 0
    assert len(json.loads((tmp_path / "ppfit.json").read_text())["theta_hat"]) == 2


def test_ppfit_requires_rho(tmp_path):
    write_pattern(tmp_path / "p.csv", [(0.5, 0.5)])
    with pytest.raises(SystemExit) as exc:
        main(["ppfit", str(tmp_path / "p.csv")])
    assert exc.value.code == 2
    assert main(["ppfit", str(tmp_path / "p.csv"), "--rho", "-1", "--out", str(tmp_path)]) == 2
    assert main(["ppfit", str(tmp_path / "p.csv"), "--rho", "10", "--model", "strauss",
                 "--out", str(tmp_path)]) == 2
    (tmp_path / "bad.csv").write_text("x,y\n0.1,zero\n")
    assert main(["ppfit", str(tmp_path / "bad.csv"), "--rho", "10", "--out", str(tmp_path)]) == 2


def test_period_command(tmp_path, capsys):
    assert main(["period", "--model", "crtt", "--side", "1.0", "--pilot", "4000",
                 "--seed", "1", "--out", str(tmp_path)]) == 0
    period = json.loads((tmp_path / "period.json").read_text())["period"]
    assert period >= 1 and str(period) in capsys.readouterr().out


def test_frozen_chain_exit_code(tmp_path):
    assert main(["period", "--model", "crtt", "--theta", "-30", "--pilot", "200",
                 "--max-pilot", "400", "--out", str(tmp_path)]) == 1


@pytest.mark.parametrize("argv", [
    ["simulate", "--burnin", "-1"],
    ["simulate", "--side", "0"],
    ["simulate", "--model", "area", "--theta", "1.0"],
    ["study", "--replicates", "0"],
    ["period", "--fraction", "1.5"],
])
def test_validation_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == 2


def test_bad_files_exit_2(tmp_path):
    bad_cfg = tmp_path / "c.json"
    bad_cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["simulate", "--config", str(bad_cfg), "--out", str(tmp_path)]) == 2
    bad_cfg.write_text("{")
    assert main(["simulate", "--config", str(bad_cfg), "--out", str(tmp_path)]) == 2
    crossing = tmp_path / "t.json"
    crossing.write_text(json.dumps({
        "domain": [[0, 0], [1, 0], [1, 1], [0, 1]],
        "segments": [{"endpoints": [[0, 0.5], [1, 0.5]]}, {"endpoints": [[0.5, 0], [0.5, 1]]}]}))
    assert main(["estimate", str(crossing), "--out", str(tmp_path)]) == 2
    assert main(["estimate", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "ttessel", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout
