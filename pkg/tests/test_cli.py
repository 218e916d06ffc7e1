import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from multiscat.cli import OUTPUT_ENV, main
from multiscat.scenes import read_table

SCENES = Path(__file__).resolve().parents[1] / "scenes"
EX1 = str(SCENES / "example1.json")


def test_run_example1_writes_files(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", EX1, str(out), "--threads", "1", "--grid", "40x30"]) == 0
    res = read_table(out / "residuals.dat")
    # kappa = 10, p = 20, tol 1e-11: reference count 11, accepted up to 14
    assert len(res) - 1 <= 14 and res[-1, 1] <= 1e-11
    assert read_table(out / "field.dat").shape == (1200, 5)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["converged"] and meta["iterations"] == len(res) - 1 and meta["threads"] == 1
    assert {"total", "gmres_wall_time"} <= set(meta["timings"])
    assert "iterations" in capsys.readouterr().out


def test_run_overrides_and_env_outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", EX1, "--p", "6", "--tol", "1e-6", "--N", "25", "--threads", "1",
                 "--grid", "10x10", "--window=-2,2,-1,1"]) == 0
    meta = json.loads((tmp_path / "env" / "metadata.json").read_text())
    assert meta["scene"]["solver"]["p"] == 6 and meta["scene"]["solver"]["N"] == 25
    data = read_table(tmp_path / "env" / "field.dat")
    assert data[0, :2].tolist() == [-2.0, -1.0] and data[-1, :2].tolist() == [2.0, 1.0]


def test_run_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["run", EX1, str(tmp_path / d), "--p", "6", "--threads", "1", "--grid", "12x8"]) == 0
    for f in ("field.dat", "residuals.dat"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", EX1, "--grid", "wide"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2


def test_invalid_scene_exits_3(tmp_path, capsys):
    doc = json.loads(Path(EX1).read_text())
    doc["scene"]["kappa"] = 0
    doc["disks"][0]["radius"] = 0.5
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["run", str(bad), str(tmp_path / "o")]) == 3
    err = capsys.readouterr().err
    assert "scene.kappa" in err and "does not contain" in err
    bad.write_text("{ not json")
    assert main(["run", str(bad), str(tmp_path / "o")]) == 3
    assert "line 1" in capsys.readouterr().err


def test_not_converged_exits_4(tmp_path):
    assert main(["run", EX1, str(tmp_path / "o"), "--p", "6", "--max-iter", "2", "--threads", "1",
                 "--grid", "4x4"]) == 4
    # the partial history is still written
    assert len(read_table(tmp_path / "o" / "residuals.dat")) == 3


def test_io_errors_exit_5(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json"), str(tmp_path / "o")]) == 5
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", EX1, str(blocker / "o"), "--p", "6", "--threads", "1", "--grid", "4x4"]) == 5
    assert str(blocker / "o") in capsys.readouterr().err


def test_validate_mie(capsys):
    assert main(["validate", "--which", "mie", "--kappa", "10", "--p", "20"]) == 0
    line = capsys.readouterr().out
    assert float(line.split("error")[1].split()[0]) < 1e-8


def test_validate_dtn_and_threshold(capsys):
    assert main(["validate", "--which", "dtn", "--kappa", "8", "--p", "20"]) == 0
    assert main(["validate", "--which", "dtn", "--kappa", "8", "--p", "20", "--threshold", "1e-30"]) == 3


def test_validate_integrals():
    assert main(["validate", "--which", "integrals"]) == 0


def test_sweep_table(tmp_path, capsys):
    table = tmp_path / "sweep.txt"
    assert main(["sweep", EX1, "--p", "6,9,12", "--ref-p", "16", "--threads", "1", "--out", str(table)]) == 0
    rows = read_table(table)
    assert rows.shape == (3, 4) and rows[:, 0].tolist() == [6, 9, 12]
    assert np.all(rows[:, 2] == 1) and np.all(np.diff(rows[:, 3]) < 0)
    assert "rel_error_vs_p16" in table.read_text().splitlines()[0]


def test_compare(capsys):
    assert main(["compare", EX1, "--p", "16", "--threads", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["relative_l2_difference"] < 1e-6
    assert rep["iterations_boundary_traces"] > 0 and rep["iterations_circle_traces"] > 0


def test_compare_rejects_index_scene():
    assert main(["compare", str(SCENES / "example5.json"), "--p", "6"]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "multiscat", "validate", "--which", "mie", "--kappa", "5",
                           "--p", "12", "--threshold", "1e-30"], capture_output=True, text=True)
    assert proc.returncode == 3 and "mie check failed" in proc.stderr
