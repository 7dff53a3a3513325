import csv
import io
import subprocess
import sys

import numpy as np
import pytest

from raysn import cli
from raysn.solver import SolverAbort

SMALL = ["--nx", "24", "--ny", "24", "--t-end", "0.2", "--order-n", "4"]


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_quad_table_rows(capsys):
    assert cli.main(["quad-table"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 7
    got = [tuple(int(t) for t in line.split()[:2]) for line in lines[1:]]
    assert got == [(2, 6), (4, 38), (8, 198), (16, 902), (32, 3846), (64, 15878)]
    assert lines[1].split()[2] == "-0.359039"


def test_quad_table_csv(tmp_path):
    out = tmp_path / "q.csv"
    assert cli.main(["quad-table", "--max-n", "4", "--csv", "4", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert len(rows) == 38 and list(rows[0]) == ["index", "x", "y", "z", "weight"]
    assert sum(float(r["weight"]) for r in rows) == pytest.approx(4 * np.pi)


def test_quad_table_exit_code_on_count_mismatch(monkeypatch):
    monkeypatch.setattr(cli, "octahedral_point_count", lambda n: -1)
    assert cli.cmd_quad_table(4, stream=io.StringIO()) == 1


def test_unknown_flag_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--frobnicate"])
    assert info.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_run_line_source_artifacts(tmp_path):
    out = tmp_path / "ls"
    assert cli.main(["run", "--delta", "0", "--out", str(out), *SMALL, "--snapshots", "0.1"]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["cut_diagonal.csv", "cut_horizontal.csv", "density.csv",
                     "density_t0.1.csv", "manifest.txt"]
    rows = read_csv(out / "density.csv")
    assert list(rows[0]) == ["x", "y", "rho"] and len(rows) == 24 * 24
    # row-major: y varies fastest
    assert rows[0]["x"] == rows[1]["x"] and rows[0]["y"] != rows[1]["y"]
    manifest = dict(line.split("=", 1) for line in (out / "manifest.txt").read_text().splitlines())
    assert manifest["n_q"] == "38" and manifest["config.seed"] == "0" and "version" in manifest
    assert abs(float(manifest["final_mass"]) / float(manifest["initial_mass"]) - 1) < 0.01


def test_run_is_byte_reproducible(tmp_path):
    args = ["run", "--delta", "8", "--seed", "3", *SMALL]
    cli.main([*args, "--out", str(tmp_path / "a")])
    cli.main([*args, "--out", str(tmp_path / "b")])
    for name in ("density.csv", "cut_horizontal.csv", "cut_diagonal.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_lattice_artifacts(tmp_path):
    out = tmp_path / "lat"
    assert cli.main(["run", "--problem", "lattice", "--nx", "28", "--ny", "28", "--t-end", "0.5",
                     "--order-n", "4", "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert {"density.csv", "log10_density.csv", "cut_x1.csv", "cut_y1.csv", "manifest.txt"} <= names
    logs = [float(r["log10_rho"]) for r in read_csv(out / "log10_density.csv")]
    assert min(logs) >= -10 and np.all(np.isfinite(logs))
    rho = [float(r["rho"]) for r in read_csv(out / "density.csv")]
    assert min(rho) >= 0


def test_run_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("run.delta = 4\nrun.nx = 20\nrun.ny = 20\nrun.t_end = 0.1\nrun.order_n = 4\n"
                   "run.snapshots = 0.05\nrun.conserve = yes\n")
    rc = cli.load_run_config(cfg)
    assert (rc.delta, rc.nx, rc.order_n, rc.snapshots, rc.conserve) == (4.0, 20, 4, [0.05], True)
    out = tmp_path / "o"
    assert cli.main(["run", "--config", str(cfg), "--delta", "2", "--out", str(out)]) == 0
    manifest = (out / "manifest.txt").read_text()
    assert "config.delta=2.0" in manifest and "config.conserve_mass=True" in manifest
    cfg.write_text("run.nonsense = 1\n")
    with pytest.raises(Exception):
        cli.load_run_config(cfg)


def test_run_abort_removes_partial_artifacts(tmp_path, monkeypatch, capsys):
    def explode(path, cut):
        raise SolverAbort("boom", {"abort_step": 7})

    monkeypatch.setattr(cli, "_write_cut", explode)
    out = tmp_path / "x"
    assert cli.main(["run", "--out", str(out), *SMALL]) == 1
    assert [p.name for p in out.iterdir()] == ["abort.txt"]
    assert "abort_step=7" in (out / "abort.txt").read_text()
    assert "aborted" in capsys.readouterr().err


def test_verify_passes(capsys):
    assert cli.main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 9


def test_verify_surfaces_corruption(capsys):
    assert cli.main(["verify", "--inject-corruption"]) == 1
    out = capsys.readouterr().out
    assert "FAIL  interpolation.locate_triangle" in out and "LocateError" in out


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_verify_seed_independent(seed, capsys):
    assert cli.main(["verify", "--seed", str(seed)]) == 0


def test_sweep_rows(tmp_path, monkeypatch):
    monkeypatch.setenv("RAYSN_THREADS", "1")
    out = tmp_path / "s.csv"
    cli.main(["sweep", "--deltas", "0,8", "--orders", "3,4", "--product-orders", "4",
              "--nx", "24", "--ny", "24", "--t-end", "0.2", "--csv", str(out)])
    rows = read_csv(out)
    assert list(rows[0]) == cli.SWEEP_COLUMNS
    assert len(rows) == 5
    assert [r["n_q"] for r in rows] == ["18", "38", "18", "38", "16"]
    assert rows[-1]["quadrature"] == "product"
    for r in rows:
        assert 0 <= float(r["rotation_share"]) <= 1 and float(r["ray_metric"]) > 0


def test_worker_count(monkeypatch):
    monkeypatch.setenv("RAYSN_THREADS", "3")
    assert cli.worker_count(10) == 3 and cli.worker_count(2) == 2
    monkeypatch.delenv("RAYSN_THREADS")
    assert cli.worker_count(1) == 1


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "raysn", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("raysn ")
