import csv

import numpy as np
import pytest

from nlmg import parallel
from nlmg.cli import load_config, main, parse_config

INTERVAL = """[problem]
type = interval
s = {s}
[mesh]
level = 2
[datum]
kind = constants
bands = 1:1.5:0.5
[solver]
method = {method}
max_iters = {max_iters}
[output]
directory = {out}
"""


def write_cfg(tmp_path, s=0.25, method="newton", max_iters=0, name="run.ini"):
    p = tmp_path / name
    p.write_text(INTERVAL.format(s=s, method=method, max_iters=max_iters, out=tmp_path / "out"))
    return p


def test_validate_echo(tmp_path, capsys):
    p = write_cfg(tmp_path)
    assert main(["validate", "--config", str(p)]) == 0
    out = capsys.readouterr().out
    assert "[solver]" in out and "tau = 1.0" in out and "s = 0.25" in out
    assert "N = " in out and "h = 0.25" in out and "sigma = " in out


def test_validate_annulus(tmp_path, capsys):
    p = tmp_path / "a.ini"
    p.write_text("[problem]\ns = 0.25\n[mesh]\nlevel = 3\n")
    assert main(["validate", "--config", str(p)]) == 0
    out = capsys.readouterr().out
    assert "type = annulus" in out and "level = 3" in out
    h = float(out.split("mesh statistics")[1].split("\nh = ")[1].split()[0])
    assert 0.1 < h <= 0.125


def test_missing_s(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[problem]\ntype = annulus\n")
    assert main(["validate", "--config", str(p)]) == 3
    assert "'s'" in capsys.readouterr().err


def test_s_out_of_range(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[problem]\ntype = annulus\ns = 0.6\n")
    assert main(["validate", "--config", str(p)]) == 3
    err = capsys.readouterr().err
    assert "line 3" in err and "(0, 1/2)" in err


@pytest.mark.parametrize("text,needle", [
    ("[problem]\ns = 0.2\nfoo = 1\n", "line 3"),
    ("[problem]\ns = 0.2\n[mesh]\nlevel = two\n", "line 4"),
    ("[problem]\ns = 0.2\n[solver]\nmethod = cg\n", "line 4"),
    ("[problem]\ns = 0.2\n[nonsense]\n", "nonsense"),
    ("s = 0.2\n", "line 1"),
])
def test_config_diagnostics(tmp_path, capsys, text, needle):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    assert main(["validate", "--config", str(p)]) == 3
    assert needle in capsys.readouterr().err


def test_usage_error_is_config_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 3


def test_overrides_and_stem(tmp_path):
    cfg = load_config(write_cfg(tmp_path), {("problem", "s"): 0.3})
    assert cfg.s == 0.3 and cfg.stem() == "interval_s0.3_h0.25_newton"
    cfg = parse_config("[problem]\ns = 0.49\n")
    assert cfg.scaling().name == "CDS_SCALED" and cfg.max_iters == 50


def test_solve_outputs_deterministic(tmp_path):
    p = write_cfg(tmp_path)
    assert main(["solve", "--config", str(p)]) == 0
    out = tmp_path / "out"
    stem = "interval_s0.25_h0.25_newton"
    first = {f: (out / f"{stem}_{f}").read_bytes() for f in
             ("solution.csv", "report.csv", "metrics.csv", "solution.vtk")}
    assert main(["solve", "--config", str(p)]) == 0
    for f, data in first.items():
        assert (out / f"{stem}_{f}").read_bytes() == data, f
        assert b"\r\n" not in data
    vtk = first["solution.vtk"].decode().splitlines()
    assert vtk[0] == "# vtk DataFile Version 3.0" and "SCALARS u double 1" in vtk
    rows = list(csv.reader(first["metrics.csv"].decode().splitlines()))
    status = dict(rows[1:])["status"]
    assert status == "converged"


def test_nonconvergence_exit(tmp_path):
    p = write_cfg(tmp_path, max_iters=1)
    assert main(["solve", "--config", str(p)]) == 2
    p = write_cfg(tmp_path, method="gf", max_iters=2, name="gf.ini")
    assert main(["flow", "--config", str(p)]) == 2


def test_energy_and_metrics(tmp_path, capsys):
    p = write_cfg(tmp_path)
    assert main(["solve", "--config", str(p)]) == 0
    sol = tmp_path / "out" / "interval_s0.25_h0.25_newton_solution.csv"
    capsys.readouterr()
    assert main(["energy", "--config", str(p), "--solution", str(sol)]) == 0
    out = capsys.readouterr().out
    res = float(out.split("residual = ")[1])
    assert res <= 1e-8
    assert main(["metrics", "--config", str(p), "--solution", str(sol),
                 "--reference", str(sol)]) == 0
    assert "es_squared_direct = 0.0" in capsys.readouterr().out
    bad = tmp_path / "short.csv"
    bad.write_text("node,x,value\n0,0.0,1.0\n")
    assert main(["energy", "--config", str(p), "--solution", str(bad)]) == 3


def test_study_limit_and_normals(tmp_path, capsys):
    assert main(["study", "limit", "--n", "16", "--s-list", "0.3", "0.45",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "study_limit_interval_h0.125.csv").exists()
    assert main(["study", "normals", "--n", "16", "--s-list", "0.3", "--points", "0.2",
                 "--out", str(tmp_path)]) == 0
    assert main(["study", "limit", "--s-list", "0.7"]) == 3


def test_oracle_command(tmp_path):
    assert main(["oracle", "--s-list", "0.25", "--samples", "1", "--n", "4",
                 "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "oracle_interval_h0.5_energy.csv")))
    assert float(rows[0]["rel_error"]) < 1e-4


def test_threads_env(monkeypatch):
    monkeypatch.setenv("NLMG_THREADS", "1")
    assert parallel.resolve_threads(8) == 1
    monkeypatch.setenv("NLMG_THREADS", "x")
    with pytest.raises(ValueError):
        parallel.resolve_threads()
    monkeypatch.delenv("NLMG_THREADS")
    assert parallel.resolve_threads(1) == 1
    with pytest.raises(ValueError):
        parallel.resolve_threads(0)
