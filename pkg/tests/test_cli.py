import csv
import json

import numpy as np
import pytest

from conftest import CONFIGS
from stefanlab import cli
from stefanlab.config import ConfigError, load_config, parse_config
from stefanlab.records import RunRecord


def read_summary(path):
    return dict(line.split(" = ", 1) for line in path.read_text().splitlines())


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def small_cfg(tmp_path, name="heat", replace=(), extra=""):
    text = (CONFIGS / f"{name}.cfg").read_text()
    for a, b in replace:
        assert a in text
        text = text.replace(a, b)
    path = tmp_path / f"{name}.cfg"
    path.write_text(text + extra)
    return str(path)


def test_heat_benchmark(tmp_path):
    assert cli.main(["run", str(CONFIGS / "heat.cfg"), "--out", str(tmp_path)]) == 0
    s = read_summary(tmp_path / "summary.txt")
    assert s["MAXIMUM_PRINCIPLE"] == "PASS"
    for f in ("decay.csv", "degiorgi.csv", "isoperimetric.csv", "extrema.csv", "decay_curve.dat", "meta.json"):
        assert (tmp_path / f).exists()
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["experiment"]["config"]["kernel.alpha"] == 1.0


def test_alpha_out_of_range(tmp_path, capsys):
    cfg = small_cfg(tmp_path, replace=[("kernel.alpha = 1.0", "kernel.alpha = 2.5")])
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "kernel.alpha" in capsys.readouterr().err


@pytest.mark.parametrize(
    "replace,extra,field",
    [
        ((), "bogus.key = 1\n", "bogus.key"),
        ((("analysis.radius = 1.0", "analysis.radius = 5.0"),), "", "analysis.radius"),
        ((), "analysis.t0 = 0.5\n", "analysis.t0"),
        ((), "initial.center = [0.0, 1.0]\n", "initial.center"),
        ((("grid.nodes = [512]", "grid.nodes = [512.5]"),), "", "grid.nodes"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, replace, extra, field):
    cfg = small_cfg(tmp_path, replace=replace, extra=extra)
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 2
    assert field in capsys.readouterr().err


def test_ladder_must_decrease():
    with pytest.raises(ConfigError, match="epsilon_ladder"):
        parse_config({"problem": {"epsilon_ladder": [1e-3, 1e-2]}})


def test_bad_toml(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("kernel.alpha = = 1\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_solver_failure_exit(tmp_path, capsys):
    cfg = small_cfg(tmp_path, extra="problem.dt = 0.1\n")
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 3
    assert "solver error" in capsys.readouterr().err


def test_coverage_exit(tmp_path):
    cfg = small_cfg(tmp_path, replace=[("grid.nodes = [512]", "grid.nodes = [32]")])
    assert cli.main(["run", cfg, "--out", str(tmp_path / "o")]) == 4


def test_rerun_from_meta_and_analyze(tmp_path):
    cfg = small_cfg(tmp_path, replace=[("grid.nodes = [512]", "grid.nodes = [256]"), ("output.snapshots = 256", "output.snapshots = 64"), ("analysis.depth = 3", "analysis.depth = 2")])
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", cfg, "--out", str(a)]) == 0
    assert cli.main(["run", str(a / "meta.json"), "--out", str(b)]) == 0
    for f in sorted(a.glob("*.csv")):
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name
    before = (a / "summary.txt").read_bytes()
    assert cli.main(["analyze", str(a)]) == 0
    assert (a / "summary.txt").read_bytes() == before
    assert cli.main(["analyze", str(tmp_path)]) == 2


def test_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "1")
    assert cli.main(["threshold", "--C", "1", "--n", "1", "--alpha", "1", "--steps", "3"]) == 0


def test_threshold_output(capsys):
    assert cli.main(["threshold", "--C", "1", "--n", "1", "--alpha", "2", "--steps", "4"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "threshold = 0.25"
    assert out[-1].startswith("trace = ")


def _one_ulp_below(C, n, alpha, convention):
    thr = cli.degiorgi_threshold(C, n, alpha)
    return cli.simulate_recursion(np.nextafter(thr, 0.0), C, n, alpha, 200, convention=convention)


def test_threshold_one_ulp_below_standard():
    assert _one_ulp_below(1.0, 1, 1.0, "standard").decayed


def test_threshold_one_ulp_below_default(capsys):
    thr = cli.degiorgi_threshold(1.0, 1, 1.0)
    cli.main(["threshold", "--C", "1", "--n", "1", "--alpha", "1", "--I0", repr(float(np.nextafter(thr, 0.0)))])
    assert capsys.readouterr().out.splitlines()[-1] == "trace = decaying"


def test_threshold_one_ulp_below_standard_cli(capsys):
    thr = cli.degiorgi_threshold(1.0, 1, 1.0)
    seed = repr(float(np.nextafter(thr, 0.0)))
    assert cli.main(["threshold", "--C", "1", "--n", "1", "--alpha", "1", "--I0", seed, "--steps", "200", "--convention", "standard"]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "trace = decaying"


def test_threshold_zero_seed(capsys):
    assert cli.main(["threshold", "--C", "1", "--n", "1", "--alpha", "1", "--I0", "0", "--steps", "5"]) == 0
    rows = capsys.readouterr().out.splitlines()[3:-1]
    assert [float(r.split()[1]) for r in rows] == [0.0] * 6


def test_threshold_bad_input(capsys):
    assert cli.main(["threshold", "--C", "-1"]) == 2


@pytest.mark.slow
def test_sweep_alpha(tmp_path):
    cfg = small_cfg(tmp_path, replace=[("grid.nodes = [512]", "grid.nodes = [256]"), ("analysis.depth = 3", "analysis.depth = 2")])
    assert cli.main(["sweep", cfg, "--param", "kernel.alpha", "--values", "0.5", "1", "1.5", "--out", str(tmp_path / "s")]) == 0
    rows = read_rows(tmp_path / "s" / "sweep.csv")
    assert [r["kernel.alpha"] for r in rows] == ["0.5", "1.0", "1.5"]
    assert len([p for p in (tmp_path / "s").iterdir() if p.is_dir()]) == 3
    assert all(r["MAXIMUM_PRINCIPLE"] == "PASS" for r in rows)


@pytest.mark.slow
def test_sweep_epsilon_matches_ladder(tmp_path):
    cfg = small_cfg(tmp_path, "stefan_hat", replace=[("grid.nodes = [512]", "grid.nodes = [256]"), ("output.snapshots = 256", "output.snapshots = 64"), ("analysis.depth = 3", "analysis.depth = 2")])
    assert cli.main(["run", cfg, "--out", str(tmp_path / "ladder")]) == 0
    eps = ["0.1", "0.01", "0.001", "0.0001"]
    assert cli.main(["sweep", cfg, "--param", "problem.epsilon", "--values", *eps, "--out", str(tmp_path / "s")]) == 0
    ladder = read_rows(tmp_path / "ladder" / "epsilon_ladder.csv")
    sweep = read_rows(tmp_path / "s" / "sweep.csv")
    assert [r["epsilon"] for r in ladder] == [r["problem.epsilon"] for r in sweep]
    for lr, sr in zip(ladder, sweep):
        assert (lr["linf_bound"], lr["mu0"], lr["c_emp"]) == (sr["LINF_BOUND"], sr["MU0"], sr["ENERGY_C_EMP"])
    s = read_summary(tmp_path / "ladder" / "summary.txt")
    assert s["EPSILON_UNIFORM_LINF"] == "PASS" and s["LADDER_CAUCHY"] == "PASS"


@pytest.mark.slow
def test_sweep_porous_exponent(tmp_path):
    assert cli.main(["sweep", str(CONFIGS / "porous.cfg"), "--param", "nonlinearity.m", "--values", "2", "3", "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "sweep.csv")
    assert len(rows) == 2 and all(float(r["HOLDER_GAMMA"]) > 0 for r in rows)


def test_two_dimensional_run(tmp_path):
    cfg = tmp_path / "disk.cfg"
    cfg.write_text(
        "grid.lower = [-2.0, -2.0]\ngrid.upper = [2.0, 2.0]\ngrid.nodes = [20, 20]\n"
        "initial.shape = \"gaussian\"\nnonlinearity.kind = \"porous\"\nproblem.T = 1.0\n"
        "analysis.depth = 1\nanalysis.levels = 2\noutput.snapshots = 8\n"
    )
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rec = RunRecord.load(tmp_path / "o")
    assert rec.u.shape == (9, 400)
    assert read_summary(tmp_path / "o" / "summary.txt")["MAXIMUM_PRINCIPLE"] == "PASS"
