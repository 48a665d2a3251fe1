import csv
import filecmp
import json
import os

import pytest

from fairdyn import cli
from fairdyn.errors import ConfigError, IoError
from fairdyn.dynamics import DynamicsModel, RetentionFn
from fairdyn.horizon import ConvergenceSpec, Trajectory, simulate, sweep_final_proportion

from conftest import uniform_groups

COLUMNS = "t,theta_a,theta_b,loss_a,loss_b,alpha_a,n_a,n_b,step_total_loss,avg_total_loss".split(",")
SWEEP_COLUMNS = ("beta_a,beta_b,final_alpha_a,final_theta_a,final_theta_b,final_loss_a,final_loss_b,"
                 "converged").split(",")


def _cfg_text(name):
    with open(cli.resolve_config(name), encoding="utf-8") as fh:
        return fh.read()


def _write(tmp_path, text, name="case.cfg"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_reference_config_prints_visited_list(tmp_path, capsys):
    assert cli.run("uniform_visited.cfg", out_dir=str(tmp_path)) == 0
    out = capsys.readouterr().out
    line = next(l for l in out.splitlines() if l.startswith("Simple beta=(3000,7000)"))
    assert "(17,17)" in line
    assert "StatPar beta=(5000,5000): [(10,26.8), (8.39,25), (-1.02,17)]" in out
    payload = json.loads((tmp_path / "uniform_visited_visited.json").read_text())
    assert len(payload) == 9


def test_bad_label_fractions_exit_1(tmp_path, capsys):
    text = _cfg_text("uniform_visited.cfg").replace("g0 = 0.8", "g0 = 0.8\ng1 = 0.3", 1)
    assert cli.run(_write(tmp_path, text)) == 1
    err = capsys.readouterr().err
    assert "group_a.g1" in err


@pytest.mark.parametrize("old,new,field", [
    ("f0_hi = 20", "f0_hi = 40", "group_a.supports"),
    ("f0_lo = -5", "f0_lo = 50", "group_a.f0"),
    ("kind = accuracy", "kind = bogus", "dynamics.kind"),
    ("type = visited", "type = plot", "experiment.type"),
    ("beta_a = 5000", "beta_a = -2", "dynamics"),
    ("betas = 3000:7000", "betas = 3000-7000", "experiment.betas"),
    ("criteria = Simple, EqOpt, StatPar", "criteria = Fancy", "experiment.criterion"),
    ("window = 10", "window = ten", "horizon.window"),
])
def test_validation_names_field(tmp_path, old, new, field):
    text = _cfg_text("uniform_visited.cfg")
    assert old in text
    with pytest.raises(ConfigError) as ei:
        cli.load_config(_write(tmp_path, text.replace(old, new, 1)))
    assert field in str(ei.value)


def test_missing_section_and_file(tmp_path):
    text = _cfg_text("uniform_visited.cfg")
    start = text.index("[horizon]")
    end = text.index("[experiment]")
    with pytest.raises(ConfigError, match="horizon"):
        cli.load_config(_write(tmp_path, text[:start] + text[end:]))
    assert cli.run(str(tmp_path / "nope.cfg")) == 1


def test_eqlos_sweep_rows_hold_beta_share(tmp_path):
    assert cli.run("eqlos_sweep.cfg", out_dir=str(tmp_path)) == 0
    rows = _read_csv(tmp_path / "eqlos_sweep_EqLos.csv")
    assert rows[0] == SWEEP_COLUMNS
    assert len(rows) == 101
    for r in rows[1:]:
        ba, bb, fa = float(r[0]), float(r[1]), float(r[2])
        assert fa == pytest.approx(ba / (ba + bb), abs=1e-6)


def test_empty_trajectory_header_only(tmp_path):
    p = tmp_path / "t.csv"
    cli.emit_trajectory(Trajectory(), str(p))
    assert p.read_text() == ",".join(COLUMNS) + "\n"


def test_trajectory_alpha_round_trip(tmp_path):
    ga, gb = uniform_groups()
    m = DynamicsModel("accuracy", RetentionFn("one_minus_x_squared"), 7000, 3000)
    traj = simulate(ga, gb, "EqOpt", m, horizon_T=40)
    p = tmp_path / "t.csv"
    cli.emit_trajectory(traj, str(p))
    rows = _read_csv(p)
    assert rows[0] == COLUMNS
    assert len(rows) == len(traj) + 1
    i, ia, ib = COLUMNS.index("alpha_a"), COLUMNS.index("n_a"), COLUMNS.index("n_b")
    for r in rows[1:]:
        na, nb = float(r[ia]), float(r[ib])
        assert float(r[i]) == pytest.approx(na / (na + nb), abs=1e-9)
        # twelve significant digits at most
        assert all(len(v.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 12 for v in r)


def test_sweep_rows_in_grid_order(tmp_path):
    ga, gb = uniform_groups()
    m = DynamicsModel("accuracy", RetentionFn("one_minus_x_squared"), 1, 1)
    grid = [(1000.0, 2000.0), (3000.0, 1000.0), (2000.0, 2000.0)]
    res = sweep_final_proportion(ga, gb, "EqLos", m, grid, None, ConvergenceSpec(), jobs=1)
    p = tmp_path / "s.csv"
    cli.emit_sweep(res, str(p))
    rows = _read_csv(p)
    assert len(rows) == 4
    assert [(float(r[0]), float(r[1])) for r in rows[1:]] == grid


def test_unwritable_path_raises_ioerror(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        cli.emit_trajectory(Trajectory(), str(blocker / "sub" / "t.csv"))


def test_run_reports_io_failure_as_runtime_error(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.run("oneshot.cfg", out_dir=str(blocker)) == 0  # oneshot writes nothing
    assert cli.run("uniform_visited.cfg", out_dir=str(blocker / "sub")) == 2
    assert "IoError" in capsys.readouterr().err


@pytest.mark.parametrize("name", cli.bundled_configs())
def test_bundled_configs_rerun_byte_identical(name, tmp_path):
    d1, d2 = tmp_path / "one", tmp_path / "two"
    assert cli.run(name, out_dir=str(d1)) == 0
    assert cli.run(name, out_dir=str(d2)) == 0
    f1, f2 = sorted(os.listdir(d1)) if d1.exists() else [], sorted(os.listdir(d2)) if d2.exists() else []
    assert f1 == f2
    match, mismatch, errors = filecmp.cmpfiles(d1, d2, f1, shallow=False)
    assert not mismatch and not errors


def test_validate_subcommand(capsys):
    assert cli.main(["validate", "truncnormal.cfg"]) == 0
    assert "truncnormal: ok" in capsys.readouterr().out


def test_oneshot_subcommand_json(capsys):
    assert cli.main(["oneshot", "oneshot.cfg", "--ratio", str(3 / 7)]) == 0
    d = json.loads(capsys.readouterr().out.strip())
    assert d["criterion"] == "StatPar"
    assert d["theta_a"] == pytest.approx(-1.0227, abs=1e-3)
    assert d["theta_b"] == pytest.approx(17.0, abs=1e-9)
    assert d["alpha_a"] == pytest.approx(0.3)
    assert cli.main(["oneshot", "oneshot.cfg", "--ratio", "-1"]) == 1


def test_list_subcommand(capsys):
    assert cli.main(["list"]) == 0
    names = capsys.readouterr().out.split()
    assert "uniform_visited.cfg" in names and "quality.cfg" in names


def test_seed_override(tmp_path):
    cfg = cli.load_config("quality.cfg", seed=9)
    assert cfg.seed == 9 and cfg.model.rng_seed == 9
    assert cli.run("quality.cfg", out_dir=str(tmp_path / "a"), seed=9) == 0
    assert cli.run("quality.cfg", out_dir=str(tmp_path / "b"), seed=10) == 0
    la = (tmp_path / "a" / "quality_Simple_learned.csv").read_text()
    lb = (tmp_path / "b" / "quality_Simple_learned.csv").read_text()
    assert la != lb


def test_format_pair():
    assert cli.format_pair((10.909090, 17.0)) == "(10.91,17)"
    assert cli.format_pair((-1.0227, 17.0)) == "(-1.02,17)"
