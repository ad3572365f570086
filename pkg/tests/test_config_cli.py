import csv
import math
import os

import numpy as np
import pytest

from vds import cli
from vds.config import ConfigError, RunConfig, parse_config, serialize_config, set_path
from vds.delay import SinusoidalDelay
from vds.kernel import Constant, Hyperbolic, PowerLaw, PronySum

SHORT = """
[grid]
n = 48
[solver]
t_end = 12.0
output_every = 10
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_empty_config_uses_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.grid.counts == (256,)
    assert cfg.kernel == PronySum(((0.5, 1.0),))
    assert cfg.witness == Constant(1.0)
    assert (cfg.damping.a0, cfg.damping.a1) == (1.0, 0.5)
    assert cfg.solver.engine == "recursive"
    assert cfg.fit_t0 == 2.0


def test_delay_speed_violation_message():
    with pytest.raises(ConfigError) as info:
        parse_config("[delay]\nform = 'sin'\ntau = 2.0\namp = 0.6\nomega = 2.0\n")
    assert info.value.violations == ["delay: d = 1.2 >= 1 violates the delay-speed bound d < 1"]


def test_recursive_engine_needs_prony():
    with pytest.raises(ConfigError) as info:
        parse_config("[kernel]\nform = 'power'\ng0 = 0.5\np = 2.0\n")
    assert info.value.violations == ["solver.engine: recursive engine requires Prony kernel"]


def test_all_violations_reported():
    text = """
[grid]
n = -3
colour = "red"
[kernel]
modes = [[2.0, 1.0]]
[damping]
a0 = 0
[solver]
engine = "fft"
[extra]
x = 1
"""
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    v = info.value.violations
    assert "extra: unknown section" in v
    assert "grid.colour: unknown key" in v
    assert any(x.startswith("grid.n: must be > 0") for x in v)
    assert any(x.startswith("kernel: ") and "mass" in x for x in v)
    assert any(x.startswith("damping.a0: must be > 0") for x in v)
    assert any(x.startswith("solver.engine: expected one of") for x in v)
    assert len(v) == 6


def test_two_dimensional_grid_needs_square_cells():
    with pytest.raises(ConfigError, match="square"):
        parse_config("[grid]\ndim = 2\nLx = 1.0\nLy = 1.0\nnx = 10\nny = 20\n")
    cfg = parse_config("[grid]\ndim = 2\nLx = 1.0\nLy = 2.0\nnx = 9\nny = 19\n")
    assert cfg.grid.shape == (9, 19)


@pytest.mark.parametrize("name", ["default", "sinusoidal", "powerlaw", "transport", "unstable"])
def test_round_trip(name):
    cfg = parse_config(cli.read_config_text(f"@{name}"))
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_full():
    cfg = parse_config(
        """
[grid]
dim = 2
Lx = 1.0
Ly = 1.0
nx = 15
ny = 15
[kernel]
form = "power"
g0 = 0.3
p = 3.0
[witness]
form = "hyperbolic"
a = 2.5
[delay]
form = "sin"
tau = 0.7
amp = 0.1
omega = 3.0
[solver]
engine = "direct"
snapshots = [0.5, 1.0]
snapshot_format = "binary"
[energy]
t0 = 3.0
[initial]
u0 = "gaussian"
u0_center = [0.3, 0.6]
u1 = "sine"
u1_modes = [2, 1]
f0 = "zero"
"""
    )
    assert isinstance(cfg.kernel, PowerLaw) and isinstance(cfg.witness, Hyperbolic)
    assert isinstance(cfg.delay, SinusoidalDelay)
    assert parse_config(serialize_config(cfg)) == cfg


def test_set_path_rejects_unknown_axis():
    with pytest.raises(ConfigError):
        set_path({}, "damping.a2", 1.0)
    assert set_path({"damping": {"a0": 2.0}}, "damping.a1", 0.1) == {"damping": {"a0": 2.0, "a1": 0.1}}


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("default")
    code = cli.main(["simulate", "@default", "--out", str(out)])
    return code, out


def test_simulate_default_outputs(default_run):
    code, out = default_run
    assert code == 0
    lines = (out / "energy.csv").read_text().splitlines()
    assert lines[0] == "t,E,kinetic,elastic,memory,delay,I,K,L,F"
    assert any(line.startswith("# k_fit=") for line in lines)
    cert = (out / "certificate.txt").read_text()
    assert "verdict=feasible" in cert and "g2=holds" in cert
    assert (out / "fit.txt").read_text().startswith("K_fit=")


def test_energy_csv_rereads_exactly(default_run):
    _, out = default_run
    rows = [r for r in csv.reader(line for line in open(out / "energy.csv") if not line.startswith("#"))]
    values = np.array(rows[1:], dtype=float)
    text = "\n".join(",".join(repr(float(x)) for x in row) for row in values)
    body = "\n".join(",".join(r) for r in rows[1:])
    assert text == body


def test_rerun_is_byte_identical(tmp_path):
    cfg = write(tmp_path, "c.toml", SHORT + "[delay]\nform = 'sin'\ntau = 1.0\namp = 0.3\nomega = 1.0\n")
    outs = []
    for name in ("a", "b"):
        assert cli.main(["simulate", cfg, "--out", str(tmp_path / name)]) == 0
        outs.append({p.name: p.read_bytes() for p in (tmp_path / name).iterdir()})
    assert outs[0] == outs[1]


def test_unstable_run_exits_3(tmp_path, capsys):
    code = cli.main(["simulate", "@unstable", "--out", str(tmp_path)])
    assert code == 3
    err = capsys.readouterr().err
    assert "diverged: t=" in err
    assert (tmp_path / "energy.csv").exists()


def test_config_error_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, "bad.toml", "[damping]\nspeed = 3\n")
    assert cli.main(["simulate", cfg, "--out", str(tmp_path)]) == 1
    assert "damping.speed: unknown key" in capsys.readouterr().err
    assert cli.main(["simulate", "@nonexistent"]) == 1


def test_check_feasibility_exit_codes(tmp_path, capsys):
    assert cli.main(["check-feasibility", "@default"]) == 0
    assert "verdict=feasible" in capsys.readouterr().out
    bad = write(tmp_path, "bad.toml", "[damping]\na0 = 1.0\na1 = 1.2\n[delay]\nform = 'sin'\ntau = 1.0\namp = 0.19\nomega = 1.0\n")
    assert cli.main(["check-feasibility", bad]) == 2
    out = capsys.readouterr().out
    assert "verdict=infeasible" in out
    margin = float(next(line for line in out.splitlines() if line.startswith("margin=")).split("=")[1])
    assert margin == pytest.approx(-0.3)


def read_sweep(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_sweep_over_a1(tmp_path):
    template = write(tmp_path, "t.toml", SHORT)
    assert cli.main(["sweep", template, "--param", "damping.a1", "--values", "0,0.25,0.5,0.75", "--out", str(tmp_path), "--jobs", "2"]) == 0
    rows = read_sweep(tmp_path / "sweep.csv")
    assert [float(r["value"]) for r in rows] == [0.0, 0.25, 0.5, 0.75]
    assert all(r["verdict"] == "feasible" and r["status"] == "ok" for r in rows)
    assert all(float(r["k_fit"]) > 0 for r in rows)


def test_sweep_witness_form(tmp_path):
    template = write(tmp_path, "t.toml", SHORT)
    assert cli.main(["sweep", template, "--param", "witness.form", "--values", "constant,hyperbolic", "--out", str(tmp_path), "--jobs", "1"]) == 0
    rows = read_sweep(tmp_path / "sweep.csv")
    assert [r["value"] for r in rows] == ["constant", "hyperbolic"]
    k_const, k_hyp = (float(r["k_fit"]) for r in rows)
    assert k_const > 0 and k_hyp > 0
    # same trajectory, different abscissa: log((1+t)/(1+t0)) grows slower than t - t0
    assert k_hyp > k_const


def test_sweep_records_failures_in_row(tmp_path):
    template = write(tmp_path, "t.toml", SHORT)
    rows = cli.sweep(open(template).read(), "damping.a0", [1.0, -1.0], jobs=1)
    assert rows[0]["status"] == "ok"
    assert rows[1]["status"] == "error" and "damping.a0" in rows[1]["detail"]


def test_sweep_empty_values_is_config_error(tmp_path, capsys):
    template = write(tmp_path, "t.toml", SHORT)
    assert cli.main(["sweep", template, "--param", "damping.a1", "--values", "", "--out", str(tmp_path)]) == 1
    assert "empty value list" in capsys.readouterr().err


def test_vds_out_overrides(tmp_path, monkeypatch):
    cfg = write(tmp_path, "c.toml", SHORT)
    monkeypatch.setenv("VDS_OUT", str(tmp_path / "env"))
    assert cli.main(["simulate", cfg, "--out", str(tmp_path / "arg")]) == 0
    assert (tmp_path / "env" / "energy.csv").exists()
    assert not (tmp_path / "arg").exists()


def test_fit_decay_refits(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", SHORT)
    cli.main(["simulate", cfg, "--out", str(tmp_path)])
    stored = dict(line.split("=", 1) for line in (tmp_path / "fit.txt").read_text().splitlines())
    capsys.readouterr()
    assert cli.main(["fit-decay", str(tmp_path / "energy.csv"), "--config", cfg]) == 0
    refit = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert refit == stored
    assert cli.main(["fit-decay", str(tmp_path / "energy.csv"), "--witness", "constant", "--a", "1.0", "--t0", "6.0"]) == 0
    later = dict(line.split("=", 1) for line in capsys.readouterr().out.splitlines())
    assert float(later["t0"]) == 6.0 and float(later["k_fit"]) > 0
    assert cli.main(["fit-decay", str(tmp_path / "energy.csv"), "--t0", "100"]) == 1


@pytest.mark.parametrize("fmt", ["csv", "binary"])
def test_snapshots(tmp_path, fmt):
    cfg = write(tmp_path, "c.toml", SHORT.replace("output_every = 10", f"output_every = 10\nsnapshots = [0.0, 1.0]\nsnapshot_format = '{fmt}'"))
    assert cli.main(["simulate", cfg, "--out", str(tmp_path)]) == 0
    ext = "csv" if fmt == "csv" else "bin"
    files = sorted(p.name for p in tmp_path.glob(f"snapshot_*.{ext}"))
    assert files == [f"snapshot_t0.000000.{ext}", f"snapshot_t1.000000.{ext}"]
    raw = (tmp_path / files[0]).read_bytes()
    header, _, body = raw.partition(b"\n")
    assert header.startswith(b"# dim=1") and b"counts=48" in header
    if fmt == "csv":
        u0 = np.array([float(x) for x in body.decode().split()])
    else:
        u0 = np.frombuffer(body, dtype="<f8")
    np.testing.assert_array_equal(u0, parse_config(open(cfg).read()).grid.sine_mode((1,)))


def test_transport_run_writes_consistency(tmp_path):
    assert cli.main(["simulate", "@transport", "--out", str(tmp_path)]) == 0
    rows = read_sweep(tmp_path / "consistency.csv")
    assert float(rows[0]["consistency_error"]) < 1e-14
    assert all(math.isfinite(float(r["consistency_error"])) for r in rows)
    assert os.path.getsize(tmp_path / "energy.csv") > 0
