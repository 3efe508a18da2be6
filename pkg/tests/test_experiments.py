import csv
import json
import math
import os

import numpy as np
import pytest

from torusdyn import cli
from torusdyn.config import ExperimentConfig
from torusdyn.dynamics import ParticleSystem
from torusdyn.experiments import AssumptionError, run_nonconvergence
from torusdyn.pde import DensityPair
from torusdyn.snapshots import (read_density_binary, read_particles_binary,
                                read_trajectory_csv, write_density_binary,
                                write_particles_binary, write_trajectory_csv)

# ---------------------------------------------------------------------------
# config parsing and validation


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_dict({"regime": "convergence", "bogus": 1})


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        ExperimentConfig(regime="no-such-regime")
    with pytest.raises(ValueError):
        ExperimentConfig(regime="convergence", d=3)
    with pytest.raises(ValueError):
        ExperimentConfig(regime="convergence", n_ladder=[64, 64])
    with pytest.raises(ValueError):
        ExperimentConfig(regime="convergence", T=0.0)
    with pytest.raises(ValueError):
        ExperimentConfig(regime="convergence",
                         delta={"kind": "slow-log", "slack": 0.5})


def test_delta_rules():
    cfg = ExperimentConfig(regime="convergence", T=0.05, n_ladder=[64, 128],
                           delta={"kind": "slow-log", "slack": 2.0})
    assert cfg.delta_for(64) == pytest.approx(
        math.sqrt(6.0 * 0.05 * 2.0 / math.log(64)))
    cfg = ExperimentConfig(regime="nonconvergence", n_ladder=[50, 100],
                           delta={"kind": "fast-power", "exponent": 4.0})
    assert cfg.delta_for(100) == pytest.approx(1e-8)
    cfg = ExperimentConfig(regime="convergence", n_ladder=[8, 16],
                           delta={"kind": "explicit", "values": [0.3, 0.2]})
    assert cfg.delta_for(16) == 0.2
    cfg = ExperimentConfig(regime="gronwall",
                           delta={"kind": "fixed", "value": 0.25})
    assert cfg.delta_for(999) == 0.25


def test_config_toml_roundtrip(tmp_path):
    path = tmp_path / "cfg.toml"
    path.write_text(
        'regime = "convergence"\n'
        'd = 1\n'
        'n_ladder = [8, 16]\n'
        'T = 0.01\n'
        '[delta]\nkind = "slow-log"\nslack = 2.0\n'
        '[kernel]\nkind = "closed-form"\n'
        '[potential]\nkind = "cosine"\namplitude = 0.1\n')
    cfg = ExperimentConfig.from_toml(path)
    assert cfg.n_ladder == [8, 16]
    assert cfg.potential["amplitude"] == 0.1
    assert cfg.to_dict()["regime"] == "convergence"


def test_sample_times():
    cfg = ExperimentConfig(regime="gronwall", T=0.6, n_samples=3)
    assert cfg.times() == pytest.approx([0.2, 0.4, 0.6])
    cfg = ExperimentConfig(regime="gronwall", sample_times=[0.1, 0.5])
    assert cfg.times() == [0.1, 0.5]


# ---------------------------------------------------------------------------
# snapshot roundtrips


def test_particles_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    sys = ParticleSystem(rng.uniform(size=(7, 2)),
                         np.array([1, 1, 1, -1, -1, -1, 1]), t=0.125)
    path = tmp_path / "p.bin"
    write_particles_binary(path, sys)
    back = read_particles_binary(path)
    assert back.t == sys.t
    np.testing.assert_array_equal(back.x, sys.x)
    np.testing.assert_array_equal(back.b, sys.b)


def test_density_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    rp = rng.uniform(size=(6, 6))
    rm = rng.uniform(size=(6, 6))
    state = DensityPair(rp, rm, t=0.5)
    path = tmp_path / "d.bin"
    write_density_binary(path, state)
    back = read_density_binary(path)
    assert back.t == 0.5
    np.testing.assert_array_equal(back.rho_plus, rp)
    np.testing.assert_array_equal(back.rho_minus, rm)


def test_trajectory_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    states = [ParticleSystem(rng.uniform(size=(4, 1)),
                             np.array([1, -1, 1, -1]), t=t)
              for t in (0.0, 0.25, 0.5)]
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, states)
    back = read_trajectory_csv(path)
    assert len(back) == 3
    for a, b in zip(states, back):
        assert b.t == a.t
        np.testing.assert_array_equal(b.x, a.x)
        np.testing.assert_array_equal(b.b, a.b)


# ---------------------------------------------------------------------------
# CLI end-to-end


CONVERGENCE_TOML = (
    'regime = "convergence"\n'
    'd = 1\n'
    'n_ladder = [8, 16]\n'
    'T = 0.01\n'
    'grid_N = 32\n'
    'n_samples = 2\n'
    'seed = 3\n'
    '[delta]\nkind = "slow-log"\nslack = 2.0\n'
    '[kernel]\nkind = "screw"\nK = 8\n'
    '[potential]\nkind = "cosine"\namplitude = 0.1\n')


def test_cli_convergence_experiment(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONVERGENCE_TOML)
    out = tmp_path / "out"
    code = cli.main(["experiment", "convergence",
                     "--config", str(cfg), "--out", str(out)])
    assert code == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [int(r["n"]) for r in rows] == [8, 16]
    for r in rows:
        assert float(r["sup_W"]) >= 0.0
        assert float(r["delta"]) > 0.0
    assert (out / "distances.csv").exists()
    assert (out / "run_n8" / "trajectory.csv").exists()
    meta = json.loads((out / "run.json").read_text())
    assert meta["regime"] == "convergence"
    assert meta["meta"]["config"]["T"] == 0.01


def test_cli_bit_reproducible(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONVERGENCE_TOML)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert cli.main(["experiment", "convergence",
                         "--config", str(cfg), "--out", str(out)]) == 0
        outs.append((out / "summary.csv").read_bytes())
    assert outs[0] == outs[1]


def test_cli_gronwall_experiment(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'regime = "gronwall"\n'
        'd = 1\n'
        'n_ladder = [8]\n'
        'T = 0.01\n'
        'grid_N = 32\n'
        'n_samples = 2\n'
        'deltas = [0.3]\n'
        'perturbations = [1e-2]\n'
        '[delta]\nkind = "fixed"\nvalue = 0.3\n'
        '[kernel]\nkind = "closed-form"\n'
        '[potential]\nkind = "cosine"\namplitude = 0.1\n')
    out = tmp_path / "out"
    code = cli.main(["experiment", "gronwall",
                     "--config", str(cfg), "--out", str(out)])
    assert code == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["ok"] == "True" for r in rows)


def test_cli_nonconvergence_experiment(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'regime = "nonconvergence"\n'
        'd = 1\n'
        'n_ladder = [10]\n'
        'T = 0.005\n'
        'grid_N = 64\n'
        'n_samples = 2\n'
        'dt = 1e-4\n'
        'quantize_m = 256\n'
        '[delta]\nkind = "fast-power"\nexponent = 4.0\n'
        '[kernel]\nkind = "closed-form"\n'
        '[potential]\nkind = "cosine"\namplitude = 0.2\n')
    out = tmp_path / "out"
    code = cli.main(["experiment", "nonconvergence",
                     "--config", str(cfg), "--out", str(out)])
    assert code == 0
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0]["omega_all"] == "True"
    assert rows[0]["drift_ok"] == "True"
    meta = json.loads((out / "run.json").read_text())
    assert meta["proxy"]["delta_ref"] > 0
    assert (out / "manifold.csv").exists()


def test_cli_nonconvergence_assumption_abort(tmp_path):
    # a delta this large violates the kernel assumptions at n = 50
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        'regime = "nonconvergence"\n'
        'd = 1\n'
        'n_ladder = [50]\n'
        'T = 0.005\n'
        'grid_N = 64\n'
        '[delta]\nkind = "fixed"\nvalue = 0.2\n'
        '[kernel]\nkind = "closed-form"\n')
    out = tmp_path / "out"
    code = cli.main(["experiment", "nonconvergence",
                     "--config", str(cfg), "--out", str(out)])
    assert code == 2
    with pytest.raises(AssumptionError):
        run_nonconvergence(ExperimentConfig.from_toml(cfg))


def test_cli_check_kernel_exit_codes(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text(
        'regime = "nonconvergence"\n'
        'n_ladder = [50]\n'
        '[delta]\nkind = "fixed"\nvalue = 0.2\n'
        '[kernel]\nkind = "closed-form"\n')
    assert cli.main(["check-kernel", "--config", str(bad)]) == 2
    good = tmp_path / "good.toml"
    good.write_text(
        'regime = "nonconvergence"\n'
        'n_ladder = [50]\n'
        '[delta]\nkind = "fast-power"\nexponent = 4.0\n'
        '[kernel]\nkind = "closed-form"\n')
    assert cli.main(["check-kernel", "--config", str(good)]) == 0


def test_cli_simulate_subcommands(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text(CONVERGENCE_TOML)
    out_p = tmp_path / "particles"
    assert cli.main(["simulate-particles", "--config", str(cfg),
                     "--out", str(out_p)]) == 0
    final = read_particles_binary(out_p / "final.bin")
    assert final.n == 8
    out_d = tmp_path / "pde"
    assert cli.main(["simulate-pde", "--config", str(cfg),
                     "--out", str(out_d)]) == 0
    dens = read_density_binary(out_d / "final.bin")
    mp, mm = dens.masses()
    assert mp + mm == pytest.approx(1.0, abs=1e-12)


def test_cli_bad_config_exit_1(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('regime = "no-such-regime"\n')
    assert cli.main(["check-kernel", "--config", str(cfg)]) == 1
