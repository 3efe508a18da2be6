"""Command-line interface.

Subcommands: simulate-particles, simulate-pde, experiment
{convergence,nonconvergence,gronwall}, check-kernel.  Exit codes: 0 success,
2 assumption-check abort, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys as _sys

import numpy as np

from . import initial_data, snapshots
from .config import (ExperimentConfig, build_density_pair, build_kernel,
                     build_potential)
from .dynamics import TrajectoryRecorder, from_dipoles, integrate
from .experiments import (AssumptionError, _particles_from_empirical,
                          run_convergence, run_gronwall, run_nonconvergence)
from .kernels import check_assumptions, lambda_delta
from .pde import solve_densities

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSUMPTION = 2


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _write_run_json(out_dir, payload):
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_summary(out_dir, rows):
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k) for k in keys})


def _prepare_out(args):
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load_config(args):
    cfg = ExperimentConfig.from_toml(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    return cfg


def cmd_simulate_particles(args):
    cfg = _load_config(args)
    out = _prepare_out(args)
    n = cfg.n_ladder[0]
    delta = cfg.delta_for(n)
    kernel = build_kernel(cfg.kernel, delta, cfg.d)
    U = build_potential(cfg.potential, cfg.d)
    rho0 = build_density_pair(cfg.rho0, cfg.grid_N, cfg.d)
    rho_n, _ = initial_data.quantize_masses(rho0, n)
    emp0 = initial_data.grid_empirical(rho_n, n)
    sys0 = _particles_from_empirical(emp0)
    rec = TrajectoryRecorder()
    final = integrate(sys0, kernel, U, cfg.T, dt=cfg.dt, mode=cfg.mode,
                      recorder=rec, record_every=max(1, cfg.n_samples))
    snapshots.write_trajectory_csv(os.path.join(out, "trajectory.csv"),
                                   rec.states)
    snapshots.write_particles_binary(os.path.join(out, "final.bin"), final)
    _write_run_json(out, {"command": "simulate-particles", "n": n,
                          "delta": delta,
                          "lambda": lambda_delta(kernel),
                          "lambda_source": "kernels.lambda_delta estimate",
                          "config": cfg.to_dict()})
    return EXIT_OK


def cmd_simulate_pde(args):
    cfg = _load_config(args)
    out = _prepare_out(args)
    n = cfg.n_ladder[0]
    delta = cfg.delta_for(n)
    kernel = build_kernel(cfg.kernel, delta, cfg.d)
    U = build_potential(cfg.potential, cfg.d)
    rho0 = build_density_pair(cfg.rho0, cfg.grid_N, cfg.d)
    mode = "slip-confined" if cfg.mode == "slip-confined" else "isotropic"
    final, samples = solve_densities(rho0, kernel, U, cfg.T, mode=mode,
                                     eps=cfg.eps, sample_times=cfg.times())
    snapshots.write_density_csv(os.path.join(out, "density.csv"), final)
    snapshots.write_density_binary(os.path.join(out, "final.bin"), final)
    _write_run_json(out, {"command": "simulate-pde", "delta": delta,
                          "lambda": lambda_delta(kernel),
                          "lambda_source": "kernels.lambda_delta estimate",
                          "sampled_times": [s.t for s in samples],
                          "masses": final.masses(),
                          "config": cfg.to_dict()})
    return EXIT_OK


def cmd_experiment(args):
    cfg = _load_config(args)
    if cfg.regime != args.regime:
        cfg.regime = args.regime
    out = _prepare_out(args)
    runner = {"convergence": run_convergence,
              "nonconvergence": run_nonconvergence,
              "gronwall": run_gronwall}[args.regime]
    result = runner(cfg)
    _write_summary(out, result["rows"])
    if "distances" in result:
        snapshots.write_distances_csv(os.path.join(out, "distances.csv"),
                                      result["distances"])
    if "manifold" in result:
        snapshots.write_manifold_csv(os.path.join(out, "manifold.csv"),
                                     result["manifold"])
    for n, states in result.get("trajectories", {}).items():
        run_dir = os.path.join(out, "run_n%d" % n)
        os.makedirs(run_dir, exist_ok=True)
        particle_states = [from_dipoles(s) if hasattr(s, "dvec") else s
                           for s in states]
        snapshots.write_trajectory_csv(
            os.path.join(run_dir, "trajectory.csv"), particle_states)
    payload = {"command": "experiment", "regime": args.regime,
               "meta": result["meta"]}
    if "proxy" in result:
        payload["proxy"] = result["proxy"]
    _write_run_json(out, payload)
    return EXIT_OK


def cmd_check_kernel(args):
    cfg = _load_config(args)
    n = cfg.n_ladder[0]
    delta = cfg.delta_for(n)
    kernel = build_kernel(cfg.kernel, delta, cfg.d)
    report = check_assumptions(kernel, gamma=cfg.gamma, n=n)
    print(report)
    return EXIT_OK if report.ok else EXIT_ASSUMPTION


def build_parser():
    parser = argparse.ArgumentParser(
        prog="torusdyn",
        description="Signed-particle and density evolutions on the torus")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="TOML config file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--threads", type=int, default=None,
                       help="worker thread budget (advisory)")

    p = sub.add_parser("simulate-particles", help="integrate one particle run")
    add_common(p)
    p.set_defaults(func=cmd_simulate_particles)

    p = sub.add_parser("simulate-pde", help="solve one density run")
    add_common(p)
    p.set_defaults(func=cmd_simulate_pde)

    p = sub.add_parser("experiment", help="run a configured experiment ladder")
    p.add_argument("regime",
                   choices=["convergence", "nonconvergence", "gronwall"])
    add_common(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("check-kernel", help="verify kernel assumptions")
    add_common(p)
    p.set_defaults(func=cmd_check_kernel)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AssumptionError as exc:
        print("assumption check failed: %s" % exc, file=_sys.stderr)
        return EXIT_ASSUMPTION
    except Exception as exc:                      # pragma: no cover - defensive
        print("error: %s" % exc, file=_sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
