"""The three experiment drivers: convergence, non-convergence, Gronwall.

Each driver takes an ExperimentConfig and returns a result dictionary with a
`rows` table (one entry per ladder rung or parameter combination), auxiliary
per-sample tables, and a `meta` echo of all constants.  Emission to files is
handled by the CLI layer.

The "unregularized limit" in the non-convergence run is represented by a
small-delta_ref PDE proxy; delta_ref is halved until the proxy's
T-displacement changes by less than 5%.  All Lipschitz bounds use the
kernels.lambda_delta estimate (stated in the meta of every result).
"""

from __future__ import annotations

import math

import numpy as np

from . import initial_data
from .config import (build_density_field, build_density_pair, build_kernel,
                     build_potential)
from .dynamics import (ParticleSystem, from_dipoles, integrate,
                       integrate_dipoles, slow_manifold_margins)
from .kernels import check_assumptions, lambda_delta, make_screw_kernel
from .metrics import EmpiricalPair, w2_densities, w2_empirical
from .pde import solve_densities
from .torus import nearest_image, wrap


class AssumptionError(RuntimeError):
    """A structural kernel assumption failed; the run must not proceed."""


# ---------------------------------------------------------------------------
# shared helpers


def _sample_particles(sys, kernel, U, times, mode="isotropic"):
    """States at the given (sorted, positive) times, integrating segmentwise."""
    states = []
    cur = sys.copy()
    prev = sys.t
    for t in times:
        cur = integrate(cur, kernel, U, t - prev, mode=mode)
        prev = t
        states.append(cur.copy())
    return states


def _sample_dipoles(dip, kernel, U, times, dt, **kwargs):
    states = []
    cur = dip.copy()
    prev = dip.t
    for t in times:
        if t > prev:
            cur = integrate_dipoles(cur, kernel, U, t - prev, dt, **kwargs)
        prev = t
        states.append(cur.copy())
    return states


def _particles_from_empirical(emp):
    x = np.concatenate([emp.pos, emp.neg])
    b = np.concatenate([np.ones(len(emp.pos), int),
                        -np.ones(len(emp.neg), int)])
    return ParticleSystem(x, b)


def _signed_distances(a, b, **kwargs):
    """(W_plus, W_minus, W_signed) between two EmpiricalPairs."""
    # drivers prefer the exact assignment solver well past the library
    # default; ladder sizes stay within its comfortable range
    kwargs.setdefault("hungarian_threshold", 4096)
    wp = w2_empirical(a.pos, b.pos, wa=1.0 / a.n, wb=1.0 / b.n, **kwargs)
    wm = w2_empirical(a.neg, b.neg, wa=1.0 / a.n, wb=1.0 / b.n, **kwargs)
    return wp, wm, math.hypot(wp, wm)


def _quantize_pde(state, m, target_plus):
    rho_m, _ = initial_data.quantize_masses(state, m, target_plus=target_plus)
    return initial_data.grid_empirical(rho_m, m)


def _default_m(cfg, n):
    if cfg.quantize_m is not None:
        return int(cfg.quantize_m) * n
    return 8 * n if cfg.d == 1 else 2 * n


# ---------------------------------------------------------------------------
# convergence regime


def run_convergence(cfg):
    """Particle-vs-PDE distance ladder under a slowly decreasing delta_n."""
    d = cfg.d
    times = cfg.times()
    U = build_potential(cfg.potential, d)
    rho0 = build_density_pair(cfg.rho0, cfg.grid_N, d)

    # single fine reference solution: largest rung's delta, doubled grid
    n_top = cfg.n_ladder[-1]
    delta_top = cfg.delta_for(n_top)
    N_ref = 2 * cfg.grid_N
    kernel_ref = build_kernel(cfg.kernel, delta_top, d)
    rho0_ref = build_density_pair(cfg.rho0, N_ref, d)
    mode_pde = "slip-confined" if cfg.mode == "slip-confined" else "isotropic"
    ref_final, _ = solve_densities(rho0_ref, kernel_ref, U, cfg.T,
                                   mode=mode_pde, eps=cfg.eps)

    rows = []
    distance_rows = []
    trajectories = {}
    prev_condition = math.inf
    for n in cfg.n_ladder:
        delta = cfg.delta_for(n)
        kernel = build_kernel(cfg.kernel, delta, d)
        lam = lambda_delta(kernel)
        condition = 3.0 * lam * cfg.T - math.log(n) / d
        flagged = condition >= prev_condition
        prev_condition = condition

        rho_n, _ = initial_data.quantize_masses(rho0, n)
        emp0 = initial_data.grid_empirical(rho_n, n)
        sys0 = _particles_from_empirical(emp0)
        part_states = _sample_particles(sys0, kernel, U, times, mode=cfg.mode)
        _, pde_states = solve_densities(rho_n, kernel, U, cfg.T,
                                        mode=mode_pde, eps=cfg.eps,
                                        sample_times=times)
        m = _default_m(cfg, n)
        sup_w = 0.0
        for t, ps, rs in zip(times, part_states, pde_states):
            emp = EmpiricalPair.from_particles(ps)
            q = _quantize_pde(rs, m, emp.mass_plus())
            wp, wm, ws = _signed_distances(emp, q)
            sup_w = max(sup_w, ws)
            distance_rows.append((t, n, delta, wp, wm, ws))
        emp_T = EmpiricalPair.from_particles(part_states[-1])
        m_ref = _default_m(cfg, n)
        q_ref = _quantize_pde(ref_final, m_ref, emp_T.mass_plus())
        _, _, ref_w = _signed_distances(emp_T, q_ref)
        rows.append({"n": n, "delta": delta, "lambda": lam,
                     "sup_W": sup_w, "ref_W": ref_w,
                     "condition_value": condition, "flagged": flagged})
        trajectories[n] = part_states
    return {
        "rows": rows,
        "distances": distance_rows,
        "trajectories": trajectories,
        "meta": {"regime": "convergence", "times": times,
                 "lambda_source": "kernels.lambda_delta estimate",
                 "config": cfg.to_dict()},
    }


# ---------------------------------------------------------------------------
# non-convergence regime


def _choose_delta_ref(rho0, U, cfg, m, rel_tol=0.05, delta_start=0.2,
                      max_halvings=8):
    """Halve delta_ref until the proxy's T-displacement changes by < 5%."""
    d = cfg.d
    N = cfg.grid_N
    K = N // 2 - 1
    prev_disp = None
    delta = delta_start
    for _ in range(max_halvings):
        kernel = make_screw_kernel(cfg.kernel.get("alpha", 1.0), delta, K, d=d)
        final, _ = solve_densities(rho0, kernel, U, cfg.T, eps=cfg.eps)
        disp, _ = w2_densities(final, rho0, m)
        if prev_disp is not None and abs(disp - prev_disp) <= rel_tol * max(
                prev_disp, 1e-12):
            return delta, disp
        prev_disp = disp
        delta *= 0.5
    return delta, prev_disp


def run_nonconvergence(cfg):
    """Dipole trapping ladder under a fast power-law delta_n, plus PDE proxy."""
    d = cfg.d
    times = cfg.times()
    U = build_potential(cfg.potential, d)
    rho0_field = build_density_field(cfg.rho0, cfg.grid_N, d)
    rho_sup = float(rho0_field.max())
    M = 1.0 / (2.0 * rho_sup)

    rule = cfg.delta.get("kind")
    p = float(cfg.delta.get("exponent", math.nan)) if rule == "fast-power" \
        else math.nan
    p_min = 3.0 if d == 1 else 2.0
    rate_flag = not (rule == "fast-power" and p > p_min)

    dip_mode = "isotropic-1d" if d == 1 else (
        "slip-confined-2d" if cfg.mode == "slip-confined" else "isotropic-2d")

    rows = []
    manifold_rows = []
    distance_rows = []
    trajectories = {}
    for n in cfg.n_ladder:
        delta = cfg.delta_for(n)
        kernel = build_kernel(cfg.kernel, delta, d)
        report = check_assumptions(kernel, gamma=cfg.gamma, n=n)
        if not report.ok:
            raise AssumptionError("kernel assumption check failed at n=%d:\n%s"
                                  % (n, report))
        offset = cfg.offset
        if offset is not None:
            offset = delta * np.asarray(offset, dtype=float)
        core_field = None
        if dip_mode == "slip-confined-2d":
            from .kernels import EdgeCoreField
            core_field = EdgeCoreField()
        dip0 = initial_data.dipole_data(rho0_field, n, mode=dip_mode,
                                        offset=offset)
        dt = cfg.dt if cfg.dt is not None else cfg.T / 500.0
        states = _sample_dipoles(dip0, kernel, U, times, dt,
                                 core_field=core_field)
        emp0 = EmpiricalPair.from_particles(from_dipoles(dip0))
        omega_all = True
        max_drift = 0.0
        max_width_ratio = 0.0
        w_final = 0.0
        for t, st in zip(times, states):
            mg = slow_manifold_margins(st, M, cfg.gamma, delta)
            omega_all = omega_all and mg.ok
            drift = float(np.max(np.abs(nearest_image(st.z - dip0.z))))
            width = float(np.max(np.abs(st.dvec))) / delta
            max_drift = max(max_drift, drift)
            max_width_ratio = max(max_width_ratio, width)
            emp = EmpiricalPair.from_particles(from_dipoles(st))
            wp, wm, ws = _signed_distances(emp, emp0)
            w_final = ws
            manifold_rows.append((t, n, mg.spacing_margin, mg.width_margin,
                                  mg.ok))
            distance_rows.append((t, n, delta, wp, wm, ws))
        rows.append({"n": n, "delta": delta, "omega_all": omega_all,
                     "max_z_drift": max_drift,
                     "max_width_ratio": max_width_ratio,
                     "W_final": w_final, "rate_flag": rate_flag})
        trajectories[n] = states

    # drift constant fitted at the first rung
    n0 = cfg.n_ladder[0]
    scale0 = n0 ** 2 * cfg.delta_for(n0)
    C_fit = rows[0]["max_z_drift"] / scale0 if scale0 > 0 else math.inf
    for row in rows:
        scale = row["n"] ** 2 * row["delta"]
        row["drift_bound"] = C_fit * scale
        row["drift_ok"] = row["max_z_drift"] <= C_fit * scale * (1 + 1e-9)

    # unregularized-limit proxy: rho+ = rho- = rho0/2 with a tiny fixed delta
    m = cfg.quantize_m if cfg.quantize_m is not None else (
        512 if d == 1 else 1024)
    from .pde import DensityPair
    rho_pair = DensityPair(0.5 * rho0_field, 0.5 * rho0_field)
    delta_ref, proxy_disp = _choose_delta_ref(rho_pair, U, cfg, m)
    gap = proxy_disp / max(max(r["W_final"] for r in rows), 1e-300)
    return {
        "rows": rows,
        "manifold": manifold_rows,
        "distances": distance_rows,
        "trajectories": trajectories,
        "proxy": {"delta_ref": delta_ref, "displacement": proxy_disp,
                  "gap_ratio": gap},
        "meta": {"regime": "nonconvergence", "times": times, "M": M,
                 "C_fit": C_fit,
                 "lambda_source": "kernels.lambda_delta estimate",
                 "config": cfg.to_dict()},
    }


# ---------------------------------------------------------------------------
# Gronwall diagnostic


def run_gronwall(cfg):
    """Two-trajectory stability: log W(t)/W(0) <= (3 lambda + ||D2U||) t.

    For each (delta, perturbation) pair a base system built from the initial
    density is compared with a perturbed copy along the flow.
    """
    d = cfg.d
    times = cfg.times()
    U = build_potential(cfg.potential, d)
    rho0 = build_density_pair(cfg.rho0, cfg.grid_N, d)
    n = cfg.n_ladder[-1]
    rho_n, _ = initial_data.quantize_masses(rho0, n)
    emp0 = initial_data.grid_empirical(rho_n, n)
    base0 = _particles_from_empirical(emp0)
    rng = np.random.default_rng(cfg.seed)

    rows = []
    for delta in cfg.deltas:
        kernel = build_kernel(cfg.kernel, delta, d)
        lam = lambda_delta(kernel)
        rate = 3.0 * lam + U.hess_sup
        for eta in cfg.perturbations:
            pert0 = base0.copy()
            pert0.x = wrap(pert0.x + eta * rng.uniform(-1.0, 1.0,
                                                       size=pert0.x.shape))
            base_states = _sample_particles(base0, kernel, U, times,
                                            mode=cfg.mode)
            pert_states = _sample_particles(pert0, kernel, U, times,
                                            mode=cfg.mode)
            _, _, w0 = _signed_distances(EmpiricalPair.from_particles(base0),
                                         EmpiricalPair.from_particles(pert0))
            for t, bs, ps in zip(times, base_states, pert_states):
                _, _, wt = _signed_distances(
                    EmpiricalPair.from_particles(bs),
                    EmpiricalPair.from_particles(ps))
                if w0 == 0.0:
                    log_ratio = -math.inf if wt == 0.0 else math.inf
                else:
                    log_ratio = math.log(max(wt, 1e-300) / w0)
                log_bound = rate * t
                ok = log_ratio <= log_bound + 1e-12
                rows.append({"delta": delta, "eta": eta, "t": t,
                             "W0": w0, "W": wt, "log_ratio": log_ratio,
                             "log_bound": log_bound, "ok": ok})
    return {
        "rows": rows,
        "meta": {"regime": "gronwall", "times": times,
                 "lambda_source": "kernels.lambda_delta estimate",
                 "config": cfg.to_dict()},
    }
