"""Finite-volume solver for the regularized signed-density transport system.

The densities evolve by

    d/dt rho+ =  div( rho+ (grad V_delta * kappa + grad U) ) + eps Lap rho+,
    d/dt rho- = -div( rho- (grad V_delta * kappa + grad U) ) + eps Lap rho-,

with kappa = rho+ - rho-.  In slip-confined mode only the e1 component of the
drift acts.  The scheme is first-order conservative upwind finite volume on a
uniform periodic grid (cell centers at j/N), with spectral evaluation of the
convolution velocities, face velocities averaged from adjacent centers,
explicit centered diffusion, and forward Euler in time under the CFL
condition dt * (max|v|/h + 2 d eps/h^2) <= 0.9.  Per-sign mass is conserved
to rounding (telescoping fluxes) and nonnegativity is preserved under CFL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class DensityPair:
    """Gridded nonnegative densities (rho+, rho-) with total mass one."""

    rho_plus: np.ndarray
    rho_minus: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.rho_plus = np.asarray(self.rho_plus, dtype=float)
        self.rho_minus = np.asarray(self.rho_minus, dtype=float)
        if self.rho_plus.shape != self.rho_minus.shape:
            raise ValueError("density fields must have equal shapes")
        if self.rho_plus.ndim not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if self.rho_plus.ndim == 2 and (self.rho_plus.shape[0]
                                        != self.rho_plus.shape[1]):
            raise ValueError("2D grids must be square")
        for rho in (self.rho_plus, self.rho_minus):
            lo = rho.min()
            if lo < -1e-13:
                raise ValueError("densities must be nonnegative")
            if lo < 0:            # rounding-level undershoot from arithmetic
                rho[rho < 0] = 0.0

    @property
    def d(self):
        return self.rho_plus.ndim

    @property
    def N(self):
        return self.rho_plus.shape[0]

    @property
    def h(self):
        return 1.0 / self.N

    def masses(self):
        cell = self.h ** self.d
        return (float(self.rho_plus.sum() * cell),
                float(self.rho_minus.sum() * cell))

    def check_mass(self, tol=1e-12):
        mp, mm = self.masses()
        if abs(mp + mm - 1.0) > tol:
            raise ValueError("total mass %.3e deviates from 1" % (mp + mm))

    def copy(self):
        return DensityPair(self.rho_plus.copy(), self.rho_minus.copy(), self.t)

    def kappa(self):
        return self.rho_plus - self.rho_minus


def grid_points(N, d):
    """Cell-center coordinates j/N as an (N,)*d + (d,) array."""
    ax = np.arange(N) / N
    if d == 1:
        return ax[:, None]
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([X, Y], axis=-1)


def _freqs(N, d):
    k = np.fft.fftfreq(N) * N
    if d == 1:
        return (k,)
    return np.meshgrid(k, k, indexing="ij")


def convolve_field(kernel, field, derivative="none"):
    """Spectral convolution V_delta * field (exact for band-limited fields).

    derivative: "none" returns the scalar convolution; "grad" returns an
    array of shape (d,) + grid with all gradient components; "component-1"
    returns only d(V*field)/dx1.
    """
    field = np.asarray(field, dtype=float)
    d = field.ndim
    N = field.shape[0]
    if N < 2 * kernel.K + 2:
        raise ValueError("grid too coarse for kernel cutoff: need N >= 2K+2")
    fhat = np.fft.fftn(field)
    mult = kernel.spectral_multiplier(N)
    if derivative == "none":
        return np.real(np.fft.ifftn(mult * fhat))
    freqs = _freqs(N, d)
    if derivative == "component-1":
        return np.real(np.fft.ifftn(mult * fhat * (2j * math.pi * freqs[0])))
    if derivative == "grad":
        out = np.empty((d,) + field.shape)
        for j in range(d):
            out[j] = np.real(np.fft.ifftn(mult * fhat
                                          * (2j * math.pi * freqs[j])))
        return out
    raise ValueError("unknown derivative option %r" % (derivative,))


def drift_field(state, kernel, U, mode="isotropic"):
    """grad V_delta * kappa + grad U at the cell centers, shape (d,) + grid.

    In slip-confined mode the e2 component is zeroed.
    """
    d = state.d
    conv = convolve_field(kernel, state.kappa(), derivative="grad")
    pts = grid_points(state.N, d)
    gU = U.grad(pts)                                   # grid + (d,)
    gU = np.moveaxis(gU, -1, 0)
    v = conv + gU
    if mode == "slip-confined":
        if d != 2:
            raise ValueError("slip-confined mode requires d = 2")
        v[1] = 0.0
    elif mode != "isotropic":
        raise ValueError("unknown mode %r" % (mode,))
    return v


def _upwind_divergence(rho, vel, h):
    """div(rho v) by first-order upwind fluxes, face velocities averaged."""
    div = np.zeros_like(rho)
    d = rho.ndim
    for axis in range(d):
        u = vel[axis]
        # velocity at the face between cell j and j+1 (along this axis)
        uf = 0.5 * (u + np.roll(u, -1, axis=axis))
        rho_right = np.roll(rho, -1, axis=axis)
        flux = np.where(uf > 0, rho * uf, rho_right * uf)   # face j+1/2
        div += (flux - np.roll(flux, 1, axis=axis)) / h
    return div


def _laplacian(rho, h):
    lap = np.zeros_like(rho)
    for axis in range(rho.ndim):
        lap += (np.roll(rho, -1, axis=axis) - 2.0 * rho
                + np.roll(rho, 1, axis=axis)) / h ** 2
    return lap


def cfl_limit(state, vel, eps):
    """Largest dt allowed: 0.9 / (max|v|/h + 2 d eps / h^2)."""
    vmax = float(np.max(np.abs(vel)))
    denom = vmax / state.h + 2.0 * state.d * eps / state.h ** 2
    return math.inf if denom == 0 else 0.9 / denom


def step_densities(state, kernel, U, mode="isotropic", eps=0.0, dt=None):
    """One forward-Euler step; raises on CFL violation.

    rho+ moves with velocity -(grad V*kappa + grad U), rho- with the
    opposite.  Returns a new DensityPair.
    """
    v = drift_field(state, kernel, U, mode=mode)
    limit = cfl_limit(state, v, eps)
    if dt is None:
        dt = limit
    elif dt > limit * (1.0 + 1e-12):
        raise ValueError("dt=%g violates the CFL limit %g" % (dt, limit))
    h = state.h
    new_p = (state.rho_plus - dt * _upwind_divergence(state.rho_plus, -v, h)
             + eps * dt * _laplacian(state.rho_plus, h))
    new_m = (state.rho_minus - dt * _upwind_divergence(state.rho_minus, v, h)
             + eps * dt * _laplacian(state.rho_minus, h))
    return DensityPair(new_p, new_m, state.t + dt)


def solve_densities(state, kernel, U, T, mode="isotropic", eps=0.0,
                    sample_times=None, dt_max=None):
    """March to time T with CFL-sized steps; returns (final, samples).

    samples is the list of states at the requested sample_times (each sample
    is the state at the first step boundary >= the requested time; steps are
    shortened to land exactly on sample times and on T).
    """
    state = state.copy()
    samples = []
    targets = sorted(sample_times) if sample_times else []
    ti = 0
    while ti < len(targets) and targets[ti] <= state.t + 1e-15:
        samples.append(state.copy())
        ti += 1
    while state.t < T - 1e-14:
        v = drift_field(state, kernel, U, mode=mode)
        # the extra 1/d keeps the update a convex combination in 2D as well,
        # so nonnegativity holds strictly, not just typically
        dt = cfl_limit(state, v, eps) / state.d
        if dt_max is not None:
            dt = min(dt, dt_max)
        dt = min(dt, T - state.t)
        if ti < len(targets):
            dt = min(dt, targets[ti] - state.t)
        state = step_densities(state, kernel, U, mode=mode, eps=eps, dt=dt)
        while ti < len(targets) and targets[ti] <= state.t + 1e-12:
            samples.append(state.copy())
            ti += 1
    return state, samples


# ---------------------------------------------------------------------------
# diagnostics


def entropy(state):
    """(Ent(rho+), Ent(rho-)) with the convention 0 log 0 = 0."""
    cell = state.h ** state.d

    def ent(rho):
        pos = rho > 0
        return float(np.sum(rho[pos] * np.log(rho[pos])) * cell)

    return ent(state.rho_plus), ent(state.rho_minus)


def hs_norm(field, s):
    """Squared-root Sobolev norm: sqrt( sum_k (1+|k|^2)^s |ghat_k|^2 ).

    ghat_k are the Fourier coefficients (DFT / N^d); s may be fractional or
    negative.  Returns the norm (not its square).
    """
    field = np.asarray(field, dtype=float)
    N = field.shape[0]
    ghat = np.fft.fftn(field) / field.size
    freqs = _freqs(N, field.ndim)
    k2 = sum(f ** 2 for f in freqs)
    return float(np.sqrt(np.sum((1.0 + k2) ** s * np.abs(ghat) ** 2)))


def dissipation_norm(state, kernel):
    """||grad V_delta * kappa||_{H^{d/2}}^2 summed over the components."""
    conv = convolve_field(kernel, state.kappa(), derivative="grad")
    return sum(hs_norm(conv[j], state.d / 2.0) ** 2 for j in range(state.d))


@dataclass
class EntropyBudgetRow:
    t: float
    lhs: float
    rhs: float
    margin: float


def entropy_budget(trajectory, kernel, U):
    """Check Ent(rho(t)) + c Int_0^t ||grad V*kappa||^2_{H^{d/2}} <= C + Ent(rho_0).

    trajectory: DensityPair states at (approximately) uniform times.  The
    constant c is 1/sup_k (1+|k|^2)^{d/2} vhat_k; C = T * ||Lap U||_inf with
    T the final sample time.  Ent(rho) means Ent(rho+) + Ent(rho-).  The
    time integral uses the trapezoid rule on the samples.  Returns one row
    per sample with margin = rhs - lhs (nonnegative when the budget holds).
    """
    states = list(trajectory)
    if not states:
        raise ValueError("empty trajectory")
    c = 1.0 / kernel.v2_sup
    T = states[-1].t - states[0].t
    ent0 = sum(entropy(states[0]))
    C = T * U.laplacian_sup
    rows = []
    integral = 0.0
    prev_t = states[0].t
    prev_d = dissipation_norm(states[0], kernel)
    for st in states:
        diss = dissipation_norm(st, kernel) if st is not states[0] else prev_d
        integral += 0.5 * (st.t - prev_t) * (prev_d + diss)
        prev_t, prev_d = st.t, diss
        lhs = sum(entropy(st)) + c * integral
        rhs = C + ent0
        rows.append(EntropyBudgetRow(st.t, lhs, rhs, rhs - lhs))
    return rows


def coercivity_check(kernel, field, anisotropic=False):
    """Evaluate both sides of the spectral coercivity inequality.

    lhs = -Int (Lap V*f) f = sum_k 4 pi^2 w_k vhat_k |fhat_k|^2 with
    w_k = |k|^2 (or k1^2 in the anisotropic variant, where Lap and grad are
    replaced by d1^2 and d1); rhs = ||grad V*f||^2_{H^{d/2}} (resp. the d1
    component).  Returns (lhs, rhs, ratio, c) with c the theoretical
    constant 1/sup_k (1+|k|^2)^{d/2} vhat_k; the inequality lhs >= c * rhs
    is exact in Fourier space.
    """
    field = np.asarray(field, dtype=float)
    d = field.ndim
    N = field.shape[0]
    if N < 2 * kernel.K + 2:
        raise ValueError("grid too coarse for kernel cutoff")
    fhat = np.fft.fftn(field) / field.size
    mult = np.real(kernel.spectral_multiplier(N))
    freqs = _freqs(N, d)
    k2 = sum(f ** 2 for f in freqs)
    w = freqs[0] ** 2 if anisotropic else k2
    four_pi2 = 4.0 * math.pi ** 2
    p2 = np.abs(fhat) ** 2
    lhs = float(np.sum(four_pi2 * w * mult * p2))
    rhs = float(np.sum((1.0 + k2) ** (d / 2.0) * four_pi2 * w * mult ** 2 * p2))
    c = 1.0 / kernel.v2_sup
    ratio = math.inf if rhs == 0 else lhs / rhs
    return lhs, rhs, ratio, c
