"""Signed-particle gradient flow on the torus and dipole-coordinate dynamics.

The particle velocity is

    dx_i/dt = -(1/n) sum_j b_i b_j grad V_delta(x_i - x_j) - b_i grad U(x_i),

which equals -n grad E_n for the energy

    E_n = 1/(2 n^2) sum_ij b_i b_j V_delta(x_i - x_j) + (1/n) sum_i b_i U(x_i)

(the i = j diagonal is kept; it is a constant V_delta(0)/(2n)).  Slip-confined
motion retains only the e1 component of every velocity.

Dipole coordinates (z, d) with x+ = z + d, x- = z - d give the equivalent
system

    dz_i/dt = -1/(2n) sum_{l,p,q} pq V'(z_i - z_l + p d_i - q d_l)
              - 1/2 sum_p p U'(z_i + p d_i),
    dd_i/dt = -1/(2n) sum_{l,p,q} q  V'(z_i - z_l + p d_i - q d_l)
              - 1/2 sum_p   U'(z_i + p d_i),

the exact chain-rule image of the particle velocity (note the sign of the
U-forcing: at d = 0 the width equation reads dd/dt = -U'(z), which is what the
substitution x+/- = z -/+ d into the particle system produces).

For fast regularizations the intra-dipole well term (1/n) V'(2 d_i) is orders
of magnitude stiffer than every other force, so `integrate_dipoles` treats it
by backward Euler (a safeguarded bracketed scalar solve per dipole) while the
slow forces are advanced explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kernels import ClosedFormKernel1D, SpectralKernel, lambda_delta
from .torus import nearest_image, pairwise_displacements, wrap

TWO_PI = 2.0 * math.pi


@dataclass
class ParticleSystem:
    """n signed particles on T^d: positions x (n, d) in [0,1), signs b (n,)."""

    x: np.ndarray
    b: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.b = np.asarray(self.b)
        if self.x.ndim != 2 or self.x.shape[1] not in (1, 2):
            raise ValueError("positions must have shape (n, d), d in {1,2}")
        if self.b.shape != (self.x.shape[0],):
            raise ValueError("signs must have shape (n,)")
        if not np.all(np.isin(self.b, (-1, 1))):
            raise ValueError("signs must be +1 or -1")
        if self.x.shape[0] < 1:
            raise ValueError("need at least one particle")
        self.b = self.b.astype(int)
        self.x = wrap(self.x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def copy(self):
        return ParticleSystem(self.x.copy(), self.b.copy(), self.t)


# ---------------------------------------------------------------------------
# forces and energy


def _signed_gradient_sums(kernel, x, b):
    """G_i = sum_j b_j grad V(x_i - x_j), shape (n, d).

    For spectral kernels this uses the exact mode factorization
    sum_j b_j sin(2 pi k.(x_i - x_j)) = sin(th_i) C_k - cos(th_i) S_k,
    which is the same finite double sum evaluated in O(n * modes).
    """
    if isinstance(kernel, SpectralKernel):
        theta = TWO_PI * (x @ kernel.modes.T)            # (n, M)
        ct, st = np.cos(theta), np.sin(theta)
        C = b @ ct                                       # (M,)
        S = b @ st
        weights = kernel.vals[:, None] * kernel.modes    # (M, d)
        return -TWO_PI * ((st * C - ct * S) @ weights)
    # direct O(n^2) pairwise path (closed-form and generic kernels)
    disp = pairwise_displacements(x)                     # (n, n, d)
    g = kernel.grad(disp)                                # (n, n, d)
    return np.einsum("j,ijk->ik", b.astype(float), g)


def pairwise_gradient_sums_direct(kernel, x, b):
    """Literal O(n^2) evaluation of sum_j b_j grad V(x_i - x_j) (test oracle)."""
    disp = pairwise_displacements(x)
    g = kernel.grad(disp)
    return np.einsum("j,ijk->ik", b.astype(float), g)


def velocity(sys, kernel, U, mode="isotropic"):
    """Particle velocities; in slip-confined mode the e2 components are 0."""
    G = _signed_gradient_sums(kernel, sys.x, sys.b)
    v = -(sys.b[:, None] / sys.n) * G - sys.b[:, None] * U.grad(sys.x)
    if mode == "slip-confined":
        if sys.d != 2:
            raise ValueError("slip-confined mode requires d = 2")
        v[:, 1] = 0.0
    elif mode != "isotropic":
        raise ValueError("unknown mode %r" % (mode,))
    return v


def energy(sys, kernel, U):
    """E_n including the diagonal of the interaction double sum."""
    x, b, n = sys.x, sys.b.astype(float), sys.n
    if isinstance(kernel, SpectralKernel):
        theta = TWO_PI * (x @ kernel.modes.T)
        C = b @ np.cos(theta)
        S = b @ np.sin(theta)
        inter = float(kernel.vals @ (C * C + S * S))
    else:
        disp = pairwise_displacements(x)
        vals = kernel.potential(disp)
        inter = float(b @ vals @ b)
    return inter / (2.0 * n ** 2) + float(b @ U.value(x)) / n


def stability_cap(kernel, U):
    """Largest admissible RK4 step: 0.1 / (lambda_delta + ||D^2 U||_inf)."""
    return 0.1 / (lambda_delta(kernel) + U.hess_sup)


def integrate(sys, kernel, U, T, dt=None, mode="isotropic", recorder=None,
              record_every=1):
    """Classic RK4 integration with re-wrapping after every stage.

    dt defaults to the stability cap; an explicit dt above the cap is
    rejected.  The actual step is shrunk so an integer number of steps lands
    exactly on T.  `recorder(state)` is called at t = 0, after every
    `record_every`-th step, and at the final time.
    """
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    cap = stability_cap(kernel, U)
    if dt is None:
        dt = cap
    elif dt <= 0:
        raise ValueError("dt must be positive")
    elif dt > cap * (1.0 + 1e-12):
        raise ValueError("dt=%g exceeds the stability cap %g" % (dt, cap))
    state = sys.copy()
    if recorder is not None:
        recorder(state.copy())
    if T == 0:
        return state
    steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / steps
    b = state.b

    def rhs(x, t):
        return velocity(ParticleSystem(x, b, t), kernel, U, mode=mode)

    for step in range(steps):
        x, t = state.x, state.t
        k1 = rhs(x, t)
        k2 = rhs(wrap(x + 0.5 * dt * k1), t + 0.5 * dt)
        k3 = rhs(wrap(x + 0.5 * dt * k2), t + 0.5 * dt)
        k4 = rhs(wrap(x + dt * k3), t + dt)
        state.x = wrap(x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        state.t = sys.t + (step + 1) * dt
        if recorder is not None and ((step + 1) % record_every == 0
                                     or step == steps - 1):
            recorder(state.copy())
    return state


class TrajectoryRecorder:
    """Collects copies of states; usable with integrate/integrate_dipoles."""

    def __init__(self):
        self.states = []

    def __call__(self, state):
        self.states.append(state)

    @property
    def times(self):
        return [s.t for s in self.states]


# ---------------------------------------------------------------------------
# dipole coordinates


DIPOLE_MODES = ("isotropic-1d", "isotropic-2d", "slip-confined-2d")


@dataclass
class DipoleSystem:
    """m dipoles: midpoints z (m, d) in [0,1), half-widths dvec (m, d)."""

    z: np.ndarray
    dvec: np.ndarray
    mode: str = "isotropic-1d"
    t: float = 0.0

    def __post_init__(self):
        self.z = np.atleast_2d(np.asarray(self.z, dtype=float))
        self.dvec = np.atleast_2d(np.asarray(self.dvec, dtype=float))
        if self.z.shape != self.dvec.shape:
            raise ValueError("z and dvec must have the same shape")
        if self.mode not in DIPOLE_MODES:
            raise ValueError("unknown dipole mode %r" % (self.mode,))
        expected_d = 1 if self.mode == "isotropic-1d" else 2
        if self.z.shape[1] != expected_d:
            raise ValueError("mode %s requires d=%d" % (self.mode, expected_d))
        self.z = wrap(self.z)

    @property
    def m(self):
        return self.z.shape[0]

    @property
    def n(self):
        return 2 * self.z.shape[0]

    @property
    def d(self):
        return self.z.shape[1]

    def copy(self):
        return DipoleSystem(self.z.copy(), self.dvec.copy(), self.mode, self.t)


def to_dipoles(sys, mode=None):
    """Pair the k-th positive with the k-th negative particle (by order)."""
    plus = sys.x[sys.b == 1]
    minus = sys.x[sys.b == -1]
    if plus.shape[0] != minus.shape[0]:
        raise ValueError("equal counts of + and - particles required")
    dvec = 0.5 * nearest_image(plus - minus)
    z = wrap(minus + dvec)
    if mode is None:
        mode = "isotropic-1d" if sys.d == 1 else "isotropic-2d"
    return DipoleSystem(z, dvec, mode, sys.t)


def from_dipoles(dip):
    """Particles (+,-) interleaved per dipole: x+ = z + d, x- = z - d."""
    m = dip.m
    x = np.empty((2 * m, dip.d))
    x[0::2] = wrap(dip.z + dip.dvec)
    x[1::2] = wrap(dip.z - dip.dvec)
    b = np.empty(2 * m, dtype=int)
    b[0::2] = 1
    b[1::2] = -1
    return ParticleSystem(x, b, dip.t)


def _pair_sums(kernel, z, dvec):
    """Interaction part of the dipole right-hand side.

    Returns (gz, gd): gz_i = -1/(2n) sum_{l,p,q} pq V'(...),
    gd_i = -1/(2n) sum_{l,p,q} q V'(...).
    """
    m, dim = z.shape
    n = 2 * m
    base = nearest_image(z[:, None, :] - z[None, :, :])      # (m, m, dim)
    # evaluate all four (p, q) arguments of one pair on the same smooth
    # branch of the kernel (fixed by the base displacement); re-wrapping the
    # perturbed arguments would mix branches across the half-period kink of
    # the nearest-image closed form and leave an O(1) spurious force on
    # exactly antipodal pairs
    grad = getattr(kernel, "grad_fixed_branch", kernel.grad)
    gz = np.zeros((m, dim))
    gd = np.zeros((m, dim))
    for p in (1.0, -1.0):
        for q in (1.0, -1.0):
            arg = base + p * dvec[:, None, :] - q * dvec[None, :, :]
            g = grad(arg)                                    # (m, m, dim)
            s = g.sum(axis=1)
            gz -= (p * q / (2.0 * n)) * s
            gd -= (q / (2.0 * n)) * s
    return gz, gd


def _forcing(U, z, dvec):
    """External-forcing part: (-1/2 sum_p p U'(z+pd), -1/2 sum_p U'(z+pd))."""
    up = U.grad(wrap(z + dvec))
    um = U.grad(wrap(z - dvec))
    return -0.5 * (up - um), -0.5 * (up + um)


def dipole_rhs(dip, kernel, U):
    """(dz/dt, dd/dt); the exact chain-rule image of the particle velocity."""
    gz, gd = _pair_sums(kernel, dip.z, dip.dvec)
    fz, fd = _forcing(U, dip.z, dip.dvec)
    dz = gz + fz
    dd = gd + fd
    if dip.mode == "slip-confined-2d":
        dz[:, 1] = 0.0
        dd[:, 1] = 0.0
    return dz, dd


@dataclass
class ManifoldMargins:
    """Slow-manifold membership with the three margin values.

    spacing_margin = min_{i != j} |z_i - z_j| - (M/n or M/sqrt(n));
    width_margin = width bound - max_i |d_i|;
    e2_min = min_i |d_i . e2| (slip-confined only, must be strictly positive).
    """

    ok: bool
    spacing_margin: float
    width_margin: float
    e2_min: float = math.nan


def slow_manifold_margins(dip, M, gamma, delta, mode=None):
    if mode is None:
        mode = dip.mode
    disp = pairwise_displacements(dip.z)
    dist = np.sqrt(np.sum(disp * disp, axis=-1))
    dist[np.diag_indices(dip.m)] = np.inf
    min_spacing = float(dist.min()) if dip.m > 1 else math.inf
    required = M / dip.n if dip.d == 1 else M / math.sqrt(dip.n)
    spacing_margin = min_spacing - required
    widths = np.sqrt(np.sum(dip.dvec ** 2, axis=-1))
    max_width = float(widths.max())
    if mode == "slip-confined-2d":
        width_margin = delta - max_width            # strict: must be > 0
        e2_min = float(np.min(np.abs(dip.dvec[:, 1])))
        ok = spacing_margin >= 0.0 and width_margin > 0.0 and e2_min > 0.0
        return ManifoldMargins(ok, spacing_margin, width_margin, e2_min)
    width_margin = gamma * delta - max_width        # inclusive: >= 0
    ok = spacing_margin >= 0.0 and width_margin >= 0.0
    return ManifoldMargins(ok, spacing_margin, width_margin)


def slow_manifold_contains(dip, M, gamma, delta, mode=None):
    return slow_manifold_margins(dip, M, gamma, delta, mode).ok


def slow_force_sup(dip, kernel, U):
    """sup_i of the midpoint speed |dz_i/dt| (infinity norm over entries)."""
    dz, _ = dipole_rhs(dip, kernel, U)
    return float(np.max(np.abs(dz))) if dz.size else 0.0


# ---------------------------------------------------------------------------
# stiff dipole integrator


def _well_force(kernel, core_field, y, d_other, n, axis):
    """(1/n) * (grad V(2 d))_axis as a function of the active component y.

    d_other is the frozen complementary component (slip-confined) or absent
    (1D).  core_field, when given, replaces the kernel for this near-field
    term.
    """
    field_ = core_field if core_field is not None else kernel
    if d_other is None:
        g = field_.grad((2.0 * y)[:, None])
        return g[..., 0] / n
    arg = np.stack([2.0 * y, 2.0 * d_other], axis=-1)
    return field_.grad(arg)[..., axis] / n


def _solve_well_step(y0, forcing, dt, wellfun, bracket, iters=120):
    """Backward-Euler update y = y0 + dt*(well(y) + F) by vectorized bisection.

    The residual g can have several roots (the well is restoring only near
    its bottom), so the bracket is grown symmetrically around the previous
    value y0 until a sign change appears; this selects the root that is
    continuous from y0 as dt -> 0, i.e. the trapped branch.  `bracket` caps
    the half-width of the search; exceeding it means the forcing pushed the
    width out of the well.
    """

    def g(y):
        return y - y0 - dt * (wellfun(y) + forcing)

    w = np.full_like(y0, 1e-3 * bracket)
    lo, hi = y0 - w, y0 + w
    glo, ghi = g(lo), g(hi)
    for _ in range(64):
        open_ = glo * ghi > 0
        if not np.any(open_):
            break
        w = np.where(open_, 2.0 * w, w)
        if np.any(w > 2.0 * bracket):
            raise RuntimeError("well solve: forcing exceeds the dipole "
                               "barrier")
        lo = np.where(open_, y0 - w, lo)
        hi = np.where(open_, y0 + w, hi)
        glo = np.where(open_, g(lo), glo)
        ghi = np.where(open_, g(hi), ghi)
    else:
        raise RuntimeError("well solve: forcing exceeds the dipole barrier")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        take_lo = glo * gm <= 0
        hi = np.where(take_lo, mid, hi)
        ghi = np.where(take_lo, gm, ghi)
        lo = np.where(take_lo, lo, mid)
        glo = np.where(take_lo, glo, gm)
    return 0.5 * (lo + hi)


def integrate_dipoles(dip, kernel, U, T, dt, recorder=None, record_every=1,
                      stiff=True, core_field=None, bracket=None):
    """Advance the dipole system to time T with step dt.

    stiff=True (default) splits the right-hand side: midpoints z and the
    inter-dipole/forcing part of d advance with Heun's method, while the
    intra-dipole well term on the active width component (axis 0) is advanced
    by backward Euler.  This removes the 1/(n delta^2) stiffness of the well
    without resolving it explicitly.  Supported stiff modes: isotropic-1d and
    slip-confined-2d; other modes fall back to explicit RK4-style stepping of
    the full right-hand side (stiff=False).

    core_field optionally replaces the kernel in the intra-dipole well term
    (near-field closed form for the slip-confined counterexample).
    """
    state = dip.copy()
    if recorder is not None:
        recorder(state.copy())
    if T <= 0:
        return state
    steps = max(1, int(math.ceil(T / dt - 1e-12)))
    dt = T / steps
    n = state.n
    if stiff and state.mode not in ("isotropic-1d", "slip-confined-2d"):
        stiff = False

    if bracket is None:
        if core_field is not None:
            bracket = 10.0 * float(np.max(np.abs(state.dvec[:, 1]))) or 0.25
        elif isinstance(kernel, ClosedFormKernel1D):
            bracket = 0.5 * kernel.delta
        else:
            bracket = 0.25

    def slow_rhs(st):
        """Full rhs with the active-axis intra well term removed."""
        dz, dd = dipole_rhs(st, kernel, U)
        y = st.dvec[:, 0]
        d_other = st.dvec[:, 1] if st.d == 2 else None
        well_now = _well_force(kernel, None, y, d_other, n, 0)
        dd = dd.copy()
        dd[:, 0] -= well_now          # leave only the slow part on axis 0
        return dz, dd

    for step in range(steps):
        if not stiff:
            dz1, dd1 = dipole_rhs(state, kernel, U)
            mid = DipoleSystem(wrap(state.z + 0.5 * dt * dz1),
                               state.dvec + 0.5 * dt * dd1, state.mode, state.t)
            dz2, dd2 = dipole_rhs(mid, kernel, U)
            state.z = wrap(state.z + dt * dz2)
            state.dvec = state.dvec + dt * dd2
        else:
            dz, dd_slow = slow_rhs(state)
            y0 = state.dvec[:, 0]
            d_other = state.dvec[:, 1] if state.d == 2 else None

            def wellfun(y, d_other=d_other):
                return _well_force(kernel, core_field, y, d_other, n, 0)

            y1 = _solve_well_step(y0, dd_slow[:, 0], dt, wellfun, bracket)
            new_d = state.dvec + dt * dd_slow
            new_d[:, 0] = y1
            if state.mode == "slip-confined-2d":
                new_d[:, 1] = state.dvec[:, 1]       # frozen, bitwise
            # Heun correction for the slow midpoint motion
            pred = DipoleSystem(wrap(state.z + dt * dz), new_d, state.mode,
                                state.t + dt)
            dz2, _ = slow_rhs(pred)
            state.z = wrap(state.z + 0.5 * dt * (dz + dz2))
            state.dvec = new_d
        state.t = dip.t + (step + 1) * dt
        if recorder is not None and ((step + 1) % record_every == 0
                                     or step == steps - 1):
            recorder(state.copy())
    return state
