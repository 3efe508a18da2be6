"""Interaction kernels on the torus and smooth external potentials.

Two kernel families are provided:

* :class:`SpectralKernel` -- a truncated Fourier series with nonnegative, even
  coefficients.  Concrete constructors: :func:`make_screw_kernel` (coefficients
  alpha/|k|^2), :func:`make_edge_kernel` (coefficients k2^2/(pi |k|^4), d=2
  only) and :func:`make_custom_kernel`.  Regularization is the exponential
  multiplier exp(-delta |k|).
* :class:`ClosedFormKernel1D` -- the globally smooth 1D model potential
  V_delta(s) = -1/2 log(s^2 + delta^2), evaluated on nearest images.

External forcing is a finite Fourier sum (:class:`FourierPotential`, with the
:class:`CosinePotential` and :class:`ZeroPotential` conveniences).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .torus import nearest_image

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# spectral kernels


class SpectralKernel:
    """Truncated Fourier series V(s) = sum_k vhat_k exp(2 pi i k . s).

    Coefficients are required to be nonnegative and even (vhat_k = vhat_{-k}),
    so the potential is real and even and its gradient vanishes at 0.  The
    zero mode is always 0.

    Parameters
    ----------
    d : int
        Dimension, 1 or 2.
    K : int
        Mode cutoff: coefficients are kept for |k|_inf <= K.
    coeffs : ndarray, shape (2K+1,)*d
        Coefficient table indexed by k + K per axis.
    delta : float
        Regularization length used to build the table (metadata; the table
        itself is what is evaluated).
    family : str
        Tag: "screw-green", "edge-wall" or "custom".
    """

    def __init__(self, d, K, coeffs, delta=0.0, family="custom"):
        if d not in (1, 2):
            raise ValueError("dimension must be 1 or 2")
        if K < 1:
            raise ValueError("cutoff K must be >= 1")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (2 * K + 1,) * d:
            raise ValueError("coefficient table has wrong shape")
        if not np.all(np.isfinite(coeffs)):
            raise ValueError("non-finite coefficient")
        if coeffs.min() < 0:
            raise ValueError("negative Fourier coefficient violates positivity")
        # evenness and zero mean
        rev = coeffs[(slice(None, None, -1),) * d]
        if not np.array_equal(rev, coeffs):
            raise ValueError("coefficient table is not even")
        center = (K,) * d
        if coeffs[center] != 0.0:
            raise ValueError("zero mode must vanish")
        self.d = int(d)
        self.K = int(K)
        self.delta = float(delta)
        self.family = family
        self.coeffs = coeffs
        # flat list of modes with nonzero coefficient (used by evaluators)
        idx = np.argwhere(coeffs != 0.0)
        self.modes = (idx - K).astype(float)          # (M, d)
        self.vals = coeffs[tuple(idx.T)]              # (M,)
        self._grid_cache = {}

    # -- bookkeeping -------------------------------------------------------

    def coefficient(self, k):
        """Coefficient for integer mode k (0 outside the cutoff)."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if k.shape != (self.d,):
            raise ValueError("mode has wrong dimension")
        if np.max(np.abs(k)) > self.K:
            return 0.0
        return float(self.coeffs[tuple(k + self.K)])

    @property
    def v2_sup(self):
        """sup_k (1+|k|^2)^(d/2) vhat_k over the retained modes."""
        k2 = np.sum(self.modes ** 2, axis=1)
        if len(self.vals) == 0:
            return 0.0
        return float(np.max((1.0 + k2) ** (self.d / 2.0) * self.vals))

    def coefficient_hessian_bound(self):
        """sum_k 4 pi^2 |k|^2 vhat_k, an upper bound for ||D^2 V||_inf."""
        k2 = np.sum(self.modes ** 2, axis=1)
        return float(4.0 * math.pi ** 2 * np.sum(k2 * self.vals))

    def gradient_sup_bound(self):
        """sum_k 2 pi |k| vhat_k, an upper bound for ||grad V||_inf."""
        kk = np.sqrt(np.sum(self.modes ** 2, axis=1))
        return float(TWO_PI * np.sum(kk * self.vals))

    def tail_bound(self):
        """Upper bound for the coefficient mass dropped by the cutoff.

        Sums a per-shell bound over |k|_inf = R for R > K until it converges;
        returns inf when the bounding series diverges (delta = 0 families with
        non-summable coefficients).
        """
        if self.family == "screw-green":
            alpha = self._alpha
            per_shell = lambda R: (2.0 if self.d == 1 else 8.0 * R) * alpha / R ** 2
        elif self.family == "edge-wall":
            per_shell = lambda R: 8.0 * R / (math.pi * R ** 2)
        else:
            return 0.0  # custom tables are exact by definition
        total = 0.0
        for R in range(self.K + 1, self.K + 200001):
            term = per_shell(R) * math.exp(-self.delta * R)
            total += term
            if term < 1e-14 * max(total, 1e-300):
                return total
        return math.inf

    # -- pointwise evaluation (reference path) -----------------------------

    def _phases(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape[-1] != self.d:
            raise ValueError("point has wrong dimension")
        return TWO_PI * (s @ self.modes.T)            # (..., M)

    def potential(self, s):
        """V(s); vectorized over leading axes of s (last axis = coords)."""
        return np.cos(self._phases(s)) @ self.vals

    def grad(self, s):
        """grad V(s), exactly zero at s = 0 by evenness."""
        sin = np.sin(self._phases(s))
        return -TWO_PI * (sin @ (self.vals[:, None] * self.modes))

    def hess(self, s):
        """Hessian D^2 V(s) with shape (..., d, d)."""
        cos = np.cos(self._phases(s))
        kk = self.modes[:, :, None] * self.modes[:, None, :]   # (M, d, d)
        w = self.vals[:, None, None] * kk
        return -4.0 * math.pi ** 2 * np.einsum("...m,mij->...ij", cos, w)

    # -- grid evaluation (fast path; identical finite sum via the FFT) -----

    def spectral_multiplier(self, N, factor=None):
        """Complex multiplier array A of shape (N,)*d with A[k mod N] = vhat_k
        (optionally times factor(k)), for use with numpy FFT layouts."""
        if N < 2 * self.K + 2:
            raise ValueError("grid too coarse for cutoff K: need N >= 2K+2")
        A = np.zeros((N,) * self.d, dtype=complex)
        idx = tuple((self.modes.astype(int) % N).T)
        fvals = self.vals if factor is None else self.vals * factor(self.modes)
        np.add.at(A, idx, fvals)
        return A

    def potential_grid(self, N):
        """V sampled at the grid points j/N (same finite sum as potential())."""
        key = ("pot", N)
        if key not in self._grid_cache:
            A = self.spectral_multiplier(N)
            self._grid_cache[key] = np.real(np.fft.ifftn(A)) * N ** self.d
        return self._grid_cache[key]

    def hess_grid(self, N):
        """All Hessian components on the grid, shape (d, d, N, ...)."""
        out = np.empty((self.d, self.d) + (N,) * self.d)
        for i in range(self.d):
            for j in range(self.d):
                A = self.spectral_multiplier(
                    N, factor=lambda k: -4.0 * math.pi ** 2 * k[:, i] * k[:, j]
                )
                out[i, j] = np.real(np.fft.ifftn(A)) * N ** self.d
        return out

    def lambda_estimate(self, grid_n=None):
        """Estimate of ||D^2 V||_inf: min(coefficient bound, dense grid max).

        The coefficient sum is a rigorous upper bound; the grid maximum is
        exact at the sampled points, so the minimum of the two is the sharper
        documented estimate.
        """
        bound = self.coefficient_hessian_bound()
        if grid_n is None:
            grid_n = max(4 * self.K + 4, 256 if self.d == 2 else 1024)
        H = self.hess_grid(grid_n)
        if self.d == 1:
            grid_max = float(np.max(np.abs(H[0, 0])))
        else:
            a, b, c = H[0, 0], H[0, 1], H[1, 1]
            # spectral norm of a symmetric 2x2 matrix
            grid_max = float(
                np.max(np.abs((a + c) / 2) + np.sqrt(((a - c) / 2) ** 2 + b ** 2))
            )
        return min(bound, grid_max)


def _mode_grid(K, d):
    axes = [np.arange(-K, K + 1)] * d
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1)                    # (2K+1,)*d + (d,)


def make_screw_kernel(alpha, delta, K, d=2):
    """Kernel with coefficients alpha/|k|^2 times exp(-delta |k|)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if K < 1:
        raise ValueError("cutoff K must be >= 1")
    k = _mode_grid(K, d)
    k2 = np.sum(k.astype(float) ** 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = alpha / k2 * np.exp(-delta * np.sqrt(k2))
    c[k2 == 0] = 0.0
    ker = SpectralKernel(d, K, c, delta=delta, family="screw-green")
    ker._alpha = float(alpha)
    return ker


def make_edge_kernel(delta, K):
    """d=2 kernel with coefficients k2^2/(pi |k|^4) times exp(-delta |k|)."""
    if K < 1:
        raise ValueError("cutoff K must be >= 1")
    k = _mode_grid(K, 2).astype(float)
    k2 = np.sum(k ** 2, axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = (k[..., 1] ** 2) / (math.pi * k2 ** 2) * np.exp(-delta * np.sqrt(k2))
    c[k2 == 0] = 0.0
    return SpectralKernel(2, K, c, delta=delta, family="edge-wall")


def make_custom_kernel(pairs, d, K=None, delta=0.0):
    """Kernel from a list of (mode, coefficient) pairs.

    Each mode is mirrored automatically so the table is even; coefficients for
    a mode given twice are summed.
    """
    pairs = [(np.atleast_1d(np.asarray(k, dtype=int)), float(v)) for k, v in pairs]
    if K is None:
        K = max(int(np.max(np.abs(k))) for k, _ in pairs)
    c = np.zeros((2 * K + 1,) * d)
    for k, v in pairs:
        if k.shape != (d,):
            raise ValueError("mode has wrong dimension")
        if np.max(np.abs(k)) > K:
            raise ValueError("mode outside cutoff")
        if np.all(k == 0):
            if v != 0:
                raise ValueError("zero mode must vanish")
            continue
        c[tuple(k + K)] += v / 2.0
        c[tuple(-k + K)] += v / 2.0
    return SpectralKernel(d, K, c, delta=delta, family="custom")


# ---------------------------------------------------------------------------
# closed-form 1D kernel


class ClosedFormKernel1D:
    """V_delta(s) = -1/2 log(s^2 + delta^2) on nearest-image representatives.

    Globally C^2 for delta > 0, even, with V''(0) = -1/delta^2 (the deepest
    curvature, attained at the bottom of the dipole well).
    """

    d = 1
    family = "closed-form-1d"

    def __init__(self, delta):
        if delta <= 0:
            raise ValueError("delta must be positive")
        self.delta = float(delta)

    def _rep(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape[-1:] == (1,):
            s = s[..., 0]
        return nearest_image(s)

    def potential(self, s):
        r = self._rep(s)
        return -0.5 * np.log(r * r + self.delta ** 2)

    def grad(self, s):
        r = self._rep(s)
        return (-r / (r * r + self.delta ** 2))[..., None]

    def grad_fixed_branch(self, s):
        """V' without re-wrapping the argument.

        For arguments produced as (nearest-image base) + tiny perturbation
        this keeps all evaluations of one pair on the same smooth branch;
        re-wrapping would flip the sign of V' across the half-period cut,
        where the nearest-image potential has a kink.
        """
        s = np.asarray(s, dtype=float)
        if s.shape[-1:] == (1,):
            s = s[..., 0]
        return (-s / (s * s + self.delta ** 2))[..., None]

    def hess(self, s):
        r = self._rep(s)
        d2 = self.delta ** 2
        return ((r * r - d2) / (r * r + d2) ** 2)[..., None, None]

    def lambda_estimate(self):
        """Exact sup of |V''|: 1/delta^2, attained at s = 0."""
        return 1.0 / self.delta ** 2

    def gradient_sup(self):
        """Exact sup of |V'|: 1/(2 delta), attained at |s| = delta."""
        return 0.5 / self.delta


class EdgeCoreField:
    """Closed-form free-space edge interaction -log|s| + s1^2/|s|^2.

    This is the near-field limit of the edge kernel; the dipole integrator can
    use it for the intra-dipole core force at separations far below the
    resolution 1/K of a truncated series.  Only the value and gradient are
    needed.
    """

    d = 2

    def potential(self, s):
        s = np.asarray(s, dtype=float)
        r2 = np.sum(s * s, axis=-1)
        return -0.5 * np.log(r2) + s[..., 0] ** 2 / r2

    def grad(self, s):
        s = np.asarray(s, dtype=float)
        s1, s2 = s[..., 0], s[..., 1]
        r2 = s1 * s1 + s2 * s2
        g1 = -s1 / r2 + 2.0 * s1 * s2 * s2 / r2 ** 2
        g2 = -s2 / r2 - 2.0 * s1 * s1 * s2 / r2 ** 2
        return np.stack([g1, g2], axis=-1)


# ---------------------------------------------------------------------------
# external potentials


class FourierPotential:
    """Finite Fourier sum U(x) = sum_t a_t cos(2 pi k_t.x) + b_t sin(2 pi k_t.x).

    Derivatives are analytic; `hess_sup` and `laplacian_sup` are the
    coefficient bounds sum 4 pi^2 |k|^2 sqrt(a^2+b^2), exact for a single
    term.
    """

    def __init__(self, d, terms=()):
        self.d = int(d)
        self.terms = []
        for k, a, b in terms:
            k = np.atleast_1d(np.asarray(k, dtype=float))
            if k.shape != (self.d,):
                raise ValueError("wavevector has wrong dimension")
            self.terms.append((k, float(a), float(b)))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for k, a, b in self.terms:
            ph = TWO_PI * (x @ k)
            out = out + a * np.cos(ph) + b * np.sin(ph)
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for k, a, b in self.terms:
            ph = TWO_PI * (x @ k)
            radial = -a * np.sin(ph) + b * np.cos(ph)
            out = out + TWO_PI * radial[..., None] * k
        return out

    def hess(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (self.d,))
        for k, a, b in self.terms:
            ph = TWO_PI * (x @ k)
            radial = -(a * np.cos(ph) + b * np.sin(ph))
            out = out + (TWO_PI ** 2) * radial[..., None, None] * np.outer(k, k)
        return out

    @property
    def hess_sup(self):
        return sum(
            4.0 * math.pi ** 2 * float(k @ k) * math.hypot(a, b)
            for k, a, b in self.terms
        )

    @property
    def laplacian_sup(self):
        return self.hess_sup

    @property
    def grad_sup(self):
        return sum(
            TWO_PI * math.sqrt(float(k @ k)) * math.hypot(a, b)
            for k, a, b in self.terms
        )


class CosinePotential(FourierPotential):
    """U(x) = amplitude * cos(2 pi x[axis])."""

    def __init__(self, amplitude, d=1, axis=0):
        k = np.zeros(d)
        k[axis] = 1.0
        super().__init__(d, [(k, amplitude, 0.0)])
        self.amplitude = float(amplitude)
        self.axis = int(axis)


class ZeroPotential(FourierPotential):
    def __init__(self, d=1):
        super().__init__(d, [])


# ---------------------------------------------------------------------------
# estimates and assumption checks


def lambda_delta(kernel, grid_n=None):
    """Estimate of ||D^2 V_delta||_inf, the Lipschitz constant of the drift.

    Exact (1/delta^2) for the closed-form kernel; for spectral kernels the
    minimum of the coefficient bound and a dense-grid Hessian maximum.
    """
    if isinstance(kernel, ClosedFormKernel1D):
        return kernel.lambda_estimate()
    if grid_n is None:
        return kernel.lambda_estimate()
    return kernel.lambda_estimate(grid_n=grid_n)


@dataclass
class KernelReport:
    """Result of check_assumptions: pass/fail flags plus raw numbers."""

    ok: bool
    details: dict = field(default_factory=dict)

    def __str__(self):
        lines = ["assumption check: %s" % ("PASS" if self.ok else "FAIL")]
        for key, val in self.details.items():
            lines.append("  %-24s %r" % (key, val))
        return "\n".join(lines)


def check_assumptions(kernel, gamma=0.5, n=None):
    """Verify the structural assumptions of a kernel and report the numbers.

    For spectral kernels: nonnegativity and evenness of the table plus the
    decay supremum sup (1+|k|^2)^(d/2) vhat_k.  For the closed-form 1D kernel:
    additionally the barrier value delta*V'(2*gamma*delta) (must be <= -c with
    c = 2*gamma/(1+4*gamma^2)), the product delta*sup|V'| and, when a particle
    count n is given, the far-field curvature bound |V''(s)| <= C n^2 for
    |s| > 1/(2n).
    """
    details = {}
    if isinstance(kernel, ClosedFormKernel1D):
        delta = kernel.delta
        c = 2.0 * gamma / (1.0 + 4.0 * gamma ** 2)
        s_barrier = 2.0 * gamma * delta
        vprime = float(kernel.grad(np.array([s_barrier]))[0])
        details["barrier_gamma"] = gamma
        details["barrier_c"] = c
        details["barrier_value"] = delta * vprime           # = -c analytically
        v3_ok = delta * vprime <= -c + 1e-12
        # dense-sample confirmation of the gradient supremum
        s = np.linspace(-0.5, 0.5, 20001)
        sampled_sup = float(np.max(np.abs(kernel.grad(s)[..., 0])))
        details["grad_sup_product"] = delta * kernel.gradient_sup()   # = 1/2
        details["grad_sup_sampled_product"] = delta * sampled_sup
        v4_ok = details["grad_sup_product"] <= 0.5 + 1e-12
        v5_ok = True
        if n is not None:
            cut = 0.5 / n
            far = np.abs(s) > cut
            v5_const = float(np.max(np.abs(kernel.hess(s[far])[..., 0, 0]))) / n ** 2
            details["far_curvature_over_n2"] = v5_const
            # analytic bound: |V''(s)| <= 1/(s^2+delta^2) <= (2n)^2 for |s|>1/(2n)
            v5_ok = v5_const <= 4.0 + 1e-12 and delta <= cut / 2.0 + 1e-15
        details["even"] = True
        details["min_coefficient"] = None
        ok = v3_ok and v4_ok and v5_ok
        details["barrier_ok"] = v3_ok
        details["grad_bound_ok"] = v4_ok
        details["far_curvature_ok"] = v5_ok
        return KernelReport(ok=ok, details=details)

    coeffs = kernel.coeffs
    details["min_coefficient"] = float(coeffs.min())
    rev = coeffs[(slice(None, None, -1),) * kernel.d]
    details["even"] = bool(np.array_equal(rev, coeffs))
    details["v2_sup"] = kernel.v2_sup
    details["tail_bound"] = kernel.tail_bound()
    v1_ok = details["min_coefficient"] >= 0.0
    ok = v1_ok and details["even"] and np.isfinite(details["v2_sup"])
    details["positivity_ok"] = v1_ok
    return KernelReport(ok=ok, details=details)
