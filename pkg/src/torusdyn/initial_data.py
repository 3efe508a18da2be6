"""Construction of approximating initial data.

Two ingredients: (i) turning a signed density pair into an n-atom empirical
pair whose per-sign masses are exact multiples of 1/n (mass quantization plus
a deterministic grid placement), and (ii) the dipole configurations used by
the fast-regularization experiments, where every positive atom is paired with
a negative atom at separation 2*offset.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .dynamics import DipoleSystem
from .metrics import EmpiricalPair
from .pde import DensityPair, entropy


def quantize_masses(rho, n, target_plus=None):
    """Rescale each sign so its mass is a multiple of 1/n.

    The positive mass is moved to the nearest multiple of 1/n (at most 1/(2n)
    transfer) unless `target_plus` (a Fraction with denominator dividing n)
    is given; the negative field absorbs the complement so the total mass
    stays 1.  Each sign is rescaled proportionally, so shapes are preserved.

    Returns (quantized DensityPair, report dict) where the report contains
    the transferred mass and the entropy change.
    """
    n = int(n)
    mp, mm = rho.masses()
    if abs(mp + mm - 1.0) > 1e-9:
        raise ValueError("total mass must be 1, got %g" % (mp + mm))
    if target_plus is None:
        target_plus = Fraction(round(mp * n), n)
    else:
        target_plus = Fraction(target_plus)
        if (target_plus * n).denominator != 1:
            raise ValueError("target_plus must be a multiple of 1/n")
    tp = float(target_plus)
    tm = 1.0 - tp
    if (tp > 0 and mp == 0) or (tm > 0 and mm == 0):
        raise ValueError("cannot rescale a zero field to positive mass")
    rp = rho.rho_plus * (tp / mp) if mp > 0 else rho.rho_plus
    rm = rho.rho_minus * (tm / mm) if mm > 0 else rho.rho_minus
    out = DensityPair(rp, rm, t=rho.t)
    report = {
        "transferred_mass": abs(tp - mp),
        "entropy_before": sum(entropy(rho)),
        "entropy_after": sum(entropy(out)),
    }
    report["entropy_change"] = report["entropy_after"] - report["entropy_before"]
    return out, report


def _cell_counts(cell_mass, n):
    """Row-major sweep carrying residual mass so each cell holds k/n mass.

    Implemented via the cumulative sums: the atom count of cell i is
    round(n * F_i) - round(n * F_{i-1}), which telescopes exactly to the
    total (a multiple of n by precondition) and never displaces more than
    1/n mass past a cell boundary.
    """
    cum = np.cumsum(cell_mass)
    # half-up rounding (not banker's) so ties resolve toward the earlier cell
    marks = np.floor(cum * n + 0.5 + 1e-9).astype(int)
    counts = np.diff(np.concatenate([[0], marks]))
    return counts


def _coarse_cell_masses(field, G):
    """Aggregate an N-grid density field into G-per-side cell masses."""
    N = field.shape[0]
    centers = (np.arange(N) + 0.5) / N
    idx = np.minimum((centers * G).astype(int), G - 1)
    if field.ndim == 1:
        out = np.zeros(G)
        np.add.at(out, idx, field / N)
    else:
        out = np.zeros((G, G))
        np.add.at(out, (idx[:, None], idx[None, :]),
                  field / N ** 2)
    return out


def grid_empirical(rho_n, n):
    """Place n-weighted atoms on a regular cell grid matching rho_n's masses.

    T^d is partitioned into ceil(n^{1/d}) cells per side; cells are swept in
    row-major order carrying residual mass forward so every cell holds an
    integer number of 1/n-atoms, placed at the cell center.  Per-sign masses
    match rho_n exactly; the per-sign W2 displacement is at most
    sqrt(d) * (cell side).
    """
    n = int(n)
    d = rho_n.d
    for m in rho_n.masses():
        if abs(m * n - round(m * n)) > 1e-6:
            raise ValueError("per-sign masses must be multiples of 1/n")
    G = math.ceil(n ** (1.0 / d))
    atoms = []
    for field in (rho_n.rho_plus, rho_n.rho_minus):
        cm = _coarse_cell_masses(field, G)
        counts = _cell_counts(cm.ravel(), n)
        flat = np.repeat(np.arange(cm.size), counts)
        if d == 1:
            pts = ((flat + 0.5) / G)[:, None]
        else:
            pts = np.stack([(flat // G + 0.5) / G, (flat % G + 0.5) / G],
                           axis=1)
        atoms.append(pts)
    return EmpiricalPair(atoms[0], atoms[1], n)


def grid_error_constant(d):
    """Constant C in the displacement bound C * n^{-1/d} (cell diameter)."""
    return math.sqrt(d)


def _inverse_cdf(density, levels):
    """Leftmost generalized inverse of the CDF of a 1D gridded density.

    density: per-cell values on N cells of width 1/N, total mass 1.
    Returns, for each level t, the smallest x with F(x) >= t, by linear
    interpolation inside the cell where the level is crossed.
    """
    density = np.asarray(density, dtype=float)
    N = len(density)
    F = np.concatenate([[0.0], np.cumsum(density) / N])
    F[-1] = 1.0
    levels = np.asarray(levels, dtype=float)
    j = np.searchsorted(F, levels, side="left")
    j = np.clip(j, 1, N)
    lo, hi = F[j - 1], F[j]
    frac = np.where(hi > lo, (levels - lo) / np.where(hi > lo, hi - lo, 1.0),
                    0.0)
    x = (j - 1 + frac) / N
    return np.where(levels <= 0.0, 0.0, x)


def dipole_data(rho0, n, mode="isotropic-1d", offset=None):
    """Dipole initial data: n/2 centers at quantiles of rho0, width `offset`.

    d=1: centers by inverse CDF at levels 2(k-1)/n, so consecutive centers
    enclose mass 2/n and the minimum spacing is at least 1/(n*sup rho0).
    d=2: a stratified quantile grid — sqrt(n/2) strips of equal mass in x1,
    each subdivided at sqrt(n/2) conditional quantiles in x2 — with the
    analogous 1/sqrt(n) spacing guarantee.  Slip-confined mode additionally
    requires a nonzero e2 component of the offset.
    """
    rho0 = np.asarray(rho0, dtype=float)
    n = int(n)
    if n % 2 != 0:
        raise ValueError("n must be even")
    m = n // 2
    if mode == "isotropic-1d":
        dim = 1
    elif mode in ("isotropic-2d", "slip-confined-2d"):
        dim = 2
    else:
        raise ValueError("unknown mode %r" % (mode,))
    offset = np.zeros(dim) if offset is None else np.asarray(offset,
                                                            dtype=float)
    if offset.shape != (dim,):
        raise ValueError("offset must be a %d-vector" % dim)
    if mode == "slip-confined-2d" and offset[1] == 0.0:
        raise ValueError("slip-confined dipoles need offset with nonzero "
                         "e2 component")

    if dim == 1:
        if rho0.ndim != 1:
            raise ValueError("d=1 mode needs a 1D gridded density")
        levels = np.arange(m) * (2.0 / n)
        z = _inverse_cdf(rho0, levels)[:, None]
    else:
        if rho0.ndim != 2 or rho0.shape[0] != rho0.shape[1]:
            raise ValueError("d=2 modes need a square gridded density")
        # strips x per-strip quantiles: r1 * r2 = m with r1 the largest
        # divisor <= sqrt(m) (a square grid when m is a perfect square)
        r1 = max(k for k in range(1, math.isqrt(m) + 1) if m % k == 0)
        r2 = m // r1
        if r1 == 1 and m > 3:
            raise ValueError("n/2 = %d has no useful divisor pair for the "
                             "stratified d=2 construction" % m)
        N = rho0.shape[0]
        marginal = rho0.mean(axis=1)
        strip_edges = _inverse_cdf(marginal, np.arange(r1 + 1) / r1)
        strip_edges[-1] = 1.0
        x1 = strip_edges[:-1]
        centers = (np.arange(N) + 0.5) / N
        z_list = []
        for i in range(r1):
            a, b = strip_edges[i], strip_edges[i + 1]
            # overlap of each fine x1-cell with the strip [a, b]
            left = np.maximum(centers - 0.5 / N, a)
            right = np.minimum(centers + 0.5 / N, b)
            w = np.maximum(right - left, 0.0) * N
            cond = w @ rho0
            total = cond.sum() / N
            if total <= 0:
                raise ValueError("empty strip in stratified construction")
            cond = cond / total
            x2 = _inverse_cdf(cond, np.arange(r2) / r2)
            z_list.append(np.stack([np.full(r2, x1[i]), x2], axis=1))
        z = np.concatenate(z_list, axis=0)
    dvec = np.broadcast_to(offset, (m, dim)).copy()
    return DipoleSystem(z=z, dvec=dvec, mode=mode)
