"""Geometry of the flat torus T^d = R^d / Z^d, d in {1, 2}.

Points are stored canonically with every coordinate in [0, 1).  Distances and
displacement vectors always use the nearest periodic image.  All functions are
pure and vectorized over leading axes.
"""

from __future__ import annotations

import numpy as np


def wrap(x):
    """Reduce coordinates modulo 1 into [0, 1).

    Accepts scalars or arrays; raises on non-finite input.
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite coordinate in wrap()")
    w = x - np.floor(x)
    # tiny negative inputs can round to exactly 1.0; fold back to 0
    return np.where(w == 1.0, 0.0, w)


def nearest_image(r):
    """Map a displacement to its nearest-image representative in [-1/2, 1/2).

    For each coordinate this selects the integer shift k minimizing |r + k|.
    At the tie |r + k| = 1/2 the representative -1/2 is returned, which
    corresponds to the lexicographically smallest minimizing shift vector.
    """
    r = np.asarray(r, dtype=float)
    return r - np.floor(r + 0.5)


def nearest_image_vector(x, y):
    """Shortest displacement x - y on the torus (ties: smallest shift, see
    nearest_image)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[-1:] != y.shape[-1:]:
        raise ValueError("dimension mismatch: %r vs %r" % (x.shape, y.shape))
    return nearest_image(x - y)


def torus_norm(x, y):
    """Periodic distance: min over integer shifts k of ||x - y + k||.

    Result is at most sqrt(d)/2.  Vectorized over leading axes; the last axis
    is the coordinate axis.
    """
    d = nearest_image_vector(x, y)
    return np.sqrt(np.sum(d * d, axis=-1))


def pairwise_displacements(x):
    """All nearest-image displacements x_i - x_j for an (n, d) array.

    Returns an (n, n, d) array.
    """
    x = np.asarray(x, dtype=float)
    return nearest_image(x[:, None, :] - x[None, :, :])


def min_pairwise_distance(x):
    """Smallest off-diagonal torus distance among the rows of an (n, d) array."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n < 2:
        return np.inf
    disp = pairwise_displacements(x)
    dist = np.sqrt(np.sum(disp * disp, axis=-1))
    dist[np.diag_indices(n)] = np.inf
    return float(dist.min())
