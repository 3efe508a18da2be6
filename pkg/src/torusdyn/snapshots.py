"""Serialization of particle trajectories, density grids, and metrics.

CSV formats:
  trajectory rows: t, index, x1[, x2], sign
  density rows:    cell index, x1[, x2], rho_plus, rho_minus
  distance rows:   t, n, delta, W_plus, W_minus, W_signed

Binary snapshot formats (little-endian):
  particles: int64 d, int64 n, float64 t, then flat float64 coords (n*d),
             then float64 signs (n)
  density:   int64 d, int64 N, float64 t, then two flat float64 arrays
             (rho_plus, rho_minus), row-major
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .dynamics import ParticleSystem
from .pde import DensityPair, grid_points


def write_trajectory_csv(path, records):
    """Write a list of ParticleSystem snapshots as long-format CSV rows."""
    records = list(records)
    if not records:
        raise ValueError("no records to write")
    d = records[0].d
    coord_cols = ["x%d" % (k + 1) for k in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "index"] + coord_cols + ["sign"])
        for sys in records:
            for i in range(sys.n):
                w.writerow(["%.17g" % sys.t, i]
                           + ["%.17g" % c for c in sys.x[i]]
                           + [int(sys.b[i])])


def read_trajectory_csv(path):
    """Read back trajectory CSV as a list of ParticleSystem snapshots."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    d = sum(1 for c in header if c.startswith("x"))
    out = []
    cur_t, xs, bs = None, [], []
    for row in rows[1:]:
        t = float(row[0])
        if cur_t is None or t != cur_t:
            if xs:
                out.append(ParticleSystem(np.array(xs), np.array(bs, int),
                                          t=cur_t))
            cur_t, xs, bs = t, [], []
        xs.append([float(v) for v in row[2:2 + d]])
        bs.append(int(row[2 + d]))
    if xs:
        out.append(ParticleSystem(np.array(xs), np.array(bs, int), t=cur_t))
    return out


def write_density_csv(path, state):
    """Write a DensityPair as CSV rows (cell index, coords, rho+, rho-)."""
    pts = grid_points(state.N, state.d).reshape(-1, state.d)
    rp = state.rho_plus.ravel()
    rm = state.rho_minus.ravel()
    coord_cols = ["x%d" % (k + 1) for k in range(state.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell"] + coord_cols + ["rho_plus", "rho_minus"])
        for j in range(rp.size):
            w.writerow([j] + ["%.17g" % c for c in pts[j]]
                       + ["%.17g" % rp[j], "%.17g" % rm[j]])


def write_distances_csv(path, rows):
    """Write distance rows (t, n, delta, W_plus, W_minus, W_signed)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "n", "delta", "W_plus", "W_minus", "W_signed"])
        for r in rows:
            w.writerow(["%.17g" % r[0], int(r[1]), "%.17g" % r[2],
                        "%.17g" % r[3], "%.17g" % r[4], "%.17g" % r[5]])


def write_manifold_csv(path, rows, header=("t", "n", "min_spacing",
                                           "max_width", "inside")):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(header))
        for r in rows:
            w.writerow(list(r))


def write_particles_binary(path, sys):
    """Binary particle snapshot: header (d, n, t) + coords + signs."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qqd", sys.d, sys.n, sys.t))
        fh.write(np.ascontiguousarray(sys.x, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(sys.b, dtype="<f8").tobytes())


def read_particles_binary(path):
    with open(path, "rb") as fh:
        d, n, t = struct.unpack("<qqd", fh.read(24))
        x = np.frombuffer(fh.read(8 * n * d), dtype="<f8").reshape(n, d)
        b = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(int)
    return ParticleSystem(x.copy(), b, t=t)


def write_density_binary(path, state):
    """Binary density snapshot: header (d, N, t) + two flat arrays."""
    with open(path, "wb") as fh:
        fh.write(struct.pack("<qqd", state.d, state.N, state.t))
        fh.write(np.ascontiguousarray(state.rho_plus, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.rho_minus, dtype="<f8").tobytes())


def read_density_binary(path):
    with open(path, "rb") as fh:
        d, N, t = struct.unpack("<qqd", fh.read(24))
        shape = (N,) if d == 1 else (N, N)
        count = N ** d
        rp = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
        rm = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
    return DensityPair(rp.copy(), rm.copy(), t=t)
