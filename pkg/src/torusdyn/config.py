"""Experiment configuration: TOML parsing and object construction.

A run is described by one self-describing TOML file (key = value plus nested
tables for the kernel, the external potential, the regularization rule and
the initial density); every physical constant is echoed into the outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import tomli

from .kernels import (ClosedFormKernel1D, CosinePotential, FourierPotential,
                      ZeroPotential, make_custom_kernel, make_edge_kernel,
                      make_screw_kernel)

REGIMES = ("convergence", "nonconvergence", "gronwall")


@dataclass
class ExperimentConfig:
    regime: str
    d: int = 1
    n_ladder: list = field(default_factory=lambda: [64, 128, 256])
    T: float = 0.05
    delta: dict = field(default_factory=lambda: {"kind": "slow-log",
                                                 "slack": 2.0})
    kernel: dict = field(default_factory=lambda: {"kind": "closed-form"})
    potential: dict = field(default_factory=lambda: {"kind": "zero"})
    rho0: dict = field(default_factory=lambda: {"kind": "uniform",
                                                "plus_fraction": 0.5})
    grid_N: int = 128
    mode: str = "isotropic"
    eps: float = 0.0
    dt: float | None = None
    sample_times: list | None = None
    n_samples: int = 6
    quantize_m: int | None = None
    offset: list | None = None
    gamma: float = 0.5
    perturbations: list = field(default_factory=lambda: [1e-3, 1e-2, 5e-2])
    deltas: list = field(default_factory=lambda: [0.2, 0.35, 0.5])
    out_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError("unknown regime %r" % (self.regime,))
        if self.d not in (1, 2):
            raise ValueError("d must be 1 or 2")
        ladder = list(self.n_ladder)
        if any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n ladder must be strictly increasing")
        if self.T <= 0:
            raise ValueError("horizon T must be positive")
        for n in ladder:
            if self.delta_for(n) <= 0:
                raise ValueError("delta rule gives nonpositive delta at n=%d"
                                 % n)

    # -- derived quantities -------------------------------------------------

    def delta_for(self, n):
        """Resolve the regularization rule at particle count n."""
        rule = self.delta
        kind = rule.get("kind", "explicit")
        if kind == "explicit":
            values = rule["values"]
            return float(values[list(self.n_ladder).index(n)])
        if kind == "slow-log":
            s = float(rule.get("slack", 2.0))
            if s <= 1.0:
                raise ValueError("slow-log rule needs slack > 1")
            return math.sqrt(6.0 * self.T * s / math.log(n))
        if kind == "fast-power":
            p = float(rule["exponent"])
            return float(n) ** (-p)
        if kind == "fixed":
            return float(rule["value"])
        raise ValueError("unknown delta rule %r" % (kind,))

    def times(self):
        if self.sample_times is not None:
            return [float(t) for t in self.sample_times]
        return list(np.linspace(0.0, self.T, self.n_samples + 1)[1:])

    def to_dict(self):
        out = {}
        for key, val in self.__dict__.items():
            if isinstance(val, np.ndarray):
                val = val.tolist()
            out[key] = val
        return out

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValueError("unknown config keys: %s" % sorted(extra))
        return cls(**data)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomli.load(fh))


# ---------------------------------------------------------------------------
# object builders


def build_kernel(spec, delta, d):
    kind = spec.get("kind", "closed-form")
    if kind == "closed-form":
        if d != 1:
            raise ValueError("the closed-form kernel is one-dimensional")
        return ClosedFormKernel1D(delta)
    if kind == "screw":
        return make_screw_kernel(spec.get("alpha", 1.0), delta,
                                 int(spec.get("K", 32)), d=d)
    if kind == "edge":
        if d != 2:
            raise ValueError("the edge kernel is two-dimensional")
        return make_edge_kernel(delta, int(spec.get("K", 32)))
    if kind == "custom":
        return make_custom_kernel(spec["pairs"], d,
                                  K=spec.get("K"), delta=delta)
    raise ValueError("unknown kernel kind %r" % (kind,))


def build_potential(spec, d):
    kind = spec.get("kind", "zero")
    if kind == "zero":
        return ZeroPotential(d)
    if kind == "cosine":
        return CosinePotential(spec.get("amplitude", 0.1), d=d,
                               axis=int(spec.get("axis", 0)))
    if kind == "fourier":
        return FourierPotential(d, [(t["k"], t.get("a", 0.0), t.get("b", 0.0))
                                    for t in spec["terms"]])
    raise ValueError("unknown potential kind %r" % (kind,))


def build_density_field(spec, N, d):
    """Gridded scalar density (mass 1) on N cells per side."""
    kind = spec.get("kind", "uniform")
    ax = (np.arange(N) + 0.5) / N
    if d == 1:
        x = ax
    else:
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        x = X
    if kind == "uniform":
        rho = np.ones_like(x)
    elif kind == "step":
        rho = 2.0 * (x < 0.5)
    elif kind == "bump":
        rho = 1.0 + 0.5 * np.cos(2.0 * math.pi * x)
    else:
        raise ValueError("unknown density kind %r" % (kind,))
    rho = rho / rho.mean()
    return rho


def build_density_pair(spec, N, d):
    """DensityPair with the configured plus fraction of the mass."""
    from .pde import DensityPair

    frac = float(spec.get("plus_fraction", 0.5))
    if not 0.0 <= frac <= 1.0:
        raise ValueError("plus_fraction must be in [0, 1]")
    rho = build_density_field(spec, N, d)
    minus_spec = spec.get("minus")
    if minus_spec is not None:
        rho_m = build_density_field(minus_spec, N, d)
        return DensityPair(frac * rho, (1.0 - frac) * rho_m)
    return DensityPair(frac * rho, (1.0 - frac) * rho)
