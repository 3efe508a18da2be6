import math
from fractions import Fraction

import numpy as np
import pytest

from torusdyn.config import build_density_field, build_density_pair
from torusdyn.dynamics import slow_manifold_contains
from torusdyn.initial_data import (dipole_data, grid_empirical,
                                   grid_error_constant, quantize_masses)
from torusdyn.metrics import w2_density_vs_empirical, w2_empirical
from torusdyn.pde import DensityPair


def pair(frac, N=64, d=1, kind="uniform"):
    return build_density_pair({"kind": kind, "plus_fraction": frac}, N, d)


# ---------------------------------------------------------------------------
# quantize_masses


def test_quantize_example_053():
    rho = pair(0.53)
    out, rep = quantize_masses(rho, 10)
    mp, mm = out.masses()
    assert mp == pytest.approx(0.5, abs=1e-12)
    assert mm == pytest.approx(0.5, abs=1e-12)
    assert rep["transferred_mass"] == pytest.approx(0.03, abs=1e-12)
    assert rep["transferred_mass"] <= 0.1 + 1e-12


def test_quantize_identity_cases():
    rho = pair(0.5)
    out, rep = quantize_masses(rho, 8)
    np.testing.assert_allclose(out.rho_plus, rho.rho_plus)
    np.testing.assert_allclose(out.rho_minus, rho.rho_minus)
    assert rep["transferred_mass"] == pytest.approx(0.0, abs=1e-14)
    # masses already multiples of 1/n
    rho2 = pair(0.3)
    out2, rep2 = quantize_masses(rho2, 10)
    assert rep2["transferred_mass"] == pytest.approx(0.0, abs=1e-12)


def test_quantize_transfer_bounded_by_half_1n():
    rng = np.random.default_rng(0)
    for _ in range(20):
        frac = rng.uniform(0.2, 0.8)
        n = int(rng.integers(5, 50))
        out, rep = quantize_masses(pair(frac), n)
        assert rep["transferred_mass"] <= 0.5 / n + 1e-12
        mp, mm = out.masses()
        assert (mp * n) == pytest.approx(round(mp * n), abs=1e-9)
        assert mp + mm == pytest.approx(1.0, abs=1e-12)


def test_quantize_with_target():
    out, _ = quantize_masses(pair(0.53), 10, target_plus=Fraction(6, 10))
    assert out.masses()[0] == pytest.approx(0.6, abs=1e-12)
    with pytest.raises(ValueError):
        quantize_masses(pair(0.5), 10, target_plus=Fraction(1, 3))


# ---------------------------------------------------------------------------
# grid_empirical


def test_grid_uniform_alternating_cells():
    # fine grid commensurate with the G=10 coarse grid so cell masses are exact
    rho, _ = quantize_masses(pair(0.5, N=320), 10)
    emp = grid_empirical(rho, 10)
    assert len(emp.pos) == 5 and len(emp.neg) == 5
    # uniform half-mass rounds to atoms in alternating cells 0,2,4,6,8
    np.testing.assert_allclose(emp.pos[:, 0], [0.05, 0.25, 0.45, 0.65, 0.85])
    # 1D W2 against the density stays below one cell width
    dist, _ = w2_density_vs_empirical(rho, emp, m=80)
    assert dist <= 0.1 * math.sqrt(2)


def test_grid_masses_match_exactly():
    rng = np.random.default_rng(1)
    for d in (1, 2):
        for n in (7, 12, 30):
            frac = round(rng.integers(1, n)) / n
            rho, _ = quantize_masses(pair(frac, N=32, d=d, kind="bump"), n)
            emp = grid_empirical(rho, n)
            assert emp.mass_plus() == Fraction(round(frac * n), n)
            assert emp.mass_plus() + emp.mass_minus() == 1


def test_grid_concentrated_density():
    field = np.zeros(32)
    field[5] = 32.0     # point-mass-like concentration, mass 1
    rho = DensityPair(field, np.zeros(32))
    emp = grid_empirical(rho, 6)
    assert len(emp.pos) == 6 and len(emp.neg) == 0
    assert len(np.unique(emp.pos[:, 0])) == 1


def test_grid_requires_multiple_of_1n():
    with pytest.raises(ValueError):
        grid_empirical(pair(0.53), 10)


def test_grid_rate_scaling():
    # W(rho_n, mu_n) ~ n^{-1/d}: check the log-log slope loosely in 1D
    dists = []
    ns = [64, 256, 1024]
    for n in ns:
        rho, _ = quantize_masses(pair(0.5, N=2048, kind="bump"), n)
        emp = grid_empirical(rho, n)
        dist, _ = w2_density_vs_empirical(rho, emp, m=8 * n)
        dists.append(dist)
    slope = np.polyfit(np.log(ns), np.log(dists), 1)[0]
    assert slope == pytest.approx(-1.0, abs=0.25)
    assert grid_error_constant(1) == 1.0


# ---------------------------------------------------------------------------
# dipole_data


def test_dipole_uniform_1d_example():
    dip = dipole_data(np.ones(64), 10)
    np.testing.assert_allclose(dip.z[:, 0], [0.0, 0.2, 0.4, 0.6, 0.8])
    np.testing.assert_array_equal(dip.dvec, 0.0)


def test_dipole_step_density_example():
    step = 2.0 * ((np.arange(64) + 0.5) / 64 < 0.5)
    dip = dipole_data(step, 8)
    np.testing.assert_allclose(dip.z[:, 0], [0.0, 0.125, 0.25, 0.375])
    spacing = np.diff(np.sort(dip.z[:, 0]))
    assert spacing.min() >= 1.0 / (8 * 2) - 1e-12


def test_dipole_quantile_levels_match_quadrature():
    # consecutive centers enclose mass 2/n under rho0
    rho0 = build_density_field({"kind": "bump"}, 4096, 1)
    n = 20
    dip = dipole_data(rho0, n)
    z = dip.z[:, 0]
    cdf = np.concatenate([[0.0], np.cumsum(rho0) / len(rho0)])
    levels = np.interp(z, np.arange(len(cdf)) / len(rho0), cdf)
    np.testing.assert_allclose(levels, np.arange(n // 2) * 2.0 / n, atol=1e-3)


@pytest.mark.parametrize("kind", ["uniform", "step", "bump"])
def test_dipole_in_slow_manifold(kind):
    rho0 = build_density_field({"kind": kind}, 512, 1)
    M = 1.0 / rho0.max()
    for n in (10, 40):
        dip = dipole_data(rho0, n)
        assert slow_manifold_contains(dip, M=M, gamma=0.5, delta=1e-6)


def test_dipole_errors():
    with pytest.raises(ValueError):
        dipole_data(np.ones(16), 7)                      # odd n
    with pytest.raises(ValueError):
        dipole_data(np.ones((16, 16)), 8, mode="slip-confined-2d",
                    offset=np.array([0.1, 0.0]))          # zero e2 offset
    with pytest.raises(ValueError):
        dipole_data(np.ones(16), 8, mode="no-such-mode")


def test_dipole_2d_uniform_grid():
    dip = dipole_data(np.ones((32, 32)), 50, mode="isotropic-2d")
    assert dip.m == 25
    xs = np.unique(np.round(dip.z[:, 0], 12))
    ys = np.unique(np.round(dip.z[:, 1], 12))
    np.testing.assert_allclose(xs, np.arange(5) / 5, atol=1e-9)
    np.testing.assert_allclose(ys, np.arange(5) / 5, atol=1e-9)


def test_dipole_2d_slip_offset_preserved():
    delta = 1e-3
    off = np.array([0.5 * delta, 0.5 * delta])
    dip = dipole_data(np.ones((32, 32)), 100, mode="slip-confined-2d",
                      offset=off)
    assert dip.m == 50
    np.testing.assert_array_equal(dip.dvec, np.tile(off, (50, 1)))


def test_dipole_empirical_converges_to_half_half():
    # the empirical measures of the dipole datum approach (rho0/2, rho0/2)
    from torusdyn.dynamics import from_dipoles
    from torusdyn.metrics import EmpiricalPair

    rho0 = build_density_field({"kind": "bump"}, 1024, 1)
    target = DensityPair(0.5 * rho0, 0.5 * rho0)
    dists = []
    for n in (16, 64, 256):
        dip = dipole_data(rho0, n)
        emp = EmpiricalPair.from_particles(from_dipoles(dip))
        dist, _ = w2_density_vs_empirical(target, emp, m=8 * n)
        dists.append(dist)
    assert dists[2] < dists[1] < dists[0]
