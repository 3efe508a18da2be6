import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from torusdyn.torus import (min_pairwise_distance, nearest_image,
                            nearest_image_vector, pairwise_displacements,
                            torus_norm, wrap)

finite_floats = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def test_wrap_basic():
    assert wrap(0.0) == 0.0
    assert wrap(1.0) == 0.0
    assert wrap(-0.25) == 0.75
    assert wrap(2.75) == pytest.approx(0.75)


def test_wrap_rejects_nonfinite():
    with pytest.raises(ValueError):
        wrap(np.nan)
    with pytest.raises(ValueError):
        wrap(np.inf)


def test_nearest_image_tie_prefers_negative_half():
    # at distance exactly 1/2 the representative is -1/2 (the smallest shift)
    assert nearest_image(0.5) == -0.5
    assert nearest_image(-0.5) == -0.5
    assert nearest_image_vector(np.array([0.0]), np.array([0.5])) == np.array([-0.5])


def test_nearest_image_values():
    np.testing.assert_allclose(nearest_image(np.array([0.0, 0.76, 0.24, -0.3])),
                               [0.0, -0.24, 0.24, -0.3])


@given(arrays(float, (7,), elements=finite_floats))
@settings(max_examples=200, deadline=None)
def test_wrap_range_and_idempotence(x):
    w = wrap(x)
    assert np.all(w >= 0.0) and np.all(w < 1.0)
    np.testing.assert_array_equal(wrap(w), w)


@given(arrays(float, (7,), elements=finite_floats))
@settings(max_examples=200, deadline=None)
def test_nearest_image_range(x):
    r = nearest_image(x)
    assert np.all(r >= -0.5) and np.all(r < 0.5)
    # r and x differ by an integer
    np.testing.assert_allclose(np.round(x - r), x - r, atol=1e-6)


@given(arrays(float, (5, 2), elements=st.floats(0, 1, exclude_max=True)),
       arrays(float, (5, 2), elements=st.floats(0, 1, exclude_max=True)))
@settings(max_examples=100, deadline=None)
def test_torus_norm_metric_properties(x, y):
    dxy = torus_norm(x, y)
    assert np.all(dxy >= 0)
    np.testing.assert_allclose(dxy, torus_norm(y, x), atol=1e-12)
    # shift invariance
    s = np.array([0.37, 0.81])
    np.testing.assert_allclose(torus_norm(wrap(x + s), wrap(y + s)), dxy,
                               atol=1e-9)
    assert np.all(dxy <= np.sqrt(2) / 2 + 1e-12)


def test_torus_norm_wraps_around():
    assert torus_norm(np.array([0.9]), np.array([0.1])) == pytest.approx(0.2)


def test_pairwise_displacements_antisymmetry():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(6, 2))
    disp = pairwise_displacements(x)
    assert disp.shape == (6, 6, 2)
    # antisymmetric up to the tie convention at +-1/2
    np.testing.assert_allclose(disp, -disp.transpose(1, 0, 2), atol=1e-12)
    np.testing.assert_allclose(np.diagonal(disp).T, 0.0)


def test_min_pairwise_distance():
    x = np.array([[0.0], [0.95], [0.4]])
    assert min_pairwise_distance(x) == pytest.approx(0.05)
    assert min_pairwise_distance(np.array([[0.3]])) == np.inf
