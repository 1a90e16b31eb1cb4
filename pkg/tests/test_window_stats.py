import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from lwssim.window_stats import (
    box_sums,
    box_sums_adjoint,
    build_sat,
    window_stats,
    window_stats_naive,
)

FIELDS = ("mu_x", "mu_y", "var_x", "var_y", "cov_xy")


def max_discrepancy(a, b):
    return max(np.abs(getattr(a, f) - getattr(b, f)).max() for f in FIELDS)


def test_sat_single():
    assert build_sat([[1.0]]).table.tolist() == [[0, 0], [0, 1]]


def test_sat_total_and_cell():
    sat = build_sat([[1.0, 2.0], [3.0, 4.0]])
    assert sat.table[-1, -1] == 10
    assert sat.rect_sum(1, 1, 2, 2) == 4
    assert np.all(sat.table[0] == 0) and np.all(sat.table[:, 0] == 0)


def test_sat_rejects_empty():
    with pytest.raises(ValueError):
        build_sat(np.zeros((0, 3)))


def test_window_of_tenths():
    x = np.arange(1, 10, dtype=float).reshape(3, 3) / 10
    s = window_stats(x, x, 3)
    assert s.shape == (1, 1)
    assert s.mu_x[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert s.var_x[0, 0] == pytest.approx(2.85 / 9 - 0.25, abs=1e-14)


def test_self_covariance_exact(rng):
    x = rng.random((10, 9))
    s = window_stats(x, x, 4)
    assert np.array_equal(s.mu_x, s.mu_y)
    assert np.array_equal(s.var_x, s.var_y)
    assert np.array_equal(s.cov_xy, s.var_x)


def test_constant_planes_have_zero_moments():
    s = window_stats(np.full((6, 6), 0.3), np.full((6, 6), 0.7), 3)
    for f in ("var_x", "var_y", "cov_xy"):
        assert np.all(getattr(s, f) == 0.0)


def test_single_window_equals_whole_plane(rng):
    x = rng.random((5, 7))
    y = rng.random((5, 7))
    s = window_stats_naive(x, y, 5)
    assert s.shape == (1, 3)
    np.testing.assert_allclose(s.mu_x[0, 0], x[:, :5].mean(), atol=1e-15)
    s = window_stats(x[:, :5], y[:, :5], 5)
    np.testing.assert_allclose(s.var_y[0, 0], y[:, :5].var(), atol=1e-14)
    np.testing.assert_allclose(s.cov_xy[0, 0], np.mean((x[:, :5] - x[:, :5].mean()) * (y[:, :5] - y[:, :5].mean())), atol=1e-14)


def test_fast_matches_naive_8x8(rng):
    x, y = rng.random((2, 8, 8))
    assert max_discrepancy(window_stats(x, y, 3), window_stats_naive(x, y, 3)) <= 1e-10


@pytest.mark.parametrize("xi", [2, 3, 7, 11])
def test_fast_matches_naive_64(xi):
    r = np.random.default_rng(xi)
    x, y = r.random((2, 64, 64))
    assert max_discrepancy(window_stats(x, y, xi), window_stats_naive(x, y, xi)) <= 1e-10


def test_swap_symmetry(rng):
    x, y = rng.random((2, 9, 11))
    a = window_stats(x, y, 3)
    b = window_stats(y, x, 3)
    assert np.array_equal(a.mu_x, b.mu_y) and np.array_equal(a.var_x, b.var_y)
    assert np.array_equal(a.cov_xy, b.cov_xy)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (9, 10), elements=st.floats(0, 1)),
    arrays(np.float64, (9, 10), elements=st.floats(0, 1)),
    st.floats(-0.5, 0.5),
    st.integers(2, 9),
)
def test_shift_invariance(x, y, c, xi):
    a = window_stats(x, y, xi)
    b = window_stats(x + c, y, xi)
    np.testing.assert_allclose(b.mu_x, a.mu_x + c, atol=1e-10)
    np.testing.assert_allclose(b.var_x, a.var_x, atol=1e-10)
    np.testing.assert_allclose(b.cov_xy, a.cov_xy, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(
    arrays(np.float64, (8, 8), elements=st.floats(0, 1)),
    arrays(np.float64, (8, 8), elements=st.floats(0, 1)),
    st.integers(2, 8),
)
def test_moment_invariants(x, y, xi):
    s = window_stats(x, y, xi)
    assert np.all(s.var_x >= 0) and np.all(s.var_y >= 0)
    assert np.all(np.abs(s.cov_xy) <= np.sqrt(s.var_x * s.var_y) + 1e-9)


def test_adjoint_is_transpose(rng):
    # <box(p), w> == <p, adj(w)> for random p, w
    p = rng.random((7, 9))
    w = rng.random((5, 7))
    assert np.sum(box_sums(p, 3) * w) == pytest.approx(np.sum(p * box_sums_adjoint(w, 3)), rel=1e-13)


def test_adjoint_counts_windows():
    counts = box_sums_adjoint(np.ones((3, 4)), 3)
    assert counts.shape == (5, 6)
    assert counts[0, 0] == 1 and counts[2, 2] == 9 and counts[4, 5] == 1


@pytest.mark.parametrize("xi", [1, 6, 2.5])
def test_window_validation(xi):
    with pytest.raises(ValueError):
        window_stats(np.zeros((5, 5)), np.zeros((5, 5)), xi)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        window_stats(np.zeros((5, 5)), np.zeros((5, 6)), 2)
