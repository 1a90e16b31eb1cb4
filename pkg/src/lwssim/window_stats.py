"""Sliding-window moments for an image pair via summed-area tables.

Windows are square, slide with step 1 and never cross the border, so a
``(m, n)`` plane yields a ``(m - xi + 1, n - xi + 1)`` grid. Moments use the
population convention (divide by ``xi**2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SummedAreaTable",
    "WindowStatsMaps",
    "build_sat",
    "box_sums",
    "box_sums_adjoint",
    "window_stats",
    "window_stats_naive",
    "check_window",
]


@dataclass(frozen=True)
class SummedAreaTable:
    """``table[i, j]`` is the sum of the source over rows ``< i`` and cols ``< j``."""

    table: np.ndarray

    @property
    def source_shape(self) -> tuple[int, int]:
        m1, n1 = self.table.shape
        return m1 - 1, n1 - 1

    def rect_sum(self, r0: int, c0: int, r1: int, c1: int) -> float:
        """Sum over the half-open rectangle ``[r0, r1) x [c0, c1)``."""
        t = self.table
        return float(t[r1, c1] - t[r0, c1] - t[r1, c0] + t[r0, c0])

    def window_sums(self, xi: int) -> np.ndarray:
        """Sums over every valid ``xi x xi`` window, vectorized."""
        t = self.table
        return t[xi:, xi:] - t[:-xi, xi:] - t[xi:, :-xi] + t[:-xi, :-xi]


def build_sat(plane) -> SummedAreaTable:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.size == 0:
        raise ValueError(f"expected a non-empty 2-D plane, got shape {plane.shape}")
    m, n = plane.shape
    table = np.zeros((m + 1, n + 1))
    table[1:, 1:] = plane.cumsum(axis=0).cumsum(axis=1)
    return SummedAreaTable(table)


def box_sums(plane, xi: int) -> np.ndarray:
    return build_sat(plane).window_sums(xi)


def box_sums_adjoint(window_map, xi: int) -> np.ndarray:
    """Transpose of :func:`box_sums`.

    Each pixel of the ``(m, n)`` result receives the sum of ``window_map``
    over all windows that contain it.
    """
    window_map = np.asarray(window_map, dtype=np.float64)
    padded = np.pad(window_map, xi - 1)
    return box_sums(padded, xi)


@dataclass(frozen=True)
class WindowStatsMaps:
    xi: int
    mu_x: np.ndarray
    mu_y: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray
    cov_xy: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mu_x.shape

    def swapped(self) -> "WindowStatsMaps":
        return WindowStatsMaps(self.xi, self.mu_y, self.mu_x, self.var_y, self.var_x, self.cov_xy)


def check_window(shape, xi: int) -> None:
    m, n = shape
    if isinstance(xi, bool) or int(xi) != xi:
        raise ValueError(f"window size must be an integer, got {xi!r}")
    if not 2 <= xi <= min(m, n):
        raise ValueError(f"window size {xi} outside [2, {min(m, n)}] for a {m}x{n} plane")


def _check_pair(x_plane, y_plane, xi):
    x = np.asarray(x_plane, dtype=np.float64)
    y = np.asarray(y_plane, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2:
        raise ValueError("window statistics operate on 2-D planes")
    if x.shape != y.shape:
        raise ValueError(f"plane shapes differ: {x.shape} vs {y.shape}")
    check_window(x.shape, xi)
    return x, y, int(xi)


def window_stats(x_plane, y_plane, xi: int) -> WindowStatsMaps:
    """Per-window means, variances and covariance of a plane pair.

    Each plane is centred on its midrange before the tables are built, which
    keeps the ``E[v^2] - E[v]^2`` cancellation well conditioned and makes
    constant planes centre to exact zeros.
    """
    x, y, xi = _check_pair(x_plane, y_plane, xi)
    k = float(xi * xi)
    ax = 0.5 * (x.min() + x.max())
    ay = 0.5 * (y.min() + y.max())
    xc = x - ax
    yc = y - ay
    sx = box_sums(xc, xi) / k
    sy = box_sums(yc, xi) / k
    var_x = np.maximum(box_sums(xc * xc, xi) / k - sx * sx, 0.0)
    var_y = np.maximum(box_sums(yc * yc, xi) / k - sy * sy, 0.0)
    cov = box_sums(xc * yc, xi) / k - sx * sy
    return WindowStatsMaps(xi, sx + ax, sy + ay, var_x, var_y, cov)


def window_stats_naive(x_plane, y_plane, xi: int) -> WindowStatsMaps:
    """Reference implementation: explicit loops, two-pass moments, ``math.fsum``."""
    x, y, xi = _check_pair(x_plane, y_plane, xi)
    m, n = x.shape
    gm, gn = m - xi + 1, n - xi + 1
    k = xi * xi
    out = {name: np.empty((gm, gn)) for name in ("mu_x", "mu_y", "var_x", "var_y", "cov_xy")}
    for a in range(gm):
        for b in range(gn):
            wx = x[a:a + xi, b:b + xi].ravel().tolist()
            wy = y[a:a + xi, b:b + xi].ravel().tolist()
            mx = math.fsum(wx) / k
            my = math.fsum(wy) / k
            dx = [v - mx for v in wx]
            dy = [v - my for v in wy]
            out["mu_x"][a, b] = mx
            out["mu_y"][a, b] = my
            out["var_x"][a, b] = max(math.fsum(d * d for d in dx) / k, 0.0)
            out["var_y"][a, b] = max(math.fsum(d * d for d in dy) / k, 0.0)
            out["cov_xy"][a, b] = math.fsum(p * q for p, q in zip(dx, dy)) / k
    return WindowStatsMaps(xi, **out)
