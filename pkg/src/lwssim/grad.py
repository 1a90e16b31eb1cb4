"""Analytic gradients of the image metrics with respect to the test image ``y``.

For one plane and window size the pooled score is ``S = mean_w f_w`` where
``f_w`` depends on ``y`` only through the window statistics ``mu_y``,
``var_y`` and ``cov_xy``. With ``K = xi**2`` and ``N`` windows::

    dS/dy_p = 1/(N K) * sum_{w containing p} [ df/dmu_y
                                              + 2 (y_p - mu_y) df/dvar_y
                                              + (x_p - mu_x) df/dcov ]

The sum over windows containing ``p`` is the adjoint of the box filter and is
evaluated with a summed-area table of the zero-padded window map.

Only unit exponents are handled analytically; :func:`grad_fd` covers the
rest.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .metrics import LevelBank, SsimConfig, _pair, _SCORE_MAPS
from .window_stats import box_sums_adjoint, check_window, window_stats

__all__ = [
    "UnsupportedConfigError",
    "grad_mse",
    "grad_ssim",
    "grad_ssim_loss",
    "grad_lwssim_level",
    "grad_lwssim",
    "grad_lwssim_loss",
    "grad_fd",
    "value_and_grad",
]


class UnsupportedConfigError(ValueError):
    """The analytic gradient path does not cover this configuration."""


def _require_unit_exponents(cfg: SsimConfig) -> None:
    if not cfg.unit_exponents:
        raise UnsupportedConfigError(
            "analytic gradients need alpha = beta = gamma = 1; use grad_fd for other exponents"
        )


def _window_partials(stats, cfg: SsimConfig, kind: str):
    """Per-window partials of the score w.r.t. (mu_y, var_y, cov_xy)."""
    mx, my = stats.mu_x, stats.mu_y
    vx, vy, cov = stats.var_x, stats.var_y, stats.cov_xy

    d_lum = mx * mx + my * my + cfg.c1
    lum = (2.0 * mx * my + cfg.c1) / d_lum
    dlum_dmu = 2.0 * (mx - my * lum) / d_lum

    if cfg.c3 == cfg.c2 / 2.0:
        # c * s collapses to (2 cov + C2) / (vx + vy + C2): smooth, no sqrt
        d_cs = vx + vy + cfg.c2
        cs = (2.0 * cov + cfg.c2) / d_cs
        dcs_dvar = -cs / d_cs
        dcs_dcov = 2.0 / d_cs
    else:
        sig_prod = np.sqrt(vx * vy)
        sig_y = np.sqrt(vy)
        # d sigma_y / d var_y is taken as 0 at var_y == 0
        with np.errstate(divide="ignore", invalid="ignore"):
            dprod_dvar = np.where(sig_y > 0, np.sqrt(vx) / (2.0 * sig_y), 0.0)
        d_con = vx + vy + cfg.c2
        con = (2.0 * sig_prod + cfg.c2) / d_con
        d_st = sig_prod + cfg.c3
        st = (cov + cfg.c3) / d_st
        dcon_dvar = (2.0 * dprod_dvar - con) / d_con
        dst_dvar = -st * dprod_dvar / d_st
        cs = con * st
        dcs_dvar = dcon_dvar * st + con * dst_dvar
        dcs_dcov = con / d_st

    if kind == "ssim":
        return cs * dlum_dmu, lum * dcs_dvar, lum * dcs_dcov
    return dlum_dmu, dcs_dvar, dcs_dcov


def _plane_value_and_grad(x, y, cfg: SsimConfig, kind: str):
    xi = cfg.xi
    stats = window_stats(x, y, xi)
    value = _SCORE_MAPS[kind](stats, cfg).mean()
    g_mu, g_var, g_cov = _window_partials(stats, cfg, kind)

    # work in midrange-centred coordinates, as window_stats does
    ax = 0.5 * (x.min() + x.max())
    ay = 0.5 * (y.min() + y.max())
    xc = x - ax
    yc = y - ay
    mx = stats.mu_x - ax
    my = stats.mu_y - ay

    scale = 1.0 / (g_mu.size * xi * xi)
    grad = (
        box_sums_adjoint(g_mu - 2.0 * my * g_var - mx * g_cov, xi)
        + 2.0 * yc * box_sums_adjoint(g_var, xi)
        + xc * box_sums_adjoint(g_cov, xi)
    ) * scale
    return value, grad


def _channel_value_and_grad(x, y, cfg: SsimConfig, kind: str):
    _require_unit_exponents(cfg)
    xp, yp = _pair(x, y)
    check_window(xp.shape[1:], cfg.xi)
    values = np.empty(xp.shape[0])
    grad = np.empty_like(yp)
    for c in range(xp.shape[0]):
        values[c], grad[c] = _plane_value_and_grad(xp[c], yp[c], cfg, kind)
    return values, grad


def grad_mse(x, y) -> np.ndarray:
    xp, yp = _pair(x, y)
    return 2.0 * (yp - xp) / yp.size


def grad_ssim(x, y, cfg: SsimConfig | None = None) -> np.ndarray:
    values, grad = _channel_value_and_grad(x, y, cfg or SsimConfig(), "ssim")
    return grad / values.size


def grad_ssim_loss(x, y, cfg: SsimConfig | None = None) -> np.ndarray:
    return -grad_ssim(x, y, cfg)


def grad_lwssim_level(x, y, cfg: SsimConfig | None = None) -> np.ndarray:
    values, grad = _channel_value_and_grad(x, y, cfg or SsimConfig(), "lwssim")
    return grad / values.size


def _lwssim_value_and_grad(x, y, bank: LevelBank):
    total_v = None
    total_g = None
    for cfg, lam in bank.level_configs():
        values, grad = _channel_value_and_grad(x, y, cfg, "lwssim")
        total_v = lam * values if total_v is None else total_v + lam * values
        total_g = lam * grad if total_g is None else total_g + lam * grad
    channels = total_v.size
    return float((total_v / bank.size).mean()), total_g / (bank.size * channels)


def grad_lwssim(x, y, bank: LevelBank | None = None) -> np.ndarray:
    return _lwssim_value_and_grad(x, y, bank or LevelBank())[1]


def grad_lwssim_loss(x, y, bank: LevelBank | None = None) -> np.ndarray:
    return -0.5 * grad_lwssim(x, y, bank)


def value_and_grad(kind: str, x, y, config=None):
    """Loss value and its gradient w.r.t. ``y`` in one pass.

    ``kind`` is ``"mse"``, ``"ssim_loss"`` (``1 - ssim``, config an
    :class:`SsimConfig`) or ``"lwssim_loss"`` (config a :class:`LevelBank`).
    """
    if kind == "mse":
        xp, yp = _pair(x, y)
        diff = yp - xp
        return float(np.mean(diff ** 2)), 2.0 * diff / diff.size
    if kind == "ssim_loss":
        values, grad = _channel_value_and_grad(x, y, config or SsimConfig(), "ssim")
        return 1.0 - float(values.mean()), -grad / values.size
    if kind == "lwssim_loss":
        value, grad = _lwssim_value_and_grad(x, y, config or LevelBank())
        return 1.0 - value / 2.0, -0.5 * grad
    raise ValueError(f"unknown loss kind {kind!r}")


def grad_fd(metric: Callable, x, y, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of ``metric(x, y)`` w.r.t. ``y``.

    Perturbed images are passed unclamped, so ``metric`` must accept values
    slightly outside [0, 1].
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    xp, yp = _pair(x, y)
    work = np.array(yp, dtype=np.float64)
    grad = np.empty_like(work)
    flat = work.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = metric(xp, work)
        flat[i] = orig - h
        f_minus = metric(xp, work)
        flat[i] = orig
        out[i] = (f_plus - f_minus) / (2.0 * h)
    return grad
