"""SSIM, level-weighted SSIM (LWSSIM) and pixel-error baselines.

Every structural metric follows the same evaluation order: per channel and
per window size, build the window statistics, evaluate the per-window score,
mean-pool over windows; then weight the levels; then average the channels.

The per-window scores are

    ssim    = l**alpha * c**beta * s**gamma
    lwssim  = l**alpha + c**beta * s**gamma

with luminance ``l``, contrast ``c`` and structure ``s`` comparisons built
from window means, standard deviations and covariance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .image_io import as_planes
from .window_stats import WindowStatsMaps, check_window, window_stats

__all__ = [
    "ExponentDomainError",
    "SsimConfig",
    "LevelBank",
    "MetricReport",
    "luminance_map",
    "contrast_map",
    "structure_map",
    "ssim_map",
    "lwssim_map",
    "ssim",
    "lwssim_level",
    "lwssim",
    "lwssim_loss",
    "ssim_loss",
    "mse",
    "mae",
    "metric_report",
    "DEFAULT_LEVELS",
]

DEFAULT_LEVELS = ((3, 1.0), (7, 1.0), (11, 1.0))


class ExponentDomainError(ValueError):
    """A non-integer exponent was applied to a negative comparison value."""


@dataclass(frozen=True)
class SsimConfig:
    """Window size, stabilizers and exponents for one SSIM evaluation.

    ``c3`` defaults to ``c2 / 2``.
    """

    xi: int = 7
    c1: float = 1e-4
    c2: float = 9e-4
    c3: float | None = None
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.c3 is None:
            object.__setattr__(self, "c3", self.c2 / 2.0)
        if isinstance(self.xi, bool) or int(self.xi) != self.xi or self.xi < 2:
            raise ValueError(f"window size must be an integer >= 2, got {self.xi!r}")
        object.__setattr__(self, "xi", int(self.xi))
        for name in ("c1", "c2", "c3"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {value}")
        for name in ("alpha", "beta", "gamma"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def with_window(self, xi: int) -> "SsimConfig":
        return dataclasses.replace(self, xi=xi)

    @property
    def unit_exponents(self) -> bool:
        return self.alpha == 1.0 and self.beta == 1.0 and self.gamma == 1.0


@dataclass(frozen=True)
class LevelBank:
    """Window sizes ``xi_i`` with weights ``lambda_i``.

    The weights must satisfy ``mean(lambda_i) == 1`` so the aggregate is a
    convex combination of the level scores. Use :meth:`normalized` to
    rescale arbitrary nonnegative weights.
    """

    levels: tuple[tuple[int, float], ...] = DEFAULT_LEVELS
    config: SsimConfig = field(default_factory=SsimConfig)

    def __post_init__(self):
        levels = tuple((int(xi), float(lam)) for xi, lam in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("a level bank needs at least one level")
        sizes = [xi for xi, _ in levels]
        if any(xi < 2 for xi in sizes):
            raise ValueError("window sizes must be >= 2")
        if any(b <= a for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"window sizes must be strictly increasing, got {sizes}")
        weights = [lam for _, lam in levels]
        if any(not np.isfinite(lam) or lam < 0 for lam in weights):
            raise ValueError("level weights must be finite and nonnegative")
        if abs(sum(weights) / len(weights) - 1.0) > 1e-9:
            raise ValueError(f"level weights must average to 1, got {weights}")

    @classmethod
    def normalized(cls, levels, config: SsimConfig | None = None) -> tuple["LevelBank", bool]:
        """Rescale weights to average 1; also report whether rescaling happened."""
        levels = sorted((int(xi), float(lam)) for xi, lam in levels)
        if not levels:
            raise ValueError("a level bank needs at least one level")
        total = sum(lam for _, lam in levels)
        if total <= 0:
            raise ValueError("level weights must not all be zero")
        scale = len(levels) / total
        rescaled = abs(scale - 1.0) > 1e-12
        if rescaled:
            levels = [(xi, lam * scale) for xi, lam in levels]
        return cls(tuple(levels), config or SsimConfig()), rescaled

    def fitted(self, m: int, n: int) -> "LevelBank":
        """Drop levels whose window exceeds ``min(m, n)`` and renormalize."""
        kept = [(xi, lam) for xi, lam in self.levels if xi <= min(m, n)]
        if len(kept) == len(self.levels):
            return self
        bank, _ = LevelBank.normalized(kept, self.config)
        return bank

    @property
    def size(self) -> int:
        return len(self.levels)

    def level_configs(self):
        for xi, lam in self.levels:
            yield self.config.with_window(xi), lam


# --------------------------------------------------------------------------
# Per-window comparison maps
# --------------------------------------------------------------------------

def luminance_map(stats: WindowStatsMaps, c1: float) -> np.ndarray:
    mx, my = stats.mu_x, stats.mu_y
    return (2.0 * mx * my + c1) / (mx * mx + my * my + c1)


def contrast_map(stats: WindowStatsMaps, c2: float) -> np.ndarray:
    # sqrt(vx * vy) keeps the identity case exact: sqrt(v * v) == v
    vx, vy = stats.var_x, stats.var_y
    return (2.0 * np.sqrt(vx * vy) + c2) / (vx + vy + c2)


def structure_map(stats: WindowStatsMaps, c3: float) -> np.ndarray:
    return (stats.cov_xy + c3) / (np.sqrt(stats.var_x * stats.var_y) + c3)


def _power(base: np.ndarray, exponent: float, name: str) -> np.ndarray:
    if exponent == 1.0:
        return base
    if float(exponent).is_integer():
        return base ** int(exponent)
    if np.any(base < 0):
        raise ExponentDomainError(
            f"{name} map has negative entries; non-integer exponent {exponent} is undefined"
        )
    return base ** exponent


def _terms(stats: WindowStatsMaps, cfg: SsimConfig):
    lum = _power(luminance_map(stats, cfg.c1), cfg.alpha, "luminance")
    con = _power(contrast_map(stats, cfg.c2), cfg.beta, "contrast")
    struct = _power(structure_map(stats, cfg.c3), cfg.gamma, "structure")
    return lum, con, struct


def ssim_map(stats: WindowStatsMaps, cfg: SsimConfig) -> np.ndarray:
    lum, con, struct = _terms(stats, cfg)
    return lum * con * struct


def lwssim_map(stats: WindowStatsMaps, cfg: SsimConfig) -> np.ndarray:
    lum, con, struct = _terms(stats, cfg)
    return lum + con * struct


_SCORE_MAPS = {"ssim": ssim_map, "lwssim": lwssim_map}


# --------------------------------------------------------------------------
# Pooled scalars
# --------------------------------------------------------------------------

def _pair(x, y):
    xp = as_planes(x)
    yp = as_planes(y)
    if xp.shape != yp.shape:
        raise ValueError(f"image shapes differ: {xp.shape} vs {yp.shape}")
    return xp, yp


def channel_scores(x, y, cfg: SsimConfig, kind: str = "ssim") -> np.ndarray:
    """Window-pooled score of each channel at window size ``cfg.xi``."""
    xp, yp = _pair(x, y)
    check_window(xp.shape[1:], cfg.xi)
    score_map = _SCORE_MAPS[kind]
    return np.array([
        score_map(window_stats(xc, yc, cfg.xi), cfg).mean() for xc, yc in zip(xp, yp)
    ])


def ssim(x, y, cfg: SsimConfig | None = None) -> float:
    return float(channel_scores(x, y, cfg or SsimConfig(), "ssim").mean())


def ssim_loss(x, y, cfg: SsimConfig | None = None) -> float:
    return 1.0 - ssim(x, y, cfg)


def lwssim_level(x, y, cfg: SsimConfig | None = None) -> float:
    """Level-weighted score at the single window size ``cfg.xi``."""
    return float(channel_scores(x, y, cfg or SsimConfig(), "lwssim").mean())


def _weighted_levels(per_level: np.ndarray, bank: LevelBank) -> np.ndarray:
    """Combine ``(levels, channels)`` scores into per-channel aggregates."""
    acc = np.zeros(per_level.shape[1])
    for (_, lam), row in zip(bank.levels, per_level):
        acc = acc + lam * row
    return acc / bank.size


def _level_matrix(xp, yp, bank: LevelBank) -> np.ndarray:
    m, n = xp.shape[1:]
    for xi, _ in bank.levels:
        check_window((m, n), xi)
    return np.array([channel_scores(xp, yp, cfg, "lwssim") for cfg, _ in bank.level_configs()])


def lwssim(x, y, bank: LevelBank | None = None) -> float:
    """``(1/I) * sum_i lambda_i * lwssim_level(x, y; xi_i)``, channel averaged."""
    bank = bank or LevelBank()
    xp, yp = _pair(x, y)
    return float(_weighted_levels(_level_matrix(xp, yp, bank), bank).mean())


def lwssim_loss(x, y, bank: LevelBank | None = None) -> float:
    """``1 - lwssim / 2``: zero at ``y == x``, at most 1.5."""
    return 1.0 - lwssim(x, y, bank) / 2.0


def mse(x, y) -> float:
    xp, yp = _pair(x, y)
    return float(np.mean((yp - xp) ** 2))


def mae(x, y) -> float:
    xp, yp = _pair(x, y)
    return float(np.mean(np.abs(yp - xp)))


# --------------------------------------------------------------------------
# Report
# --------------------------------------------------------------------------

@dataclass
class MetricReport:
    ssim: float
    lwssim: float
    lwssim_loss: float
    mse: float
    mae: float
    levels: list[dict]
    channels: list[dict]
    config: dict

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def metric_report(x, y, cfg: SsimConfig | None = None, bank: LevelBank | None = None) -> MetricReport:
    """All metrics for a pair, with per-level and per-channel components.

    Aggregates are recomputable from the parts: ``ssim`` and ``mse``/``mae``
    are channel means, each level ``score`` is the channel mean of that
    level, and ``lwssim`` is the weighted level mean.
    """
    cfg = cfg or SsimConfig()
    bank = bank or LevelBank(config=cfg)
    xp, yp = _pair(x, y)
    ssim_c = channel_scores(xp, yp, cfg, "ssim")
    per_level = _level_matrix(xp, yp, bank)
    lw_c = _weighted_levels(per_level, bank)
    mse_c = np.mean((yp - xp) ** 2, axis=(1, 2))
    mae_c = np.mean(np.abs(yp - xp), axis=(1, 2))
    lw = float(lw_c.mean())
    channels = [
        {
            "index": i,
            "ssim": float(ssim_c[i]),
            "lwssim": float(lw_c[i]),
            "mse": float(mse_c[i]),
            "mae": float(mae_c[i]),
            "levels": [float(v) for v in per_level[:, i]],
        }
        for i in range(xp.shape[0])
    ]
    return MetricReport(
        ssim=float(ssim_c.mean()),
        lwssim=lw,
        lwssim_loss=1.0 - lw / 2.0,
        mse=float(mse_c.mean()),
        mae=float(mae_c.mean()),
        levels=[
            {"xi": xi, "lambda": lam, "score": float(per_level[j].mean())}
            for j, (xi, lam) in enumerate(bank.levels)
        ],
        channels=channels,
        config={
            "ssim_xi": cfg.xi,
            "c1": cfg.c1,
            "c2": cfg.c2,
            "c3": cfg.c3,
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "gamma": cfg.gamma,
        },
    )
