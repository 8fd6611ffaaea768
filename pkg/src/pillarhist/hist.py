"""PillarHist: per-pillar height histogram, per-bin mean intensity and the
pillar center, projected to ``D`` channels by one pillar-level linear layer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import GridConfig, cell_indices
from .pfe import LinearLayer, PillarFeature, linear_forward
from .pillarization import Pillar, PillarIndex

DEFAULT_BINS = 64
DEFAULT_OUT_DIM = 64


@dataclass(frozen=True)
class HistConfig:
    n_bins: int = DEFAULT_BINS
    out_dim: int = DEFAULT_OUT_DIM
    intensity_scale: float = 1.0

    def __post_init__(self):
        if self.n_bins < 1 or self.out_dim < 1:
            raise ValueError("n_bins and out_dim must be >= 1")
        if not self.intensity_scale > 0:
            raise ValueError("intensity_scale must be positive")

    @property
    def in_dim(self) -> int:
        return 2 * self.n_bins + 2


class HistFeature(NamedTuple):
    pillar_index: PillarIndex
    hp: np.ndarray  # (B,) int64 point counts
    hi: np.ndarray  # (B,) float64 mean (scaled) intensity, 0 for empty bins
    x_center: float
    y_center: float

    def vector(self) -> np.ndarray:
        """``[hp | hi | x_center | y_center]`` as float64, length ``2B + 2``."""
        return np.concatenate([self.hp.astype(np.float64), self.hi,
                               [self.x_center, self.y_center]])


def channel_names(n_bins: int) -> list[str]:
    return ([f"hp{b}" for b in range(n_bins)] + [f"hi{b}" for b in range(n_bins)]
            + ["x_center", "y_center"])


def bin_indices(z: np.ndarray, grid: GridConfig, n_bins: int) -> np.ndarray:
    return cell_indices(z, grid.z_min, grid.height / n_bins, n_bins)


def hist_encode(pillar: Pillar, grid: GridConfig, cfg: HistConfig) -> HistFeature:
    n = pillar.n_points
    if n < 1:
        raise ValueError("cannot encode an empty pillar")
    B = cfg.n_bins
    bins = bin_indices(pillar.points[:, 2], grid, B)
    hp = np.bincount(bins, minlength=B).astype(np.int64)
    hi = np.zeros(B, dtype=np.float64)
    r = pillar.points[:, 3]
    for b in np.flatnonzero(hp):
        # exactly rounded sum: the same for any point order
        hi[b] = math.fsum(r[bins == b]) / (hp[b] * cfg.intensity_scale)
    return HistFeature(pillar.index, hp, hi, pillar.x_center, pillar.y_center)


def hist_project(feat: HistFeature, layer: LinearLayer) -> PillarFeature:
    v = feat.vector()
    if layer.in_dim != v.size:
        raise ValueError(f"projection expects {layer.in_dim} inputs, histogram has {v.size}")
    return PillarFeature(feat.pillar_index, linear_forward(layer, v[None, :])[0])


def encode_pillarhist(pillar: Pillar, grid: GridConfig, cfg: HistConfig,
                      layer: LinearLayer) -> PillarFeature:
    return hist_project(hist_encode(pillar, grid, cfg), layer)


def hist_matrix(pillars: Sequence[Pillar], grid: GridConfig, cfg: HistConfig) -> np.ndarray:
    """Stacked ``(M, 2B + 2)`` pre-projection inputs in pillar order."""
    if not pillars:
        return np.zeros((0, cfg.in_dim))
    return np.stack([hist_encode(p, grid, cfg).vector() for p in pillars])
