"""Baseline pillar feature encoder: 10-channel point decoration, a point-wise
linear map and a masked max-pool over the points of each pillar."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import rng
from .core import GridConfig
from .pillarization import Pillar, PillarIndex

DECORATED_CHANNELS = ("x", "y", "z", "r", "x_m", "y_m", "z_m", "x_c", "y_c", "z_c")
DEFAULT_N_MAX = 32


@dataclass(frozen=True, eq=False)
class LinearLayer:
    """Dense layer ``y = W x + b`` with ``W`` of shape ``(out_dim, in_dim)``."""

    in_dim: int
    out_dim: int
    weights: np.ndarray
    bias: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.shape != (self.out_dim, self.in_dim):
            raise ValueError(f"weights shape {w.shape} != ({self.out_dim}, {self.in_dim})")
        if b.shape != (self.out_dim,):
            raise ValueError(f"bias shape {b.shape} != ({self.out_dim},)")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @classmethod
    def seeded(cls, in_dim: int, out_dim: int, seed: int) -> "LinearLayer":
        """Deterministic layer: ``W[row, col]`` is uniform in ``±1/sqrt(in_dim)``
        drawn from counter ``row * in_dim + col`` of the weight stream; bias is zero."""
        if in_dim < 1 or out_dim < 1:
            raise ValueError("layer dimensions must be positive")
        bound = 1.0 / math.sqrt(in_dim)
        counters = np.arange(out_dim * in_dim, dtype=np.uint64)
        w = rng.uniform(seed, rng.STREAM_WEIGHTS, counters, -bound, bound).reshape(out_dim, in_dim)
        return cls(in_dim, out_dim, w, np.zeros(out_dim), seed)

    def with_weights(self, weights: np.ndarray) -> "LinearLayer":
        return LinearLayer(self.in_dim, self.out_dim, weights, self.bias, self.seed)


class PillarFeature(NamedTuple):
    pillar_index: PillarIndex
    vector: np.ndarray


class DecoratedPillar(NamedTuple):
    pillar_index: PillarIndex
    features: np.ndarray  # (n_max, 10)
    mask: np.ndarray      # (n_max,) bool
    n_real: int


def linear_forward(layer: LinearLayer, rows: np.ndarray) -> np.ndarray:
    """Apply ``layer`` to every row of ``rows`` (shape ``(..., in_dim)``).

    Accumulates one input channel at a time in a fixed order instead of calling
    BLAS, so each output element is bit-identical no matter how many rows are
    processed together or how many threads are used.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} columns, layer expects {layer.in_dim}")
    return _accumulate(layer.weights, layer.bias, x)


def _accumulate(w: np.ndarray, bias: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape[:-1] + (w.shape[0],), dtype=np.float64)
    for k in range(w.shape[1]):
        out += x[..., k, None] * w[:, k]
    out += bias
    return out


def decorate(pillar: Pillar, grid: GridConfig, n_max: int = DEFAULT_N_MAX) -> DecoratedPillar:
    """Build the ``(n_max, 10)`` decorated point matrix of one pillar.

    Keeps the first ``n_max`` points in cloud order; mean offsets use the kept
    points only. Padding rows are zero and masked out.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    kept = pillar.points[:n_max]
    n = kept.shape[0]
    # fsum makes the mean exactly rounded, hence independent of point order
    mean = np.array([math.fsum(kept[:, c]) / n for c in range(3)])
    feats = np.zeros((n_max, 10), dtype=np.float64)
    feats[:n, 0:4] = kept
    feats[:n, 4:7] = kept[:, 0:3] - mean
    feats[:n, 7] = kept[:, 0] - pillar.x_center
    feats[:n, 8] = kept[:, 1] - pillar.y_center
    feats[:n, 9] = kept[:, 2] - grid.z_mid
    mask = np.zeros(n_max, dtype=bool)
    mask[:n] = True
    return DecoratedPillar(pillar.index, feats, mask, n)


def maxpool_points(outputs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Channel-wise max over the rows where ``mask`` is true."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("max-pool needs at least one real row")
    return np.max(np.asarray(outputs)[mask], axis=0)


def encode_pfe(pillar: Pillar, grid: GridConfig, layer: LinearLayer,
               n_max: int = DEFAULT_N_MAX) -> PillarFeature:
    if layer.in_dim != len(DECORATED_CHANNELS):
        raise ValueError(f"PFE layer must take {len(DECORATED_CHANNELS)} inputs, got {layer.in_dim}")
    dec = decorate(pillar, grid, n_max)
    out = linear_forward(layer, dec.features)
    return PillarFeature(pillar.index, maxpool_points(out, dec.mask))


def decorated_rows(pillars: Sequence[Pillar], grid: GridConfig,
                   n_max: int = DEFAULT_N_MAX) -> tuple[np.ndarray, np.ndarray]:
    """Stack the real (unpadded) decorated rows of all pillars.

    Returns ``(rows, offsets)`` where pillar ``k`` owns ``rows[offsets[k]:offsets[k+1]]``.
    """
    blocks, offsets = [], [0]
    for p in pillars:
        dec = decorate(p, grid, n_max)
        blocks.append(dec.features[:dec.n_real])
        offsets.append(offsets[-1] + dec.n_real)
    rows = np.concatenate(blocks) if blocks else np.zeros((0, 10))
    return rows, np.asarray(offsets, dtype=np.int64)


def segment_max(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Per-segment column max; segments are given by ``offsets`` (length M+1)."""
    if len(offsets) <= 1:
        return np.zeros((0,) + values.shape[1:])
    return np.maximum.reduceat(values, offsets[:-1], axis=0)
