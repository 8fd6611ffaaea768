"""Scene-level encoding: pillars -> encoder inputs -> linear layer(s) -> pillar features."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import GridConfig
from .hist import HistConfig, channel_names as hist_channel_names, hist_matrix
from .pfe import DECORATED_CHANNELS, DEFAULT_N_MAX, LinearLayer, decorated_rows, segment_max
from .pillarization import Pillar
from .quant import GridSearchConfig, LayerQuant, forward_pipeline, naive_ptq

ENCODERS = ("pfe", "pillarhist")


@dataclass(frozen=True)
class EncoderPipeline:
    """One encoder (its input construction plus first linear layer) followed by
    optional pillar-level head layers.

    For ``pfe`` the first layer runs per point and is max-pooled per pillar
    before any head layer; for ``pillarhist`` every layer is pillar-level.
    """

    encoder: str
    grid: GridConfig
    layers: tuple[LinearLayer, ...]
    n_max: int = DEFAULT_N_MAX
    hist: HistConfig = field(default_factory=HistConfig)

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if not self.layers:
            raise ValueError("pipeline needs at least one layer")
        if self.layers[0].in_dim != self.in_dim:
            raise ValueError(f"first layer takes {self.layers[0].in_dim} inputs, encoder produces {self.in_dim}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError("consecutive layer dimensions do not chain")

    @classmethod
    def seeded(cls, encoder: str, grid: GridConfig, seed: int, *, n_max: int = DEFAULT_N_MAX,
               hist: HistConfig | None = None, out_dim: int | None = None,
               head_dims: Sequence[int] = ()) -> "EncoderPipeline":
        """Layer ``k`` is ``LinearLayer.seeded(..., seed + k)``."""
        hist = hist or HistConfig()
        in_dim = len(DECORATED_CHANNELS) if encoder == "pfe" else hist.in_dim
        dims = [in_dim, out_dim or hist.out_dim, *head_dims]
        layers = tuple(LinearLayer.seeded(a, b, seed + k) for k, (a, b) in enumerate(zip(dims, dims[1:])))
        return cls(encoder, grid, layers, n_max, hist)

    @property
    def in_dim(self) -> int:
        return len(DECORATED_CHANNELS) if self.encoder == "pfe" else self.hist.in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def channel_names(self) -> list[str]:
        if self.encoder == "pfe":
            return list(DECORATED_CHANNELS)
        return hist_channel_names(self.hist.n_bins)

    def inputs(self, pillars: Sequence[Pillar]) -> tuple[np.ndarray, np.ndarray]:
        """Pre-projection inputs and row offsets (pillar ``k`` owns ``offsets[k]:offsets[k+1]``)."""
        if self.encoder == "pfe":
            return decorated_rows(pillars, self.grid, self.n_max)
        return hist_matrix(pillars, self.grid, self.hist), np.arange(len(pillars) + 1)

    def _forward_chunk(self, pillars: Sequence[Pillar], params) -> np.ndarray:
        rows, offsets = self.inputs(pillars)
        if rows.shape[0] == 0:
            return np.zeros((0, self.out_dim))
        if self.encoder == "pillarhist":
            return forward_pipeline(self.layers, params, rows)
        pool = lambda i, j, y: segment_max(y, offsets) if i == 0 else y
        out = forward_pipeline(self.layers, params, rows, between=pool)
        return segment_max(out, offsets) if len(self.layers) == 1 else out

    def forward(self, pillars: Sequence[Pillar], params: Sequence[LayerQuant] | None = None,
                threads: int = 1, chunk: int = 2048) -> np.ndarray:
        """``(M, D)`` features in pillar order; ``params=None`` runs in full precision.

        Pillars are processed in chunks, optionally on a thread pool. Every
        per-pillar result is independent of the chunking, so output bytes do
        not depend on ``threads``.
        """
        if not pillars:
            return np.zeros((0, self.out_dim))
        parts = [pillars[i:i + chunk] for i in range(0, len(pillars), chunk)]
        if threads > 1 and len(parts) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                outs = list(pool.map(lambda ps: self._forward_chunk(ps, params), parts))
        else:
            outs = [self._forward_chunk(ps, params) for ps in parts]
        return np.concatenate(outs)

    def calibrate(self, scenes: Sequence[Sequence[Pillar]], b: int = 8,
                  cfg: GridSearchConfig | None = None, *, calibrator: str = "gridsearch",
                  first_last_fp: bool = False) -> list[LayerQuant]:
        """Run :func:`naive_ptq` with one calibration batch per scene."""
        batches, offsets = [], []
        for pillars in scenes:
            rows, off = self.inputs(pillars)
            if rows.shape[0]:
                batches.append(rows)
                offsets.append(off)
        between = None
        if self.encoder == "pfe":
            between = lambda i, j, y: segment_max(y, offsets[j]) if i == 0 else y
        return naive_ptq(self.layers, batches, b, cfg, calibrator=calibrator,
                         first_last_fp=first_last_fp, between=between)
