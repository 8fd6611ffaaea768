"""Channel dynamic-range statistics of encoder inputs and analytic FLOPs counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import rng
from .core import GridConfig, PointCloud
from .quant import DegenerateRangeError, calibrate_maxmin, fake_quantize

SCENE_SEED = 20240417


class ChannelRange(NamedTuple):
    name: str
    min: float
    max: float
    width: float


@dataclass
class ChannelRangeReport:
    encoder_label: str
    per_channel: list[ChannelRange]
    width_ratio: float
    clip_mse_at_8bit: float        # per-channel max-min scales, MSE summed over channels
    tensor_mse_at_8bit: float      # one scale for the whole matrix, mean over elements
    tensor_rel_mse_at_8bit: float  # one scale; mean over channels of MSE_c / Var_c
    rows: int = 0

    def records(self) -> list[dict]:
        recs = [{"kind": "channel", "encoder": self.encoder_label, "channel": c.name,
                 "min": c.min, "max": c.max, "width": c.width} for c in self.per_channel]
        recs.append({"kind": "range_summary", "encoder": self.encoder_label, "rows": self.rows,
                     "channels": len(self.per_channel), "width_ratio": self.width_ratio,
                     "clip_mse_at_8bit": self.clip_mse_at_8bit,
                     "tensor_mse_at_8bit": self.tensor_mse_at_8bit,
                     "tensor_rel_mse_at_8bit": self.tensor_rel_mse_at_8bit})
        return recs


@dataclass
class FlopsReport:
    encoder_label: str
    per_pillar_flops: int
    scene_flops: int
    parameters: dict = field(default_factory=dict)
    aux_ops: int = 0  # max-pool comparisons or histogram increments, excluded from the flops

    def records(self) -> list[dict]:
        return [{"kind": "flops", "encoder": self.encoder_label,
                 "per_pillar_flops": self.per_pillar_flops, "scene_flops": self.scene_flops,
                 "aux_ops": self.aux_ops, "parameters": self.parameters}]


def _width_ratio(widths: np.ndarray) -> float:
    nz = widths[widths > 0]
    if nz.size == 0:
        return 1.0
    return float(nz.max() / nz.min())


def range_report(features, channel_names: Sequence[str], encoder_label: str = "",
                 bits: int = 8) -> ChannelRangeReport:
    """Per-channel min/max/width over all rows of the encoder inputs.

    ``features`` is a sequence of per-pillar ``(k, C)`` matrices or one stacked
    matrix. Zero-width channels are ignored by the width ratio.
    """
    if isinstance(features, np.ndarray):
        x = np.asarray(features, dtype=np.float64)
    else:
        x = np.concatenate([np.asarray(f, dtype=np.float64).reshape(-1, len(channel_names))
                            for f in features])
    if x.ndim != 2 or x.shape[1] != len(channel_names):
        raise ValueError(f"expected (rows, {len(channel_names)}) features, got {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("no feature rows")
    lo, hi = x.min(axis=0), x.max(axis=0)
    widths = hi - lo
    per_channel = [ChannelRange(n, float(a), float(b), float(w))
                   for n, a, b, w in zip(channel_names, lo, hi, widths)]

    clip = 0.0
    for c in range(x.shape[1]):
        try:
            p = calibrate_maxmin(x[:, c], bits)
        except DegenerateRangeError:
            continue  # all-zero channel quantizes exactly
        clip += float(np.mean((x[:, c] - fake_quantize(x[:, c], p)) ** 2))

    try:
        err2 = (x - fake_quantize(x, calibrate_maxmin(x, bits))) ** 2
    except DegenerateRangeError:
        err2 = np.zeros_like(x)
    var = x.var(axis=0)
    live = var > 0
    rel = float(np.mean(err2.mean(axis=0)[live] / var[live])) if live.any() else 0.0

    return ChannelRangeReport(encoder_label, per_channel, _width_ratio(widths), clip,
                              float(err2.mean()), rel, rows=x.shape[0])


def flops_pfe(n_max: int, c_in: int, d: int) -> int:
    """Matmul FLOPs per pillar of the point-wise layer (1 MAC = 2 FLOPs)."""
    return 2 * n_max * c_in * d


def maxpool_comparisons(n_max: int, d: int) -> int:
    return n_max * d


def flops_pillarhist(b_bins: int, d: int) -> int:
    """Matmul FLOPs per pillar of the projection; independent of the point count."""
    return 2 * (2 * b_bins + 2) * d


def flops_report_pfe(n_pillars: int, n_max: int = 32, c_in: int = 10, d: int = 64) -> FlopsReport:
    per = flops_pfe(n_max, c_in, d)
    return FlopsReport("pfe", per, per * n_pillars,
                       {"n_max": n_max, "c_in": c_in, "d": d, "pillars": n_pillars},
                       aux_ops=maxpool_comparisons(n_max, d) * n_pillars)


def flops_report_pillarhist(n_pillars: int, n_points: int, b_bins: int = 64,
                            d: int = 64) -> FlopsReport:
    per = flops_pillarhist(b_bins, d)
    # one count and one intensity add per point, one divide per bin
    aux = 2 * n_points + b_bins * n_pillars
    return FlopsReport("pillarhist", per, per * n_pillars,
                       {"b_bins": b_bins, "c_in": 2 * b_bins + 2, "d": d, "pillars": n_pillars},
                       aux_ops=aux)


def synthetic_scene(grid: GridConfig, n_points: int, seed: int = SCENE_SEED,
                    r_max: float = 255.0) -> PointCloud:
    """Points uniform over the grid box with intensity uniform in ``[0, r_max]``.

    Coordinates are rounded to float32 (as a sensor file would store them) and
    any that round up onto an upper bound are pulled back inside.
    """
    counters = np.arange(4 * n_points, dtype=np.uint64).reshape(n_points, 4)
    u = rng.uniform01(seed, rng.STREAM_SCENE, counters)
    lo = np.array([grid.x_min, grid.y_min, grid.z_min, 0.0])
    hi = np.array([grid.x_max, grid.y_max, grid.z_max, r_max])
    pts = (lo + u * (hi - lo)).astype(np.float32)
    for c in range(3):
        lo32, hi32 = np.float32(lo[c]), np.float32(hi[c])
        if lo32 < lo[c]:
            lo32 = np.nextafter(lo32, np.float32(np.inf))
        if hi32 >= hi[c]:
            hi32 = np.nextafter(hi32, np.float32(-np.inf))
        np.clip(pts[:, c], lo32, hi32, out=pts[:, c])
    return PointCloud(pts.astype(np.float64), source_id=f"synthetic:{seed}")
