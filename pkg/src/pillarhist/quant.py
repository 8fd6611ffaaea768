"""Uniform signed quantization, scale calibration (max-min and grid search),
rounding/clipping error split and layer-sequential post-training quantization.

Quantization is simulated: tensors are quantized and dequantized back to
float before the float matmul runs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .pfe import LinearLayer, _accumulate

# slack (in units of one quantization step) when deciding whether a value sits
# beyond the half-step rounding band of the clamp bounds
_CLIP_EPS = 1e-9


class DegenerateRangeError(ValueError):
    """Calibration tensor has no nonzero magnitude."""


@dataclass(frozen=True)
class QuantParams:
    s: float
    z: int = 0
    b: int = 8
    mode: str = "symmetric"
    label: str = ""

    def __post_init__(self):
        if not (self.s > 0 and np.isfinite(self.s)):
            raise ValueError(f"scale must be positive and finite, got {self.s}")
        if self.b < 2:
            raise ValueError("bit-width must be >= 2")
        if self.mode == "symmetric" and self.z != 0:
            raise ValueError("symmetric quantization requires zero-point 0")

    @property
    def q_min(self) -> int:
        return -(2 ** (self.b - 1))

    @property
    def q_max(self) -> int:
        return 2 ** (self.b - 1) - 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["s"] = float(self.s)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(s=float(d["s"]), z=int(d.get("z", 0)), b=int(d.get("b", 8)),
                   mode=d.get("mode", "symmetric"), label=d.get("label", ""))


class QuantizedTensor(NamedTuple):
    values: np.ndarray  # int64
    params: QuantParams
    shape: tuple


@dataclass(frozen=True)
class GridSearchConfig:
    """Candidate clipping thresholds ``t_i`` span ``[alpha, beta] * max|x|``.

    With the default ``alpha=None`` the sweep is ``max|x| * i / T`` for
    ``i = 1..T`` (i.e. ``alpha = 1/T, beta = 1``).
    """

    t_bins: int = 100
    alpha: float | None = None
    beta: float = 1.0

    def __post_init__(self):
        if self.t_bins < 1:
            raise ValueError("t_bins must be >= 1")
        if not (0 < self.lower <= self.beta):
            raise ValueError("need 0 < alpha <= beta")

    @property
    def lower(self) -> float:
        return 1.0 / self.t_bins if self.alpha is None else self.alpha


class ErrorDecomposition(NamedTuple):
    rounding_mse: float
    clipping_mse: float
    total_mse: float


def quantize(x, p: QuantParams) -> QuantizedTensor:
    """Round-half-to-even of ``x / s``, shifted by ``z`` and clamped to ``[q_min, q_max]``."""
    x = np.asarray(x, dtype=np.float64)
    q = np.clip(np.rint(x / p.s) + p.z, p.q_min, p.q_max).astype(np.int64)
    return QuantizedTensor(q, p, x.shape)


def dequantize(q: QuantizedTensor) -> np.ndarray:
    return ((q.values - q.params.z) * q.params.s).reshape(q.shape)


def fake_quantize(x, p: QuantParams) -> np.ndarray:
    return dequantize(quantize(x, p))


def scale_from_range(x_min: float, x_max: float, b: int) -> float:
    if not x_max > x_min:
        raise DegenerateRangeError(f"empty range [{x_min}, {x_max}]")
    return (x_max - x_min) / (2 ** b - 1)


def _absmax(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    m = float(np.max(np.abs(x))) if x.size else 0.0
    if m == 0.0:
        raise DegenerateRangeError("tensor is empty or all zero")
    return m


def calibrate_maxmin(x, b: int = 8, label: str = "") -> QuantParams:
    m = _absmax(x)
    return QuantParams(scale_from_range(-m, m, b), 0, b, "symmetric", label)


def gridsearch_thresholds(absmax: float, cfg: GridSearchConfig) -> np.ndarray:
    T = cfg.t_bins
    if cfg.alpha is None and cfg.beta == 1.0:
        return absmax * np.arange(1, T + 1) / T
    return np.linspace(cfg.lower * absmax, cfg.beta * absmax, T)


def quant_sse(x: np.ndarray, s: float, b: int) -> float:
    """Sum of squared fake-quantization errors of ``x`` under symmetric scale ``s``."""
    q_lo, q_hi = -(2 ** (b - 1)), 2 ** (b - 1) - 1
    xhat = np.clip(np.rint(x / s), q_lo, q_hi) * s
    return float(np.sum((x - xhat) ** 2))


def calibrate_gridsearch(x, b: int = 8, cfg: GridSearchConfig | None = None,
                         label: str = "") -> QuantParams:
    """Symmetric scale minimizing the squared quantization error over a threshold sweep.

    Each candidate threshold ``t`` gives ``s = 2t / (2**b - 1)``. Ties go to the
    larger threshold.
    """
    cfg = cfg or GridSearchConfig()
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    m = _absmax(x)
    best_s, best_loss = None, np.inf
    for t in gridsearch_thresholds(m, cfg)[::-1]:
        s = scale_from_range(-t, t, b)
        loss = quant_sse(x, s, b)
        if loss < best_loss:
            best_s, best_loss = s, loss
    return QuantParams(best_s, 0, b, "symmetric", label)


def calibrate(x, b: int, calibrator: str = "gridsearch", cfg: GridSearchConfig | None = None,
              label: str = "") -> QuantParams:
    if calibrator == "maxmin":
        return calibrate_maxmin(x, b, label)
    if calibrator == "gridsearch":
        return calibrate_gridsearch(x, b, cfg, label)
    raise ValueError(f"unknown calibrator {calibrator!r}")


def clipped_mask(x, p: QuantParams) -> np.ndarray:
    """Elements farther than half a step outside the representable grid.

    Their error exceeds the ``s/2`` rounding bound. A value exactly half a step
    above ``q_max * s`` rounds (ties-to-even) past ``q_max`` but its error is
    still ``s/2``, so it counts as rounding error.
    """
    u = np.asarray(x, dtype=np.float64) / p.s + p.z
    return (u > p.q_max + 0.5 + _CLIP_EPS) | (u < p.q_min - 0.5 - _CLIP_EPS)


def error_decompose(x, p: QuantParams) -> ErrorDecomposition:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size == 0:
        return ErrorDecomposition(0.0, 0.0, 0.0)
    err2 = (x - fake_quantize(x, p)) ** 2
    clip = clipped_mask(x, p)
    n = x.size
    rounding = float(np.sum(err2[~clip])) / n
    clipping = float(np.sum(err2[clip])) / n
    return ErrorDecomposition(rounding, clipping, float(np.sum(err2)) / n)


def quantized_linear_forward(layer: LinearLayer, w_params: QuantParams | None,
                             a_params: QuantParams | None, rows) -> np.ndarray:
    """Linear layer with fake-quantized weights and inputs; bias stays float.

    ``None`` for either params leaves that operand in full precision.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(f"input has {x.shape[-1]} columns, layer expects {layer.in_dim}")
    w = layer.weights if w_params is None else fake_quantize(layer.weights, w_params)
    xq = x if a_params is None else fake_quantize(x, a_params)
    return _accumulate(w, layer.bias, xq)


class LayerQuant(NamedTuple):
    weight: QuantParams | None
    activation: QuantParams | None

    @property
    def full_precision(self) -> bool:
        return self.weight is None and self.activation is None


# called between layer i and layer i+1 as between(i, batch_index, outputs)
Transition = Callable[[int, int, np.ndarray], np.ndarray]


def forward_pipeline(layers: Sequence[LinearLayer], params: Sequence[LayerQuant] | None,
                     inputs: np.ndarray, batch_index: int = 0,
                     between: Transition | None = None) -> np.ndarray:
    """Run ``inputs`` through ``layers``; ``params=None`` is the float reference."""
    x = inputs
    for i, layer in enumerate(layers):
        if params is None:
            x = quantized_linear_forward(layer, None, None, x)
        else:
            x = quantized_linear_forward(layer, params[i].weight, params[i].activation, x)
        if between is not None and i < len(layers) - 1:
            x = between(i, batch_index, x)
    return x


def naive_ptq(layers: Sequence[LinearLayer], calibration_batches: Sequence[np.ndarray],
              b: int = 8, cfg: GridSearchConfig | None = None, *,
              calibrator: str = "gridsearch", first_last_fp: bool = False,
              between: Transition | None = None) -> list[LayerQuant]:
    """Layer-sequential post-training quantization.

    Weight params for every layer are calibrated first from the weights alone.
    Then, layer by layer, activation params are calibrated on that layer's
    inputs, which are the quantized outputs of the already-quantized layers
    before it (all calibration batches pooled). With ``first_last_fp`` the
    first and last layers are left in full precision.
    """
    if not layers:
        raise ValueError("no layers to quantize")
    if not calibration_batches:
        raise ValueError("empty calibration set")
    n = len(layers)
    exempt = {0, n - 1} if first_last_fp else set()

    weight_params = [None if i in exempt else
                     calibrate(layer.weights, b, calibrator, cfg, label=f"layer{i}.weight")
                     for i, layer in enumerate(layers)]

    acts = [np.asarray(x, dtype=np.float64) for x in calibration_batches]
    for x in acts:
        if x.shape[-1] != layers[0].in_dim:
            raise ValueError(f"calibration batch has {x.shape[-1]} columns, layer 0 expects {layers[0].in_dim}")

    result: list[LayerQuant] = []
    for i, layer in enumerate(layers):
        if i in exempt:
            a = None
        else:
            pooled = np.concatenate([x.reshape(-1) for x in acts])
            a = calibrate(pooled, b, calibrator, cfg, label=f"layer{i}.input")
        result.append(LayerQuant(weight_params[i], a))
        if i < n - 1:
            outs = [quantized_linear_forward(layer, weight_params[i], a, x) for x in acts]
            if between is not None:
                outs = [between(i, j, y) for j, y in enumerate(outs)]
            acts = outs
    return result


def dump_params(params: Sequence[LayerQuant], meta: dict | None = None) -> str:
    doc = {"meta": meta or {},
           "layers": [{"weight": None if lq.weight is None else lq.weight.to_dict(),
                       "activation": None if lq.activation is None else lq.activation.to_dict()}
                      for lq in params]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_params(text: str) -> tuple[list[LayerQuant], dict]:
    doc = json.loads(text)
    layers = []
    for rec in doc["layers"]:
        w = rec.get("weight")
        a = rec.get("activation")
        layers.append(LayerQuant(None if w is None else QuantParams.from_dict(w),
                                 None if a is None else QuantParams.from_dict(a)))
    return layers, doc.get("meta", {})
