"""Run configuration loaded from a JSON file, with command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

from .core import GridConfig
from .hist import HistConfig
from .pfe import DEFAULT_N_MAX
from .pipeline import ENCODERS, EncoderPipeline
from .quant import GridSearchConfig

PROFILES = {
    "nuscenes": (GridConfig.nuscenes, 255.0),
    "kitti": (GridConfig.kitti, 1.0),
}
CALIBRATORS = ("maxmin", "gridsearch")


@dataclass(frozen=True)
class QuantConfig:
    bits: int = 8
    calibrator: str = "gridsearch"
    t_bins: int = 100
    first_last_fp: bool = False

    def __post_init__(self):
        if self.calibrator not in CALIBRATORS:
            raise ValueError(f"calibrator must be one of {CALIBRATORS}")
        if self.bits < 2:
            raise ValueError("bits must be >= 2")
        GridSearchConfig(self.t_bins)

    def search(self) -> GridSearchConfig:
        return GridSearchConfig(self.t_bins)


@dataclass(frozen=True)
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig.kitti)
    encoder: str = "pillarhist"
    n_max: int = DEFAULT_N_MAX
    hist: HistConfig = field(default_factory=HistConfig)
    head_dims: tuple[int, ...] = ()
    seed: int = 0
    threads: int = 1
    quant: QuantConfig = field(default_factory=QuantConfig)
    paths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"encoder must be one of {ENCODERS}")
        if self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        profile = d.pop("profile", None)
        grid_factory, scale = PROFILES[profile] if profile else (GridConfig.kitti, 1.0)
        grid = GridConfig.from_dict(d.pop("grid")) if "grid" in d else grid_factory()
        hist_d = {"intensity_scale": scale, **d.pop("hist", {})}
        known = {"encoder", "n_max", "seed", "threads", "paths", "head_dims", "quant"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(grid=grid, hist=HistConfig(**hist_d),
                   encoder=d.get("encoder", "pillarhist"), n_max=int(d.get("n_max", DEFAULT_N_MAX)),
                   head_dims=tuple(int(x) for x in d.get("head_dims", ())),
                   seed=int(d.get("seed", 0)), threads=int(d.get("threads", 1)),
                   quant=QuantConfig(**d.get("quant", {})), paths=dict(d.get("paths", {})))

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"grid": self.grid.to_dict(), "encoder": self.encoder, "n_max": self.n_max,
                "hist": asdict(self.hist), "head_dims": list(self.head_dims), "seed": self.seed,
                "threads": self.threads, "quant": asdict(self.quant), "paths": dict(self.paths)}

    def with_overrides(self, **kw) -> "RunConfig":
        quant_kw = {k: kw.pop(k) for k in ("bits", "calibrator", "t_bins") if kw.get(k) is not None}
        kw = {k: v for k, v in kw.items() if v is not None}
        cfg = replace(self, **kw)
        if quant_kw:
            cfg = replace(cfg, quant=replace(cfg.quant, **quant_kw))
        return cfg

    def pipeline(self, encoder: str | None = None) -> EncoderPipeline:
        return EncoderPipeline.seeded(encoder or self.encoder, self.grid, self.seed, n_max=self.n_max,
                                      hist=self.hist, head_dims=self.head_dims)
