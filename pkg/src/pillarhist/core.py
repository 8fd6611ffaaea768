"""Point, point-cloud and grid types plus point-cloud file I/O."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

_RECORD = np.dtype("<f4")
RECORD_BYTES = 16


class MalformedFileError(ValueError):
    """Input file does not follow the expected point format."""


class MalformedValueError(MalformedFileError):
    """A record decoded to a non-finite value."""


class Point(NamedTuple):
    x: float
    y: float
    z: float
    r: float


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Ordered LiDAR points stored as an ``(N, 4)`` float64 array (x, y, z, r).

    The array is read-only; the order of rows is the order of the source.
    """

    points: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 4)
        if not np.isfinite(pts).all():
            bad = int(np.flatnonzero(~np.isfinite(pts).all(axis=1))[0])
            raise MalformedValueError(f"non-finite value in point {bad}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, points, source_id: str = "") -> "PointCloud":
        return cls(np.array([tuple(p) for p in points], dtype=np.float64).reshape(-1, 4), source_id)

    def __len__(self) -> int:
        return self.points.shape[0]

    def __iter__(self) -> Iterator[Point]:
        for row in self.points:
            yield Point(*map(float, row))

    def __getitem__(self, i: int) -> Point:
        return Point(*map(float, self.points[i]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointCloud):
            return NotImplemented
        return np.array_equal(self.points, other.points)

    __hash__ = None


@dataclass(frozen=True)
class GridConfig:
    """Axis-aligned scene range and the XY pillar size, all in meters."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z_min: float
    z_max: float
    dx: float
    dy: float

    def __post_init__(self):
        vals = [self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max, self.dx, self.dy]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("grid values must be finite")
        if not (self.x_min < self.x_max and self.y_min < self.y_max and self.z_min < self.z_max):
            raise ValueError("grid ranges must satisfy min < max on every axis")
        if self.dx <= 0 or self.dy <= 0:
            raise ValueError("pillar sizes dx, dy must be positive")

    @property
    def height(self) -> float:
        return self.z_max - self.z_min

    @property
    def nx(self) -> int:
        return math.ceil((self.x_max - self.x_min) / self.dx)

    @property
    def ny(self) -> int:
        return math.ceil((self.y_max - self.y_min) / self.dy)

    @property
    def z_mid(self) -> float:
        return (self.z_min + self.z_max) / 2.0

    @classmethod
    def nuscenes(cls) -> "GridConfig":
        return cls(-51.2, 51.2, -51.2, 51.2, -5.0, 3.0, 0.2, 0.2)

    @classmethod
    def kitti(cls) -> "GridConfig":
        return cls(0.0, 69.12, -39.68, 39.68, -3.0, 1.0, 0.16, 0.16)

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("x_min", "x_max", "y_min", "y_max", "z_min", "z_max", "dx", "dy")}

    @classmethod
    def from_dict(cls, d: dict) -> "GridConfig":
        return cls(**{k: float(v) for k, v in d.items()})


def cell_indices(v, lo: float, d: float, n: int) -> np.ndarray:
    """Index ``k`` of the cell ``[lo + k d, lo + (k+1) d)`` holding each value, clamped to ``[0, n-1]``.

    The floor of ``(v - lo) / d`` can land one cell off when ``v`` sits within
    rounding of an edge, so it is corrected against the edges as computed.
    """
    v = np.asarray(v, dtype=np.float64)
    k = np.clip(np.floor((v - lo) / d).astype(np.int64), 0, n - 1)
    k -= (v < lo + k * d) & (k > 0)
    k += (v >= lo + (k + 1) * d) & (k < n - 1)
    return k


def in_range_mask(points: np.ndarray, grid: GridConfig) -> np.ndarray:
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    return ((x >= grid.x_min) & (x < grid.x_max)
            & (y >= grid.y_min) & (y < grid.y_max)
            & (z >= grid.z_min) & (z < grid.z_max))


def filter_to_range(cloud: PointCloud, grid: GridConfig) -> PointCloud:
    """Keep points inside the half-open box ``[min, max)`` on every axis."""
    mask = in_range_mask(cloud.points, grid)
    if mask.all():
        return cloud
    return PointCloud(cloud.points[mask], cloud.source_id)


def read_point_cloud_bin(path) -> PointCloud:
    """Read packed little-endian float32 ``(x, y, z, r)`` records (KITTI velodyne layout)."""
    raw = open(path, "rb").read()
    if len(raw) % RECORD_BYTES:
        raise MalformedFileError(
            f"{path}: length {len(raw)} is not a multiple of {RECORD_BYTES} bytes")
    arr = np.frombuffer(raw, dtype=_RECORD).reshape(-1, 4)
    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise MalformedValueError(f"{path}: non-finite value in record {bad}")
    return PointCloud(arr.astype(np.float64), source_id=os.fspath(path))


def write_point_cloud_bin(cloud: PointCloud, path) -> None:
    with open(path, "wb") as fh:
        fh.write(cloud.points.astype(_RECORD).tobytes())


def read_point_cloud_text(path) -> PointCloud:
    """Read one ``x y z r`` point per line (whitespace or comma separated); blank lines and ``#`` comments are skipped."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            fields = s.replace(",", " ").split()
            if len(fields) != 4:
                raise MalformedFileError(f"{path}:{lineno}: expected 4 fields, got {len(fields)}")
            try:
                vals = [float(f) for f in fields]
            except ValueError as exc:
                raise MalformedFileError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise MalformedValueError(f"{path}:{lineno}: non-finite value")
            rows.append(vals)
    return PointCloud(np.array(rows, dtype=np.float64).reshape(-1, 4), source_id=os.fspath(path))


def write_point_cloud_text(cloud: PointCloud, path) -> None:
    # %.9g round-trips any float32 exactly
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# x y z r\n")
        for row in cloud.points.astype(np.float32):
            fh.write(" ".join(f"{float(v):.9g}" for v in row) + "\n")


def read_point_cloud(path) -> PointCloud:
    """Dispatch on extension: ``.txt``/``.xyz``/``.csv`` are text, anything else binary."""
    ext = os.path.splitext(os.fspath(path))[1].lower()
    if ext in (".txt", ".xyz", ".csv"):
        return read_point_cloud_text(path)
    return read_point_cloud_bin(path)
