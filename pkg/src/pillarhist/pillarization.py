"""Partition a point cloud into non-empty XY pillars."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import GridConfig, Point, PointCloud, cell_indices, in_range_mask


class PillarIndex(NamedTuple):
    ix: int
    iy: int


@dataclass(frozen=True, eq=False)
class Pillar:
    index: PillarIndex
    points: np.ndarray  # (N_v, 4) member points in cloud order
    x_center: float
    y_center: float

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Pillar):
            return NotImplemented
        return (self.index == other.index and self.x_center == other.x_center
                and self.y_center == other.y_center
                and np.array_equal(self.points, other.points))

    __hash__ = None


def pillar_center(index: PillarIndex, grid: GridConfig) -> tuple[float, float]:
    return (grid.x_min + (index.ix + 0.5) * grid.dx,
            grid.y_min + (index.iy + 0.5) * grid.dy)


def _grid_indices(x: np.ndarray, y: np.ndarray, grid: GridConfig) -> tuple[np.ndarray, np.ndarray]:
    return cell_indices(x, grid.x_min, grid.dx, grid.nx), cell_indices(y, grid.y_min, grid.dy, grid.ny)


def pillar_index_of(p: Point, grid: GridConfig) -> PillarIndex:
    x, y, z = p[0], p[1], p[2]
    if not (grid.x_min <= x < grid.x_max and grid.y_min <= y < grid.y_max
            and grid.z_min <= z < grid.z_max):
        raise ValueError(f"point {tuple(p)} lies outside the grid range")
    ix, iy = _grid_indices(np.array([x]), np.array([y]), grid)
    return PillarIndex(int(ix[0]), int(iy[0]))


def pillarize(cloud: PointCloud, grid: GridConfig) -> list[Pillar]:
    """Group in-range points into pillars sorted by ``(iy, ix)``.

    Out-of-range points are dropped. Within each pillar the points keep their
    order in ``cloud``.
    """
    pts = cloud.points
    pts = pts[in_range_mask(pts, grid)]
    if pts.shape[0] == 0:
        return []
    ix, iy = _grid_indices(pts[:, 0], pts[:, 1], grid)
    key = iy * grid.nx + ix
    order = np.argsort(key, kind="stable")
    key_sorted = key[order]
    starts = np.flatnonzero(np.r_[True, key_sorted[1:] != key_sorted[:-1]])
    ends = np.r_[starts[1:], key_sorted.size]

    pillars = []
    for s, e in zip(starts.tolist(), ends.tolist()):
        first = order[s]
        idx = PillarIndex(int(ix[first]), int(iy[first]))
        members = pts[order[s:e]]
        members.setflags(write=False)
        xc, yc = pillar_center(idx, grid)
        pillars.append(Pillar(idx, members, xc, yc))
    return pillars


def scene_stats(pillars: list[Pillar]) -> dict:
    counts = [p.n_points for p in pillars]
    return {
        "points": int(sum(counts)),
        "pillars": len(pillars),
        "max_points_per_pillar": max(counts) if counts else 0,
        "mean_points_per_pillar": (sum(counts) / len(counts)) if counts else 0.0,
    }
