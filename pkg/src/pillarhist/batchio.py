"""Feature batch files: ``<stem>.bin`` holds little-endian float32 rows
(row-major, one row per pillar in canonical order) and ``<stem>.json`` the
metadata needed to interpret them."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def batch_paths(stem) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    return stem.with_name(stem.name + ".bin"), stem.with_name(stem.name + ".json")


def write_feature_batch(stem, rows: np.ndarray, pillar_indices, meta: dict) -> tuple[Path, Path]:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("feature batch must be a 2-D array")
    bin_path, meta_path = batch_paths(stem)
    doc = dict(meta)
    doc.update({"format_version": FORMAT_VERSION, "dtype": "<f4", "count": int(rows.shape[0]),
                "row_length": int(rows.shape[1]),
                "pillar_indices": [[int(ix), int(iy)] for ix, iy in pillar_indices],
                "data_file": bin_path.name})
    if len(doc["pillar_indices"]) != rows.shape[0]:
        raise ValueError("one pillar index per row is required")
    with open(bin_path, "wb") as fh:
        fh.write(rows.astype("<f4").tobytes())
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bin_path, meta_path


def read_feature_batch(stem) -> tuple[np.ndarray, dict]:
    bin_path, meta_path = batch_paths(stem)
    with open(meta_path, "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    raw = np.fromfile(os.fspath(bin_path), dtype="<f4")
    n, d = meta["count"], meta["row_length"]
    if raw.size != n * d:
        raise ValueError(f"{bin_path}: expected {n * d} floats, found {raw.size}")
    return raw.reshape(n, d), meta
