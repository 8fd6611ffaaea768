import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pillarhist.core import (cell_indices, GridConfig, MalformedFileError, MalformedValueError, Point, PointCloud,
                             filter_to_range, read_point_cloud, read_point_cloud_bin,
                             read_point_cloud_text, write_point_cloud_bin, write_point_cloud_text)

from conftest import random_cloud


def test_read_bin_two_points(tmp_path):
    path = tmp_path / "two.bin"
    path.write_bytes(struct.pack("<8f", 1.0, 2.0, 3.0, 0.5, -1.0, 0.0, 0.25, 1.0))
    cloud = read_point_cloud_bin(path)
    assert list(cloud) == [Point(1.0, 2.0, 3.0, 0.5), Point(-1.0, 0.0, 0.25, 1.0)]


def test_read_bin_empty(tmp_path):
    path = tmp_path / "empty.bin"
    path.write_bytes(b"")
    assert len(read_point_cloud_bin(path)) == 0


def test_read_bin_bad_length(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\0" * 20)
    with pytest.raises(MalformedFileError, match="multiple of 16"):
        read_point_cloud_bin(path)


def test_read_bin_nonfinite_names_record(tmp_path):
    path = tmp_path / "nan.bin"
    path.write_bytes(struct.pack("<8f", 0, 0, 0, 0, 1, float("nan"), 0, 0))
    with pytest.raises(MalformedValueError, match="record 1"):
        read_point_cloud_bin(path)


def test_bin_round_trip_bit_identical(tmp_path, rng):
    raw = rng.standard_normal((1000, 4)).astype("<f4") * 40
    src = tmp_path / "src.bin"
    src.write_bytes(raw.tobytes())
    cloud = read_point_cloud_bin(src)
    dst = tmp_path / "dst.bin"
    write_point_cloud_bin(cloud, dst)
    assert dst.read_bytes() == src.read_bytes()
    assert read_point_cloud_bin(dst) == cloud


def test_read_text_single_line(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("0 0 0 0\n")
    assert list(read_point_cloud_text(path)) == [Point(0.0, 0.0, 0.0, 0.0)]


def test_read_text_only_comments(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# header\n#another\n\n")
    assert len(read_point_cloud_text(path)) == 0


@pytest.mark.parametrize("line, msg", [("1 2 3", "expected 4 fields"), ("1 2 x 4", "could not convert"),
                                       ("1 2 3 inf", "non-finite")])
def test_read_text_errors_name_line(tmp_path, line, msg):
    path = tmp_path / "bad.txt"
    path.write_text(f"# ok\n0 0 0 0\n{line}\n")
    with pytest.raises(MalformedFileError, match=f":3: .*{msg}"):
        read_point_cloud_text(path)


def test_text_round_trip_of_binary_cloud(tmp_path, rng):
    src = tmp_path / "src.bin"
    src.write_bytes((rng.standard_normal((300, 4)) * 30).astype("<f4").tobytes())
    cloud = read_point_cloud_bin(src)
    txt = tmp_path / "dump.txt"
    write_point_cloud_text(cloud, txt)
    back = read_point_cloud(txt)
    # float32 printed with 9 significant digits restores the value exactly
    assert np.array_equal(back.points.astype(np.float32), cloud.points.astype(np.float32))
    np.testing.assert_allclose(back.points, cloud.points, rtol=1e-7)


def test_point_cloud_rejects_nonfinite():
    with pytest.raises(MalformedValueError):
        PointCloud(np.array([[0, 0, np.inf, 0]]))


def test_grid_invariants():
    with pytest.raises(ValueError):
        GridConfig(1, 0, 0, 1, 0, 1, 0.1, 0.1)
    with pytest.raises(ValueError):
        GridConfig(0, 1, 0, 1, 0, 1, 0.0, 0.1)
    g = GridConfig.nuscenes()
    assert (g.nx, g.ny, g.height) == (512, 512, 8.0)


def test_filter_upper_bound_is_open(small_grid):
    g = small_grid
    cloud = PointCloud.from_points([(g.x_max, 0, 0, 0), (g.x_min, g.y_min, g.z_min, 0)])
    out = filter_to_range(cloud, g)
    assert list(out) == [Point(g.x_min, g.y_min, g.z_min, 0.0)]


def _oracle_filter(cloud, g):
    keep = []
    for p in cloud:
        if g.x_min <= p.x < g.x_max and g.y_min <= p.y < g.y_max and g.z_min <= p.z < g.z_max:
            keep.append(p)
    return keep


def test_filter_matches_per_point_oracle(small_grid, rng):
    cloud = random_cloud(rng, small_grid, 500, margin=2.0)
    out = filter_to_range(cloud, small_grid)
    assert list(out) == _oracle_filter(cloud, small_grid)
    assert 0 < len(out) < 500


coord = st.floats(-10, 10, allow_nan=False, width=32)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord, st.floats(0, 255, width=32)), max_size=40))
def test_filter_idempotent_and_bounded(pts):
    g = GridConfig(-4.0, 4.0, -2.0, 6.0, -3.0, 1.0, 0.5, 0.4)
    cloud = PointCloud.from_points(pts)
    once = filter_to_range(cloud, g)
    assert filter_to_range(once, g) == once
    assert len(once) <= len(cloud)
    for p in once:
        assert g.x_min <= p.x < g.x_max and g.y_min <= p.y < g.y_max and g.z_min <= p.z < g.z_max


def test_cell_indices_agree_with_float_edges():
    lo, d, n = -5.0, 0.8, 10
    edges = lo + np.arange(n) * d
    np.testing.assert_array_equal(cell_indices(edges, lo, d, n), np.arange(n))
    below = np.nextafter(edges[1:], -np.inf)
    np.testing.assert_array_equal(cell_indices(below, lo, d, n), np.arange(n - 1))
    assert cell_indices([lo - 1, lo + n * d + 1], lo, d, n).tolist() == [0, n - 1]


def test_read_csv_text(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("1,2,3,0.5\n4, 5, 6, 0.25\n")
    assert read_point_cloud(p).points.tolist() == [[1, 2, 3, 0.5], [4, 5, 6, 0.25]]
