import numpy as np
import pytest

from pillarhist.analysis import (flops_pfe, flops_pillarhist, flops_report_pfe,
                                 flops_report_pillarhist, range_report, synthetic_scene)
from pillarhist.core import GridConfig, filter_to_range
from pillarhist.hist import HistConfig
from pillarhist.pfe import DECORATED_CHANNELS
from pillarhist.pillarization import pillarize
from pillarhist.pipeline import EncoderPipeline

NUSC = GridConfig.nuscenes()


@pytest.fixture(scope="module")
def nusc_scene():
    return pillarize(synthetic_scene(NUSC, 10_000), NUSC)


def scan(x):
    """Direct min/max scan, channel by channel."""
    return [(min(col), max(col)) for col in np.asarray(x).T.tolist()]


def test_flops_examples():
    assert flops_pfe(32, 10, 64) == 40960
    assert flops_pfe(1, 1, 1) == 2
    assert flops_pfe(32, 10, 128) == 2 * flops_pfe(32, 10, 64)
    assert flops_pillarhist(64, 64) == 16640
    assert flops_pillarhist(1, 1) == 8
    assert flops_pillarhist(64, 64) / flops_pfe(32, 10, 64) == 0.40625


def test_flops_scaling_laws():
    for n in range(1, 65):
        assert flops_pfe(n, 10, 64) == n * flops_pfe(1, 10, 64)
    per = {flops_report_pillarhist(100, n_points).per_pillar_flops for n_points in (100, 3200, 50_000)}
    assert per == {flops_pillarhist(64, 64)}


def test_flops_reports():
    rep = flops_report_pfe(1000)
    assert rep.scene_flops == rep.per_pillar_flops * 1000
    assert rep.aux_ops == 32 * 64 * 1000
    rep = flops_report_pillarhist(1000, n_points=5000)
    assert rep.scene_flops == 16640 * 1000
    assert rep.aux_ops == 2 * 5000 + 64 * 1000


def test_range_report_single_point():
    rep = range_report(np.array([[1.0, 2.0, 0.0]]), ["a", "b", "c"], "t")
    assert [c.width for c in rep.per_channel] == [0.0, 0.0, 0.0]
    assert rep.width_ratio == 1.0


def test_range_report_ratio_over_nonzero_widths():
    x = np.array([[0.0, 5.0, 1.0], [10.0, 5.0, 1.5]])
    rep = range_report(x, ["a", "b", "c"])
    assert rep.width_ratio == 10.0 / 0.5
    assert [r["kind"] for r in rep.records()] == ["channel"] * 3 + ["range_summary"]


def test_range_report_accepts_per_pillar_list(rng):
    blocks = [rng.standard_normal((k, 4)) for k in (1, 3, 7)]
    a = range_report(blocks, list("abcd"))
    b = range_report(np.concatenate(blocks), list("abcd"))
    assert a.per_channel == b.per_channel


def test_synthetic_scene_in_range_and_seeded():
    a = synthetic_scene(NUSC, 2000, seed=5)
    assert len(filter_to_range(a, NUSC)) == 2000
    assert synthetic_scene(NUSC, 2000, seed=5) == a
    assert not synthetic_scene(NUSC, 2000, seed=6) == a
    assert a.points[:, 3].min() >= 0 and a.points[:, 3].max() <= 255
    assert np.array_equal(a.points, a.points.astype(np.float32))


def test_pfe_channel_ranges_nuscenes(nusc_scene):
    pipe = EncoderPipeline.seeded("pfe", NUSC, 0)
    rows, _ = pipe.inputs(nusc_scene)
    rep = range_report(rows, pipe.channel_names(), "pfe")
    w = {c.name: c for c in rep.per_channel}
    assert [c.name for c in rep.per_channel] == list(DECORATED_CHANNELS)
    for name in ("x", "y"):
        assert -51.2 <= w[name].min and w[name].max < 51.2
        assert w[name].width == pytest.approx(102.4, abs=0.1)
    assert 0 <= w["r"].min and w["r"].max <= 255
    for name in ("x_m", "y_m", "x_c", "y_c"):
        assert w[name].width <= 0.4
    assert w["x_c"].min >= -0.1 - 1e-9 and w["x_c"].max <= 0.1 + 1e-9
    assert w["z_c"].min >= -4.0 and w["z_c"].max <= 4.0
    assert rep.width_ratio >= 100
    assert scan(rows) == [(c.min, c.max) for c in rep.per_channel]


def test_pillarhist_channel_ranges_nuscenes(nusc_scene):
    for scale in (1.0, 255.0):
        pipe = EncoderPipeline.seeded("pillarhist", NUSC, 0, hist=HistConfig(64, 64, scale))
        rows, _ = pipe.inputs(nusc_scene)
        rep = range_report(rows, pipe.channel_names(), "pillarhist")
        max_nv = max(p.n_points for p in nusc_scene)
        for c in rep.per_channel:
            if c.name.startswith("hp"):
                assert 0 <= c.min and c.max <= max_nv
            elif c.name.startswith("hi"):
                assert 0 <= c.min and c.max <= 255 / scale
            else:
                assert c.width <= 102.4
        assert scan(rows) == [(c.min, c.max) for c in rep.per_channel]
        pfe_rows, _ = EncoderPipeline.seeded("pfe", NUSC, 0).inputs(nusc_scene)
        pfe = range_report(pfe_rows, list(DECORATED_CHANNELS))
        assert rep.width_ratio < pfe.width_ratio
        assert rep.tensor_mse_at_8bit <= pfe.tensor_mse_at_8bit


def test_disparity_on_small_dense_scene():
    grid = GridConfig(-6.4, 6.4, -6.4, 6.4, -2.0, 2.0, 0.2, 0.2)
    pillars = pillarize(synthetic_scene(grid, 4000, seed=9), grid)
    assert len(pillars) >= 2
    pfe_rows, _ = EncoderPipeline.seeded("pfe", grid, 0).inputs(pillars)
    ph_rows, _ = EncoderPipeline.seeded("pillarhist", grid, 0, hist=HistConfig(16, 8, 255.0)).inputs(pillars)
    pfe = range_report(pfe_rows, list(DECORATED_CHANNELS))
    ph = range_report(ph_rows, [f"c{i}" for i in range(34)])
    assert ph.width_ratio < pfe.width_ratio
    assert ph.tensor_mse_at_8bit <= pfe.tensor_mse_at_8bit
