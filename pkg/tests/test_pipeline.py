import numpy as np
import pytest

from pillarhist.analysis import synthetic_scene
from pillarhist.batchio import read_feature_batch, write_feature_batch
from pillarhist.core import GridConfig
from pillarhist.hist import HistConfig, encode_pillarhist
from pillarhist.pfe import LinearLayer, encode_pfe
from pillarhist.pillarization import pillarize
from pillarhist.pipeline import EncoderPipeline
from pillarhist.quant import GridSearchConfig, QuantParams, calibrate_gridsearch, naive_ptq, quantized_linear_forward

GRID = GridConfig(-12.8, 12.8, -12.8, 12.8, -3.0, 1.0, 0.2, 0.2)


@pytest.fixture(scope="module")
def pillars():
    return pillarize(synthetic_scene(GRID, 6000, seed=4), GRID)


def test_pfe_forward_matches_per_pillar_encode(pillars):
    pipe = EncoderPipeline.seeded("pfe", GRID, 1, n_max=32)
    out = pipe.forward(pillars)
    want = np.stack([encode_pfe(p, GRID, pipe.layers[0], 32).vector for p in pillars])
    assert np.array_equal(out, want)


def test_pillarhist_forward_matches_per_pillar_encode(pillars):
    cfg = HistConfig(32, 16, 255.0)
    pipe = EncoderPipeline.seeded("pillarhist", GRID, 1, hist=cfg)
    out = pipe.forward(pillars)
    want = np.stack([encode_pillarhist(p, GRID, cfg, pipe.layers[0]).vector for p in pillars])
    assert np.array_equal(out, want)


@pytest.mark.parametrize("encoder", ["pfe", "pillarhist"])
def test_forward_independent_of_threads_and_chunks(pillars, encoder):
    pipe = EncoderPipeline.seeded(encoder, GRID, 2, head_dims=(8,))
    ref = pipe.forward(pillars, threads=1, chunk=100_000)
    assert np.array_equal(pipe.forward(pillars, threads=4, chunk=333), ref)


def test_pipeline_dimension_checks():
    with pytest.raises(ValueError):
        EncoderPipeline("pfe", GRID, (LinearLayer.seeded(11, 4, 0),))
    with pytest.raises(ValueError):
        EncoderPipeline("pfe", GRID, (LinearLayer.seeded(10, 4, 0), LinearLayer.seeded(5, 2, 0)))
    with pytest.raises(ValueError):
        EncoderPipeline("voxelnet", GRID, (LinearLayer.seeded(10, 4, 0),))


def test_pfe_calibration_pools_between_layers(pillars):
    pipe = EncoderPipeline.seeded("pfe", GRID, 3, head_dims=(8,))
    cfg = GridSearchConfig(50)
    params = pipe.calibrate([pillars], 8, cfg)
    rows, offsets = pipe.inputs(pillars)
    l1 = pipe.layers[0]
    a1 = calibrate_gridsearch(rows, 8, cfg)
    h = quantized_linear_forward(l1, calibrate_gridsearch(l1.weights, 8, cfg), a1, rows)
    pooled = np.stack([h[offsets[k]:offsets[k + 1]].max(axis=0) for k in range(len(pillars))])
    assert params[0].activation == QuantParams(a1.s, 0, 8, label="layer0.input")
    assert params[1].activation.s == calibrate_gridsearch(pooled, 8, cfg).s


def test_quantized_forward_close_to_fp(pillars):
    pipe = EncoderPipeline.seeded("pillarhist", GRID, 5, hist=HistConfig(64, 64, 255.0))
    params = pipe.calibrate([pillars], 8)
    fp, q = pipe.forward(pillars), pipe.forward(pillars, params)
    assert 0 < np.sum((q - fp) ** 2) / np.sum(fp ** 2) < 1e-2
    params16 = pipe.calibrate([pillars], 16)
    q16 = pipe.forward(pillars, params16)
    assert np.sum((q16 - fp) ** 2) < np.sum((q - fp) ** 2)


def test_feature_batch_round_trip(tmp_path, pillars):
    pipe = EncoderPipeline.seeded("pillarhist", GRID, 1, hist=HistConfig(8, 4))
    feats = pipe.forward(pillars)
    bin_path, meta_path = write_feature_batch(tmp_path / "f", feats, [p.index for p in pillars],
                                              {"encoder": "pillarhist"})
    assert bin_path.stat().st_size == feats.size * 4
    back, meta = read_feature_batch(tmp_path / "f")
    assert meta["count"] == len(pillars) and meta["row_length"] == 4 and meta["dtype"] == "<f4"
    assert meta["pillar_indices"][0] == list(pillars[0].index)
    assert np.array_equal(back, feats.astype(np.float32))
    raw = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    assert np.array_equal(raw[:4], feats[0].astype(np.float32))


def test_feature_batch_rejects_index_mismatch(tmp_path):
    with pytest.raises(ValueError):
        write_feature_batch(tmp_path / "f", np.zeros((2, 3)), [(0, 0)], {})
