import numpy as np
import pytest

from gradcheck import fd_max_rel_error
from serenade import tensorcore as tc
from serenade.extractor import (BiasField, ExtractorConfig, densenet_block,
                                extract_bias_fields, init_extractor_params)
from serenade.model import SerenadeModel

TINY = ExtractorConfig(initial_channels=4, blocks=1, layers_per_block=2,
                       growth=3, kernel=3, h_time=4, h_feat=4)


def _features(t, seed=0):
    return np.random.default_rng(seed).random((t, 48))


def _params(config, seed=0):
    return init_extractor_params(config, np.random.default_rng(seed))


def test_single_frame_input():
    bias = extract_bias_fields(_features(1), _params(TINY), TINY)
    assert bias.num_frames == 1
    assert bias.b_time.shape == (1, 4)
    assert bias.b_vis.shape == (1, 66)


def test_zero_params_give_zero_bias():
    params = {k: np.zeros_like(v) for k, v in _params(TINY).items()}
    bias = extract_bias_fields(_features(5), params, TINY)
    assert not bias.b_time.any()
    assert not bias.b_feat.any()
    assert not bias.b_vis.any()


def test_no_temporal_downsampling():
    params = _params(TINY)
    for t in (3, 6, 12):
        assert extract_bias_fields(_features(t), params, TINY).num_frames == t


def test_wrong_input_width_rejected():
    with pytest.raises(tc.ShapeError):
        extract_bias_fields(np.zeros((4, 47)), _params(TINY), TINY)


def test_dense_block_channel_count():
    rng = np.random.default_rng(1)
    x = tc.constant(rng.random((5, 8)))
    layers = []
    channels = 8
    for _ in range(2):
        layers.append((tc.parameter(rng.normal(size=(channels * 3, 4))),
                       tc.parameter(np.zeros((1, 4)))))
        channels += 4
    out = densenet_block(x, layers, 3)
    assert out.value.shape == (5, 16)


def test_dense_block_zero_weights_pass_input_through():
    x_val = np.random.default_rng(2).random((4, 8))
    x = tc.constant(x_val)
    layers = [(tc.parameter(np.zeros((8 * 3, 4))),
               tc.parameter(np.zeros((1, 4))))]
    out = densenet_block(x, layers, 3)
    assert np.array_equal(out.value[:, :8], x_val)
    assert not out.value[:, 8:].any()


def test_dense_block_gradients_match_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.random((5, 4))
    leaves = {"w0": rng.normal(size=(12, 2), scale=0.5),
              "b0": rng.normal(size=(1, 2), scale=0.1),
              "w1": rng.normal(size=(18, 2), scale=0.5),
              "b1": rng.normal(size=(1, 2), scale=0.1)}

    def build(nodes):
        out = densenet_block(tc.constant(x),
                             [(nodes["w0"], nodes["b0"]),
                              (nodes["w1"], nodes["b1"])], 3)
        return tc.mean(tc.sigmoid(out))

    assert fd_max_rel_error(build, leaves) < 1e-4


def test_temporal_locality_matches_receptive_field():
    config = ExtractorConfig(initial_channels=3, blocks=1, layers_per_block=1,
                             growth=2, kernel=3, h_time=3, h_feat=3)
    radius = config.receptive_field_radius()
    assert radius == 1
    params = _params(config, seed=5)
    base = _features(9, seed=6)
    bias0 = extract_bias_fields(base, params, config)
    poked = base.copy()
    poked[4] += 1.0
    bias1 = extract_bias_fields(poked, params, config)
    changed = np.nonzero(np.any(bias1.b_vis != bias0.b_vis, axis=1))[0]
    assert changed.size > 0
    assert set(changed) <= {3, 4, 5}


def test_default_weight_count_in_published_window():
    total = SerenadeModel.init(seed=0).param_count()
    assert 140_000 <= total <= 210_000


def test_bias_field_validates_shapes():
    with pytest.raises(ValueError):
        BiasField(np.zeros((3, 4)), np.zeros((2, 4)), np.zeros((3, 66)))
    with pytest.raises(ValueError):
        BiasField(np.zeros((3, 4)), np.zeros((3, 4)), np.zeros((3, 65)))


def test_even_kernel_rejected():
    with pytest.raises(ValueError):
        ExtractorConfig(kernel=4)
