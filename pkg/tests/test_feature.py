"""Channel selection and attention-pooled fusion of feature maps."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from rgbtfuse.feature import (
    AttentionConfig,
    SelectionConfig,
    attention_vector,
    channel_significance,
    fuse_features,
    fusion_scalars,
    select_channels,
)


def feature_maps(c=6, h=4, w=4):
    return hnp.arrays(
        np.float64, (c, h, w), elements=st.floats(-3.0, 3.0, allow_nan=False, width=64)
    )


# ---------------------------------------------------------------------------
# selection


def test_significance_is_the_spatial_max():
    f = np.zeros((3, 2, 2))
    f[0, 1, 1] = 5.0
    f[1] = -1.0
    f[2, 0, 0] = 0.25
    assert channel_significance(f).tolist() == [5.0, -1.0, 0.25]


def test_selection_keeps_top_channels_in_place():
    f = np.zeros((5, 2, 2))
    for c, peak in enumerate([0.9, 0.1, 0.5, 0.7, 0.3]):
        f[c] = peak
    out = select_channels(f, SelectionConfig(keep_fraction=0.8))
    # ceil(0.8 * 5) = 4 channels survive; the weakest (peak 0.1) is zeroed.
    assert np.array_equal(out[1], np.zeros((2, 2)))
    for c in (0, 2, 3, 4):
        assert np.array_equal(out[c], f[c])


def test_selection_cardinality_is_the_ceiling():
    rng = np.random.default_rng(0)
    for c in (3, 5, 10, 32):
        f = rng.standard_normal((c, 3, 3))
        out = select_channels(f, SelectionConfig(keep_fraction=0.8))
        kept = sum(1 for ch in out if np.any(ch != 0.0))
        assert kept == math.ceil(0.8 * c)


def test_selection_ties_keep_the_lower_index():
    f = np.ones((4, 2, 2))  # all channels equally significant
    f[3] = 0.5
    out = select_channels(f, SelectionConfig(keep_fraction=0.5))
    assert np.any(out[0] != 0) and np.any(out[1] != 0)
    assert not np.any(out[2] != 0) and not np.any(out[3] != 0)


def test_selection_disabled_or_full_is_identity():
    f = np.random.default_rng(1).standard_normal((6, 3, 3))
    assert select_channels(f, SelectionConfig(enabled=False)) is f
    assert select_channels(f, SelectionConfig(keep_fraction=1.0)) is f


def test_selection_config_validation():
    with pytest.raises(ValueError):
        SelectionConfig(keep_fraction=0.0)
    with pytest.raises(ValueError):
        SelectionConfig(keep_fraction=1.5)


# ---------------------------------------------------------------------------
# attention


def test_channel_attention_pools_over_space():
    f = np.arange(8.0).reshape(2, 2, 2)
    cfg_mean = AttentionConfig(type="C", vector_pool="mean")
    cfg_max = AttentionConfig(type="C", vector_pool="max")
    assert attention_vector(f, cfg_mean).tolist() == [1.5, 5.5]
    assert attention_vector(f, cfg_max).tolist() == [3.0, 7.0]


def test_spatial_attention_pools_over_channels():
    f = np.arange(8.0).reshape(2, 2, 2)
    v = attention_vector(f, AttentionConfig(type="S", vector_pool="max"))
    assert v.tolist() == [4.0, 5.0, 6.0, 7.0]


def test_attention_config_validation():
    with pytest.raises(ValueError):
        AttentionConfig(type="X")
    with pytest.raises(ValueError):
        AttentionConfig(vector_pool="sum")
    with pytest.raises(ValueError):
        AttentionConfig(scalar_reduce="median")


def test_scalars_normalize_to_a_convex_pair():
    w_r, w_t = fusion_scalars(np.array([3.0]), np.array([1.0]), AttentionConfig())
    assert (w_r, w_t) == (0.75, 0.25)


def test_scalars_clamp_negatives_to_zero():
    w_r, w_t = fusion_scalars(np.array([-2.0]), np.array([1.0]), AttentionConfig())
    assert (w_r, w_t) == (0.0, 1.0)


def test_scalars_fall_back_to_even_split():
    w_r, w_t = fusion_scalars(np.array([-1.0]), np.array([0.0]), AttentionConfig())
    assert (w_r, w_t) == (0.5, 0.5)


def test_scalar_length_mismatch_rejected():
    with pytest.raises(ValueError):
        fusion_scalars(np.zeros(3), np.zeros(4), AttentionConfig())


@given(feature_maps(), feature_maps())
def test_scalars_always_convex(f_rgb, f_tir):
    cfg = AttentionConfig()
    w_r, w_t = fusion_scalars(
        attention_vector(f_rgb, cfg), attention_vector(f_tir, cfg), cfg
    )
    assert 0.0 <= w_r <= 1.0 and 0.0 <= w_t <= 1.0
    assert w_r + w_t == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# full fusion


def test_fusion_blends_with_attention_weights():
    f_rgb = np.full((2, 2, 2), 3.0)
    f_tir = np.full((2, 2, 2), 1.0)
    out = fuse_features(
        f_rgb, f_tir, SelectionConfig(keep_fraction=1.0), AttentionConfig()
    )
    # Max-pooled vectors reduce to 3 and 1, so the blend is 0.75/0.25.
    assert np.allclose(out, 0.75 * 3.0 + 0.25 * 1.0)


def test_fusion_of_identical_maps_is_identity():
    f = np.abs(np.random.default_rng(2).standard_normal((6, 4, 4)))
    out = fuse_features(f, f.copy(), SelectionConfig(), AttentionConfig())
    assert np.allclose(out, select_channels(f, SelectionConfig()), atol=1e-12)


def test_fusion_shape_mismatch_rejected():
    with pytest.raises(ValueError):
        fuse_features(
            np.zeros((2, 3, 3)), np.zeros((2, 4, 4)), SelectionConfig(), AttentionConfig()
        )
