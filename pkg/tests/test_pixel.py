"""Proximal operators, projection training, decomposition and image fusion."""

import numpy as np
import pytest

from rgbtfuse.pixel import (
    LevelSelector,
    decompose,
    fold,
    fuse_base,
    fuse_detail,
    fuse_images,
    luminance,
    nuclear_norm,
    soft_threshold,
    svt,
    texture_corpus,
    train_projection,
    unfold,
)

PATCH = 8


@pytest.fixture(scope="module")
def projection():
    corpus = texture_corpus(seed=11, n_patches=120, patch_side=PATCH)
    result = train_projection(corpus, tol=1e-5, max_iter=400)
    assert result.converged
    return result.projection


def _test_image(seed: int, side: int = 64) -> np.ndarray:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    img = 0.5 + 0.25 * np.sin(0.3 * xx + rng.uniform(0, 6)) * np.cos(0.2 * yy)
    img += 0.1 * rng.standard_normal((side, side))
    return np.clip(img, 0.0, 1.0)


# ---------------------------------------------------------------------------
# proximal operators


def test_soft_threshold_shrinks_toward_zero():
    m = np.array([-3.0, -0.5, 0.0, 0.5, 3.0])
    assert soft_threshold(m, 1.0).tolist() == [-2.0, 0.0, 0.0, 0.0, 2.0]


def test_svt_shrinks_singular_values():
    rng = np.random.default_rng(0)
    u = rng.standard_normal(6)
    v = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    a = 5.0 * np.outer(u, v)  # rank one, sigma = 5
    assert nuclear_norm(svt(a, 2.0)) == pytest.approx(3.0)
    assert np.allclose(svt(a, 5.0), 0.0, atol=1e-12)
    assert np.allclose(svt(a, 2.0), 3.0 * np.outer(u, v), atol=1e-9)


def test_nuclear_norm_of_a_diagonal_matrix():
    assert nuclear_norm(np.diag([3.0, -4.0, 0.0])) == pytest.approx(7.0)


# ---------------------------------------------------------------------------
# patch bookkeeping


def test_unfold_fold_roundtrip_at_stride_patch():
    img = _test_image(1, side=4 * PATCH)
    cols, origins = unfold(img, PATCH, PATCH)
    assert cols.shape == (PATCH * PATCH, 16)
    assert fold(cols, origins, img.shape, PATCH) == pytest.approx(img)


# ---------------------------------------------------------------------------
# projection training


def test_training_satisfies_the_decomposition_constraint():
    x = texture_corpus(seed=3, n_patches=60, patch_side=PATCH)
    res = train_projection(x, tol=1e-5, max_iter=600)
    assert res.converged
    recon = x @ res.coefficients + res.projection @ x + res.sparse
    rel = np.linalg.norm(x - recon) / np.linalg.norm(x)
    assert rel <= 1e-5
    assert res.relative_residual <= 1e-5
    assert res.iterations <= 600


def test_training_rejects_bad_inputs():
    with pytest.raises(ValueError):
        train_projection(np.empty((0, 0)))
    with pytest.raises(ValueError):
        train_projection(np.ones((4, 4)), lam=0.0)


def test_corpus_is_deterministic_and_bounded():
    a = texture_corpus(seed=5, n_patches=30, patch_side=PATCH)
    b = texture_corpus(seed=5, n_patches=30, patch_side=PATCH)
    assert np.array_equal(a, b)
    assert a.shape == (PATCH * PATCH, 30)
    assert a.min() >= 0.0 and a.max() <= 1.0


# ---------------------------------------------------------------------------
# decomposition


def test_decomposition_reconstructs_the_input(projection):
    img = _test_image(2)
    for level in (1, 2, 3):
        details, base = decompose(img, projection, level, PATCH)
        assert len(details) == level
        recon = base + sum(details)
        assert np.max(np.abs(recon - img)) < 1e-9


def test_decompose_validates_arguments(projection):
    img = _test_image(3)
    with pytest.raises(ValueError):
        decompose(img, projection, 0, PATCH)
    with pytest.raises(ValueError):
        decompose(img, projection, 1, PATCH + 1)


# ---------------------------------------------------------------------------
# layer fusion rules


def test_detail_fusion_weights_by_nuclear_norm():
    strong = np.zeros((PATCH, PATCH))
    strong[0, 0] = 2.0
    weak = np.zeros((PATCH, PATCH))
    fused = fuse_detail(strong, weak, PATCH)
    assert np.array_equal(fused, strong)  # all weight on the nonzero patch
    assert np.array_equal(fuse_detail(weak, weak, PATCH), weak)  # 0.5/0.5 of zeros


def test_detail_fusion_of_equal_layers_is_identity():
    d = _test_image(4, side=2 * PATCH) - 0.5
    assert fuse_detail(d, d.copy(), PATCH) == pytest.approx(d)


def test_base_fusion_is_the_mean():
    a = np.full((4, 4), 0.2)
    b = np.full((4, 4), 0.6)
    assert fuse_base(a, b) == pytest.approx(np.full((4, 4), 0.4))
    with pytest.raises(ValueError):
        fuse_base(a, np.zeros((3, 3)))


def test_luminance_coefficients():
    px = np.zeros((1, 1, 3))
    for channel, coef in enumerate((0.299, 0.587, 0.114)):
        px[:] = 0.0
        px[0, 0, channel] = 1.0
        assert luminance(px)[0, 0] == pytest.approx(coef)
    gray = np.random.default_rng(6).uniform(size=(3, 3))
    assert np.array_equal(luminance(gray), gray)


def test_level_selector_one_hot():
    assert LevelSelector(level=3).one_hot().tolist() == [0, 0, 1, 0]
    with pytest.raises(ValueError):
        LevelSelector(level=0)
    with pytest.raises(ValueError):
        LevelSelector(level=5)


# ---------------------------------------------------------------------------
# full image fusion


def test_fusing_an_image_with_itself_returns_it(projection):
    gray = _test_image(7)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    for level in (1, 2, 3):
        fused, second = fuse_images(
            rgb, gray, projection, LevelSelector(level=level), patch_side=PATCH
        )
        assert np.max(np.abs(luminance(fused) - gray)) < 1e-6
        assert np.array_equal(second, fused)


def test_fused_tir_pairing_passes_the_thermal_stream_through(projection):
    rgb = np.repeat(_test_image(8)[..., None], 3, axis=2)
    tir = _test_image(9)
    fused, second = fuse_images(
        rgb, tir, projection, LevelSelector(level=1), pairing="fused_tir", patch_side=PATCH
    )
    assert np.array_equal(second, np.repeat(tir[..., None], 3, axis=2))
    assert not np.array_equal(second, fused)


def test_fusion_pads_sizes_not_divisible_by_the_patch(projection):
    gray = _test_image(10, side=5 * PATCH + 3)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    fused, _ = fuse_images(rgb, gray, projection, LevelSelector(level=1), patch_side=PATCH)
    assert fused.shape == rgb.shape
    assert np.max(np.abs(luminance(fused) - gray)) < 1e-6


def test_fusion_validates_pairing_and_sizes(projection):
    gray = _test_image(11)
    rgb = np.repeat(gray[..., None], 3, axis=2)
    with pytest.raises(ValueError):
        fuse_images(rgb, gray, projection, LevelSelector(), pairing="both", patch_side=PATCH)
    with pytest.raises(ValueError):
        fuse_images(rgb, gray[:32, :32], projection, LevelSelector(), patch_side=PATCH)
