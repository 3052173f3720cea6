"""Tracking loop: crops, stream plumbing, template cadence, mode smoke runs."""

import numpy as np
import pytest

from rgbtfuse import tracker
from rgbtfuse.data import DataError, SynthConfig, synth_sequence
from rgbtfuse.geometry import BBox, iou
from rgbtfuse.tracker import (
    TrackerConfig,
    context_side,
    correlation_spatial,
    crop_window,
    init,
    run_sequence,
    track_frame,
)

# Small backbone and patch sizes keep each smoke run under a second.
FAST = dict(channels=8, neck_channels=16, patch_side=8, corpus_patches=80,
            latlrr_tol=1e-4, latlrr_max_iter=300)


def _seq(seed=0, n=8, **kw):
    return synth_sequence(SynthConfig(seed=seed, n=n, **kw))


# ---------------------------------------------------------------------------
# crop geometry


def test_context_side_formula():
    box = BBox(0, 0, 20.0, 10.0)
    p = 0.5 * (20.0 + 10.0)
    assert context_side(box, 0.5) == pytest.approx(np.sqrt((20 + p) * (10 + p)))


def test_interior_crop_needs_no_padding():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(64, 64, 3))
    crop, scale = crop_window(img, 32.0, 32.0, 16.0, 16)
    assert crop.shape == (16, 16, 3)
    assert scale == 1.0
    assert np.allclose(crop, img[24:40, 24:40], atol=1e-12)


def test_boundary_crop_pads_with_the_image_mean():
    img = np.full((32, 32, 3), 0.25)
    img[:4, :4] = 1.0
    crop, _ = crop_window(img, 0.0, 0.0, 16.0, 16)
    # Everything above and left of the frame is mean-filled.
    assert np.allclose(crop[0, 0], img.mean(axis=(0, 1)))
    assert crop.shape == (16, 16, 3)


def test_crop_scale_reports_pixels_per_output_pixel():
    img = np.zeros((100, 100, 3))
    _, scale = crop_window(img, 50, 50, 40.0, 20)
    assert scale == 2.0


def test_default_response_grid_is_17x17():
    assert correlation_spatial(TrackerConfig()) == 17


# ---------------------------------------------------------------------------
# state plumbing


def test_streams_follow_the_mode():
    seq = _seq()
    gt = seq.gt_boxes()[0]
    for mode, streams in (
        ("rgb_only", {"rgb"}),
        ("tir_only", {"tir"}),
        ("decision_dfat", {"rgb", "tir"}),
        ("after_norm", {"rgb", "tir"}),
        ("feature", {"rgb", "tir", "fused"}),
    ):
        st = init(seq.rgb[0], seq.tir[0], gt, TrackerConfig(mode=mode, **FAST))
        assert set(st.templates) == streams


def test_pixel_mode_stream_count_follows_the_pairing():
    seq = _seq()
    gt = seq.gt_boxes()[0]
    one = init(seq.rgb[0], seq.tir[0], gt,
               TrackerConfig(mode="pixel", pairing="fused_fused", **FAST))
    two = init(seq.rgb[0], seq.tir[0], gt,
               TrackerConfig(mode="pixel", pairing="fused_tir", **FAST))
    assert len(one.templates) == 1
    assert len(two.templates) == 2
    assert one.projection is not None


def test_config_validation():
    with pytest.raises(ValueError):
        TrackerConfig(mode="late")
    with pytest.raises(ValueError):
        TrackerConfig(exemplar_size=255, instance_size=255)
    with pytest.raises(ValueError):
        TrackerConfig(pairing="both")


def test_frame_size_changes_are_rejected():
    seq = _seq()
    st = init(seq.rgb[0], seq.tir[0], seq.gt_boxes()[0], TrackerConfig(**FAST))
    with pytest.raises(DataError):
        track_frame(st, seq.rgb[1][:-4], seq.tir[1][:-4], TrackerConfig(**FAST))


# ---------------------------------------------------------------------------
# behavior on synthetic sequences


def test_run_echoes_ground_truth_at_the_start():
    seq = _seq(n=5)
    boxes, diags = run_sequence(seq, TrackerConfig(**FAST))
    assert len(boxes) == len(diags) == 5
    assert boxes[0] == seq.gt_boxes()[0]
    assert diags[0]["score"] == 1.0 and diags[0]["index"] is None


def test_static_target_stays_locked():
    seq = _seq(seed=5, n=20, velocity=0.0)
    boxes, _ = run_sequence(seq, TrackerConfig(**FAST))
    gt = seq.gt_boxes()[0]
    drift = max(np.hypot(b.cx - gt.cx, b.cy - gt.cy) for b in boxes)
    assert drift < 1.0


def test_moving_target_is_followed():
    seq = _seq(seed=6, n=25, velocity=1.0)
    boxes, _ = run_sequence(seq, TrackerConfig(**FAST))
    overlaps = [iou(b, g) for b, g in zip(boxes[1:], seq.gt_boxes()[1:])]
    assert min(overlaps) > 0.5


@pytest.mark.parametrize("mode", tracker.MODES)
def test_every_mode_produces_finite_boxes(mode):
    seq = _seq(seed=2, n=5)
    boxes, diags = run_sequence(seq, TrackerConfig(mode=mode, **FAST))
    h, w = seq.rgb[0].shape[:2]
    for box in boxes:
        assert np.isfinite([box.cx, box.cy, box.w, box.h]).all()
        assert 0 <= box.cx <= w and 0 <= box.cy <= h
    for diag in diags[1:]:
        assert np.isfinite(diag["score"])


def test_two_stream_modes_report_the_score_gap():
    seq = _seq(seed=3, n=4, bias=1.0)
    _, diags = run_sequence(seq, TrackerConfig(mode="decision_dfat", **FAST))
    assert all(d["bias_gap"] is not None for d in diags[1:])
    assert all(d["lambda12"] > 0 and d["lambda22"] > 0 for d in diags[1:])
    _, diags = run_sequence(seq, TrackerConfig(mode="rgb_only", **FAST))
    assert all(d["bias_gap"] is None for d in diags[1:])


def test_modulated_gap_vanishes_under_cross_weighting():
    seq = _seq(seed=3, n=6, bias=1.0)
    _, diags = run_sequence(seq, TrackerConfig(mode="decision_dfat", **FAST))
    for d in diags[1:]:
        assert abs(d["bias_gap_mod"]) < 1e-9


def test_template_updates_follow_the_cadence():
    seq = _seq(seed=4, n=13)
    cfg = TrackerConfig(template_cadence=5, **FAST)
    _, diags = run_sequence(seq, cfg)
    updated = [i for i, d in enumerate(diags) if d["template_updated"]]
    assert updated == [5, 10]


def test_template_updates_can_be_disabled():
    seq = _seq(seed=4, n=13)
    cfg = TrackerConfig(template_cadence=5, template_update=False, **FAST)
    _, diags = run_sequence(seq, cfg)
    assert not any(d["template_updated"] for d in diags)


def test_runs_are_deterministic():
    seq = _seq(seed=7, n=6)
    cfg = TrackerConfig(**FAST)
    a, _ = run_sequence(seq, cfg)
    b, _ = run_sequence(seq, cfg)
    assert a == b


def test_start_offset_tracks_the_tail():
    seq = _seq(seed=8, n=10)
    boxes, diags = run_sequence(seq, TrackerConfig(**FAST), start=6)
    assert len(boxes) == 4
    assert boxes[0] == seq.gt_boxes()[6]


def test_empty_tail_is_rejected():
    seq = _seq(seed=8, n=3)
    with pytest.raises(DataError):
        run_sequence(seq, TrackerConfig(**FAST), start=3)
