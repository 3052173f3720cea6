"""Per-frame tracking loop over aligned RGB/TIR pairs.

Crops a context window around the previous box, embeds each stream, runs the
RPN heads, applies the configured fusion mode, postprocesses to a box, and
manages cadence-based template updates.  Fusion modes:

- decision_dfat: modality score maps cross-weighted by each other's positive
  mean before softmax (the de-biased fusion path).
- decision_avg: plain 0.5/0.5 average of the raw maps.
- after_norm: per-modality softmax first, probabilities averaged.
- feature: streams merged at the embedding level, one head pass.
- pixel: streams rebuilt from low-rank image fusion, then averaged.
- rgb_only / tir_only: single modality baselines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import cv2
import numpy as np

from . import decision, feature, pixel, siamese
from .data import DataError, Sequence
from .geometry import AnchorGrid, BBox, region_to_bbox

MODES = (
    "decision_dfat",
    "decision_avg",
    "after_norm",
    "feature",
    "pixel",
    "rgb_only",
    "tir_only",
)


@dataclass
class TrackerConfig:
    mode: str = "decision_dfat"
    weights: decision.FusionWeights = field(default_factory=decision.FusionWeights)
    post: decision.PostprocessConfig = field(default_factory=decision.PostprocessConfig)
    selection: feature.SelectionConfig = field(default_factory=feature.SelectionConfig)
    attention: feature.AttentionConfig = field(default_factory=feature.AttentionConfig)
    level: pixel.LevelSelector = field(default_factory=pixel.LevelSelector)
    pairing: str = "fused_fused"
    exemplar_size: int = 127
    instance_size: int = 255
    context_amount: float = 0.5
    scales: tuple = (64.0,)
    ratios: tuple = (0.5, 1.0, 2.0)
    head_weights: siamese.HeadWeights = field(default_factory=siamese.HeadWeights)
    backbone_seed: int = 7
    channels: int = 16
    neck_channels: int = 32
    template_lr: float = 0.1
    template_cadence: int = 10
    template_update: bool = True
    patch_side: int = 16
    latlrr_lambda: float = 0.4
    latlrr_tol: float = 1e-5
    latlrr_max_iter: int = 400
    corpus_patches: int = 200

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}; choose from {MODES}")
        if self.instance_size <= self.exemplar_size:
            raise ValueError("instance_size must exceed exemplar_size")
        if self.pairing not in ("fused_fused", "fused_tir"):
            raise ValueError(f"unknown pairing {self.pairing!r}")


@dataclass
class TrackerState:
    prev: BBox
    templates: dict  # stream name -> TemplateState
    frame_index: int
    image_shape: tuple
    bank: siamese.WeightBank
    grid: AnchorGrid
    projection: np.ndarray | None = None


# ---------------------------------------------------------------------------
# shared caches: weight banks and trained projections are pure functions of
# their parameters, so one instance per process is enough

_BANKS: dict = {}
_PROJECTIONS: dict = {}


def _get_bank(cfg: TrackerConfig) -> siamese.WeightBank:
    a = len(cfg.scales) * len(cfg.ratios)
    key = (cfg.backbone_seed, cfg.channels, cfg.neck_channels, a)
    if key not in _BANKS:
        _BANKS[key] = siamese.WeightBank(
            seed=cfg.backbone_seed,
            channels=cfg.channels,
            neck_channels=cfg.neck_channels,
            num_anchors=a,
        )
    return _BANKS[key]


def _get_projection(cfg: TrackerConfig) -> np.ndarray:
    key = (cfg.patch_side, cfg.latlrr_lambda, cfg.corpus_patches, cfg.latlrr_tol, cfg.latlrr_max_iter)
    if key not in _PROJECTIONS:
        corpus = pixel.texture_corpus(
            seed=11, n_patches=cfg.corpus_patches, patch_side=cfg.patch_side
        )
        result = pixel.train_projection(
            corpus, lam=cfg.latlrr_lambda, tol=cfg.latlrr_tol, max_iter=cfg.latlrr_max_iter
        )
        _PROJECTIONS[key] = result.projection
    return _PROJECTIONS[key]


# ---------------------------------------------------------------------------
# crop geometry


def context_side(box: BBox, context_amount: float) -> float:
    """Square context window side: sqrt((w+p)(h+p)) with p = amount*(w+h)."""
    p = context_amount * (box.w + box.h)
    return math.sqrt((box.w + p) * (box.h + p))


def crop_window(img: np.ndarray, cx: float, cy: float, side: float, out_size: int) -> tuple[np.ndarray, float]:
    """Extract a square window (mean-padded outside the frame) and resize.

    Returns the (out_size, out_size, 3) crop and the image-pixels-per-crop-pixel
    scale used, so predictions can be mapped back.
    """
    h, w = img.shape[:2]
    s = max(4, int(round(side)))
    x0 = int(round(cx - s / 2.0))
    y0 = int(round(cy - s / 2.0))
    x1, y1 = x0 + s, y0 + s
    pad_l, pad_t = max(0, -x0), max(0, -y0)
    pad_r, pad_b = max(0, x1 - w), max(0, y1 - h)
    sub = img[max(0, y0) : min(h, y1), max(0, x0) : min(w, x1)]
    if pad_l or pad_t or pad_r or pad_b:
        mean = img.mean(axis=(0, 1))
        padded = np.empty((s, s, img.shape[2]), dtype=np.float64)
        padded[:] = mean
        padded[pad_t : s - pad_b, pad_l : s - pad_r] = sub
        sub = padded
    crop = cv2.resize(sub, (out_size, out_size), interpolation=cv2.INTER_LINEAR)
    return crop, s / out_size


def _conv_spatial(size: int) -> int:
    s1 = (size - 7) // 4 + 1
    return (s1 - 3) // 2 + 1


def correlation_spatial(cfg: TrackerConfig) -> int:
    return _conv_spatial(cfg.instance_size) - _conv_spatial(cfg.exemplar_size) + 1


# ---------------------------------------------------------------------------
# stream plumbing


def _stream_images(cfg: TrackerConfig, rgb: np.ndarray, tir: np.ndarray, projection) -> dict:
    """Images per network stream for the configured mode."""
    tir3 = siamese.triplicate_tir(tir)
    if cfg.mode == "rgb_only":
        return {"rgb": rgb}
    if cfg.mode == "tir_only":
        return {"tir": tir3}
    if cfg.mode == "pixel":
        a, b = pixel.fuse_images(rgb, tir, projection, cfg.level, cfg.pairing, cfg.patch_side)
        if cfg.pairing == "fused_fused":
            return {"a": a}
        return {"a": a, "b": b}
    return {"rgb": rgb, "tir": tir3}


def _embed_streams(bank, images: dict) -> dict:
    return {name: siamese.embed(bank, img) for name, img in images.items()}


def _fused_taps(cfg: TrackerConfig, taps_rgb: dict, taps_tir: dict) -> dict:
    return {
        layer: feature.fuse_features(taps_rgb[layer], taps_tir[layer], cfg.selection, cfg.attention)
        for layer in siamese.HEAD_LAYERS
    }


def _head_pass(cfg: TrackerConfig, bank, z_taps: dict, x_taps: dict):
    cls_maps, reg_maps = {}, {}
    for layer in siamese.HEAD_LAYERS:
        cls_maps[layer], reg_maps[layer] = siamese.rpn_head(bank, layer, z_taps[layer], x_taps[layer])
    return siamese.aggregate(cls_maps, reg_maps, cfg.head_weights)


# ---------------------------------------------------------------------------
# public API


def init(rgb0: np.ndarray, tir0: np.ndarray, gt: BBox, cfg: TrackerConfig) -> TrackerState:
    """Build tracker state from the annotated first frame."""
    bank = _get_bank(cfg)
    spatial = correlation_spatial(cfg)
    grid = AnchorGrid(
        stride=8,
        scales=tuple(cfg.scales),
        ratios=tuple(cfg.ratios),
        spatial=(spatial, spatial),
        window=cfg.instance_size,
    )
    projection = _get_projection(cfg) if cfg.mode == "pixel" else None
    images = _stream_images(cfg, rgb0, tir0, projection)

    s_z = context_side(gt, cfg.context_amount)
    templates = {}
    for name, img in images.items():
        crop, _ = crop_window(img, gt.cx, gt.cy, s_z, cfg.exemplar_size)
        templates[name] = siamese.TemplateState(
            taps=siamese.embed(bank, crop), lr=cfg.template_lr, cadence=cfg.template_cadence
        )
    if cfg.mode == "feature":
        fused = _fused_taps(cfg, templates["rgb"].taps, templates["tir"].taps)
        templates = {
            "rgb": templates["rgb"],
            "tir": templates["tir"],
            "fused": replace(templates["rgb"], taps=fused),
        }
    return TrackerState(
        prev=gt,
        templates=templates,
        frame_index=0,
        image_shape=rgb0.shape[:2],
        bank=bank,
        grid=grid,
        projection=projection,
    )


def _decide(cfg: TrackerConfig, cls_by_stream: dict, reg_by_stream: dict):
    """Apply the fusion mode; returns (prob, reg, diagnostics)."""
    diag = {"lambda12": None, "lambda22": None, "bias_gap": None, "bias_gap_mod": None}
    names = list(cls_by_stream)
    if len(names) == 1:
        return decision.normalize(cls_by_stream[names[0]]), reg_by_stream[names[0]], diag

    c_a, c_b = cls_by_stream[names[0]], cls_by_stream[names[1]]
    r_a, r_b = reg_by_stream[names[0]], reg_by_stream[names[1]]
    diag["bias_gap"] = decision.bias_gap(c_a, c_b)

    if cfg.mode == "decision_dfat":
        fused = decision.fuse_decision(c_a, c_b, r_a, r_b, cfg.weights)
        diag["lambda12"] = fused.weights.lambda12
        diag["lambda22"] = fused.weights.lambda22
        diag["bias_gap_mod"] = fused.bias_gap_modulated
        return decision.normalize(fused.cls), fused.reg, diag

    flat = replace(cfg.weights, lambda12=0.5, lambda22=0.5)
    reg = decision.fuse_regression(r_a, r_b, flat)
    if cfg.mode == "after_norm":
        prob = 0.5 * decision.normalize(cfg.weights.s * c_a) + 0.5 * decision.normalize(
            cfg.weights.s * c_b
        )
        diag["lambda12"] = 0.5
        diag["lambda22"] = 0.5
        return prob, reg, diag

    # decision_avg and the two-stream pixel pairing
    cls = decision.fuse_classification(c_a, c_b, flat)
    diag["lambda12"] = 0.5
    diag["lambda22"] = 0.5
    return decision.normalize(cls), reg, diag


def track_frame(state: TrackerState, rgb: np.ndarray, tir: np.ndarray, cfg: TrackerConfig):
    """Advance one frame; returns (predicted BBox, diagnostics dict)."""
    if rgb.shape[:2] != state.image_shape:
        raise DataError(f"frame size {rgb.shape[:2]} differs from init {state.image_shape}")
    prev = state.prev
    s_z = context_side(prev, cfg.context_amount)
    s_x = s_z * cfg.instance_size / cfg.exemplar_size

    images = _stream_images(cfg, rgb, tir, state.projection)
    crops, scale = {}, 1.0
    for name, img in images.items():
        crops[name], scale = crop_window(img, prev.cx, prev.cy, s_x, cfg.instance_size)
    x_taps = _embed_streams(state.bank, crops)

    cls_by_stream, reg_by_stream = {}, {}
    if cfg.mode == "feature":
        fused_x = _fused_taps(cfg, x_taps["rgb"], x_taps["tir"])
        cls_f, reg_f = _head_pass(cfg, state.bank, state.templates["fused"].taps, fused_x)
        cls_by_stream["fused"], reg_by_stream["fused"] = cls_f, reg_f
        cls_r, _ = _head_pass(cfg, state.bank, state.templates["rgb"].taps, x_taps["rgb"])
        cls_t, _ = _head_pass(cfg, state.bank, state.templates["tir"].taps, x_taps["tir"])
        raw_gap = decision.bias_gap(cls_r, cls_t)
    else:
        for name in x_taps:
            cls_by_stream[name], reg_by_stream[name] = _head_pass(
                cfg, state.bank, state.templates[name].taps, x_taps[name]
            )
        raw_gap = None

    prob, reg, diag = _decide(cfg, cls_by_stream, reg_by_stream)
    if cfg.mode == "feature":
        diag["bias_gap"] = raw_gap

    # postprocess in crop coordinates, then map back to the image
    e_per_i = cfg.exemplar_size / s_z  # crop pixels per image pixel at exemplar scale
    prev_crop = BBox(
        cfg.instance_size / 2.0, cfg.instance_size / 2.0, prev.w * e_per_i, prev.h * e_per_i
    )
    box_c, info = decision.postprocess(prob, reg, state.grid, prev_crop, cfg.post)
    h, w = state.image_shape
    cx = prev.cx + (box_c.cx - cfg.instance_size / 2.0) * scale
    cy = prev.cy + (box_c.cy - cfg.instance_size / 2.0) * scale
    bw = box_c.w * scale
    bh = box_c.h * scale
    out = BBox(
        cx=float(np.clip(cx, 0.0, w - 1.0)),
        cy=float(np.clip(cy, 0.0, h - 1.0)),
        w=float(np.clip(bw, 4.0, w)),
        h=float(np.clip(bh, 4.0, h)),
    )

    state.prev = out
    state.frame_index += 1
    diag["score"] = float(prob.ravel()[info["index"]])
    diag["index"] = info["index"]

    # cadence-based template refresh from the predicted box
    new_templates = {}
    for name, ts in state.templates.items():
        new_templates[name] = replace(ts, frames_seen=ts.frames_seen + 1)
    state.templates = new_templates
    due = cfg.template_update and any(ts.due() for ts in state.templates.values())
    if due:
        s_z_new = context_side(out, cfg.context_amount)
        z_taps = {}
        for name, img in images.items():
            crop, _ = crop_window(img, out.cx, out.cy, s_z_new, cfg.exemplar_size)
            z_taps[name] = siamese.embed(state.bank, crop)
        if cfg.mode == "feature":
            z_taps["fused"] = _fused_taps(cfg, z_taps["rgb"], z_taps["tir"])
        state.templates = {
            name: siamese.update_template(ts, z_taps[name]) for name, ts in state.templates.items()
        }
        diag["template_updated"] = True
    else:
        diag["template_updated"] = False
    return out, diag


def run_sequence(seq: Sequence, cfg: TrackerConfig, start: int = 0, gt_box: BBox | None = None):
    """Track a full sequence; frame `start` echoes its ground truth.

    Returns (boxes, diagnostics), one entry per frame from `start` on.
    """
    if len(seq) - start < 1:
        raise DataError("empty sequence")
    gt0 = gt_box if gt_box is not None else region_to_bbox(seq.gt[start])
    state = init(seq.rgb[start], seq.tir[start], gt0, cfg)
    boxes = [gt0]
    diags = [{"score": 1.0, "lambda12": None, "lambda22": None, "bias_gap": None,
              "bias_gap_mod": None, "index": None, "template_updated": False}]
    for t in range(start + 1, len(seq)):
        box, diag = track_frame(state, seq.rgb[t], seq.tir[t], cfg)
        boxes.append(box)
        diags.append(diag)
    return boxes, diags
