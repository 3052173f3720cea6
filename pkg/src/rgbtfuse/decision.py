"""De-biased decision-level fusion of per-modality RPN outputs.

Classification maps are (2, A, H, W): channel 0 background, channel 1
foreground.  Regression maps are (4, A, H, W).  The RGB stream tends to score
systematically higher than the TIR stream; the cross-weighting below rescales
each modality by the other's positive-score mean so both contribute at matched
magnitude before the shrink (division by the weight sum) and the scale factor s.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AnchorGrid, BBox, decode

# Positive-mean fallback when a map has no positive entry: a tiny weight
# effectively mutes that modality without dividing by zero.
EMPTY_POSITIVE_FALLBACK = 1e-6


@dataclass
class FusionWeights:
    """Weights of the decision-level blend.

    lambda11/lambda21 weight the regression branches and stay fixed; lambda12/
    lambda22 weight the classification branches and are recomputed per frame
    from the score maps.  s rescales the fused classification scores.
    """

    lambda11: float = 0.5
    lambda21: float = 0.5
    s: float = 0.5
    lambda12: float | None = None
    lambda22: float | None = None

    def __post_init__(self):
        if self.lambda11 < 0 or self.lambda21 < 0 or self.lambda11 + self.lambda21 == 0:
            raise ValueError("regression weights must be nonnegative and not both zero")
        if self.s <= 0:
            raise ValueError("scaling factor s must be positive")


@dataclass
class PostprocessConfig:
    window_influence: float = 0.4
    penalty_k: float = 0.04
    size_lr: float = 0.32

    def __post_init__(self):
        if not 0.0 <= self.window_influence <= 1.0:
            raise ValueError("window_influence must be in [0, 1]")
        if self.penalty_k < 0:
            raise ValueError("penalty_k must be nonnegative")
        if not 0.0 <= self.size_lr <= 1.0:
            raise ValueError("size_lr must be in [0, 1]")


def positive_mean(m: np.ndarray) -> float:
    """Arithmetic mean of the strictly positive entries of m.

    Falls back to EMPTY_POSITIVE_FALLBACK when nothing is positive.
    """
    m = np.asarray(m)
    mask = m > 0
    if not mask.any():
        return EMPTY_POSITIVE_FALLBACK
    return float(m[mask].mean())


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"modality map shapes differ: {a.shape} vs {b.shape}")


def debias_weights(c_rgb: np.ndarray, c_tir: np.ndarray) -> tuple[float, float]:
    """(lambda12, lambda22) from the foreground channels.

    Cross assignment: the RGB map is weighted by the TIR positive mean and vice
    versa, which matches the two magnitudes exactly (see bias_gap).
    """
    _check_pair(c_rgb, c_tir)
    lambda12 = positive_mean(c_tir[1])
    lambda22 = positive_mean(c_rgb[1])
    return lambda12, lambda22


def fuse_classification(
    c_rgb: np.ndarray, c_tir: np.ndarray, weights: FusionWeights
) -> np.ndarray:
    """Fused classification map s * (l12*C_rgb + l22*C_tir) / (l12 + l22).

    Foreground channels are rectified at zero before weighting; the background
    channel is blended with the same weights but left unrectified so the
    softmax still sees a two-channel contrast.
    """
    _check_pair(c_rgb, c_tir)
    l12, l22 = weights.lambda12, weights.lambda22
    if l12 is None or l22 is None:
        l12, l22 = debias_weights(c_rgb, c_tir)
    s = weights.s
    out = np.empty_like(c_rgb, dtype=np.float64)
    out[1] = s * (l12 * np.maximum(c_rgb[1], 0.0) + l22 * np.maximum(c_tir[1], 0.0)) / (l12 + l22)
    out[0] = s * (l12 * c_rgb[0] + l22 * c_tir[0]) / (l12 + l22)
    return out


def fuse_regression(b_rgb: np.ndarray, b_tir: np.ndarray, weights: FusionWeights) -> np.ndarray:
    """Fused regression map (l11*B_rgb + l21*B_tir) / (l11 + l21)."""
    _check_pair(b_rgb, b_tir)
    l11, l21 = weights.lambda11, weights.lambda21
    return (l11 * b_rgb + l21 * b_tir) / (l11 + l21)


def normalize(cls_map: np.ndarray) -> np.ndarray:
    """Per-location softmax over the (background, foreground) pair.

    Returns the foreground probability field of shape (A, H, W).
    """
    shifted = cls_map - cls_map.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e[1] / (e[0] + e[1])


def hann_window(spatial: tuple[int, int]) -> np.ndarray:
    """Cosine window over the response map, peak 1 at the center."""
    h, w = spatial
    wy = np.hanning(h + 2)[1:-1] if h > 1 else np.ones(1)
    wx = np.hanning(w + 2)[1:-1] if w > 1 else np.ones(1)
    return np.outer(wy, wx)


def _change(r: np.ndarray) -> np.ndarray:
    return np.maximum(r, 1.0 / r)


def _padded_size(w, h):
    pad = (w + h) * 0.5
    return np.sqrt((w + pad) * (h + pad))


def postprocess(
    prob: np.ndarray,
    reg: np.ndarray,
    grid: AnchorGrid,
    prev: BBox,
    cfg: PostprocessConfig,
) -> tuple[BBox, dict]:
    """Turn a probability field and regression map into the next box.

    pscore = prob * penalty * (1 - wi) + window * wi, with the usual size/ratio
    change penalty against the previous box; the argmax anchor is decoded and
    its size blended into the previous size with size_lr.
    """
    a, h, w = prob.shape
    if prob.size == 0:
        raise ValueError("empty probability map")
    boxes = decode(reg, grid)

    ratio_prev = prev.w / prev.h
    ratio_cand = boxes[..., 2] / boxes[..., 3]
    r_change = _change(ratio_prev / ratio_cand)
    sc_change = _change(_padded_size(boxes[..., 2], boxes[..., 3]) / _padded_size(prev.w, prev.h))
    penalty = np.exp(-cfg.penalty_k * (r_change * sc_change - 1.0))

    window = hann_window((h, w))
    wi = cfg.window_influence
    pscore = prob * penalty * (1.0 - wi) + window[None, :, :] * wi

    idx = int(np.argmax(pscore))  # ties resolve to the lowest linear index
    ai, ii, ji = np.unravel_index(idx, pscore.shape)
    sel = boxes[ai, ii, ji]
    lr = cfg.size_lr
    out = BBox(
        sel[0],
        sel[1],
        (1.0 - lr) * prev.w + lr * sel[2],
        (1.0 - lr) * prev.h + lr * sel[3],
    )
    info = {
        "index": idx,
        "anchor": (int(ai), int(ii), int(ji)),
        "pscore": float(pscore[ai, ii, ji]),
        "prob": float(prob[ai, ii, ji]),
        "penalty": float(penalty[ai, ii, ji]),
    }
    return out, info


def select_index(prob: np.ndarray, reg: np.ndarray, grid: AnchorGrid, prev: BBox, cfg: PostprocessConfig) -> int:
    """Linear index of the anchor the postprocessor would select."""
    _, info = postprocess(prob, reg, grid, prev, cfg)
    return info["index"]


def bias_gap(c_rgb: np.ndarray, c_tir: np.ndarray) -> float:
    """Positive-mean gap between the foreground channels (RGB minus TIR)."""
    _check_pair(c_rgb, c_tir)
    return positive_mean(c_rgb[1]) - positive_mean(c_tir[1])


@dataclass
class FusedDecision:
    """Fused maps plus the weight snapshot and bias diagnostics they used."""

    cls: np.ndarray
    reg: np.ndarray
    weights: FusionWeights
    bias_gap: float
    bias_gap_modulated: float


def fuse_decision(
    c_rgb: np.ndarray,
    c_tir: np.ndarray,
    b_rgb: np.ndarray,
    b_tir: np.ndarray,
    weights: FusionWeights,
) -> FusedDecision:
    """Full de-biased fusion of both branches with diagnostics."""
    l12, l22 = debias_weights(c_rgb, c_tir)
    snap = FusionWeights(weights.lambda11, weights.lambda21, weights.s, l12, l22)
    return FusedDecision(
        cls=fuse_classification(c_rgb, c_tir, snap),
        reg=fuse_regression(b_rgb, b_tir, snap),
        weights=snap,
        bias_gap=bias_gap(c_rgb, c_tir),
        bias_gap_modulated=bias_gap(l12 * c_rgb, l22 * c_tir),
    )
