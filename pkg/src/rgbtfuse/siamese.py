"""Deterministic Siamese feature extractor and RPN heads.

All weights are drawn once from a seeded generator and frozen; no training is
involved anywhere.  The extractor is a four-stage tanh convnet with an
effective stride of 8, tapped after stages 2..4 by 1x1 necks so the three head
layers see features at identical resolution.  Classification foreground rows
are nonnegative (a matched-filter ensemble over template channels) so that
correlation with the stored template peaks on the target; regression rows are
near zero so predicted offsets stay small.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

HEAD_LAYERS = (2, 3, 4)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Valid 2-D convolution of (C_in, H, W) with (C_out, C_in, kh, kw)."""
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    c_out, c_in, kh, kw = w.shape
    if x.shape[0] != c_in:
        raise ValueError(f"channel mismatch: input {x.shape[0]}, kernel {c_in}")
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(1, 2, 0, 3, 4).reshape(ho * wo, c_in * kh * kw)
    out = cols @ w.reshape(c_out, -1).T + b
    return out.T.reshape(c_out, ho, wo)


def dw_xcorr(z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Per-channel valid cross-correlation of template z over search x."""
    if z.ndim != 3 or x.ndim != 3:
        raise ValueError("dw_xcorr expects (C, H, W) arrays")
    if z.shape[0] != x.shape[0]:
        raise ValueError(f"channel mismatch: {z.shape[0]} vs {x.shape[0]}")
    if z.shape[1] > x.shape[1] or z.shape[2] > x.shape[2]:
        raise ValueError(f"template {z.shape[1:]} exceeds search {x.shape[1:]}")
    win = np.lib.stride_tricks.sliding_window_view(x, z.shape[1:], axis=(1, 2))
    return np.einsum("chwyx,cyx->chw", win, z)


def triplicate_tir(tir: np.ndarray) -> np.ndarray:
    """Replicate a single-channel thermal image across 3 channels."""
    if tir.ndim == 3 and tir.shape[-1] == 1:
        tir = tir[..., 0]
    if tir.ndim == 3 and tir.shape[-1] == 3:
        return tir
    if tir.ndim != 2:
        raise ValueError(f"expected (H, W) or (H, W, 1) thermal image, got {tir.shape}")
    return np.repeat(tir[..., None], 3, axis=2)


@dataclass(frozen=True)
class WeightBank:
    """Frozen random weights for the extractor, necks and heads."""

    seed: int = 7
    channels: int = 16
    neck_channels: int = 32
    num_anchors: int = 5
    params: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        c, n, a = self.channels, self.neck_channels, self.num_anchors
        p: dict[str, np.ndarray] = {}

        def conv_init(c_out, c_in, k):
            fan_in = c_in * k * k
            return rng.standard_normal((c_out, c_in, k, k)) * np.sqrt(2.0 / fan_in)

        p["w1"], p["b1"] = conv_init(c, 3, 7), rng.standard_normal(c) * 0.1
        p["w2"], p["b2"] = conv_init(c, c, 3), rng.standard_normal(c) * 0.1
        p["w3"], p["b3"] = conv_init(c, c, 3), rng.standard_normal(c) * 0.1
        p["w4"], p["b4"] = conv_init(c, c, 3), rng.standard_normal(c) * 0.1
        for layer in HEAD_LAYERS:
            p[f"neck{layer}_w"] = rng.standard_normal((n, c)) * np.sqrt(1.0 / c)
            p[f"neck{layer}_b"] = rng.standard_normal(n) * 0.05
            fg = np.abs(rng.standard_normal((a, n))) * (400.0 / n)
            bg = rng.standard_normal((a, n)) * (32.0 / n)
            p[f"cls{layer}_w"] = np.concatenate([bg, fg], axis=0)
            p[f"cls{layer}_b"] = np.zeros(2 * a)
            p[f"reg{layer}_w"] = rng.standard_normal((4 * a, n)) * 1e-3
            p[f"reg{layer}_b"] = np.zeros(4 * a)
        object.__setattr__(self, "params", p)


def embed(bank: WeightBank, patch: np.ndarray) -> dict[int, np.ndarray]:
    """Run the extractor on an (H, W, 3) image in [0, 1]; tap layers 2..4.

    Stage strides are 4, 2, 1, 1 with same-padding on the last two stages, so
    every tap shares the stage-2 spatial size (effective stride 8).
    """
    if patch.ndim != 3 or patch.shape[-1] != 3:
        raise ValueError(f"expected (H, W, 3) input, got {patch.shape}")
    p = bank.params
    x = np.asarray(patch, dtype=np.float64).transpose(2, 0, 1) - 0.5
    s1 = np.tanh(conv2d(x, p["w1"], p["b1"], stride=4))
    s2 = np.tanh(conv2d(s1, p["w2"], p["b2"], stride=2))
    s3 = np.tanh(conv2d(s2, p["w3"], p["b3"], stride=1, pad=1))
    s4 = np.tanh(conv2d(s3, p["w4"], p["b4"], stride=1, pad=1))
    taps = {}
    for layer, feat in zip(HEAD_LAYERS, (s2, s3, s4)):
        w = p[f"neck{layer}_w"]
        taps[layer] = np.tensordot(w, feat, axes=(1, 0)) + p[f"neck{layer}_b"][:, None, None]
    return taps


def rpn_head(
    bank: WeightBank, layer: int, z: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Correlate template and search features; project to cls and reg maps.

    The template is zero-meaned per channel before correlation and the raw
    correlation is divided by the template window size, so a flat background
    scores near zero regardless of brightness.  Returns cls (2, A, H, W) with
    channel 0 background / 1 foreground, and reg (4, A, H, W).
    """
    if layer not in HEAD_LAYERS:
        raise ValueError(f"layer must be one of {HEAD_LAYERS}")
    p = bank.params
    a = bank.num_anchors
    zc = z - z.mean(axis=(1, 2), keepdims=True)
    corr = dw_xcorr(zc, x) / float(z.shape[1] * z.shape[2])
    c, h, w = corr.shape
    flat = corr.reshape(c, h * w)
    cls = (p[f"cls{layer}_w"] @ flat + p[f"cls{layer}_b"][:, None]).reshape(2, a, h, w)
    reg = (p[f"reg{layer}_w"] @ flat + p[f"reg{layer}_b"][:, None]).reshape(4 * a, h, w)
    return cls, reg.reshape(4, a, h, w)


@dataclass(frozen=True)
class HeadWeights:
    """Per-layer aggregation weights, normalized to sum to one."""

    alpha: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    beta: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        for name in ("alpha", "beta"):
            vals = getattr(self, name)
            if len(vals) != len(HEAD_LAYERS):
                raise ValueError(f"{name} needs {len(HEAD_LAYERS)} entries")
            if any(v < 0 for v in vals):
                raise ValueError(f"{name} entries must be nonnegative")
            total = sum(vals)
            if total <= 0:
                raise ValueError(f"{name} entries must not all be zero")
            object.__setattr__(self, name, tuple(float(v) / total for v in vals))


def aggregate(
    cls_maps: dict[int, np.ndarray],
    reg_maps: dict[int, np.ndarray],
    weights: HeadWeights | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sum of per-layer cls and reg maps across head layers."""
    weights = weights or HeadWeights()
    cls = sum(w * cls_maps[layer] for w, layer in zip(weights.alpha, HEAD_LAYERS))
    reg = sum(w * reg_maps[layer] for w, layer in zip(weights.beta, HEAD_LAYERS))
    return cls, reg


@dataclass(frozen=True)
class TemplateState:
    """Per-stream template features plus the update clock."""

    taps: dict
    lr: float = 0.1
    cadence: int = 10
    frames_seen: int = 0

    def due(self) -> bool:
        return self.frames_seen > 0 and self.frames_seen % self.cadence == 0


def update_template(state: TemplateState, new_taps: dict) -> TemplateState:
    """Blend fresh template features into the running ones: (1-lr) old + lr new."""
    if set(new_taps) != set(state.taps):
        raise ValueError("tap layers differ from stored template")
    merged = {}
    for layer, old in state.taps.items():
        if new_taps[layer].shape != old.shape:
            raise ValueError(f"tap {layer} shape {new_taps[layer].shape} != {old.shape}")
        merged[layer] = (1.0 - state.lr) * old + state.lr * new_taps[layer]
    return replace(state, taps=merged)
