"""Channel selection and attention-pooled fusion of per-modality feature maps.

Feature maps are (C, H, W).  Selection keeps the most significant channels at
their original indices and zeroes the rest; the remaining maps are blended by
a convex pair of scalars derived from pooled attention vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class SelectionConfig:
    keep_fraction: float = 0.8
    enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ValueError("keep_fraction must be in (0, 1]")


@dataclass
class AttentionConfig:
    type: str = "C"  # "C" channel attention | "S" spatial attention
    vector_pool: str = "max"  # pooling that builds the attention vector
    scalar_reduce: str = "mean"  # reduction of the vector to one scalar

    def __post_init__(self):
        if self.type not in ("S", "C"):
            raise ValueError("attention type must be 'S' or 'C'")
        if self.vector_pool not in ("mean", "max"):
            raise ValueError("vector_pool must be 'mean' or 'max'")
        if self.scalar_reduce not in ("mean", "max"):
            raise ValueError("scalar_reduce must be 'mean' or 'max'")


def channel_significance(f: np.ndarray) -> np.ndarray:
    """Per-channel significance: global max pooling over spatial positions."""
    return f.reshape(f.shape[0], -1).max(axis=1)


def select_channels(f: np.ndarray, cfg: SelectionConfig) -> np.ndarray:
    """Zero all but the ceil(keep_fraction * C) most significant channels.

    Channel order is preserved; ties keep the lower channel index.
    """
    if not cfg.enabled:
        return f
    c = f.shape[0]
    keep = math.ceil(cfg.keep_fraction * c)
    if keep >= c:
        return f
    sig = channel_significance(f)
    order = np.argsort(-sig, kind="stable")  # stable: equal scores keep lower index first
    out = np.zeros_like(f)
    kept = order[:keep]
    out[kept] = f[kept]
    return out


def attention_vector(f: np.ndarray, cfg: AttentionConfig) -> np.ndarray:
    """Pooled attention vector: length C for channel type, H*W for spatial type."""
    if cfg.type == "C":
        flat = f.reshape(f.shape[0], -1)
        return flat.mean(axis=1) if cfg.vector_pool == "mean" else flat.max(axis=1)
    flat = f.reshape(f.shape[0], -1)
    return flat.mean(axis=0) if cfg.vector_pool == "mean" else flat.max(axis=0)


def fusion_scalars(
    v_rgb: np.ndarray, v_tir: np.ndarray, cfg: AttentionConfig
) -> tuple[float, float]:
    """Normalized (w_rgb, w_tir), nonnegative and summing to 1.

    Reduced scalars are clamped at zero so the blend stays convex; when both
    vanish the weights fall back to 0.5/0.5.
    """
    if v_rgb.shape != v_tir.shape:
        raise ValueError("attention vectors must have equal length")
    reduce = np.mean if cfg.scalar_reduce == "mean" else np.max
    s_rgb = max(float(reduce(v_rgb)), 0.0)
    s_tir = max(float(reduce(v_tir)), 0.0)
    total = s_rgb + s_tir
    if total == 0.0:
        return 0.5, 0.5
    return s_rgb / total, s_tir / total


def fuse_features(
    f_rgb: np.ndarray,
    f_tir: np.ndarray,
    sel: SelectionConfig,
    att: AttentionConfig,
) -> np.ndarray:
    """Select, pool, and convexly blend the two modality maps."""
    if f_rgb.shape != f_tir.shape:
        raise ValueError(f"feature map shapes differ: {f_rgb.shape} vs {f_tir.shape}")
    f_rgb = select_channels(f_rgb, sel)
    f_tir = select_channels(f_tir, sel)
    w_rgb, w_tir = fusion_scalars(
        attention_vector(f_rgb, att), attention_vector(f_tir, att), att
    )
    return w_rgb * f_rgb + w_tir * f_tir
