"""Multi-level latent low-rank image fusion.

A projection operator is learned once from a patch corpus by an alternating
direction multiplier scheme, then used to split each grayscale image into
per-level detail layers plus a base layer.  Detail layers are blended by
nuclear-norm weights per patch, bases by plain averaging, and the fused image
is reassembled from the fused parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


# ---------------------------------------------------------------------------
# proximal operators


def soft_threshold(m: np.ndarray, tau: float) -> np.ndarray:
    """Elementwise shrinkage toward zero by tau."""
    return np.sign(m) * np.maximum(np.abs(m) - tau, 0.0)


def svt(m: np.ndarray, tau: float) -> np.ndarray:
    """Singular value thresholding: shrink singular values by tau."""
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    keep = s > 0
    if not keep.any():
        return np.zeros_like(m)
    return (u[:, keep] * s[keep]) @ vt[keep]


def nuclear_norm(m: np.ndarray) -> float:
    return float(np.linalg.svd(m, compute_uv=False).sum())


# ---------------------------------------------------------------------------
# projection training


@dataclass
class TrainResult:
    """Outcome of a projection-learning run."""

    projection: np.ndarray  # the p x p detail extractor L
    coefficients: np.ndarray  # n x n low-rank representation Z
    sparse: np.ndarray  # p x n residual E
    relative_residual: float
    iterations: int
    converged: bool
    objective_history: list[float] = field(default_factory=list)


def train_projection(
    patches: np.ndarray,
    lam: float = 0.4,
    tol: float = 1e-6,
    max_iter: int = 2000,
) -> TrainResult:
    """Learn the detail projection L from patch columns X (p x n).

    Solves  min ||Z||_* + ||L||_* + lam * ||E||_1  s.t.  X = X Z + L X + E
    by inexact augmented-Lagrangian alternation with auxiliary splits J = Z and
    S = L (both updated by singular value thresholding) and a soft-threshold
    step for E.  Non-convergence within max_iter is flagged, not fatal.
    """
    x = np.asarray(patches, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty patch set")
    if lam <= 0:
        raise ValueError("lam must be positive")
    d, n = x.shape

    x_norm = np.linalg.norm(x)
    xtx = x.T @ x
    inv_a = np.linalg.inv(xtx + np.eye(n))
    inv_b = np.linalg.inv(x @ x.T + np.eye(d))

    z = np.zeros((n, n))
    l = np.zeros((d, d))
    e = np.zeros((d, n))
    y1 = np.zeros((d, n))
    y2 = np.zeros((n, n))
    y3 = np.zeros((d, d))

    mu, rho, max_mu = 1e-4, 1.15, 1e10
    history: list[float] = []
    rel_res = 0.0 if x_norm == 0 else 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        j = svt(z + y2 / mu, 1.0 / mu)
        s = svt(l + y3 / mu, 1.0 / mu)
        z = inv_a @ (xtx - x.T @ l @ x - x.T @ e + j + (x.T @ y1 - y2) / mu)
        l = ((x - x @ z - e) @ x.T + s + (y1 @ x.T - y3) / mu) @ inv_b
        xmaz = x - x @ z - l @ x
        e = soft_threshold(xmaz + y1 / mu, lam / mu)

        leq1 = xmaz - e
        leq2 = z - j
        leq3 = l - s
        res = np.linalg.norm(leq1)
        rel_res = res if x_norm == 0 else res / x_norm
        history.append(nuclear_norm(z) + nuclear_norm(l) + lam * float(np.abs(e).sum()))
        gap = max(np.abs(leq2).max(initial=0.0), np.abs(leq3).max(initial=0.0))
        if rel_res <= tol and gap <= tol:
            converged = True
            break
        y1 = y1 + mu * leq1
        y2 = y2 + mu * leq2
        y3 = y3 + mu * leq3
        mu = min(max_mu, mu * rho)

    return TrainResult(
        projection=l,
        coefficients=z,
        sparse=e,
        relative_residual=float(rel_res),
        iterations=it,
        converged=converged,
        objective_history=history,
    )


def texture_corpus(seed: int = 7, n_patches: int = 200, patch_side: int = 16) -> np.ndarray:
    """Seeded procedural training patches: gratings, checkers, smoothed noise.

    Returns columns of vectorized patches, shape (patch_side**2, n_patches),
    values in [0, 1].
    """
    rng = np.random.default_rng(seed)
    p = patch_side
    yy, xx = np.mgrid[0:p, 0:p].astype(np.float64)
    cols = np.empty((p * p, n_patches))
    for k in range(n_patches):
        kind = k % 3
        if kind == 0:
            freq = rng.uniform(0.2, 1.5)
            theta = rng.uniform(0, math.pi)
            phase = rng.uniform(0, 2 * math.pi)
            img = 0.5 + 0.5 * np.sin(freq * (xx * math.cos(theta) + yy * math.sin(theta)) + phase)
        elif kind == 1:
            cell = rng.integers(2, max(3, p // 2))
            img = ((xx // cell + yy // cell) % 2).astype(np.float64)
        else:
            noise = rng.standard_normal((p, p))
            kernel = np.ones(3) / 3.0
            img = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 0, noise)
            img = np.apply_along_axis(lambda r: np.convolve(r, kernel, mode="same"), 1, img)
            img = (img - img.min()) / (img.max() - img.min() + 1e-12)
        cols[:, k] = img.ravel()
    return cols


# ---------------------------------------------------------------------------
# patch bookkeeping


def _pad_to_multiple(img: np.ndarray, patch: int) -> np.ndarray:
    h, w = img.shape
    ph = (-h) % patch
    pw = (-w) % patch
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, ph), (0, pw)), mode="edge")


def unfold(img: np.ndarray, patch: int, stride: int) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Vectorize patch windows into columns; returns (p*p, n) and window origins."""
    h, w = img.shape
    if h < patch or w < patch:
        raise ValueError(f"image {img.shape} smaller than patch {patch}")
    origins = [(i, j) for i in range(0, h - patch + 1, stride) for j in range(0, w - patch + 1, stride)]
    cols = np.empty((patch * patch, len(origins)))
    for k, (i, j) in enumerate(origins):
        cols[:, k] = img[i : i + patch, j : j + patch].ravel()
    return cols, origins


def fold(cols: np.ndarray, origins: list[tuple[int, int]], shape: tuple[int, int], patch: int) -> np.ndarray:
    """Reassemble columns into an image, averaging where windows overlap."""
    acc = np.zeros(shape)
    cnt = np.zeros(shape)
    for k, (i, j) in enumerate(origins):
        acc[i : i + patch, j : j + patch] += cols[:, k].reshape(patch, patch)
        cnt[i : i + patch, j : j + patch] += 1.0
    cnt[cnt == 0] = 1.0
    return acc / cnt


# ---------------------------------------------------------------------------
# decomposition and fusion


@dataclass
class LevelSelector:
    """One-hot pick of the reconstruction level (1-based)."""

    level: int = 2
    max_level: int = 4

    def __post_init__(self):
        if not 1 <= self.level <= self.max_level:
            raise ValueError(f"level must be in 1..{self.max_level}")

    def one_hot(self) -> np.ndarray:
        v = np.zeros(self.max_level, dtype=int)
        v[self.level - 1] = 1
        return v


def decompose(
    img: np.ndarray,
    projection: np.ndarray,
    level: int,
    patch_side: int = 16,
    stride: int | None = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Split a grayscale image into `level` detail layers and a final base.

    Per level the current image is unfolded into patch columns, projected by L
    to give the detail layer, and the remainder becomes the base feeding the
    next level.  Summing all details with the final base reproduces the input.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    stride = patch_side if stride is None else stride
    p = projection.shape[0]
    if projection.shape != (p, p) or p != patch_side * patch_side:
        raise ValueError("projection must be square with side patch_side**2")
    current = np.asarray(img, dtype=np.float64)
    details: list[np.ndarray] = []
    for _ in range(level):
        cols, origins = unfold(current, patch_side, stride)
        detail = fold(projection @ cols, origins, current.shape, patch_side)
        details.append(detail)
        current = current - detail
    return details, current


def fuse_detail(d_rgb: np.ndarray, d_tir: np.ndarray, patch_side: int = 16) -> np.ndarray:
    """Blend two detail layers patch by patch with nuclear-norm weights."""
    if d_rgb.shape != d_tir.shape:
        raise ValueError("detail layers must have matching shapes")
    out = np.empty_like(d_rgb)
    h, w = d_rgb.shape
    for i in range(0, h, patch_side):
        for j in range(0, w, patch_side):
            pa = d_rgb[i : i + patch_side, j : j + patch_side]
            pb = d_tir[i : i + patch_side, j : j + patch_side]
            na, nb = nuclear_norm(pa), nuclear_norm(pb)
            total = na + nb
            wa = 0.5 if total == 0 else na / total
            out[i : i + patch_side, j : j + patch_side] = wa * pa + (1.0 - wa) * pb
    return out


def fuse_base(b_rgb: np.ndarray, b_tir: np.ndarray) -> np.ndarray:
    """Elementwise mean of the two base layers."""
    if b_rgb.shape != b_tir.shape:
        raise ValueError("base layers must have matching shapes")
    return 0.5 * (b_rgb + b_tir)


def luminance(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma of an (H, W, 3) image; grayscale passes through."""
    if img.ndim == 2:
        return np.asarray(img, dtype=np.float64)
    return 0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2]


def _to_rgb(gray: np.ndarray) -> np.ndarray:
    return np.repeat(gray[..., None], 3, axis=2)


def fuse_images(
    rgb: np.ndarray,
    tir: np.ndarray,
    projection: np.ndarray,
    selector: LevelSelector,
    pairing: str = "fused_fused",
    patch_side: int = 16,
) -> tuple[np.ndarray, np.ndarray]:
    """Fuse an aligned RGB/TIR pair and return the tracking input pair.

    Both images are reduced to luminance, decomposed to the selected level,
    detail layers fused by nuclear-norm weighting and bases averaged.  The
    fused luminance is replicated to 3 channels.  Pairing 'fused_fused' feeds
    the fused image to both streams; 'fused_tir' keeps the original TIR
    (triplicated) as the second stream.
    """
    if pairing not in ("fused_fused", "fused_tir"):
        raise ValueError(f"unknown pairing {pairing!r}")
    ga = luminance(rgb)
    gb = luminance(tir)
    if ga.shape != gb.shape:
        raise ValueError(f"image sizes differ: {ga.shape} vs {gb.shape}")
    orig = ga.shape
    ga = _pad_to_multiple(ga, patch_side)
    gb = _pad_to_multiple(gb, patch_side)

    det_a, base_a = decompose(ga, projection, selector.level, patch_side)
    det_b, base_b = decompose(gb, projection, selector.level, patch_side)
    fused = fuse_base(base_a, base_b)
    for da, db in zip(det_a, det_b):
        fused = fused + fuse_detail(da, db, patch_side)
    fused = np.clip(fused[: orig[0], : orig[1]], 0.0, 1.0)

    first = _to_rgb(fused)
    if pairing == "fused_fused":
        return first, first.copy()
    return first, _to_rgb(gb[: orig[0], : orig[1]])
