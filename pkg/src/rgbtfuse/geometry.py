"""Box algebra, anchor lattices, and the offset encode/decode pair.

Boxes live in real-valued pixel coordinates, origin at the image top-left,
x rightward, y downward.  Everything here is pure and stateless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in center form (cx, cy, w, h), w and h strictly positive."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got w={self.w}, h={self.h}")

    @property
    def corners(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) corner form."""
        return (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )

    def to_xywh(self) -> tuple[float, float, float, float]:
        """Top-left (x, y, w, h), the on-disk ground-truth convention."""
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    @staticmethod
    def from_xywh(x: float, y: float, w: float, h: float) -> "BBox":
        return BBox(x + w / 2.0, y + h / 2.0, w, h)


@dataclass(frozen=True)
class Region:
    """A ground-truth region: rect4 = (x, y, w, h), poly8 = four corner points."""

    kind: str  # "rect4" | "poly8"
    values: tuple[float, ...]

    def __post_init__(self):
        n = {"rect4": 4, "poly8": 8}.get(self.kind)
        if n is None:
            raise ValueError(f"unknown region kind {self.kind!r}")
        if len(self.values) != n:
            raise ValueError(f"{self.kind} region needs {n} values, got {len(self.values)}")


def region_to_bbox(region: Region) -> BBox:
    """Convert a Region to center form; poly8 uses the axis-aligned min/max envelope."""
    v = region.values
    if region.kind == "rect4":
        return BBox.from_xywh(*v)
    xs, ys = v[0::2], v[1::2]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    return BBox((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union, in [0, 1]; 0 for disjoint boxes."""
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.w * a.h + b.w * b.h - inter
    # corner arithmetic can overshoot the true area by a few ulp at large
    # coordinates, so pin the documented upper bound
    return min(1.0, inter / union)


def center_distance(a: BBox, b: BBox) -> float:
    return math.hypot(a.cx - b.cx, a.cy - b.cy)


@dataclass(frozen=True)
class AnchorGrid:
    """Anchor lattice over an H x W response map.

    Anchor (s, r) has w = s * sqrt(r), h = s / sqrt(r).  Cell (i, j) is centered
    at offset + (j + 0.5) * stride horizontally (same rule vertically), where the
    offset centers the lattice inside a square search window of side `window`
    (no offset when window is None).
    """

    stride: int
    scales: tuple[float, ...]
    ratios: tuple[float, ...]
    spatial: tuple[int, int]
    window: int | None = None
    boxes: np.ndarray = field(init=False, repr=False, compare=False)  # (A, H, W, 4) center form

    def __post_init__(self):
        if self.stride <= 0:
            raise ValueError("stride must be positive")
        if not self.scales or not self.ratios:
            raise ValueError("scales and ratios must be non-empty")
        h, w = self.spatial
        if h < 1 or w < 1:
            raise ValueError("spatial extent must be at least 1x1")
        object.__setattr__(self, "boxes", self._build())

    @property
    def num_anchors(self) -> int:
        return len(self.scales) * len(self.ratios)

    def _build(self) -> np.ndarray:
        h, w = self.spatial
        off_x = 0.0 if self.window is None else (self.window - w * self.stride) / 2.0
        off_y = 0.0 if self.window is None else (self.window - h * self.stride) / 2.0
        cx = off_x + (np.arange(w) + 0.5) * self.stride
        cy = off_y + (np.arange(h) + 0.5) * self.stride
        shapes = [
            (s * math.sqrt(r), s / math.sqrt(r)) for s in self.scales for r in self.ratios
        ]
        boxes = np.empty((self.num_anchors, h, w, 4), dtype=np.float64)
        boxes[..., 0] = cx[None, None, :]
        boxes[..., 1] = cy[None, :, None]
        for a, (aw, ah) in enumerate(shapes):
            boxes[a, ..., 2] = aw
            boxes[a, ..., 3] = ah
        return boxes

    def anchor_box(self, a: int, i: int, j: int) -> BBox:
        return BBox(*self.boxes[a, i, j])


def make_anchors(
    stride: int,
    scales: tuple[float, ...],
    ratios: tuple[float, ...],
    spatial: tuple[int, int],
    window: int | None = None,
) -> AnchorGrid:
    return AnchorGrid(stride, tuple(scales), tuple(ratios), tuple(spatial), window)


def encode(gt: BBox, anchor: BBox) -> np.ndarray:
    """Offsets (dx, dy, dw, dh) mapping `anchor` onto `gt`; exact inverse of decode."""
    return np.array(
        [
            (gt.cx - anchor.cx) / anchor.w,
            (gt.cy - anchor.cy) / anchor.h,
            math.log(gt.w / anchor.w),
            math.log(gt.h / anchor.h),
        ]
    )


def decode_box(offsets, anchor: BBox) -> BBox:
    """Apply one (dx, dy, dw, dh) offset vector to a single anchor."""
    dx, dy, dw, dh = offsets
    return BBox(
        anchor.cx + dx * anchor.w,
        anchor.cy + dy * anchor.h,
        anchor.w * math.exp(dw),
        anchor.h * math.exp(dh),
    )


def decode(reg: np.ndarray, grid: AnchorGrid) -> np.ndarray:
    """Decode a (4, A, H, W) regression field into (A, H, W, 4) center-form boxes."""
    a = grid.num_anchors
    h, w = grid.spatial
    if reg.shape != (4, a, h, w):
        raise ValueError(f"regression field shape {reg.shape} does not match grid (4, {a}, {h}, {w})")
    anchors = grid.boxes
    out = np.empty_like(anchors)
    out[..., 0] = anchors[..., 0] + reg[0] * anchors[..., 2]
    out[..., 1] = anchors[..., 1] + reg[1] * anchors[..., 3]
    out[..., 2] = anchors[..., 2] * np.exp(reg[2])
    out[..., 3] = anchors[..., 3] * np.exp(reg[3])
    return out
