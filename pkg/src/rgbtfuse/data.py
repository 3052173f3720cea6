"""Paired-sequence loading and synthetic RGB/TIR generation.

Recorded sequences follow the common layout of a `color/` and an `ir/`
directory of zero-padded 8-digit frames plus a `groundtruth.txt` of
comma-separated regions.  The synthesizer renders a textured target moving
over a textured background in the visible stream and a smooth blob in the
thermal stream, with knobs for a cross-modal score bias, distractors,
illumination dips, thermal crossover and appearance drift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from .geometry import BBox, Region, region_to_bbox


class DataError(Exception):
    """Raised for malformed or inconsistent sequence data."""


# ---------------------------------------------------------------------------
# sequence container


@dataclass
class Sequence:
    """Aligned RGB/TIR frame pairs with per-frame ground truth."""

    name: str
    rgb: list  # (H, W, 3) float64 in [0, 1]
    tir: list  # (H, W) float64 in [0, 1]
    gt: list  # Region per frame

    def __post_init__(self):
        if len(self.rgb) < 1:
            raise DataError(f"sequence {self.name!r} has no frames")
        if not (len(self.rgb) == len(self.tir) == len(self.gt)):
            raise DataError(
                f"sequence {self.name!r}: {len(self.rgb)} color, "
                f"{len(self.tir)} ir, {len(self.gt)} gt entries"
            )

    def __len__(self) -> int:
        return len(self.rgb)

    def gt_boxes(self) -> list[BBox]:
        return [region_to_bbox(r) for r in self.gt]


# ---------------------------------------------------------------------------
# disk IO (VOT-style layout)


def _parse_gt_line(line: str, lineno: int) -> Region:
    try:
        values = tuple(float(tok) for tok in line.split(","))
    except ValueError as exc:
        raise DataError(f"groundtruth.txt line {lineno}: {exc}") from None
    if len(values) == 4:
        return Region("rect4", values)
    if len(values) == 8:
        return Region("poly8", values)
    raise DataError(f"groundtruth.txt line {lineno}: expected 4 or 8 values, got {len(values)}")


def read_groundtruth(path: Path) -> list[Region]:
    regions = []
    lines = path.read_text().splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    for i, line in enumerate(lines, start=1):
        regions.append(_parse_gt_line(line.strip(), i))
    return regions


def _frame_files(subdir: Path) -> list[Path]:
    if not subdir.is_dir():
        raise DataError(f"missing directory {subdir}")
    files = sorted(p for p in subdir.iterdir() if p.suffix.lower() in (".jpg", ".png"))
    if not files:
        raise DataError(f"no image files in {subdir}")
    return files


def load_sequence(path: str | Path) -> Sequence:
    """Load one sequence directory: color/, ir/ and groundtruth.txt."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"sequence directory not found: {root}")
    color_files = _frame_files(root / "color")
    ir_files = _frame_files(root / "ir")
    if len(color_files) != len(ir_files):
        raise DataError(
            f"{root.name}: {len(color_files)} color frames vs {len(ir_files)} ir frames"
        )
    gt = read_groundtruth(root / "groundtruth.txt")
    if len(gt) != len(color_files):
        raise DataError(f"{root.name}: {len(gt)} gt lines vs {len(color_files)} frames")
    rgb, tir = [], []
    for cf, tf in zip(color_files, ir_files):
        img = cv2.imread(str(cf), cv2.IMREAD_COLOR)
        if img is None:
            raise DataError(f"unreadable image {cf}")
        rgb.append(img[..., ::-1].astype(np.float64) / 255.0)
        ir = cv2.imread(str(tf), cv2.IMREAD_GRAYSCALE)
        if ir is None:
            raise DataError(f"unreadable image {tf}")
        tir.append(ir.astype(np.float64) / 255.0)
    return Sequence(root.name, rgb, tir, gt)


def save_sequence(seq: Sequence, path: str | Path, ext: str = "png") -> Path:
    """Write a sequence in the loadable layout; returns the directory."""
    if ext not in ("png", "jpg"):
        raise DataError(f"unsupported extension {ext!r}")
    root = Path(path)
    (root / "color").mkdir(parents=True, exist_ok=True)
    (root / "ir").mkdir(parents=True, exist_ok=True)
    for i, (rgb, tir) in enumerate(zip(seq.rgb, seq.tir), start=1):
        bgr = np.round(np.clip(rgb[..., ::-1], 0.0, 1.0) * 255.0).astype(np.uint8)
        gray = np.round(np.clip(tir, 0.0, 1.0) * 255.0).astype(np.uint8)
        cv2.imwrite(str(root / "color" / f"{i:08d}.{ext}"), bgr)
        cv2.imwrite(str(root / "ir" / f"{i:08d}.{ext}"), gray)
    with open(root / "groundtruth.txt", "w") as fh:
        for region in seq.gt:
            fh.write(",".join(f"{v:.4f}" for v in region.values) + "\n")
    return root


def list_sequences(root: str | Path) -> list[Path]:
    """Resolve a sequences.txt list file, or a single sequence directory."""
    root = Path(root)
    listing = root / "sequences.txt"
    if listing.is_file():
        names = [ln.strip() for ln in listing.read_text().splitlines() if ln.strip()]
        if not names:
            raise DataError(f"{listing} is empty")
        return [root / name for name in names]
    if (root / "groundtruth.txt").is_file():
        return [root]
    raise DataError(f"{root} has neither sequences.txt nor groundtruth.txt")


# ---------------------------------------------------------------------------
# synthetic sequences


@dataclass
class SynthConfig:
    """Knobs for the paired-sequence generator; same seed means same frames."""

    seed: int = 0
    n: int = 100
    height: int = 140
    width: int = 140
    target_size: float = 24.0
    velocity: float = 1.0
    rgb_contrast: float = 0.30
    tir_contrast: float = 0.30
    bias: float = 0.0  # brightness/contrast advantage of the visible stream
    distractors: int = 3
    illumination_dip: int | None = None  # period in frames, or None
    thermal_crossover: int | None = None
    drift: float = 0.0  # appearance drift strength over the sequence
    dip_depth: float = 0.25  # residual target contrast at a dip trough
    crossover_depth: float = 0.1
    dip_length: int | None = None  # event length/offset within each period;
    dip_phase: int | None = None  # defaults derived from the period
    crossover_length: int | None = None
    crossover_phase: int | None = None
    name: str = "synth"

    def __post_init__(self):
        if self.n < 1:
            raise DataError("n must be >= 1")
        if self.bias < 0:
            raise DataError("bias must be >= 0")
        if self.target_size * 2 >= min(self.height, self.width):
            raise DataError(
                f"target size {self.target_size} too large for "
                f"{self.height}x{self.width} frames"
            )


def target_layer(
    shape: tuple[int, int],
    cx: float,
    cy: float,
    radius: float,
    amp: float,
    omega: float = 0.0,
) -> np.ndarray:
    """Render a radially symmetric pattern centered at a float position.

    The envelope is a raised cosine with compact support; omega > 0 adds
    concentric rings (a texture the feature extractor can lock onto).  Radial
    symmetry keeps the rendered centroid at (cx, cy).
    """
    h, w = shape
    y0 = max(0, int(math.floor(cy - radius - 1)))
    y1 = min(h, int(math.ceil(cy + radius + 2)))
    x0 = max(0, int(math.floor(cx - radius - 1)))
    x1 = min(w, int(math.ceil(cx + radius + 2)))
    layer = np.zeros(shape)
    if y0 >= y1 or x0 >= x1:
        return layer
    yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
    r = np.hypot(yy - cy, xx - cx)
    env = np.where(r < radius, np.cos(0.5 * math.pi * r / radius) ** 2, 0.0)
    if omega > 0:
        env = env * (RING_DC + (1.0 - RING_DC) * np.cos(omega * r))
    layer[y0:y1, x0:x1] = amp * env
    return layer


# Ring pattern of the rendered targets.  RGB carries visible texture the
# extractor can lock onto; TIR is a soft thermal blob with gentle internal
# banding.  TIR_GAIN compensates the blob's lower pattern energy so the two
# modalities produce matching positive score mass at equal contrast settings.
RGB_RING_FREQ = 0.9
TIR_RING_FREQ = 0.6
RING_DC = 0.5
TIR_GAIN = 1.05


def _smooth_background(
    rng: np.random.Generator, shape: tuple[int, int], amp: float, level: float = 0.5
) -> np.ndarray:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    bg = np.zeros(shape)
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 2.0, size=2) * 2 * math.pi
        phase = rng.uniform(0, 2 * math.pi)
        bg += np.sin(fy * yy / h + fx * xx / w + phase)
    bg = bg / 3.0
    return level + amp * bg


def _texture(rng: np.random.Generator, shape: tuple[int, int], amp: float) -> np.ndarray:
    noise = rng.standard_normal(shape)
    blur = cv2.GaussianBlur(noise, (0, 0), 1.2)
    return amp * blur / (np.abs(blur).max() + 1e-12)


def _path(rng: np.random.Generator, cfg: SynthConfig) -> np.ndarray:
    """Seeded piecewise-linear center path, clipped to keep the target inside."""
    margin = cfg.target_size * 1.2
    lo = np.array([margin, margin])
    hi = np.array([cfg.width - margin, cfg.height - margin])
    n_way = max(2, cfg.n // 25 + 1)
    waypoints = rng.uniform(lo, hi, size=(n_way, 2))
    waypoints[0] = (lo + hi) / 2.0
    pts = np.empty((cfg.n, 2))
    pos = waypoints[0].copy()
    k = 1
    for t in range(cfg.n):
        pts[t] = pos
        if cfg.velocity <= 0:
            continue
        target = waypoints[min(k, n_way - 1)]
        step = target - pos
        dist = float(np.hypot(*step))
        if dist < cfg.velocity:
            pos = target.copy()
            k += 1
        else:
            pos = pos + step / dist * cfg.velocity
    return np.clip(pts, lo, hi)


def _event_gain(
    t: int,
    period: int | None,
    depth: float,
    length: int | None = None,
    phase: int | None = None,
) -> float:
    """Contrast multiplier for periodic degradation events.

    Each period contains one event of `length` frames starting at `phase`
    within the cycle, with a sin^2 ramp from 1 down to `depth` and back.
    Defaults: length = period // 3 (at least 4), event at the period's end.
    """
    if period is None or period <= 0:
        return 1.0
    length = max(4, period // 3) if length is None else length
    phase = period - length if phase is None else phase
    if t < phase:
        return 1.0
    pos = (t - phase) % period
    if pos >= length:
        return 1.0
    u = (pos + 1) / (length + 1)
    return 1.0 - (1.0 - depth) * math.sin(math.pi * u) ** 2


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0) / 255.0


def synth_sequence(cfg: SynthConfig) -> Sequence:
    """Generate an aligned RGB/TIR sequence with exact ground truth."""
    rng = np.random.default_rng(cfg.seed)
    shape = (cfg.height, cfg.width)
    path = _path(rng, cfg)
    bg_rgb = _smooth_background(rng, shape, 0.03) + _texture(rng, shape, 0.03)
    bg_tir = _smooth_background(rng, shape, 0.03, level=0.35)
    gain = 1.0 + cfg.bias
    radius = cfg.target_size * 0.58
    omega0 = RGB_RING_FREQ

    # Distractors ride along at fixed offsets from the target so they stay
    # inside the search window; offsets exceed the box diagonal, so they never
    # overlap the target itself.
    d_off = []
    if cfg.distractors > 0:
        angles = rng.uniform(0, 2 * math.pi, size=cfg.distractors)
        dists = rng.uniform(cfg.target_size * 1.9, cfg.target_size * 2.4, size=cfg.distractors)
        d_off = [(dd * math.cos(ang), dd * math.sin(ang)) for ang, dd in zip(angles, dists)]

    tint = np.array([1.0, 0.92, 0.78])
    rgb_frames, tir_frames, gt = [], [], []
    for t in range(cfg.n):
        cx, cy = float(path[t, 0]), float(path[t, 1])
        progress = t / max(1, cfg.n - 1)
        omega = omega0 * (1.0 + 0.6 * cfg.drift * progress)
        size_scale = 1.0 + 0.25 * cfg.drift * progress
        dip = _event_gain(t, cfg.illumination_dip, cfg.dip_depth, cfg.dip_length, cfg.dip_phase)
        cross = _event_gain(
            t, cfg.thermal_crossover, cfg.crossover_depth, cfg.crossover_length, cfg.crossover_phase
        )

        gray = bg_rgb + target_layer(
            shape, cx, cy, radius * size_scale, cfg.rgb_contrast * dip, omega
        )
        for ox, oy in d_off:
            gray = gray + target_layer(shape, cx + ox, cy + oy, radius, 0.85 * cfg.rgb_contrast, omega0)
        gray = gray + 0.01 * rng.standard_normal(shape)
        # Photometric bias inflates the whole RGB frame's contrast about
        # mid-gray, mirroring the (1+b) score-scaling law of the map simulator.
        gray = 0.5 + (gray - 0.5) * gain
        rgb_frames.append(_quantize(gray[..., None] * tint))

        tir = bg_tir + target_layer(
            shape, cx, cy, radius * size_scale, TIR_GAIN * cfg.tir_contrast * cross, TIR_RING_FREQ
        )
        tir = tir + 0.01 * rng.standard_normal(shape)
        tir_frames.append(_quantize(tir))

        side = cfg.target_size * size_scale
        gt.append(Region("rect4", (cx - side / 2.0, cy - side / 2.0, side, side)))

    return Sequence(cfg.name, rgb_frames, tir_frames, gt)


# ---------------------------------------------------------------------------
# synthetic score maps (unit-level harness for the fusion math)


@dataclass
class ScoremapConfig:
    """Paired classification-map generator with a shared peak."""

    seed: int = 0
    num_anchors: int = 3
    spatial: int = 17
    bias: float = 0.0
    noise: float = 0.0
    peak_sigma: float = 2.5

    def __post_init__(self):
        if self.bias < 0:
            raise DataError("bias must be >= 0")
        if self.noise < 0:
            raise DataError("noise must be >= 0")


def synth_scoremaps(cfg: ScoremapConfig) -> tuple[np.ndarray, np.ndarray, int]:
    """Paired (2, A, H, W) score maps and the true peak's linear fg index.

    Both modalities share one Gaussian peak; the visible map is the thermal
    pattern scaled by (1 + bias) with its own noise draw, so the positive mean
    of its foreground channel scales exactly linearly in the bias.
    """
    rng = np.random.default_rng(cfg.seed)
    a, n = cfg.num_anchors, cfg.spatial
    iy = int(rng.integers(2, n - 2))
    ix = int(rng.integers(2, n - 2))
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    g = np.exp(-((yy - iy) ** 2 + (xx - ix) ** 2) / (2 * cfg.peak_sigma**2))
    gains = 1.0 - 0.05 * np.arange(a)
    fg = gains[:, None, None] * g[None]
    bg = -0.3 * fg

    def stack(scale: float) -> np.ndarray:
        noise_fg = cfg.noise * rng.standard_normal((a, n, n))
        noise_bg = cfg.noise * rng.standard_normal((a, n, n))
        return scale * np.stack([bg + noise_bg, fg + noise_fg])

    c_tir = stack(1.0)
    c_rgb = stack(1.0 + cfg.bias)
    true_index = int(np.argmax(fg))
    return c_rgb, c_tir, true_index


# ---------------------------------------------------------------------------
# the standard stress suite used by ablations and directional comparisons


def benchmark_suite(
    seed: int = 0,
    n_seq: int = 10,
    n_frames: int = 100,
    bias: float = 1.0,
    drift: float = 0.5,
) -> list[Sequence]:
    """Seeded suite of biased sequences with staggered degradation events.

    Illumination dips (visible stream) and thermal crossovers are phased so
    they never overlap: each modality's failure windows leave the other one
    intact, which is what makes fusion worthwhile on this suite.
    """
    suite = []
    for i in range(n_seq):
        cfg = SynthConfig(
            seed=seed + i,
            n=n_frames,
            bias=bias,
            velocity=1.4,
            distractors=3,
            illumination_dip=n_frames,
            dip_length=22,
            dip_phase=20,
            dip_depth=0.08,
            thermal_crossover=n_frames,
            crossover_length=22,
            crossover_phase=55,
            crossover_depth=0.05,
            drift=drift,
            name=f"synth{i:02d}",
        )
        suite.append(synth_sequence(cfg))
    return suite
