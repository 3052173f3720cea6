"""Tracking evaluation: accuracy, robustness, EAO, anchor runs, GTOT rates.

The restart protocol reinitializes a tracker from ground truth 5 frames after
any frame whose overlap with ground truth reaches zero; the frames in between
are excluded from accuracy, as is a configurable burn-in window after every
(re)initialization.  EAO averages, per sequence length Ns, the mean overlap of
all run segments starting at a (re)initialization, zero-padded past failures;
segments that ended naturally only contribute to lengths they actually reach.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Sequence
from .geometry import BBox, iou, center_distance


@dataclass
class Segment:
    """One tracked stretch from a (re)initialization."""

    overlaps: list  # per-frame overlap from the init frame on
    failed: bool  # True when the stretch ended in a zero-overlap failure

    def value_at(self, ns: int) -> float | None:
        """Mean of the first ns overlaps, zero-padding past a failure."""
        if self.failed:
            padded = self.overlaps[:ns] + [0.0] * max(0, ns - len(self.overlaps))
            return float(sum(padded) / ns)
        if ns > len(self.overlaps):
            return None
        return float(sum(self.overlaps[:ns]) / ns)


@dataclass
class RunResult:
    """Outcome of evaluating one sequence (or one anchor sub-run)."""

    name: str
    overlaps: list  # float per frame, None where frames were skipped
    valid: list  # bool per frame: counts toward accuracy
    boxes: list  # BBox per frame, None where skipped
    failures: list = field(default_factory=list)  # frame indices
    starts: list = field(default_factory=list)  # (re)init frame indices
    segments: list = field(default_factory=list)  # Segment per (re)init

    def __post_init__(self):
        if len(self.overlaps) != len(self.valid) or len(self.overlaps) != len(self.boxes):
            raise ValueError("overlap, valid and box series must share one length")


def run_with_restarts(
    runner,
    seq: Sequence,
    skip: int = 5,
    burn_in: int = 10,
) -> RunResult:
    """Evaluate `runner` on a sequence under the restart protocol.

    `runner(seq, start)` must return one BBox per frame from `start` to the
    end, echoing ground truth at `start` itself.
    """
    n = len(seq)
    gt = seq.gt_boxes()
    overlaps: list = [None] * n
    boxes: list = [None] * n
    valid = [False] * n
    failures: list[int] = []
    starts: list[int] = []
    segments: list[Segment] = []

    t = 0
    while t < n:
        starts.append(t)
        run_boxes = runner(seq, t)
        seg_overlaps: list[float] = []
        fail_at = None
        for i, box in enumerate(run_boxes):
            frame = t + i
            ov = iou(box, gt[frame])
            overlaps[frame] = ov
            boxes[frame] = box
            valid[frame] = i >= burn_in
            seg_overlaps.append(ov)
            if ov == 0.0:
                fail_at = frame
                break
        if fail_at is None:
            segments.append(Segment(seg_overlaps, failed=False))
            break
        failures.append(fail_at)
        segments.append(Segment(seg_overlaps, failed=True))
        t = fail_at + skip
    return RunResult(seq.name, overlaps, valid, boxes, failures, starts, segments)


def run_plain(runner, seq: Sequence, start: int = 0, name: str | None = None) -> RunResult:
    """Single uninterrupted run from `start`; one natural-end segment."""
    n = len(seq)
    gt = seq.gt_boxes()
    overlaps: list = [None] * n
    boxes: list = [None] * n
    valid = [False] * n
    run_boxes = runner(seq, start)
    seg: list[float] = []
    for i, box in enumerate(run_boxes):
        frame = start + i
        ov = iou(box, gt[frame])
        overlaps[frame] = ov
        boxes[frame] = box
        valid[frame] = True
        seg.append(ov)
    return RunResult(
        name or seq.name, overlaps, valid, boxes, [], [start], [Segment(seg, failed=False)]
    )


def accuracy(results: list[RunResult]) -> float:
    """Mean overlap over valid frames, per sequence then across sequences."""
    means = []
    for r in results:
        vals = [o for o, v in zip(r.overlaps, r.valid) if v and o is not None]
        if vals:
            means.append(sum(vals) / len(vals))
    if not means:
        raise ValueError("no valid frames in any run")
    return float(sum(means) / len(means))


def mean_iou(results: list[RunResult]) -> float:
    """Mean overlap over tracked frames after the init frame, per sequence
    then across sequences; the simple comparison metric for ablations."""
    means = []
    for r in results:
        vals = [o for o in r.overlaps[1:] if o is not None]
        if vals:
            means.append(sum(vals) / len(vals))
    if not means:
        raise ValueError("no tracked frames in any run")
    return float(sum(means) / len(means))


def robustness(results: list[RunResult]) -> tuple[int, float]:
    """(total failure count, mean completed fraction per segment).

    The second value is the higher-is-better presentation: each segment
    contributes the fraction of its maximal span it survived (1.0 when it
    reached the sequence end without failing).
    """
    failures = sum(len(r.failures) for r in results)
    fractions = []
    for r in results:
        n = len(r.overlaps)
        for start, seg in zip(r.starts, r.segments):
            span = n - start
            if span <= 0:
                continue
            fractions.append(1.0 if not seg.failed else len(seg.overlaps) / span)
    inverted = float(sum(fractions) / len(fractions)) if fractions else 1.0
    return failures, inverted


@dataclass
class EaoCurve:
    ns: np.ndarray  # evaluated sequence lengths
    values: np.ndarray  # expected average overlap per length (NaN = undefined)
    lo: int
    hi: int
    scalar: float

    def interval_rows(self) -> list[tuple[int, float]]:
        mask = (self.ns >= self.lo) & (self.ns <= self.hi)
        return [(int(n), float(v)) for n, v in zip(self.ns[mask], self.values[mask])]


def default_interval(results: list[RunResult]) -> tuple[int, int]:
    lengths = sorted(len(r.overlaps) for r in results)
    med = lengths[len(lengths) // 2]
    lo = max(1, int(round(0.15 * med)))
    hi = max(lo, int(round(0.85 * med)))
    return lo, hi


def eao(results: list[RunResult], interval: tuple[int, int] | None = None) -> EaoCurve:
    """Expected average overlap curve and its interval mean."""
    if not results:
        raise ValueError("no runs to evaluate")
    lo, hi = interval if interval is not None else default_interval(results)
    if lo < 1 or hi < lo:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    max_len = max(len(r.overlaps) for r in results)
    ns = np.arange(1, max_len + 1)
    segments = [seg for r in results for seg in r.segments]
    values = np.full(max_len, np.nan)
    for k, n in enumerate(ns):
        vals = [v for seg in segments if (v := seg.value_at(int(n))) is not None]
        if vals:
            values[k] = sum(vals) / len(vals)
    mask = (ns >= lo) & (ns <= min(hi, max_len))
    window = values[mask]
    window = window[~np.isnan(window)]
    if window.size == 0:
        raise ValueError(f"no defined curve values in [{lo}, {hi}]")
    return EaoCurve(ns, values, lo, hi, float(window.mean()))


def anchor_points(n: int, gap: int = 50) -> list[int]:
    """0-based anchor frames spaced `gap` apart; count is ceil(n / gap)."""
    return list(range(0, n, gap))


def reversed_sequence(seq: Sequence, start: int) -> Sequence:
    """View of frames start..0 in reverse order, for backward anchor runs."""
    idx = list(range(start, -1, -1))
    return Sequence(
        f"{seq.name}_rev{start}",
        [seq.rgb[i] for i in idx],
        [seq.tir[i] for i in idx],
        [seq.gt[i] for i in idx],
    )


def anchor_protocol(runner, seq: Sequence, gap: int = 50) -> list[RunResult]:
    """Run from every anchor: forward before the midpoint, else backward."""
    n = len(seq)
    results = []
    for a in anchor_points(n, gap):
        if a < n / 2.0:
            view = Sequence(f"{seq.name}_a{a}f", seq.rgb, seq.tir, seq.gt)
            results.append(run_plain(runner, view, start=a, name=view.name))
        else:
            rev = reversed_sequence(seq, a)
            rev.name = f"{seq.name}_a{a}b"
            results.append(run_plain(runner, rev, start=0, name=rev.name))
    return results


def gtot_metrics(
    preds: list[BBox],
    gts: list[BBox],
    iou_threshold: float = 0.6,
    dist_threshold: float = 5.0,
) -> tuple[float, float]:
    """(success rate, precision rate) under the GTOT thresholds."""
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    if not preds:
        raise ValueError("empty prediction list")
    succ = sum(1 for p, g in zip(preds, gts) if iou(p, g) > iou_threshold)
    prec = sum(1 for p, g in zip(preds, gts) if center_distance(p, g) < dist_threshold)
    return succ / len(preds), prec / len(preds)


# ---------------------------------------------------------------------------
# artifact writers (deterministic, atomic)


def atomic_write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
    return path


def _round_floats(value, digits: int = 6):
    if isinstance(value, float):
        if math.isnan(value):
            return None
        return round(value, digits)
    return value


def result_rows(run: RunResult, diags: list | None = None) -> list[dict]:
    """JSON-ready per-frame rows for one run."""
    rows = []
    for frame, box in enumerate(run.boxes):
        if box is None:
            continue
        diag = diags[frame] if diags and frame < len(diags) else {}
        rows.append(
            {
                "seq": run.name,
                "frame": frame,
                "bbox": [_round_floats(v) for v in box.to_xywh()],
                "score": _round_floats(diag.get("score")),
                "lambda12": _round_floats(diag.get("lambda12")),
                "lambda22": _round_floats(diag.get("lambda22")),
                "bias_gap": _round_floats(diag.get("bias_gap")),
            }
        )
    return rows


def write_results_jsonl(path: str | Path, rows: list[dict]) -> Path:
    text = "".join(json.dumps(row) + "\n" for row in rows)
    return atomic_write_text(path, text)


def write_eao_csv(path: str | Path, curve: EaoCurve) -> Path:
    lines = ["Ns,value"]
    for n, v in curve.interval_rows():
        lines.append(f"{n},{'nan' if math.isnan(v) else f'{v:.6f}'}")
    return atomic_write_text(path, "\n".join(lines) + "\n")


def write_summary(path: str | Path, summary: dict) -> Path:
    return atomic_write_text(path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
