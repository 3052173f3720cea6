"""Command-line surface: track, eval, ablate, synth, fuse-image, plotdata.

Every subcommand is deterministic given --seed and the configuration, and
output files are written atomically, so reruns produce byte-identical
artifacts.  Exit codes: 0 success, 2 configuration error, 3 data error,
4 internal error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import cv2
import numpy as np

from . import data, evaluation, pixel, tracker
from .config import ConfigError, build_synth_config, build_tracker_config, load_config
from .data import DataError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

S_SWEEP = tuple(round(0.44 + 0.01 * k, 2) for k in range(10))
FEAT_GRID = tuple(
    f"{t}:{v}:{s}" for t in ("C", "S") for v in ("max", "mean") for s in ("mean", "max")
)


def _common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="key=value config file")
    p.add_argument("--set", action="append", default=[], metavar="K=V",
                   help="override a config key (repeatable)")
    p.add_argument("--seed", type=int, default=0, help="seed for all generated randomness")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory or file")
    p.add_argument("--jobs", type=int, default=1, help="parallel sequence workers")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rgbtfuse",
                                     description="RGB/thermal tracking fusion toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("track", help="run the tracker and write trajectories")
    p.add_argument("path", nargs="?", default=None,
                   help="sequence dir or root with sequences.txt; omit for a synthetic run")
    p.add_argument("--frames", type=int, default=40, help="synthetic fallback length")
    p.add_argument("--bias", type=float, default=0.0, help="synthetic fallback bias")
    _common_flags(p)

    p = sub.add_parser("eval", help="evaluate under a benchmark protocol")
    p.add_argument("path", nargs="?", default=None)
    p.add_argument("--protocol", choices=("restart", "anchor", "gtot"), default="restart")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--bias", type=float, default=0.0)
    _common_flags(p)

    p = sub.add_parser("ablate", help="sweep one configuration axis")
    p.add_argument("path", nargs="?", default=None)
    p.add_argument("--axis", choices=("s", "fusion.mode", "feat.grid", "pixel.level"),
                   default="s")
    p.add_argument("--values", default=None, help="comma-separated grid values")
    p.add_argument("--sequences", type=int, default=3, help="synthetic suite size")
    p.add_argument("--frames", type=int, default=40)
    p.add_argument("--bias", type=float, default=1.0)
    _common_flags(p)

    p = sub.add_parser("synth", help="write a synthetic paired sequence")
    p.add_argument("--n", type=int, default=50, help="frame count")
    p.add_argument("--bias", type=float, default=0.0)
    p.add_argument("--name", default="synth")
    _common_flags(p)

    p = sub.add_parser("fuse-image", help="fuse one RGB/TIR image pair")
    p.add_argument("rgb", type=Path, help="visible image (PNG/JPG)")
    p.add_argument("tir", type=Path, help="thermal image (PNG/JPG)")
    p.add_argument("--level", type=int, choices=(1, 2, 3, 4), default=2)
    p.add_argument("--pairing", choices=("fused_fused", "fused_tir"), default="fused_fused")
    p.add_argument("--projection", type=Path, default=None,
                   help="load/save the trained projection here (.npy)")
    _common_flags(p)

    p = sub.add_parser("plotdata", help="emit plot CSV/SVG from results files")
    p.add_argument("results", type=Path, help="directory produced by track/eval")
    _common_flags(p)
    return parser


# ---------------------------------------------------------------------------
# shared plumbing


def _load_or_synth(args, cfg) -> list[data.Sequence]:
    if args.path is not None:
        dirs = data.list_sequences(Path(args.path))
        return [data.load_sequence(d) for d in dirs]
    scfg = build_synth_config(cfg, seed=args.seed, n=args.frames, bias=args.bias,
                              name=f"synth{args.seed}")
    return [data.synth_sequence(scfg)]


def _track_one(seq: data.Sequence, tc: tracker.TrackerConfig):
    boxes, diags = tracker.run_sequence(seq, tc)
    gt = seq.gt_boxes()
    overlaps = [evaluation.iou(b, g) for b, g in zip(boxes, gt)]
    run = evaluation.RunResult(
        name=seq.name,
        overlaps=overlaps,
        valid=[True] * len(boxes),
        boxes=boxes,
        failures=[],
        starts=[0],
        segments=[evaluation.Segment(overlaps, failed=False)],
    )
    return run, diags


def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


class _TrackTask:
    """Picklable per-sequence task for process pools."""

    def __init__(self, tc):
        self.tc = tc

    def __call__(self, seq):
        return _track_one(seq, self.tc)


def _interval(cfg, results):
    return cfg["eval.interval"] or evaluation.default_interval(results)


def _write_run_artifacts(out: Path, cfg, results, diags_by_seq, extra: dict) -> dict:
    rows, diag_rows = [], []
    for run in results:
        seq_diags = diags_by_seq.get(run.name)
        rows.extend(evaluation.result_rows(run, seq_diags))
        if seq_diags:
            for frame, diag in enumerate(seq_diags):
                record = {"seq": run.name, "frame": frame}
                record.update(
                    {
                        k: evaluation._round_floats(v, 9)
                        for k, v in diag.items()
                        if k in ("score", "lambda12", "lambda22", "bias_gap", "bias_gap_mod")
                    }
                )
                diag_rows.append(record)
    curve = evaluation.eao(results, _interval(cfg, results))
    curve_path = evaluation.write_eao_csv(out / "eao_curve.csv", curve)
    failures, inverted = evaluation.robustness(results)
    summary = {
        "A": round(evaluation.accuracy(results), 6),
        "R_failures": failures,
        "R_inverted": round(inverted, 6),
        "EAO": round(curve.scalar, 6),
        "curve_csv_path": str(curve_path),
        "mode": cfg["fusion.mode"],
        "s": cfg["fusion.s"],
        "n_sequences": len(results),
    }
    summary.update(extra)
    evaluation.write_results_jsonl(out / "results.jsonl", rows)
    if diag_rows:
        evaluation.write_results_jsonl(out / "diagnostics.jsonl", diag_rows)
    evaluation.write_summary(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# subcommands


def cmd_track(args) -> int:
    cfg = load_config(args.config, args.set)
    tc = build_tracker_config(cfg)
    seqs = _load_or_synth(args, cfg)
    outcomes = _pmap(_TrackTask(tc), seqs, args.jobs)
    results = [run for run, _ in outcomes]
    diags_by_seq = {run.name: diags for (run, diags) in outcomes}
    summary = _write_run_artifacts(args.out, cfg, results, diags_by_seq, {"seed": args.seed})
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


class _Runner:
    """Runner for protocols; records per-frame diagnostics as it goes."""

    def __init__(self, tc):
        self.tc = tc
        self.diags: dict = {}

    def __call__(self, seq, start):
        boxes, diags = tracker.run_sequence(seq, self.tc, start=start)
        store = self.diags.setdefault(seq.name, {})
        for i, diag in enumerate(diags):
            store[start + i] = diag
        return boxes


def cmd_eval(args) -> int:
    cfg = load_config(args.config, args.set)
    tc = build_tracker_config(cfg)
    seqs = _load_or_synth(args, cfg)
    runner = _Runner(tc)
    extra: dict = {"protocol": args.protocol, "seed": args.seed}
    if args.protocol == "restart":
        results = [
            evaluation.run_with_restarts(runner, seq, skip=cfg["eval.skip"],
                                         burn_in=cfg["eval.burn_in"])
            for seq in seqs
        ]
    elif args.protocol == "anchor":
        results = []
        for seq in seqs:
            results.extend(evaluation.anchor_protocol(runner, seq, gap=cfg["eval.anchor_gap"]))
    else:
        results = [evaluation.run_plain(runner, seq) for seq in seqs]
        succ, prec = [], []
        for run, seq in zip(results, seqs):
            s, p = evaluation.gtot_metrics(
                [b for b in run.boxes if b is not None],
                [g for b, g in zip(run.boxes, seq.gt_boxes()) if b is not None],
            )
            succ.append(s)
            prec.append(p)
        extra["success"] = round(sum(succ) / len(succ), 6)
        extra["precision"] = round(sum(prec) / len(prec), 6)
    diags_by_seq = {
        name: [store.get(i) or {} for i in range(max(store) + 1)]
        for name, store in runner.diags.items()
    }
    summary = _write_run_artifacts(args.out, cfg, results, diags_by_seq, extra)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _axis_values(args) -> list[str]:
    if args.values:
        return [tok.strip() for tok in args.values.split(",") if tok.strip()]
    defaults = {
        "s": [str(v) for v in S_SWEEP],
        "fusion.mode": list(tracker.MODES),
        "feat.grid": list(FEAT_GRID),
        "pixel.level": ["1", "2", "3"],
    }
    return defaults[args.axis]


def _apply_axis(cfg: dict, axis: str, value: str) -> None:
    from .config import set_value

    if axis == "s":
        set_value(cfg, "fusion.s", value)
    elif axis == "feat.grid":
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"feat.grid value must be type:vector:scalar, got {value!r}")
        set_value(cfg, "feat.type", parts[0])
        set_value(cfg, "feat.vector", parts[1])
        set_value(cfg, "feat.scalar", parts[2])
        set_value(cfg, "fusion.mode", "feature")
    elif axis == "pixel.level":
        set_value(cfg, "pixel.level", value)
        set_value(cfg, "fusion.mode", "pixel")
    else:
        set_value(cfg, axis, value)


def cmd_ablate(args) -> int:
    values = _axis_values(args)
    if not values:
        raise ConfigError("empty ablation grid")
    if args.path is not None:
        dirs = data.list_sequences(Path(args.path))
        seqs = [data.load_sequence(d) for d in dirs]
    else:
        seqs = data.benchmark_suite(seed=args.seed, n_seq=args.sequences,
                                    n_frames=args.frames, bias=args.bias)
    rows = []
    for value in values:
        cfg = load_config(args.config, args.set)
        _apply_axis(cfg, args.axis, value)
        tc = build_tracker_config(cfg)
        outcomes = _pmap(_TrackTask(tc), seqs, args.jobs)
        results = [run for run, _ in outcomes]
        curve = evaluation.eao(results, _interval(cfg, results))
        failures, inverted = evaluation.robustness(results)
        rows.append(
            {
                "axis": args.axis,
                "value": value,
                "A": round(evaluation.accuracy(results), 6),
                "R_failures": failures,
                "R_inverted": round(inverted, 6),
                "EAO": round(curve.scalar, 6),
                "mean_iou": round(evaluation.mean_iou(results), 6),
            }
        )
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    evaluation.atomic_write_text(args.out / "ablation.csv", buf.getvalue())
    for row in rows:
        print(json.dumps(row, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = load_config(args.config, args.set)
    scfg = build_synth_config(cfg, seed=args.seed, n=args.n, bias=args.bias, name=args.name)
    seq = data.synth_sequence(scfg)
    out = data.save_sequence(seq, args.out)
    print(f"wrote {len(seq)} frames to {out}")
    return EXIT_OK


def _read_image(path: Path, color: bool) -> np.ndarray:
    flag = cv2.IMREAD_COLOR if color else cv2.IMREAD_GRAYSCALE
    img = cv2.imread(str(path), flag)
    if img is None:
        raise DataError(f"unreadable image {path}")
    if color:
        img = img[..., ::-1]
    return img.astype(np.float64) / 255.0


def cmd_fuse_image(args) -> int:
    cfg = load_config(args.config, args.set)
    rgb = _read_image(args.rgb, color=True)
    tir = _read_image(args.tir, color=False)
    if args.projection is not None and args.projection.is_file():
        projection = np.load(args.projection)
    else:
        corpus = pixel.texture_corpus(seed=11, n_patches=cfg["pixel.corpus"],
                                      patch_side=cfg["pixel.patch"])
        trained = pixel.train_projection(corpus, lam=cfg["pixel.lambda"],
                                         tol=cfg["pixel.tol"],
                                         max_iter=cfg["pixel.max_iter"])
        projection = trained.projection
        if args.projection is not None:
            args.projection.parent.mkdir(parents=True, exist_ok=True)
            np.save(args.projection, projection)
    fused, _ = pixel.fuse_images(rgb, tir, projection,
                                 pixel.LevelSelector(level=args.level),
                                 pairing=args.pairing,
                                 patch_side=cfg["pixel.patch"])
    out = args.out
    if out.suffix.lower() != ".png":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "fused.png"
    out.parent.mkdir(parents=True, exist_ok=True)
    gray8 = np.round(np.clip(pixel.luminance(fused), 0.0, 1.0) * 255.0).astype(np.uint8)
    cv2.imwrite(str(out), gray8)
    print(f"wrote {out}")
    return EXIT_OK


def _polyline_svg(series, width=640, height=360, pad=40) -> str:
    """Self-contained SVG line chart; series = [(label, color, xs, ys)]."""
    xs_all = [x for _, _, xs, _ in series for x in xs]
    ys_all = [y for _, _, _, ys in series for y in ys if y == y]  # drop NaN
    if not xs_all or not ys_all:
        xs_all, ys_all = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(ys_all), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def sx(x):
        return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 16}" font-size="10">{x0:.4g}</text>',
        f'<text x="{width - pad - 20}" y="{height - pad + 16}" font-size="10">{x1:.4g}</text>',
        f'<text x="2" y="{height - pad}" font-size="10">{y0:.4g}</text>',
        f'<text x="2" y="{pad}" font-size="10">{y1:.4g}</text>',
    ]
    for k, (label, color, xs, ys) in enumerate(series):
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys) if y == y)
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(
            f'<text x="{width - pad - 120}" y="{pad + 14 * (k + 1)}" font-size="11" '
            f'fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_plotdata(args) -> int:
    res_dir = Path(args.results)
    diag_path = res_dir / "diagnostics.jsonl"
    curve_path = res_dir / "eao_curve.csv"
    if not diag_path.is_file():
        raise DataError(f"missing {diag_path}")
    if not curve_path.is_file():
        raise DataError(f"missing {curve_path}")

    frames, original, modulated = [], [], []
    with open(diag_path) as fh:
        for line in fh:
            row = json.loads(line)
            if row.get("bias_gap") is None:
                continue
            frames.append(len(frames))
            original.append(float(row["bias_gap"]))
            modulated.append(float(row["bias_gap_mod"]) if row.get("bias_gap_mod") is not None
                             else float("nan"))
    if not frames:
        raise DataError(f"{diag_path} holds no two-stream diagnostics")

    lines = ["frame,original,modulated"]
    for f, o, m in zip(frames, original, modulated):
        mtxt = "nan" if m != m else f"{m:.9f}"
        lines.append(f"{f},{o:.9f},{mtxt}")
    evaluation.atomic_write_text(args.out / "bias_gap.csv", "\n".join(lines) + "\n")

    ns, vals = [], []
    with open(curve_path) as fh:
        for row in csv.DictReader(fh):
            ns.append(float(row["Ns"]))
            vals.append(float(row["value"]))
    evaluation.atomic_write_text(args.out / "eao_curve.csv",
                                 curve_path.read_text())

    svg = _polyline_svg(
        [
            ("bias gap", "#1f77b4", [float(f) for f in frames], original),
            ("modulated", "#ff7f0e", [float(f) for f in frames], modulated),
        ]
    )
    evaluation.atomic_write_text(args.out / "bias_gap.svg", svg)
    evaluation.atomic_write_text(args.out / "eao_curve.svg",
                                 _polyline_svg([("EAO", "#2ca02c", ns, vals)]))
    print(f"wrote plot data to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "track": cmd_track,
        "eval": cmd_eval,
        "ablate": cmd_ablate,
        "synth": cmd_synth,
        "fuse-image": cmd_fuse_image,
        "plotdata": cmd_plotdata,
    }
    try:
        return handlers[args.cmd](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> int:
    return run()
