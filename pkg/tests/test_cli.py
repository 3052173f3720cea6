"""End-to-end command-line runs: artifacts, exit codes, determinism."""

import csv
import json

import cv2
import numpy as np
import pytest

from rgbtfuse.cli import EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL, EXIT_OK, run

# Small, fast invocations; every test here runs the real subcommand handlers.
FAST_SETS = ["--set", "pixel.patch=8", "--set", "pixel.corpus=80",
             "--set", "pixel.tol=0.0001", "--set", "pixel.max_iter=300"]


def _read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


# ---------------------------------------------------------------------------
# track


def test_track_writes_the_result_files(tmp_path):
    out = tmp_path / "run"
    code = run(["track", "--frames", "8", "--seed", "3", "--out", str(out)])
    assert code == EXIT_OK
    rows = _read_jsonl(out / "results.jsonl")
    assert len(rows) == 8
    for row in rows:
        assert set(row) >= {"seq", "frame", "bbox", "score", "lambda12", "lambda22", "bias_gap"}
        assert len(row["bbox"]) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) >= {"A", "R_failures", "R_inverted", "EAO", "curve_csv_path"}
    assert summary["mode"] == "decision_dfat"
    with open(out / "eao_curve.csv") as fh:
        reader = csv.DictReader(fh)
        assert reader.fieldnames == ["Ns", "value"]
        assert all(float(r["value"]) >= 0.0 for r in reader)


def test_track_honors_config_overrides(tmp_path):
    out = tmp_path / "run"
    code = run(["track", "--frames", "6", "--out", str(out),
                "--set", "fusion.mode=rgb_only", "--set", "fusion.s=0.47"])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mode"] == "rgb_only"
    assert summary["s"] == 0.47
    rows = _read_jsonl(out / "results.jsonl")
    assert all(row["lambda12"] is None for row in rows)


def test_track_loads_saved_sequences(tmp_path):
    data_dir = tmp_path / "seq"
    assert run(["synth", "--n", "6", "--seed", "1", "--out", str(data_dir)]) == EXIT_OK
    out = tmp_path / "run"
    assert run(["track", str(data_dir), "--out", str(out)]) == EXIT_OK
    rows = _read_jsonl(out / "results.jsonl")
    assert len(rows) == 6


# ---------------------------------------------------------------------------
# exit codes


def test_unknown_config_key_exits_2(tmp_path):
    code = run(["track", "--frames", "4", "--out", str(tmp_path / "o"),
                "--set", "fusion.scale=2"])
    assert code == EXIT_CONFIG


def test_missing_sequence_dir_exits_3(tmp_path):
    code = run(["track", str(tmp_path / "nowhere"), "--out", str(tmp_path / "o")])
    assert code == EXIT_DATA


def test_unreadable_auxiliary_file_exits_4(tmp_path):
    rgb = tmp_path / "a.png"
    tir = tmp_path / "b.png"
    cv2.imwrite(str(rgb), np.zeros((32, 32, 3), dtype=np.uint8))
    cv2.imwrite(str(tir), np.zeros((32, 32), dtype=np.uint8))
    wrong = tmp_path / "proj.npy"
    np.save(wrong, np.zeros((3, 5)))  # projection must be square
    code = run(["fuse-image", str(rgb), str(tir), "--projection", str(wrong),
                "--out", str(tmp_path / "f.png"), *FAST_SETS])
    assert code == EXIT_INTERNAL


# ---------------------------------------------------------------------------
# synth


def test_synth_writes_a_loadable_layout(tmp_path):
    out = tmp_path / "seq"
    assert run(["synth", "--n", "5", "--seed", "2", "--bias", "1.0",
                "--name", "demo", "--out", str(out)]) == EXIT_OK
    assert (out / "groundtruth.txt").read_text().count("\n") == 5
    assert len(list((out / "color").glob("*.png"))) == 5
    assert len(list((out / "ir").glob("*.png"))) == 5
    img = cv2.imread(str(out / "ir" / "00000001.png"), cv2.IMREAD_UNCHANGED)
    assert img.dtype == np.uint8 and img.ndim == 2


# ---------------------------------------------------------------------------
# fuse-image


def test_fuse_image_writes_an_8bit_grayscale_png(tmp_path):
    seq_dir = tmp_path / "seq"
    run(["synth", "--n", "1", "--seed", "4", "--out", str(seq_dir)])
    rgb = seq_dir / "color" / "00000001.png"
    tir = seq_dir / "ir" / "00000001.png"
    for level in (1, 3):
        out = tmp_path / f"fused{level}.png"
        code = run(["fuse-image", str(rgb), str(tir), "--level", str(level),
                    "--out", str(out), *FAST_SETS])
        assert code == EXIT_OK
        img = cv2.imread(str(out), cv2.IMREAD_UNCHANGED)
        assert img is not None and img.dtype == np.uint8 and img.ndim == 2
        assert img.shape == (140, 140)


def test_fuse_image_saves_and_reuses_the_projection(tmp_path):
    seq_dir = tmp_path / "seq"
    run(["synth", "--n", "1", "--seed", "4", "--out", str(seq_dir)])
    rgb = seq_dir / "color" / "00000001.png"
    tir = seq_dir / "ir" / "00000001.png"
    proj = tmp_path / "projection.npy"
    args = ["fuse-image", str(rgb), str(tir), "--projection", str(proj),
            "--pairing", "fused_tir", "--out", str(tmp_path / "f.png"), *FAST_SETS]
    assert run(args) == EXIT_OK
    assert proj.is_file()
    stored = np.load(proj)
    assert stored.shape == (64, 64)
    assert run(args) == EXIT_OK  # second call loads instead of retraining


# ---------------------------------------------------------------------------
# eval


def test_eval_restart_protocol(tmp_path):
    # needs more frames than the default burn-in of 10, or nothing is valid
    out = tmp_path / "eval"
    code = run(["eval", "--frames", "20", "--seed", "5", "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert summary["protocol"] == "restart"
    assert summary["R_failures"] >= 0


def test_eval_gtot_protocol_reports_rates(tmp_path):
    out = tmp_path / "eval"
    code = run(["eval", "--protocol", "gtot", "--frames", "8", "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    assert 0.0 <= summary["success"] <= 1.0
    assert 0.0 <= summary["precision"] <= 1.0


def test_eval_anchor_protocol(tmp_path):
    out = tmp_path / "eval"
    code = run(["eval", "--protocol", "anchor", "--frames", "12", "--out", str(out)])
    assert code == EXIT_OK
    rows = _read_jsonl(out / "results.jsonl")
    assert {row["seq"] for row in rows} == {"synth0_a0f"}  # one anchor at 12 frames


# ---------------------------------------------------------------------------
# ablate


def test_ablation_sweeps_modes_and_writes_csv(tmp_path):
    out = tmp_path / "ab"
    code = run(["ablate", "--axis", "fusion.mode",
                "--values", "decision_dfat,decision_avg",
                "--sequences", "2", "--frames", "10", "--out", str(out)])
    assert code == EXIT_OK
    with open(out / "ablation.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["value"] for r in rows] == ["decision_dfat", "decision_avg"]
    assert set(rows[0]) == {"axis", "value", "A", "R_failures", "R_inverted",
                            "EAO", "mean_iou"}


def test_ablation_runs_parallel_workers(tmp_path):
    out = tmp_path / "ab"
    code = run(["ablate", "--axis", "s", "--values", "0.5",
                "--sequences", "2", "--frames", "8", "--jobs", "2",
                "--out", str(out)])
    assert code == EXIT_OK
    assert (out / "ablation.csv").is_file()


# ---------------------------------------------------------------------------
# plotdata


def test_plotdata_emits_csv_and_svg(tmp_path):
    run_dir = tmp_path / "run"
    assert run(["track", "--frames", "8", "--bias", "1.0", "--out", str(run_dir)]) == EXIT_OK
    out = tmp_path / "plots"
    assert run(["plotdata", str(run_dir), "--out", str(out)]) == EXIT_OK
    gap = (out / "bias_gap.csv").read_text().splitlines()
    assert gap[0] == "frame,original,modulated"
    assert len(gap) == 8  # header + 7 tracked frames
    assert (out / "eao_curve.csv").read_text() == (run_dir / "eao_curve.csv").read_text()
    for name in ("bias_gap.svg", "eao_curve.svg"):
        text = (out / name).read_text()
        assert text.startswith("<svg") and "polyline" in text


def test_plotdata_requires_diagnostics(tmp_path):
    assert run(["plotdata", str(tmp_path), "--out", str(tmp_path / "p")]) == EXIT_DATA


# ---------------------------------------------------------------------------
# determinism


def test_repeated_runs_are_byte_identical(tmp_path):
    out = tmp_path / "run"
    args = ["track", "--frames", "10", "--seed", "9", "--out", str(out)]
    assert run(args) == EXIT_OK
    names = ("results.jsonl", "diagnostics.jsonl", "summary.json", "eao_curve.csv")
    first = {name: (out / name).read_bytes() for name in names}
    assert run(args) == EXIT_OK
    for name in names:
        assert (out / name).read_bytes() == first[name]
