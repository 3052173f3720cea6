"""Shared fixtures: hypothesis profile and the cached stress-suite runs.

The stress suite (10 biased sequences x 100 frames) takes around two minutes
to track under all modes, so it is computed once per session and shared by
every test that compares fusion modes.
"""

from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from rgbtfuse import data, evaluation, tracker
from rgbtfuse.config import build_tracker_config, defaults

settings.register_profile(
    "repo",
    deadline=None,  # first-call numpy warmup trips per-example deadlines
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


SUITE_SEED = 0
SUITE_SEQUENCES = 10
SUITE_FRAMES = 100
SUITE_BIAS = 1.0


@pytest.fixture(scope="session")
def stress_suite():
    """Biased synthetic suite with staggered per-modality degradation events."""
    return data.benchmark_suite(
        seed=SUITE_SEED, n_seq=SUITE_SEQUENCES, n_frames=SUITE_FRAMES, bias=SUITE_BIAS
    )


def _suite_mean_iou(suite, tc: tracker.TrackerConfig) -> float:
    def runner(seq, start):
        return tracker.run_sequence(seq, tc, start=start)[0]

    results = [evaluation.run_plain(runner, seq) for seq in suite]
    return evaluation.mean_iou(results)


@pytest.fixture(scope="session")
def suite_mean_ious(stress_suite):
    """Mean IoU per fusion mode on the stress suite, plus a no-update row."""
    out = {}
    for mode in ("decision_dfat", "decision_avg", "rgb_only", "tir_only"):
        tc = build_tracker_config(defaults(), mode=mode)
        out[mode] = _suite_mean_iou(stress_suite, tc)
    tc = build_tracker_config(defaults(), mode="decision_dfat", template_update=False)
    out["decision_dfat_no_update"] = _suite_mean_iou(stress_suite, tc)
    return out
