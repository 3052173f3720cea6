"""Multi-modal (RGB + thermal) tracking fusion toolkit.

Pixel-level low-rank image fusion, feature-level attention fusion, and
de-biased decision-level fusion on top of a deterministic Siamese RPN
tracker, with VOT-style and GTOT evaluation protocols and a synthetic
paired-sequence generator.
"""

from .geometry import AnchorGrid, BBox, Region, decode, encode, iou, make_anchors, region_to_bbox
from .decision import (
    FusionWeights,
    PostprocessConfig,
    bias_gap,
    debias_weights,
    fuse_classification,
    fuse_decision,
    fuse_regression,
    normalize,
    positive_mean,
    postprocess,
)
from .feature import AttentionConfig, SelectionConfig, fuse_features, select_channels
from .pixel import LevelSelector, decompose, fuse_images, train_projection
from .siamese import HeadWeights, TemplateState, WeightBank, dw_xcorr, embed, rpn_head
from .data import ScoremapConfig, Sequence, SynthConfig, load_sequence, synth_scoremaps, synth_sequence
from .tracker import TrackerConfig, TrackerState, init, run_sequence, track_frame
from .evaluation import EaoCurve, RunResult, accuracy, anchor_protocol, eao, gtot_metrics, run_with_restarts

__version__ = "0.1.0"

__all__ = [
    "AnchorGrid", "BBox", "Region", "decode", "encode", "iou", "make_anchors", "region_to_bbox",
    "FusionWeights", "PostprocessConfig", "bias_gap", "debias_weights", "fuse_classification",
    "fuse_decision", "fuse_regression", "normalize", "positive_mean", "postprocess",
    "AttentionConfig", "SelectionConfig", "fuse_features", "select_channels",
    "LevelSelector", "decompose", "fuse_images", "train_projection",
    "HeadWeights", "TemplateState", "WeightBank", "dw_xcorr", "embed", "rpn_head",
    "ScoremapConfig", "Sequence", "SynthConfig", "load_sequence", "synth_scoremaps", "synth_sequence",
    "TrackerConfig", "TrackerState", "init", "run_sequence", "track_frame",
    "EaoCurve", "RunResult", "accuracy", "anchor_protocol", "eao", "gtot_metrics", "run_with_restarts",
    "__version__",
]
