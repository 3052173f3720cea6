"""Plain-text configuration: dotted keys, typed defaults, CLI overrides.

Config files hold one `key = value` pair per line; `#` starts a comment.
Every key must appear in the registry below, which also fixes its type, so a
typo fails loudly instead of silently using a default.
"""

from __future__ import annotations

from pathlib import Path

from .data import SynthConfig
from .decision import FusionWeights, PostprocessConfig
from .feature import AttentionConfig, SelectionConfig
from .pixel import LevelSelector
from .siamese import HeadWeights
from .tracker import MODES, TrackerConfig


class ConfigError(Exception):
    """Raised for unknown keys, malformed values, or invalid combinations."""


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.split(",") if tok.strip())


def _parse_interval(text: str):
    if not text.strip():
        return None
    parts = [int(tok) for tok in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"interval needs two integers, got {text!r}")
    return tuple(parts)


# key -> (default, parser)
REGISTRY: dict = {
    "fusion.mode": ("decision_dfat", str),
    "fusion.s": (0.5, float),
    "fusion.lambda11": (0.5, float),
    "fusion.lambda21": (0.5, float),
    "post.window_influence": (0.4, float),
    "post.penalty_k": (0.04, float),
    "post.size_lr": (0.32, float),
    "feat.selection": (True, _parse_bool),
    "feat.keep": (0.8, float),
    "feat.type": ("C", str),
    "feat.vector": ("max", str),
    "feat.scalar": ("mean", str),
    "pixel.level": (2, int),
    "pixel.pairing": ("fused_fused", str),
    "pixel.patch": (16, int),
    "pixel.lambda": (0.4, float),
    "pixel.tol": (1e-5, float),
    "pixel.max_iter": (400, int),
    "pixel.corpus": (200, int),
    "backbone.seed": (7, int),
    "backbone.channels": (16, int),
    "backbone.neck": (32, int),
    "heads.alpha": ((1 / 3, 1 / 3, 1 / 3), _parse_floats),
    "heads.beta": ((1 / 3, 1 / 3, 1 / 3), _parse_floats),
    "anchors.scales": ((64.0,), _parse_floats),
    "anchors.ratios": ((0.5, 1.0, 2.0), _parse_floats),
    "crop.exemplar": (127, int),
    "crop.instance": (255, int),
    "crop.context": (0.5, float),
    "template.update": (True, _parse_bool),
    "template.lr": (0.1, float),
    "template.cadence": (10, int),
    "eval.skip": (5, int),
    "eval.burn_in": (10, int),
    "eval.anchor_gap": (50, int),
    "eval.interval": (None, _parse_interval),
    "synth.size": (140, int),
    "synth.target": (24.0, float),
    "synth.velocity": (1.0, float),
    "synth.distractors": (3, int),
    "synth.dip": (0, int),
    "synth.crossover": (0, int),
    "synth.drift": (0.0, float),
    "synth.rgb_contrast": (0.30, float),
    "synth.tir_contrast": (0.30, float),
    "synth.dip_depth": (0.25, float),
    "synth.crossover_depth": (0.1, float),
}

_CHOICES = {
    "fusion.mode": set(MODES),
    "feat.type": {"S", "C"},
    "feat.vector": {"mean", "max"},
    "feat.scalar": {"mean", "max"},
    "pixel.pairing": {"fused_fused", "fused_tir"},
}


def defaults() -> dict:
    return {key: default for key, (default, _) in REGISTRY.items()}


def set_value(cfg: dict, key: str, raw: str, where: str = "") -> None:
    if key not in REGISTRY:
        raise ConfigError(f"unknown config key {key!r}{where}")
    _, parser = REGISTRY[key]
    try:
        value = parser(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}{where}: {exc}") from None
    if key in _CHOICES and value not in _CHOICES[key]:
        raise ConfigError(
            f"{key}{where} must be one of {sorted(_CHOICES[key])}, got {value!r}"
        )
    cfg[key] = value


def parse_file(cfg: dict, path: str | Path) -> None:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
        key, raw = stripped.split("=", 1)
        set_value(cfg, key.strip(), raw.strip(), where=f" ({path}:{lineno})")


def apply_sets(cfg: dict, assignments: list[str]) -> None:
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        set_value(cfg, key.strip(), raw.strip(), where=" (--set)")


def load_config(path: str | Path | None = None, sets: list[str] | None = None) -> dict:
    cfg = defaults()
    if path is not None:
        parse_file(cfg, path)
    if sets:
        apply_sets(cfg, sets)
    return cfg


def build_tracker_config(cfg: dict, **overrides) -> TrackerConfig:
    """Assemble the typed tracker configuration from a flat key-value map."""
    try:
        kwargs = dict(
            mode=cfg["fusion.mode"],
            weights=FusionWeights(
                lambda11=cfg["fusion.lambda11"],
                lambda21=cfg["fusion.lambda21"],
                s=cfg["fusion.s"],
            ),
            post=PostprocessConfig(
                window_influence=cfg["post.window_influence"],
                penalty_k=cfg["post.penalty_k"],
                size_lr=cfg["post.size_lr"],
            ),
            selection=SelectionConfig(
                keep_fraction=cfg["feat.keep"], enabled=cfg["feat.selection"]
            ),
            attention=AttentionConfig(
                type=cfg["feat.type"],
                vector_pool=cfg["feat.vector"],
                scalar_reduce=cfg["feat.scalar"],
            ),
            level=LevelSelector(level=cfg["pixel.level"]),
            pairing=cfg["pixel.pairing"],
            exemplar_size=cfg["crop.exemplar"],
            instance_size=cfg["crop.instance"],
            context_amount=cfg["crop.context"],
            scales=cfg["anchors.scales"],
            ratios=cfg["anchors.ratios"],
            head_weights=HeadWeights(alpha=cfg["heads.alpha"], beta=cfg["heads.beta"]),
            backbone_seed=cfg["backbone.seed"],
            channels=cfg["backbone.channels"],
            neck_channels=cfg["backbone.neck"],
            template_lr=cfg["template.lr"],
            template_cadence=cfg["template.cadence"],
            template_update=cfg["template.update"],
            patch_side=cfg["pixel.patch"],
            latlrr_lambda=cfg["pixel.lambda"],
            latlrr_tol=cfg["pixel.tol"],
            latlrr_max_iter=cfg["pixel.max_iter"],
            corpus_patches=cfg["pixel.corpus"],
        )
        kwargs.update(overrides)
        tc = TrackerConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return tc


def build_synth_config(cfg: dict, seed: int, n: int, bias: float, name: str = "synth") -> SynthConfig:
    try:
        return SynthConfig(
            seed=seed,
            n=n,
            height=cfg["synth.size"],
            width=cfg["synth.size"],
            target_size=cfg["synth.target"],
            velocity=cfg["synth.velocity"],
            rgb_contrast=cfg["synth.rgb_contrast"],
            tir_contrast=cfg["synth.tir_contrast"],
            bias=bias,
            distractors=cfg["synth.distractors"],
            illumination_dip=cfg["synth.dip"] or None,
            thermal_crossover=cfg["synth.crossover"] or None,
            drift=cfg["synth.drift"],
            dip_depth=cfg["synth.dip_depth"],
            crossover_depth=cfg["synth.crossover_depth"],
            name=name,
        )
    except Exception as exc:
        raise ConfigError(str(exc)) from None
