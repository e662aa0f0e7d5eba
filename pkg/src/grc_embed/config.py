"""JSON pipeline configuration shared by all CLI subcommands."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .aligner import AlignConfig
from .text_prep import SegmentationConfig
from .trainer import TrainConfig


class ConfigError(Exception):
    pass


@dataclass
class Phase:
    dataset: str
    epochs: int


@dataclass
class PipelineConfig:
    seed: int = 0
    out_dir: str = "out"
    segmentation: SegmentationConfig = field(default_factory=SegmentationConfig)
    align: AlignConfig = field(default_factory=AlignConfig)
    align_embed: AlignConfig = field(default_factory=AlignConfig.stage2)
    train: TrainConfig = field(default_factory=TrainConfig.toy)
    phases: list[Phase] = field(default_factory=list)
    holdout_size: int = 200
    min_chars: int = 5
    student_dim_in: int = 64
    vocab_size: int = 50000
    oov_buckets: int = 64
    teacher_checkpoint: str | None = None
    teacher_store: str | None = None
    sts: str | None = None
    dictionary: str | None = None
    checkpoint: str | None = None


_PATH_KEYS = ("teacher_checkpoint", "teacher_store", "sts", "dictionary", "checkpoint")


def _build(cls, obj: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(sorted(unknown))}")
    try:
        return cls(**obj)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path: str | Path | None) -> PipelineConfig:
    """Parse a config file; relative paths resolve against the file's directory.

    Every referenced input path must exist.
    """
    if path is None:
        return PipelineConfig()
    path = Path(path)
    try:
        raw: dict[str, Any] = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    base = path.parent
    resolve = lambda p: str(p if Path(p).is_absolute() else base / p)  # noqa: E731

    raw = dict(raw)
    seg = raw.pop("segmentation", {})
    if "english_abbreviations" in seg:
        seg["english_abbreviations"] = tuple(seg["english_abbreviations"])
    kwargs: dict[str, Any] = {
        "segmentation": _build(SegmentationConfig, seg, "segmentation"),
        "align": _build(AlignConfig, raw.pop("align", {}), "align"),
        "align_embed": _build(AlignConfig, {"max_bead": 3, **raw.pop("align_embed", {})}, "align_embed"),
    }
    train = raw.pop("train", {})
    kwargs["train"] = _build(TrainConfig, {**TrainConfig.toy().__dict__, **train}, "train")
    kwargs["phases"] = [Phase(resolve(p["dataset"]), int(p["epochs"])) for p in raw.pop("phases", [])]
    for key in _PATH_KEYS:
        if raw.get(key) is not None:
            raw[key] = resolve(raw[key])
    if "out_dir" in raw:
        raw["out_dir"] = resolve(raw["out_dir"])
    cfg = _build(PipelineConfig, {**raw, **kwargs}, str(path))

    for p in [*(getattr(cfg, k) for k in _PATH_KEYS), *(ph.dataset for ph in cfg.phases)]:
        if p is not None and not Path(p).exists():
            raise ConfigError(f"{path}: referenced path does not exist: {p}")
    return cfg
