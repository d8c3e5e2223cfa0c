"""Run configuration: one YAML file drives generation, both training
stages, and evaluation.

Schema (all sections optional unless a command needs them; unknown keys
are rejected):

    seed: 0
    paths:
      data_dir: data/synth          # dataset root (gen-synth writes here)
      taxonomy: <data_dir>/taxonomy.txt
      train_manifest: <data_dir>/train_manifest.txt
      test_manifest: <data_dir>/test_manifest.txt
      output_dir: runs/exp          # checkpoints, metrics, reports
      base_checkpoints:             # default <output_dir>/base_<level>.pt
        event: ...
      joint_checkpoint: ...         # default <output_dir>/joint.pt
      cache_dir: ...                # enables the stage-2 feature cache
    sampling:
      rescale_size: 256
      crop_size: 224
      set_rate: t8                  # t8 = 8x8, t16 = 16x4
      rates:                        # explicit override of [frames, interval]
        element: [32, 2]
      normalization: {mean: [...], std: [...]}
    pathway: {preset: paper_resnet50, base_channels: 64}
    joint_head:
      encoder_dims: {event: 128, set: 256, element: 1024}
      fusion_dim: 1024
      use_nonlinearity: true
      dropout: 0.0
    loss_weights: {event: 1.0, set: 2.0, element: 4.0}
    optimizer:
      stage1: {lr: 0.01, momentum: 0.9, weight_decay: 1.0e-4, grad_clip: 40.0,
               decay_epochs: [90, 110], decay_factor: 0.1, epochs: 120,
               batch_size: 8, warmup_epochs: 0}
      stage2: {..., epochs: 60, decay_epochs: [45, 55]}
    evaluation: {base_num_clips: 6, joint_num_clips: 1, aggregation: probability}
    synth: {num_events: 2, num_sets: 4, num_elements: 8, clips_per_element: 30,
            test_clips_per_element: 10, frames_per_clip: 72, frame_size: 48,
            noise_level: 0.1, seed: 0}

Relative paths are resolved against the config file's directory. A config
round-trips losslessly: to_dict() -> YAML -> load_config() compares equal.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import yaml

from .heads import DEFAULT_ENCODER_DIMS, DEFAULT_FUSION_DIM, JointHeadConfig
from .losses import LossWeights
from .pathway import PRESETS, PathwayConfig
from .sampling import Normalization, SamplingSpec, default_specs
from .synthetic import SynthSpec
from .taxonomy import LEVELS
from .training import OptimizerConfig, stage2_defaults


class ConfigError(ValueError):
    """Malformed run configuration."""


def _section(data, name: str, allowed) -> dict:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"'{name}' must be a mapping, got {type(data).__name__}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {sorted(unknown)}")
    return dict(data)


def _build(cls, data: dict, name: str):
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad '{name}' section: {exc}") from exc


@dataclass(frozen=True)
class PathsConfig:
    data_dir: str | None = None
    taxonomy: str | None = None
    train_manifest: str | None = None
    test_manifest: str | None = None
    output_dir: str | None = None
    base_checkpoints: dict[str, str] = field(default_factory=dict)
    joint_checkpoint: str | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        unknown = set(self.base_checkpoints) - set(LEVELS)
        if unknown:
            raise ConfigError(
                f"unknown level(s) in base_checkpoints: {sorted(unknown)}"
            )


@dataclass(frozen=True)
class SamplingSection:
    rescale_size: int = 256
    crop_size: int = 224
    set_rate: str = "t8"
    rates: dict[str, tuple[int, int]] | None = None
    mean: tuple[float, float, float] = Normalization.mean
    std: tuple[float, float, float] = Normalization.std

    def __post_init__(self):
        if self.rescale_size < self.crop_size:
            raise ConfigError(
                f"rescale_size {self.rescale_size} < crop_size {self.crop_size}"
            )
        if self.set_rate not in ("t8", "t16"):
            raise ConfigError(
                f"set_rate must be 't8' or 't16', got {self.set_rate!r}"
            )
        if self.rates is not None:
            for level, rate in self.rates.items():
                if level not in LEVELS:
                    raise ConfigError(f"unknown level {level!r} in sampling.rates")
                if len(tuple(rate)) != 2 or any(int(v) < 1 for v in rate):
                    raise ConfigError(f"sampling.rates[{level!r}] must be two ints >= 1")
        if len(self.mean) != 3 or len(self.std) != 3 or any(s <= 0 for s in self.std):
            raise ConfigError("normalization needs 3 means and 3 positive stds")

    def specs(self) -> dict[str, SamplingSpec]:
        specs = default_specs(crop_size=self.crop_size, set_rate=self.set_rate)
        if self.rates:
            for level, (frames, interval) in self.rates.items():
                specs[level] = SamplingSpec(
                    int(frames), int(interval), crop_size=self.crop_size, level=level
                )
        return specs

    def normalization(self) -> Normalization:
        return Normalization(mean=tuple(self.mean), std=tuple(self.std))


@dataclass(frozen=True)
class PathwaySection:
    preset: str = "paper_resnet50"
    base_channels: int = 64

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise ConfigError(
                f"unknown pathway preset {self.preset!r}, expected one of "
                f"{sorted(PRESETS)}"
            )
        if self.base_channels < 1:
            raise ConfigError(f"base_channels must be >= 1, got {self.base_channels}")

    @property
    def feature_dim(self) -> int:
        return self.base_channels * PRESETS[self.preset].channel_multipliers[-1]

    def pathway_config(self, num_frames: int, spatial_size: int) -> PathwayConfig:
        return PathwayConfig(
            num_frames=num_frames,
            spatial_size=spatial_size,
            base_channels=self.base_channels,
            feature_dim=self.feature_dim,
            depth_preset=self.preset,
        )


@dataclass(frozen=True)
class HeadSection:
    encoder_dims: dict[str, int] = field(
        default_factory=lambda: dict(DEFAULT_ENCODER_DIMS)
    )
    fusion_dim: int = DEFAULT_FUSION_DIM
    use_nonlinearity: bool = True
    dropout: float = 0.0

    def head_config(
        self, class_counts: dict[str, int], input_dims: dict[str, int]
    ) -> JointHeadConfig:
        return JointHeadConfig(
            class_counts=dict(class_counts),
            input_dims=dict(input_dims),
            encoder_dims=dict(self.encoder_dims),
            fusion_dim=self.fusion_dim,
            use_nonlinearity=self.use_nonlinearity,
            dropout=self.dropout,
        )


@dataclass(frozen=True)
class EvalSection:
    base_num_clips: int = 6
    joint_num_clips: int = 1
    aggregation: str = "probability"

    def __post_init__(self):
        if self.base_num_clips < 1 or self.joint_num_clips < 1:
            raise ConfigError("clip counts must be >= 1")
        if self.aggregation not in ("probability", "logit"):
            raise ConfigError(
                f"aggregation must be 'probability' or 'logit', "
                f"got {self.aggregation!r}"
            )


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    sampling: SamplingSection = field(default_factory=SamplingSection)
    pathway: PathwaySection = field(default_factory=PathwaySection)
    joint_head: HeadSection = field(default_factory=HeadSection)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    optimizer_stage1: OptimizerConfig = field(default_factory=OptimizerConfig)
    optimizer_stage2: OptimizerConfig = field(default_factory=stage2_defaults)
    evaluation: EvalSection = field(default_factory=EvalSection)
    synth: SynthSpec | None = None
    # directory against which relative paths resolve (the config file's home)
    base_dir: str = "."

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def data_path(self, name: str, default_name: str) -> Path | None:
        """A paths entry, defaulting to <data_dir>/<default_name>."""
        explicit = getattr(self.paths, name)
        if explicit is not None:
            return self.resolve(explicit)
        if self.paths.data_dir is not None:
            return self.resolve(self.paths.data_dir) / default_name
        return None

    def checkpoint_path(self, level_or_joint: str) -> Path | None:
        if level_or_joint == "joint":
            explicit = self.paths.joint_checkpoint
            default_name = "joint.pt"
        else:
            explicit = self.paths.base_checkpoints.get(level_or_joint)
            default_name = f"base_{level_or_joint}.pt"
        if explicit is not None:
            return self.resolve(explicit)
        if self.paths.output_dir is not None:
            return self.resolve(self.paths.output_dir) / default_name
        return None

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "paths": {
                k: v
                for k, v in dataclasses.asdict(self.paths).items()
                if v not in (None, {})
            },
            "sampling": {
                "rescale_size": self.sampling.rescale_size,
                "crop_size": self.sampling.crop_size,
                "set_rate": self.sampling.set_rate,
                "normalization": {
                    "mean": list(self.sampling.mean),
                    "std": list(self.sampling.std),
                },
            },
            "pathway": dataclasses.asdict(self.pathway),
            "joint_head": dataclasses.asdict(self.joint_head),
            "loss_weights": self.loss_weights.as_dict(),
            "optimizer": {
                "stage1": _optimizer_dict(self.optimizer_stage1),
                "stage2": _optimizer_dict(self.optimizer_stage2),
            },
            "evaluation": dataclasses.asdict(self.evaluation),
        }
        if self.sampling.rates is not None:
            d["sampling"]["rates"] = {
                lvl: list(rate) for lvl, rate in self.sampling.rates.items()
            }
        if self.synth is not None:
            d["synth"] = dataclasses.asdict(self.synth)
        return d


def _optimizer_dict(config: OptimizerConfig) -> dict:
    d = dataclasses.asdict(config)
    d["decay_epochs"] = list(d["decay_epochs"])
    return d


_TOP_KEYS = (
    "seed", "paths", "sampling", "pathway", "joint_head", "loss_weights",
    "optimizer", "evaluation", "synth",
)
_OPT_KEYS = tuple(f.name for f in dataclasses.fields(OptimizerConfig))


def from_dict(data: Mapping, base_dir: str | Path = ".") -> RunConfig:
    data = _section(data, "config", _TOP_KEYS)

    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    paths = _build(
        PathsConfig,
        _section(data.get("paths"), "paths", [f.name for f in dataclasses.fields(PathsConfig)]),
        "paths",
    )

    s = _section(
        data.get("sampling"), "sampling",
        ("rescale_size", "crop_size", "set_rate", "rates", "normalization"),
    )
    norm = _section(s.pop("normalization", None), "sampling.normalization", ("mean", "std"))
    if "mean" in norm:
        s["mean"] = tuple(float(v) for v in norm["mean"])
    if "std" in norm:
        s["std"] = tuple(float(v) for v in norm["std"])
    if s.get("rates") is not None:
        rates = _section(s["rates"], "sampling.rates", LEVELS)
        s["rates"] = {lvl: tuple(int(v) for v in rate) for lvl, rate in rates.items()}
    sampling = _build(SamplingSection, s, "sampling")

    pathway = _build(
        PathwaySection,
        _section(data.get("pathway"), "pathway", ("preset", "base_channels")),
        "pathway",
    )

    h = _section(
        data.get("joint_head"), "joint_head",
        ("encoder_dims", "fusion_dim", "use_nonlinearity", "dropout"),
    )
    if "encoder_dims" in h:
        dims = _section(h["encoder_dims"], "joint_head.encoder_dims", LEVELS)
        if set(dims) != set(LEVELS):
            raise ConfigError(
                f"joint_head.encoder_dims must name all of {LEVELS}, got {sorted(dims)}"
            )
        h["encoder_dims"] = {lvl: int(dims[lvl]) for lvl in LEVELS}
    joint_head = _build(HeadSection, h, "joint_head")

    w = _section(data.get("loss_weights"), "loss_weights", LEVELS)
    loss_weights = _build(
        LossWeights, {lvl: float(v) for lvl, v in w.items()}, "loss_weights"
    )

    opt = _section(data.get("optimizer"), "optimizer", ("stage1", "stage2"))
    stages = {}
    for stage, default in (("stage1", OptimizerConfig()), ("stage2", stage2_defaults())):
        entries = _section(opt.get(stage), f"optimizer.{stage}", _OPT_KEYS)
        if "decay_epochs" in entries:
            entries["decay_epochs"] = tuple(int(v) for v in entries["decay_epochs"])
        stages[stage] = (
            _build(OptimizerConfig, {**dataclasses.asdict(default), **entries},
                   f"optimizer.{stage}")
            if entries
            else default
        )

    evaluation = _build(
        EvalSection,
        _section(data.get("evaluation"), "evaluation",
                 ("base_num_clips", "joint_num_clips", "aggregation")),
        "evaluation",
    )

    synth = None
    if data.get("synth") is not None:
        fields = [f.name for f in dataclasses.fields(SynthSpec)]
        synth = _build(SynthSpec, _section(data["synth"], "synth", fields), "synth")

    return RunConfig(
        seed=seed,
        paths=paths,
        sampling=sampling,
        pathway=pathway,
        joint_head=joint_head,
        loss_weights=loss_weights,
        optimizer_stage1=stages["stage1"],
        optimizer_stage2=stages["stage2"],
        evaluation=evaluation,
        synth=synth,
        base_dir=str(base_dir),
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data, base_dir=path.parent)


def save_config(config: RunConfig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        yaml.safe_dump(config.to_dict(), sort_keys=False), encoding="utf-8"
    )
