"""Single-rate 3D-conv backbone: one pathway mapping a clip to a feature vector.

A pathway consumes a clip sampled at its level's frame rate and emits a
fixed-dimension feature by global average pooling after the final residual
stage. Two presets are provided: "tiny" is the desk-scale default used by
the test suite; "paper_resnet50" records the full-scale configuration
(base 64 channels, 2048-D features, ResNet-50 stage layout) for users with
GPU-scale resources.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class PresetRecipe:
    stage_depths: tuple[int, ...]
    channel_multipliers: tuple[int, ...]
    # temporal conv extent per stage; kept at 1 in early stages
    temporal_kernels: tuple[int, ...]
    stem_pool: bool


PRESETS = {
    "tiny": PresetRecipe(
        stage_depths=(1, 1, 1),
        channel_multipliers=(2, 4, 8),
        temporal_kernels=(1, 3, 3),
        stem_pool=False,
    ),
    "paper_resnet50": PresetRecipe(
        stage_depths=(3, 4, 6, 3),
        channel_multipliers=(4, 8, 16, 32),
        temporal_kernels=(1, 1, 3, 3),
        stem_pool=True,
    ),
}


@dataclass(frozen=True)
class PathwayConfig:
    num_frames: int = 32
    spatial_size: int = 224
    base_channels: int = 64
    feature_dim: int = 2048
    first_kernel: tuple[int, int, int] = (1, 7, 7)
    depth_preset: str = "paper_resnet50"
    # temporal stride of the first block of each stage; stem stride is 1
    temporal_strides: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.depth_preset not in PRESETS:
            raise ValueError(
                f"unknown depth_preset {self.depth_preset!r}, "
                f"expected one of {sorted(PRESETS)}"
            )
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if len(self.first_kernel) != 3 or any(k < 1 for k in self.first_kernel):
            raise ValueError(f"bad first_kernel {self.first_kernel}")
        recipe = PRESETS[self.depth_preset]
        expected = self.base_channels * recipe.channel_multipliers[-1]
        if expected != self.feature_dim:
            raise ValueError(
                f"feature_dim {self.feature_dim} inconsistent with base_channels "
                f"{self.base_channels} under preset {self.depth_preset!r} "
                f"(expected {expected})"
            )
        strides = self.temporal_strides
        if strides is not None and len(strides) != len(recipe.stage_depths):
            raise ValueError(
                f"temporal_strides needs {len(recipe.stage_depths)} entries, "
                f"got {len(strides)}"
            )

    @property
    def recipe(self) -> PresetRecipe:
        return PRESETS[self.depth_preset]

    @property
    def stage_channels(self) -> tuple[int, ...]:
        return tuple(self.base_channels * m for m in self.recipe.channel_multipliers)


def tiny_config(num_frames: int = 8, spatial_size: int = 32, base_channels: int = 8):
    """Desk-scale pathway configuration (2-3 small residual stages)."""
    return PathwayConfig(
        num_frames=num_frames,
        spatial_size=spatial_size,
        base_channels=base_channels,
        feature_dim=base_channels * PRESETS["tiny"].channel_multipliers[-1],
        depth_preset="tiny",
    )


@dataclass
class FeatureVector:
    values: torch.Tensor
    level: str


class ResidualBlock3d(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, temporal_kernel: int, stride):
        super().__init__()
        kt = temporal_kernel
        pad = (kt // 2, 1, 1)
        self.conv1 = nn.Conv3d(
            in_ch, out_ch, (kt, 3, 3), stride=stride, padding=pad, bias=False
        )
        self.bn1 = nn.BatchNorm3d(out_ch)
        self.conv2 = nn.Conv3d(out_ch, out_ch, (kt, 3, 3), padding=pad, bias=False)
        self.bn2 = nn.BatchNorm3d(out_ch)
        self.relu = nn.ReLU(inplace=True)
        if in_ch != out_ch or any(s != 1 for s in stride):
            self.downsample = nn.Sequential(
                nn.Conv3d(in_ch, out_ch, 1, stride=stride, bias=False),
                nn.BatchNorm3d(out_ch),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class PathwayBackbone(nn.Module):
    """Stem + residual 3D-conv stages + spatio-temporal global average pool."""

    def __init__(self, config: PathwayConfig):
        super().__init__()
        self.config = config
        recipe = config.recipe
        kt, kh, kw = config.first_kernel
        self.stem = nn.Sequential(
            nn.Conv3d(
                3,
                config.base_channels,
                (kt, kh, kw),
                stride=(1, 2, 2),
                padding=(kt // 2, kh // 2, kw // 2),
                bias=False,
            ),
            nn.BatchNorm3d(config.base_channels),
            nn.ReLU(inplace=True),
        )
        if recipe.stem_pool:
            self.pool = nn.MaxPool3d((1, 3, 3), stride=(1, 2, 2), padding=(0, 1, 1))
        else:
            self.pool = nn.Identity()
        t_strides = config.temporal_strides or (1,) * len(recipe.stage_depths)
        stages = []
        in_ch = config.base_channels
        for depth, out_ch, kt_stage, t_stride in zip(
            recipe.stage_depths,
            config.stage_channels,
            recipe.temporal_kernels,
            t_strides,
        ):
            blocks = [ResidualBlock3d(in_ch, out_ch, kt_stage, (t_stride, 2, 2))]
            blocks += [
                ResidualBlock3d(out_ch, out_ch, kt_stage, (1, 1, 1))
                for _ in range(depth - 1)
            ]
            stages.append(nn.Sequential(*blocks))
            in_ch = out_ch
        self.stages = nn.Sequential(*stages)
        self.avgpool = nn.AdaptiveAvgPool3d(1)

    @property
    def feature_dim(self) -> int:
        return self.config.feature_dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """[B, 3, T, S, S] -> [B, feature_dim]"""
        if x.ndim != 5 or x.shape[1] != 3:
            raise ValueError(f"expected [B, 3, T, S, S] input, got {tuple(x.shape)}")
        x = self.pool(self.stem(x))
        x = self.stages(x)
        return self.avgpool(x).flatten(1)


class LevelClassifier(nn.Module):
    """Affine map from a pathway feature to single-level class scores."""

    def __init__(self, feature_dim: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(feature_dim, num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if features.shape[-1] != self.fc.in_features:
            raise ValueError(
                f"feature dim {features.shape[-1]} != classifier input "
                f"{self.fc.in_features}"
            )
        return self.fc(features)


def init_parameters(module: nn.Module, seed: int) -> None:
    """Deterministic init: fan-in scaled normals for conv/linear weights,
    unit batch-norm scales, zero biases."""
    torch.manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.Linear)):
            nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm3d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_backbone(config: PathwayConfig, seed: int = 0) -> PathwayBackbone:
    net = PathwayBackbone(config)
    init_parameters(net, seed)
    return net


def pathway_forward(
    clip, backbone: PathwayBackbone, level: str = "element"
) -> FeatureVector:
    """Run one preprocessed clip [T, S, S, 3] through a pathway in eval mode."""
    x = torch.as_tensor(clip, dtype=torch.float32)
    if x.ndim != 4 or x.shape[3] != 3:
        raise ValueError(f"expected [T, S, S, 3] clip, got {tuple(x.shape)}")
    cfg = backbone.config
    if x.shape[0] != cfg.num_frames or x.shape[1] != cfg.spatial_size:
        raise ValueError(
            f"clip shape {tuple(x.shape)} does not match pathway config "
            f"(T={cfg.num_frames}, S={cfg.spatial_size})"
        )
    x = x.permute(3, 0, 1, 2).unsqueeze(0)
    was_training = backbone.training
    backbone.eval()
    try:
        with torch.no_grad():
            feat = backbone(x).squeeze(0)
    finally:
        backbone.train(was_training)
    if not torch.isfinite(feat).all():
        raise FloatingPointError("non-finite activations in pathway forward")
    return FeatureVector(values=feat, level=level)


def single_level_logits(
    feature: FeatureVector, classifier: LevelClassifier
) -> torch.Tensor:
    """Raw class scores for one level from a pooled pathway feature."""
    return classifier(feature.values)
