"""Joint prediction layers: per-level encoders, fusion, three classifiers.

Features from the three pathways are first encoded to lower dimensions
(the element encoder keeps the most bits, the event encoder the fewest),
concatenated in event/set/element order, mapped to a shared fusion vector,
and classified by three independent heads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .pathway import FeatureVector
from .taxonomy import LEVELS

# Full-scale encoder widths; desk-scale configs override these.
DEFAULT_ENCODER_DIMS = {"event": 128, "set": 256, "element": 1024}
DEFAULT_FUSION_DIM = 1024


@dataclass(frozen=True)
class JointHeadConfig:
    class_counts: dict[str, int]
    input_dims: dict[str, int]
    encoder_dims: dict[str, int] = field(
        default_factory=lambda: dict(DEFAULT_ENCODER_DIMS)
    )
    fusion_dim: int = DEFAULT_FUSION_DIM
    use_nonlinearity: bool = True
    dropout: float = 0.0

    def __post_init__(self):
        for name, mapping in (
            ("class_counts", self.class_counts),
            ("input_dims", self.input_dims),
            ("encoder_dims", self.encoder_dims),
        ):
            if set(mapping) != set(LEVELS):
                raise ValueError(f"{name} must have keys {LEVELS}, got {set(mapping)}")
            if any(v < 1 for v in mapping.values()):
                raise ValueError(f"{name} entries must be >= 1, got {mapping}")
        if self.fusion_dim < 1:
            raise ValueError(f"fusion_dim must be >= 1, got {self.fusion_dim}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def concat_dim(self) -> int:
        return sum(self.encoder_dims.values())


@dataclass
class JointLogits:
    event_logits: torch.Tensor
    set_logits: torch.Tensor
    element_logits: torch.Tensor

    def as_dict(self) -> dict[str, torch.Tensor]:
        return {
            "event": self.event_logits,
            "set": self.set_logits,
            "element": self.element_logits,
        }


class JointHead(nn.Module):
    """encode -> concatenate -> fuse -> three classifiers."""

    def __init__(self, config: JointHeadConfig):
        super().__init__()
        self.config = config
        self.encoders = nn.ModuleDict(
            {
                lvl: nn.Linear(config.input_dims[lvl], config.encoder_dims[lvl])
                for lvl in LEVELS
            }
        )
        self.fusion = nn.Linear(config.concat_dim, config.fusion_dim)
        self.act = nn.ReLU() if config.use_nonlinearity else nn.Identity()
        self.drop = nn.Dropout(config.dropout) if config.dropout > 0 else nn.Identity()
        self.classifiers = nn.ModuleDict(
            {
                lvl: nn.Linear(config.fusion_dim, config.class_counts[lvl])
                for lvl in LEVELS
            }
        )

    def encode(self, values: torch.Tensor, level: str) -> torch.Tensor:
        """Encode one pathway's feature to its lower-dimensional vector."""
        expected = self.config.input_dims[level]
        if values.shape[-1] != expected:
            raise ValueError(
                f"{level} feature dim {values.shape[-1]} != configured {expected}"
            )
        return self.act(self.encoders[level](values))

    def fuse(
        self,
        encoded_event: torch.Tensor,
        encoded_set: torch.Tensor,
        encoded_element: torch.Tensor,
    ) -> torch.Tensor:
        """Concatenate encoded vectors (event, set, element order) and fuse."""
        for lvl, enc in zip(
            LEVELS, (encoded_event, encoded_set, encoded_element)
        ):
            if enc.shape[-1] != self.config.encoder_dims[lvl]:
                raise ValueError(
                    f"encoded {lvl} dim {enc.shape[-1]} != configured "
                    f"{self.config.encoder_dims[lvl]}"
                )
        joint = torch.cat((encoded_event, encoded_set, encoded_element), dim=-1)
        return self.drop(self.act(self.fusion(joint)))

    def classify(self, joint: torch.Tensor) -> JointLogits:
        return JointLogits(
            event_logits=self.classifiers["event"](joint),
            set_logits=self.classifiers["set"](joint),
            element_logits=self.classifiers["element"](joint),
        )

    def forward(self, features: dict[str, torch.Tensor]) -> JointLogits:
        missing = [lvl for lvl in LEVELS if lvl not in features]
        if missing:
            raise ValueError(f"missing pathway features for levels {missing}")
        encoded = {lvl: self.encode(features[lvl], lvl) for lvl in LEVELS}
        joint = self.fuse(encoded["event"], encoded["set"], encoded["element"])
        return self.classify(joint)


def joint_forward(features: dict[str, FeatureVector], head: JointHead) -> JointLogits:
    """Joint prediction from one clip's per-pathway features (eval mode)."""
    values = {lvl: fv.values for lvl, fv in features.items()}
    was_training = head.training
    head.eval()
    try:
        with torch.no_grad():
            return head(values)
    finally:
        head.train(was_training)
