"""Per-level cross-entropy and the weighted multi-task total loss."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .taxonomy import LEVELS


@dataclass(frozen=True)
class LossWeights:
    """Weights for the event/set/element losses. Defaults use the 1:2:4 ratio."""

    event: float = 1.0
    set: float = 2.0
    element: float = 4.0

    def __post_init__(self):
        values = (self.event, self.set, self.element)
        if any(w < 0 for w in values):
            raise ValueError(f"loss weights must be non-negative, got {values}")
        if not any(w > 0 for w in values):
            raise ValueError("at least one loss weight must be > 0")

    def as_dict(self) -> dict[str, float]:
        return {"event": self.event, "set": self.set, "element": self.element}


def cross_entropy(logits: torch.Tensor, target) -> torch.Tensor:
    """Cross-entropy of raw class scores against an integer target.

    Computes -s_p + logsumexp(s) with max subtraction for stability.
    Accepts a single score vector [N] with an int target, or a batch
    [B, N] with a target vector [B]; batches are mean-reduced.
    """
    if logits.ndim == 1:
        logits = logits.unsqueeze(0)
        target = torch.as_tensor([int(target)], device=logits.device)
    elif logits.ndim == 2:
        target = torch.as_tensor(target, device=logits.device).reshape(-1)
        if target.shape[0] != logits.shape[0]:
            raise ValueError(
                f"target batch {target.shape[0]} != logits batch {logits.shape[0]}"
            )
    else:
        raise ValueError(f"logits must be 1-D or 2-D, got shape {tuple(logits.shape)}")
    n_classes = logits.shape[1]
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if not torch.isfinite(logits).all():
        raise ValueError("non-finite logits")
    if target.min() < 0 or target.max() >= n_classes:
        raise ValueError(
            f"target out of range [0, {n_classes}): {target.tolist()}"
        )
    m = logits.max(dim=1, keepdim=True).values
    lse = m.squeeze(1) + torch.log(torch.exp(logits - m).sum(dim=1))
    s_p = logits.gather(1, target.unsqueeze(1)).squeeze(1)
    return (lse - s_p).mean()


def total_loss(loss_event, loss_set, loss_element, weights: LossWeights):
    """Weighted sum of the three per-level losses."""
    return (
        weights.event * loss_event
        + weights.set * loss_set
        + weights.element * loss_element
    )


def multi_task_loss(
    logits: dict[str, torch.Tensor],
    targets: dict[str, torch.Tensor],
    weights: LossWeights,
) -> tuple[dict[str, torch.Tensor], torch.Tensor]:
    """Per-level cross-entropies and their weighted total for one batch.

    The scalar total is accumulated in float64 so that logged per-level
    losses recombine to the logged total exactly.
    """
    per_level = {lvl: cross_entropy(logits[lvl], targets[lvl]) for lvl in LEVELS}
    return per_level, total_loss(
        per_level["event"].double(),
        per_level["set"].double(),
        per_level["element"].double(),
        weights,
    )
