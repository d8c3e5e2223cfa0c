"""Two-stage training: individual pathway bases, then a joint head over
frozen bases.

Stage 1 trains one backbone + single-level classifier per hierarchy level
with momentum SGD, weight decay, global gradient-norm clipping, and step
learning-rate decay. Stage 2 loads the three base checkpoints, freezes
them functionally (eval mode, no gradients, digests verified bitwise at
the end), and trains only the joint head under the weighted multi-task
loss.

Everything is deterministic for a fixed (seed, config, manifest): module
init uses seeded generators, the sample order is a pure function of
(seed, epoch), and each sample's augmentation stream is a pure function
of (seed, epoch, sample index).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .checkpoints import (
    BASE_FORMAT,
    JOINT_FORMAT,
    CheckpointError,
    load_checkpoint,
    module_digest,
    save_checkpoint,
)
from .datasets import ManifestRow, ClipViews, assemble_batch, epoch_order, load_clip_views, sample_rng
from .evaluation import PredictionRecord, aggregate_clips, softmax
from .heads import DEFAULT_ENCODER_DIMS, JointHead, JointHeadConfig, JointLogits
from .losses import LossWeights, cross_entropy, multi_task_loss
from .pathway import (
    LevelClassifier,
    PathwayBackbone,
    PathwayConfig,
    build_backbone,
    init_parameters,
)
from .sampling import Normalization, SamplingSpec
from .taxonomy import LEVELS, Taxonomy

logger = logging.getLogger(__name__)

DIVERGENCE_LOSS = 1e4  # a non-finite loss or one above this aborts the run


class TrainingDiverged(RuntimeError):
    """Training aborted on a non-finite or runaway loss."""


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    grad_clip: float | None = 40.0
    decay_epochs: tuple[int, ...] = (90, 110)
    decay_factor: float = 0.1
    epochs: int = 120
    batch_size: int = 8
    # warm-up length in epochs; 0 disables (linear ramp from lr/10)
    warmup_epochs: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be > 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError(f"grad_clip must be positive or None, got {self.grad_clip}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        decay = tuple(self.decay_epochs)
        if any(d1 >= d2 for d1, d2 in zip(decay, decay[1:])):
            raise ValueError(f"decay_epochs must be strictly increasing, got {decay}")
        if decay and (decay[0] < 1 or decay[-1] >= self.epochs):
            raise ValueError(
                f"decay_epochs must lie in [1, epochs), got {decay} with "
                f"epochs={self.epochs}"
            )
        if not 0 <= self.warmup_epochs < self.epochs:
            raise ValueError(
                f"warmup_epochs must be in [0, epochs), got {self.warmup_epochs}"
            )


def stage2_defaults() -> OptimizerConfig:
    """Joint-head defaults: 60 epochs with decay steps at the same relative
    positions as the stage-1 schedule (90/120 and 110/120)."""
    return OptimizerConfig(epochs=60, decay_epochs=(45, 55))


def lr_for_epoch(config: OptimizerConfig, epoch: int) -> float:
    """Step-decayed (optionally warm-upped) learning rate for an epoch."""
    if not 0 <= epoch < config.epochs:
        raise ValueError(f"epoch {epoch} outside [0, {config.epochs})")
    if epoch < config.warmup_epochs:
        frac = (epoch + 1) / (config.warmup_epochs + 1)
        return config.lr * (0.1 + 0.9 * frac)
    drops = sum(1 for d in config.decay_epochs if epoch >= d)
    return config.lr * config.decay_factor**drops


def make_optimizer(parameters, config: OptimizerConfig) -> torch.optim.SGD:
    return torch.optim.SGD(
        parameters,
        lr=config.lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )


def set_lr(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr


def clip_gradients(parameters, max_norm: float | None) -> float:
    """Clip gradients to a global L2 norm; returns the pre-clip norm."""
    params = [p for p in parameters if p.grad is not None]
    if not params:
        return 0.0
    if max_norm is None:
        return float(
            torch.linalg.vector_norm(
                torch.stack([torch.linalg.vector_norm(p.grad) for p in params])
            )
        )
    return float(nn.utils.clip_grad_norm_(params, max_norm))


def append_metrics(path: str | Path | None, record: dict) -> None:
    """Append one line-delimited JSON record to the metrics stream."""
    if path is None:
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")


def _batch_top1(logits: torch.Tensor, targets: torch.Tensor) -> float:
    return float((logits.argmax(dim=1) == targets).float().mean())


def _check_divergence(
    loss_value: float,
    *,
    stage: str,
    epoch: int,
    step: int,
    lr: float,
    modules: Mapping[str, nn.Module],
    dump_path: Path,
) -> None:
    if np.isfinite(loss_value) and loss_value <= DIVERGENCE_LOSS:
        return
    dump_path.parent.mkdir(parents=True, exist_ok=True)
    state = {name: dict(m.state_dict()) for name, m in modules.items()}
    torch.save(
        {"stage": stage, "epoch": epoch, "step": step, "lr": lr, "state": state},
        dump_path,
    )
    info = {
        "stage": stage,
        "epoch": epoch,
        "step": step,
        "lr": lr,
        "loss": loss_value if np.isfinite(loss_value) else str(loss_value),
        "state_dump": str(dump_path),
    }
    dump_path.with_suffix(".json").write_text(
        json.dumps(info, indent=2) + "\n", encoding="utf-8"
    )
    raise TrainingDiverged(
        f"{stage} loss {loss_value} at epoch {epoch} step {step}; "
        f"state dumped to {dump_path}"
    )


@dataclass
class TrainResult:
    checkpoint_path: Path
    epochs_run: int
    final_loss: float
    final_top1: dict[str, float]
    digests: dict[str, str]


# ---------------------------------------------------------------------------
# stage 1: per-level base training


def train_base(
    *,
    level: str,
    rows: Sequence[ManifestRow],
    taxonomy: Taxonomy,
    sampling: SamplingSpec,
    pathway_config: PathwayConfig,
    optimizer_config: OptimizerConfig | None = None,
    seed: int = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
    checkpoint_path: str | Path,
    metrics_path: str | Path | None = None,
) -> TrainResult:
    """Train one pathway backbone plus its single-level classifier."""
    if level not in LEVELS:
        raise ValueError(f"unknown level {level!r}")
    if not rows:
        raise ValueError("empty dataset")
    if sampling.num_frames != pathway_config.num_frames:
        raise ValueError(
            f"sampling num_frames {sampling.num_frames} != pathway "
            f"num_frames {pathway_config.num_frames}"
        )
    if sampling.crop_size != pathway_config.spatial_size:
        raise ValueError(
            f"crop_size {sampling.crop_size} != pathway spatial_size "
            f"{pathway_config.spatial_size}"
        )
    num_classes = taxonomy.class_counts[level]
    for row in rows:
        label = getattr(row.triple, f"{level}_id")
        if not 0 <= label < num_classes:
            raise ValueError(f"{row.clip_path}: {level} label {label} out of range")

    config = optimizer_config or OptimizerConfig()
    checkpoint_path = Path(checkpoint_path)
    backbone = build_backbone(pathway_config, seed=seed)
    classifier = LevelClassifier(pathway_config.feature_dim, num_classes)
    init_parameters(classifier, seed + 1)
    params = list(backbone.parameters()) + list(classifier.parameters())
    optimizer = make_optimizer(params, config)
    backbone.train()
    classifier.train()

    n = len(rows)
    final_loss, final_top1 = float("nan"), float("nan")
    for epoch in range(config.epochs):
        lr = lr_for_epoch(config, epoch)
        set_lr(optimizer, lr)
        order = epoch_order(n, epoch, seed)
        losses, accs = [], []
        tick = time.monotonic()
        for step, start in enumerate(range(0, n, config.batch_size)):
            idxs = order[start : start + config.batch_size]
            batch_rows = [rows[i] for i in idxs]
            rngs = [sample_rng(seed, epoch, int(i)) for i in idxs]
            inputs, targets, _ = assemble_batch(
                batch_rows, {level: sampling}, "train_random", rngs,
                rescale_size, normalization,
            )
            logits = classifier(backbone(inputs[level]))
            loss = cross_entropy(logits, targets[level])
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            grad_norm = clip_gradients(params, config.grad_clip)
            optimizer.step()

            loss_value = float(loss.detach())
            _check_divergence(
                loss_value,
                stage=f"base[{level}]", epoch=epoch, step=step, lr=lr,
                modules={"backbone": backbone, "classifier": classifier},
                dump_path=checkpoint_path.with_suffix(".diverged.pt"),
            )
            losses.append(loss_value)
            accs.append(_batch_top1(logits.detach(), targets[level]))
            append_metrics(metrics_path, {
                "kind": "step", "stage": f"base[{level}]", "epoch": epoch,
                "step": step, "lr": lr, "loss_total": loss_value,
                f"loss_{level}": loss_value, "grad_norm": grad_norm,
            })
        final_loss = float(np.mean(losses))
        final_top1 = float(np.mean(accs))
        append_metrics(metrics_path, {
            "kind": "epoch", "stage": f"base[{level}]", "epoch": epoch,
            "lr": lr, "loss_total": final_loss, f"top1_{level}": final_top1,
            "time_s": round(time.monotonic() - tick, 3),
        })
        logger.info(
            "base[%s] epoch %d/%d lr %.2g loss %.4f top1 %.3f",
            level, epoch + 1, config.epochs, lr, final_loss, final_top1,
        )

    payload = {
        "format": BASE_FORMAT,
        "level": level,
        "seed": seed,
        "num_classes": num_classes,
        "pathway_config": dataclasses.asdict(pathway_config),
        "sampling": dataclasses.asdict(sampling),
        "optimizer_config": dataclasses.asdict(config),
        "rescale_size": rescale_size,
        "normalization": dataclasses.asdict(normalization),
        "backbone_state": dict(backbone.state_dict()),
        "backbone_digest": module_digest(backbone),
        "classifier_state": dict(classifier.state_dict()),
        "classifier_digest": module_digest(classifier),
        "final_metrics": {"loss": final_loss, f"top1_{level}": final_top1},
    }
    save_checkpoint(payload, checkpoint_path)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        epochs_run=config.epochs,
        final_loss=final_loss,
        final_top1={level: final_top1},
        digests={
            "backbone": payload["backbone_digest"],
            "classifier": payload["classifier_digest"],
        },
    )


def load_base(path: str | Path) -> tuple[PathwayBackbone, LevelClassifier, dict]:
    """Rebuild a trained backbone + classifier from a base checkpoint."""
    payload = load_checkpoint(path, expected_format=BASE_FORMAT)
    pathway_config = PathwayConfig(**payload["pathway_config"])
    backbone = PathwayBackbone(pathway_config)
    backbone.load_state_dict(payload["backbone_state"])
    classifier = LevelClassifier(pathway_config.feature_dim, payload["num_classes"])
    classifier.load_state_dict(payload["classifier_state"])
    return backbone, classifier, payload


def freeze(module: nn.Module) -> str:
    """Functionally freeze a module; returns its parameter digest."""
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module_digest(module)


# ---------------------------------------------------------------------------
# stage 2: joint head over frozen bases


class FeatureCache:
    """Disk cache of frozen-base features keyed by the exact view identity.

    The key covers the clip, the sampling view (mode, seed stream, clip
    count), and the frozen parameter digests, so a hit returns the very
    tensor the frozen bases would recompute — head gradients are
    bit-identical with the cache on or off.
    """

    def __init__(self, directory: str | Path, namespace: str):
        self.dir = Path(directory) / namespace[:16]
        self.dir.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def namespace(parts: Sequence[str]) -> str:
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()

    def key(self, row: ManifestRow, mode: str, rng_id: tuple[int, ...], num_clips: int) -> str:
        text = json.dumps(
            [row.clip_path, row.frame_count, mode, list(rng_id), num_clips]
        )
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def get(self, key: str) -> dict[str, torch.Tensor] | None:
        path = self.dir / f"{key}.pt"
        if not path.exists():
            return None
        return torch.load(path, map_location="cpu", weights_only=True)

    def put(self, key: str, features: dict[str, torch.Tensor]) -> None:
        save_checkpoint(features, self.dir / f"{key}.pt")


def _frozen_features(
    views: ClipViews, backbones: Mapping[str, PathwayBackbone]
) -> dict[str, torch.Tensor]:
    """Per-view features from frozen bases: level -> [num_views, D]."""
    with torch.no_grad():
        return {lvl: backbones[lvl](views.inputs[lvl]) for lvl in backbones}


def train_joint(
    *,
    rows: Sequence[ManifestRow],
    taxonomy: Taxonomy,
    specs: Mapping[str, SamplingSpec],
    base_checkpoints: Mapping[str, str | Path],
    head_config: JointHeadConfig | None = None,
    loss_weights: LossWeights = LossWeights(),
    optimizer_config: OptimizerConfig | None = None,
    seed: int = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
    checkpoint_path: str | Path,
    metrics_path: str | Path | None = None,
    cache_dir: str | Path | None = None,
) -> TrainResult:
    """Train the joint prediction head on features from frozen bases."""
    if not rows:
        raise ValueError("empty dataset")
    if set(specs) != set(LEVELS) or set(base_checkpoints) != set(LEVELS):
        raise ValueError(f"specs and base_checkpoints must cover levels {LEVELS}")
    for row in rows:
        label = row.triple.element_id
        if not 0 <= label < taxonomy.class_counts["element"]:
            raise ValueError(f"{row.clip_path}: element label {label} out of range")

    config = optimizer_config or stage2_defaults()
    checkpoint_path = Path(checkpoint_path)

    backbones: dict[str, PathwayBackbone] = {}
    base_refs: dict[str, dict] = {}
    frozen_digests: dict[str, str] = {}
    for level in LEVELS:
        backbone, _, payload = load_base(base_checkpoints[level])
        if backbone.config.num_frames != specs[level].num_frames:
            raise ValueError(
                f"{level} base expects {backbone.config.num_frames} frames, "
                f"sampling spec has {specs[level].num_frames}"
            )
        frozen_digests[level] = freeze(backbone)
        backbones[level] = backbone
        base_refs[level] = {
            "path": str(Path(base_checkpoints[level]).resolve()),
            "backbone_digest": payload["backbone_digest"],
            "classifier_digest": payload["classifier_digest"],
        }

    if head_config is None:
        head_config = JointHeadConfig(
            class_counts=dict(taxonomy.class_counts),
            input_dims={lvl: backbones[lvl].feature_dim for lvl in LEVELS},
            encoder_dims=dict(DEFAULT_ENCODER_DIMS),
        )
    for level in LEVELS:
        if head_config.input_dims[level] != backbones[level].feature_dim:
            raise ValueError(
                f"head input dim {head_config.input_dims[level]} != {level} "
                f"base feature dim {backbones[level].feature_dim}"
            )
    head = JointHead(head_config)
    init_parameters(head, seed)
    optimizer = make_optimizer(head.parameters(), config)
    head.train()

    cache = None
    if cache_dir is not None:
        cache = FeatureCache(
            cache_dir,
            FeatureCache.namespace(
                [frozen_digests[lvl] for lvl in LEVELS]
                + [json.dumps(dataclasses.asdict(specs[lvl])) for lvl in LEVELS]
                + [str(rescale_size), json.dumps(dataclasses.asdict(normalization))]
            ),
        )

    n = len(rows)
    final_loss = float("nan")
    final_top1 = {lvl: float("nan") for lvl in LEVELS}
    for epoch in range(config.epochs):
        lr = lr_for_epoch(config, epoch)
        set_lr(optimizer, lr)
        order = epoch_order(n, epoch, seed)
        losses = []
        accs = {lvl: [] for lvl in LEVELS}
        tick = time.monotonic()
        for step, start in enumerate(range(0, n, config.batch_size)):
            idxs = order[start : start + config.batch_size]
            feats_per_sample = []
            targets = {lvl: [] for lvl in LEVELS}
            for i in idxs:
                row = rows[int(i)]
                rng_id = (seed, epoch, int(i))
                key = cache.key(row, "train_random", rng_id, 1) if cache else None
                feats = cache.get(key) if cache else None
                if feats is None:
                    views = load_clip_views(
                        row, specs, "train_random", sample_rng(*rng_id),
                        rescale_size, normalization, num_clips=1,
                    )
                    feats = _frozen_features(views, backbones)
                    if cache:
                        cache.put(key, feats)
                feats_per_sample.append(feats)
                triple = row.triple
                for lvl in LEVELS:
                    targets[lvl].append(getattr(triple, f"{lvl}_id"))

            features = {
                lvl: torch.cat([f[lvl] for f in feats_per_sample], dim=0)
                for lvl in LEVELS
            }
            target_tensors = {
                lvl: torch.tensor(targets[lvl], dtype=torch.long) for lvl in LEVELS
            }
            logits = head(features).as_dict()
            per_level, total = multi_task_loss(logits, target_tensors, loss_weights)
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            grad_norm = clip_gradients(head.parameters(), config.grad_clip)
            optimizer.step()

            loss_value = float(total.detach())
            _check_divergence(
                loss_value,
                stage="joint", epoch=epoch, step=step, lr=lr,
                modules={"head": head},
                dump_path=checkpoint_path.with_suffix(".diverged.pt"),
            )
            losses.append(loss_value)
            record = {
                "kind": "step", "stage": "joint", "epoch": epoch, "step": step,
                "lr": lr, "loss_total": loss_value, "grad_norm": grad_norm,
            }
            for lvl in LEVELS:
                record[f"loss_{lvl}"] = float(per_level[lvl].detach())
                record[f"weight_{lvl}"] = loss_weights.as_dict()[lvl]
                accs[lvl].append(_batch_top1(logits[lvl].detach(), target_tensors[lvl]))
            append_metrics(metrics_path, record)

        final_loss = float(np.mean(losses))
        final_top1 = {lvl: float(np.mean(accs[lvl])) for lvl in LEVELS}
        epoch_record = {
            "kind": "epoch", "stage": "joint", "epoch": epoch, "lr": lr,
            "loss_total": final_loss,
            "time_s": round(time.monotonic() - tick, 3),
        }
        epoch_record.update({f"top1_{lvl}": final_top1[lvl] for lvl in LEVELS})
        append_metrics(metrics_path, epoch_record)
        logger.info(
            "joint epoch %d/%d lr %.2g loss %.4f top1 e/s/el %.3f/%.3f/%.3f",
            epoch + 1, config.epochs, lr, final_loss,
            final_top1["event"], final_top1["set"], final_top1["element"],
        )

    for level in LEVELS:
        after = module_digest(backbones[level])
        if after != frozen_digests[level]:
            raise RuntimeError(
                f"{level} base parameters changed during stage 2 "
                f"(freeze contract violated)"
            )

    payload = {
        "format": JOINT_FORMAT,
        "seed": seed,
        "class_counts": dict(taxonomy.class_counts),
        "head_config": {
            "class_counts": dict(head_config.class_counts),
            "input_dims": dict(head_config.input_dims),
            "encoder_dims": dict(head_config.encoder_dims),
            "fusion_dim": head_config.fusion_dim,
            "use_nonlinearity": head_config.use_nonlinearity,
            "dropout": head_config.dropout,
        },
        "loss_weights": loss_weights.as_dict(),
        "optimizer_config": dataclasses.asdict(config),
        "sampling": {lvl: dataclasses.asdict(specs[lvl]) for lvl in LEVELS},
        "rescale_size": rescale_size,
        "normalization": dataclasses.asdict(normalization),
        "base_refs": base_refs,
        "head_state": dict(head.state_dict()),
        "head_digest": module_digest(head),
        "final_metrics": {
            "loss": final_loss,
            **{f"top1_{lvl}": final_top1[lvl] for lvl in LEVELS},
        },
    }
    save_checkpoint(payload, checkpoint_path)
    return TrainResult(
        checkpoint_path=checkpoint_path,
        epochs_run=config.epochs,
        final_loss=final_loss,
        final_top1=final_top1,
        digests={"head": payload["head_digest"], **frozen_digests},
    )


def load_joint(
    path: str | Path, base_checkpoints: Mapping[str, str | Path] | None = None
) -> tuple[JointHead, dict[str, PathwayBackbone], dict]:
    """Rebuild a joint head and its frozen bases from checkpoints.

    Base checkpoints are located through the stored references unless
    explicit paths are given; either way their digests must match the
    ones recorded at stage-2 training time.
    """
    payload = load_checkpoint(path, expected_format=JOINT_FORMAT)
    head_config = JointHeadConfig(**payload["head_config"])
    head = JointHead(head_config)
    head.load_state_dict(payload["head_state"])
    head.eval()

    backbones: dict[str, PathwayBackbone] = {}
    for level in LEVELS:
        ref = payload["base_refs"][level]
        base_path = (
            base_checkpoints[level] if base_checkpoints is not None else ref["path"]
        )
        backbone, _, base_payload = load_base(base_path)
        if base_payload["backbone_digest"] != ref["backbone_digest"]:
            raise CheckpointError(
                f"{level} base checkpoint {base_path} does not match the one "
                f"referenced by {path} (digest mismatch)"
            )
        freeze(backbone)
        backbones[level] = backbone
    return head, backbones, payload


# ---------------------------------------------------------------------------
# forward pipelines and dataset-level prediction


def per_clip_forward_pipeline(
    row: ManifestRow,
    *,
    specs: Mapping[str, SamplingSpec],
    backbones: Mapping[str, PathwayBackbone],
    head: JointHead | None = None,
    mode: str = "test_center",
    rng: np.random.Generator | int = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
    num_clips: int = 1,
) -> list[dict[str, torch.Tensor]] | list[JointLogits]:
    """Run one sample through all pathways; one output per planned view.

    Returns per-view feature dicts, or per-view JointLogits when a head
    is supplied. All pathways of a view share the temporal anchor and
    crop window.
    """
    missing = [lvl for lvl in specs if lvl not in backbones]
    if missing:
        raise ValueError(f"missing pathway backbones for levels {missing}")
    views = load_clip_views(
        row, specs, mode, rng, rescale_size, normalization, num_clips
    )
    features = _frozen_features(views, backbones)
    n_views = next(iter(features.values())).shape[0]
    if head is None:
        return [
            {lvl: features[lvl][v] for lvl in features} for v in range(n_views)
        ]
    with torch.no_grad():
        return [
            head({lvl: features[lvl][v : v + 1] for lvl in features})
            for v in range(n_views)
        ]


def _aggregate_logits(per_view_logits: list[np.ndarray], aggregation: str) -> np.ndarray:
    if aggregation == "probability":
        return aggregate_clips([softmax(lg) for lg in per_view_logits])
    if aggregation == "logit":
        return softmax(np.mean(np.stack(per_view_logits), axis=0))
    raise ValueError(f"unknown aggregation {aggregation!r}")


def predict_joint(
    rows: Sequence[ManifestRow],
    *,
    specs: Mapping[str, SamplingSpec],
    backbones: Mapping[str, PathwayBackbone],
    head: JointHead,
    mode: str = "test_center",
    num_clips: int = 1,
    seed: int = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
    aggregation: str = "probability",
) -> list[PredictionRecord]:
    """Joint predictions for a dataset; scores aggregated over views."""
    was_training = head.training
    head.eval()
    try:
        records = []
        for i, row in enumerate(rows):
            outputs = per_clip_forward_pipeline(
                row, specs=specs, backbones=backbones, head=head, mode=mode,
                rng=sample_rng(seed, 0, i), rescale_size=rescale_size,
                normalization=normalization, num_clips=num_clips,
            )
            scores = {}
            for level in LEVELS:
                per_view = [
                    out.as_dict()[level].squeeze(0).numpy() for out in outputs
                ]
                scores[level] = _aggregate_logits(per_view, aggregation)
            records.append(
                PredictionRecord(clip_id=row.clip_path, scores=scores, truth=row.triple)
            )
        return records
    finally:
        head.train(was_training)


def predict_base(
    rows: Sequence[ManifestRow],
    *,
    level: str,
    spec: SamplingSpec,
    backbone: PathwayBackbone,
    classifier: LevelClassifier,
    mode: str = "test_multi",
    num_clips: int = 6,
    seed: int = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
    aggregation: str = "probability",
) -> list[PredictionRecord]:
    """Single-level predictions from one base model (six-view default)."""
    was_training = (backbone.training, classifier.training)
    backbone.eval()
    classifier.eval()
    try:
        records = []
        for i, row in enumerate(rows):
            outputs = per_clip_forward_pipeline(
                row, specs={level: spec}, backbones={level: backbone}, mode=mode,
                rng=sample_rng(seed, 0, i), rescale_size=rescale_size,
                normalization=normalization, num_clips=num_clips,
            )
            with torch.no_grad():
                per_view = [
                    classifier(feats[level].unsqueeze(0)).squeeze(0).numpy()
                    for feats in outputs
                ]
            scores = {level: _aggregate_logits(per_view, aggregation)}
            records.append(
                PredictionRecord(clip_id=row.clip_path, scores=scores, truth=row.triple)
            )
        return records
    finally:
        backbone.train(was_training[0])
        classifier.train(was_training[1])


def single_level_accuracy(records: Sequence[PredictionRecord], level: str) -> float:
    """Top-1 over records that carry scores for one level."""
    if not records:
        raise ValueError("no records")
    hits = sum(
        int(np.argmax(r.scores[level])) == r.truth_id(level) for r in records
    )
    return hits / len(records)
