"""Command-line pipeline: dataset generation, both training stages,
evaluation, and single-clip prediction.

Exit codes: 0 success, 2 malformed config or input description, 3
missing/corrupt checkpoint, 4 training divergence, 1 anything else.
Every command writes a run manifest (config snapshot, effective seed,
library versions) into the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

import cv2
import numpy as np
import PIL
import torch
import yaml

from . import __version__
from .checkpoints import BASE_FORMAT, JOINT_FORMAT, CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig, load_config
from .datasets import ManifestRow, load_manifest
from .evaluation import (
    build_report,
    format_report,
    mean_class_accuracy,
    save_per_class_data,
    save_report,
    top_k_accuracy,
)
from .synthetic import SynthError, generate
from .taxonomy import LEVELS, LabelTriple, TaxonomyError, load_taxonomy, validate_triple
from .training import (
    OptimizerConfig,
    TrainingDiverged,
    load_base,
    load_joint,
    predict_base,
    predict_joint,
    train_base,
    train_joint,
)

logger = logging.getLogger("triact.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3
EXIT_DIVERGED = 4


def _require(path: Path | None, what: str) -> Path:
    """A config-referenced input that must exist at command start."""
    if path is None:
        raise ConfigError(f"config does not define a path for {what}")
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _output_dir(args, config: RunConfig) -> Path:
    if args.output is not None:
        out = Path(args.output)
    else:
        out = config.resolve(config.paths.output_dir)
    if out is None:
        raise ConfigError("no output directory: set paths.output_dir or pass --output")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _effective_seed(args, config: RunConfig) -> int:
    return config.seed if args.seed is None else args.seed


def _checkpoint_path(config: RunConfig, out_dir: Path, name: str) -> Path:
    """Explicit config path if set, else the default under the effective
    output directory (which --output may have overridden)."""
    if name == "joint":
        explicit, default = config.paths.joint_checkpoint, "joint.pt"
    else:
        explicit, default = config.paths.base_checkpoints.get(name), f"base_{name}.pt"
    if explicit is not None:
        return config.resolve(explicit)
    return out_dir / default


def _write_run_manifest(
    command: str, args, config: RunConfig, seed: int, out_dir: Path
) -> None:
    manifest = {
        "command": command,
        "args": {k: v for k, v in vars(args).items() if k != "func"},
        "seed": seed,
        "config": config.to_dict(),
        "versions": {
            "python": platform.python_version(),
            "torch": torch.__version__,
            "numpy": np.__version__,
            "pillow": PIL.__version__,
            "pyyaml": yaml.__version__,
            "opencv": cv2.__version__,
            "triact": __version__,
        },
        "started": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out_dir / f"run_manifest_{command.replace('-', '_')}.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def _override_optimizer(
    config: OptimizerConfig, epochs: int | None, lr: float | None
) -> OptimizerConfig:
    changes = {}
    if epochs is not None:
        changes["epochs"] = epochs
        changes["decay_epochs"] = tuple(d for d in config.decay_epochs if d < epochs)
        if config.warmup_epochs >= epochs:
            changes["warmup_epochs"] = 0
    if lr is not None:
        changes["lr"] = lr
    return dataclasses.replace(config, **changes) if changes else config


def _fresh(path: Path) -> Path:
    """Truncate an existing metrics stream so each run starts clean."""
    if path.exists():
        path.unlink()
    return path


def _load_dataset(config: RunConfig, split: str):
    taxonomy = load_taxonomy(
        _require(config.data_path("taxonomy", "taxonomy.txt"), "taxonomy")
    )
    manifest = _require(
        config.data_path(f"{split}_manifest", f"{split}_manifest.txt"),
        f"{split} manifest",
    )
    return taxonomy, load_manifest(manifest, taxonomy)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_synth(args) -> int:
    config = load_config(args.config)
    if config.synth is None:
        raise ConfigError("config has no 'synth' section")
    seed = _effective_seed(args, config)
    spec = dataclasses.replace(config.synth, seed=seed)
    max_span = max(s.span for s in config.sampling.specs().values())
    if spec.frames_per_clip < max_span:
        raise ConfigError(
            f"synth.frames_per_clip {spec.frames_per_clip} is shorter than the "
            f"largest sampling span {max_span}"
        )
    if args.output is not None:
        target = Path(args.output)
    else:
        target = config.resolve(config.paths.data_dir)
    if target is None:
        raise ConfigError("no target directory: set paths.data_dir or pass --output")
    target.mkdir(parents=True, exist_ok=True)
    _write_run_manifest("gen-synth", args, config, seed, target)

    out = generate(spec, target)
    logger.info(
        "generated %d train / %d test clips under %s",
        out.num_train_clips, out.num_test_clips, target,
    )
    print(out.taxonomy_path)
    print(out.train_manifest_path)
    print(out.test_manifest_path)
    return EXIT_OK


def cmd_train_base(args) -> int:
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = _output_dir(args, config)
    taxonomy, rows = _load_dataset(config, "train")
    specs = config.sampling.specs()
    optimizer = _override_optimizer(config.optimizer_stage1, args.epochs, args.lr)
    levels = list(LEVELS) if args.level == "all" else [args.level]
    _write_run_manifest("train-base", args, config, seed, out_dir)

    for level in levels:
        spec = specs[level]
        checkpoint = _checkpoint_path(config, out_dir, level)
        result = train_base(
            level=level,
            rows=rows,
            taxonomy=taxonomy,
            sampling=spec,
            pathway_config=config.pathway.pathway_config(
                spec.num_frames, config.sampling.crop_size
            ),
            optimizer_config=optimizer,
            seed=seed,
            rescale_size=config.sampling.rescale_size,
            normalization=config.sampling.normalization(),
            checkpoint_path=checkpoint,
            metrics_path=_fresh(out_dir / f"metrics_base_{level}.jsonl"),
        )
        logger.info(
            "base[%s]: %d epochs, final loss %.4f, checkpoint %s",
            level, result.epochs_run, result.final_loss, result.checkpoint_path,
        )
        print(result.checkpoint_path)
    return EXIT_OK


def cmd_train_joint(args) -> int:
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = _output_dir(args, config)
    taxonomy, rows = _load_dataset(config, "train")
    specs = config.sampling.specs()
    optimizer = _override_optimizer(config.optimizer_stage2, args.epochs, args.lr)
    bases = {level: _checkpoint_path(config, out_dir, level) for level in LEVELS}
    if args.cache_dir is not None:
        cache_dir = Path(args.cache_dir)
    else:
        cache_dir = config.resolve(config.paths.cache_dir)
    checkpoint = _checkpoint_path(config, out_dir, "joint")
    _write_run_manifest("train-joint", args, config, seed, out_dir)

    head_config = config.joint_head.head_config(
        class_counts=dict(taxonomy.class_counts),
        input_dims={lvl: config.pathway.feature_dim for lvl in LEVELS},
    )
    result = train_joint(
        rows=rows,
        taxonomy=taxonomy,
        specs=specs,
        base_checkpoints=bases,
        head_config=head_config,
        loss_weights=config.loss_weights,
        optimizer_config=optimizer,
        seed=seed,
        rescale_size=config.sampling.rescale_size,
        normalization=config.sampling.normalization(),
        checkpoint_path=checkpoint,
        metrics_path=_fresh(out_dir / "metrics_joint.jsonl"),
        cache_dir=cache_dir,
    )
    logger.info(
        "joint head: %d epochs, final loss %.4f, checkpoint %s",
        result.epochs_run, result.final_loss, result.checkpoint_path,
    )
    print(result.checkpoint_path)
    return EXIT_OK


def _dump_records(records, path: Path) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({
                "clip_id": rec.clip_id,
                "truth": rec.truth.as_tuple(),
                "scores": {lvl: s.tolist() for lvl, s in rec.scores.items()},
            }) + "\n")


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = _output_dir(args, config)
    taxonomy, rows = _load_dataset(config, args.split)
    specs = config.sampling.specs()
    checkpoint = (
        Path(args.checkpoint) if args.checkpoint
        else _checkpoint_path(config, out_dir, "joint")
    )
    _write_run_manifest("evaluate", args, config, seed, out_dir)

    kind = load_checkpoint(checkpoint)["format"]
    if kind == JOINT_FORMAT:
        head, backbones, _ = load_joint(checkpoint)
        records = predict_joint(
            rows, specs=specs, backbones=backbones, head=head,
            mode="test_center",
            num_clips=args.clips or config.evaluation.joint_num_clips,
            seed=seed,
            rescale_size=config.sampling.rescale_size,
            normalization=config.sampling.normalization(),
            aggregation=config.evaluation.aggregation,
        )
        report = build_report(records, taxonomy, per_class=True)
        print(format_report(report))
        save_per_class_data(report, out_dir)
    elif kind == BASE_FORMAT:
        backbone, classifier, payload = load_base(checkpoint)
        level = payload["level"]
        records = predict_base(
            rows, level=level, spec=specs[level], backbone=backbone,
            classifier=classifier, mode="test_multi",
            num_clips=args.clips or config.evaluation.base_num_clips,
            seed=seed,
            rescale_size=config.sampling.rescale_size,
            normalization=config.sampling.normalization(),
            aggregation=config.evaluation.aggregation,
        )
        k5 = min(5, taxonomy.class_counts[level])
        report = {
            "num_records": len(records),
            "level": level,
            "top1": top_k_accuracy(records, level, 1),
            "top5": top_k_accuracy(records, level, k5),
            "top5_k": k5,
            "mean_class": mean_class_accuracy(records, level),
        }
        print(
            f"{level:<10} top-1 {report['top1']:.4f}  top-{k5} "
            f"{report['top5']:.4f}  mean {report['mean_class']:.4f} "
            f"({len(records)} records)"
        )
    else:
        raise CheckpointError(f"{checkpoint}: unknown checkpoint format {kind!r}")

    save_report(report, out_dir / "report.json")
    _dump_records(records, out_dir / "records.jsonl")
    logger.info("report written to %s", out_dir / "report.json")
    return EXIT_OK


def _frame_count(clip_path: Path) -> int:
    if clip_path.is_dir():
        for pattern in ("*.png", "*.jpg"):
            n = len(list(clip_path.glob(pattern)))
            if n:
                return n
        raise ConfigError(f"no frames found under {clip_path}")
    capture = cv2.VideoCapture(str(clip_path))
    try:
        n = int(capture.get(cv2.CAP_PROP_FRAME_COUNT))
    finally:
        capture.release()
    if n < 1:
        raise ConfigError(f"cannot determine frame count of {clip_path}")
    return n


def cmd_predict(args) -> int:
    config = load_config(args.config)
    seed = _effective_seed(args, config)
    out_dir = _output_dir(args, config)
    taxonomy = load_taxonomy(
        _require(config.data_path("taxonomy", "taxonomy.txt"), "taxonomy")
    )
    specs = config.sampling.specs()
    checkpoint = (
        Path(args.checkpoint) if args.checkpoint
        else _checkpoint_path(config, out_dir, "joint")
    )
    clip_path = Path(args.clip)
    if not clip_path.exists():
        raise ConfigError(f"clip not found: {clip_path}")
    frames = args.frames or _frame_count(clip_path)
    _write_run_manifest("predict", args, config, seed, out_dir)

    head, backbones, _ = load_joint(checkpoint)
    row = ManifestRow(
        clip_path=str(clip_path), frame_count=frames, triple=LabelTriple(0, 0, 0)
    )
    record = predict_joint(
        [row], specs=specs, backbones=backbones, head=head, mode="test_center",
        num_clips=args.clips or config.evaluation.joint_num_clips, seed=seed,
        rescale_size=config.sampling.rescale_size,
        normalization=config.sampling.normalization(),
        aggregation=config.evaluation.aggregation,
    )[0]
    argmax = {lvl: int(np.argmax(record.scores[lvl])) for lvl in LEVELS}
    triple = LabelTriple(argmax["event"], argmax["set"], argmax["element"])
    result = {
        "clip": str(clip_path),
        "frame_count": frames,
        "scores": {lvl: record.scores[lvl].tolist() for lvl in LEVELS},
        "argmax": argmax,
        "argmax_names": {
            lvl: taxonomy.nodes(lvl)[argmax[lvl]].name for lvl in LEVELS
        },
        "hierarchy_consistent": validate_triple(triple, taxonomy),
    }
    text = json.dumps(result, indent=2)
    (out_dir / "prediction.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", required=True, help="run configuration YAML")
    sp.add_argument("--seed", type=int, default=None, help="override config seed")
    sp.add_argument("--output", default=None, help="override output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="triact",
        description="Three-pathway hierarchical action recognition toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("gen-synth", help="render the synthetic dataset")
    _add_common(sp)
    sp.set_defaults(func=cmd_gen_synth)

    sp = sub.add_parser("train-base", help="stage 1: train pathway base models")
    _add_common(sp)
    sp.add_argument("--level", choices=(*LEVELS, "all"), default="all")
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.set_defaults(func=cmd_train_base)

    sp = sub.add_parser("train-joint", help="stage 2: train the joint head")
    _add_common(sp)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--cache-dir", default=None, help="frozen-feature cache directory")
    sp.set_defaults(func=cmd_train_joint)

    sp = sub.add_parser("evaluate", help="metrics report for a checkpoint")
    _add_common(sp)
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--clips", type=int, default=None, help="views per sample")
    sp.add_argument("--split", choices=("train", "test"), default="test")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("predict", help="joint prediction for one clip")
    _add_common(sp)
    sp.add_argument("--checkpoint", default=None)
    sp.add_argument("--clip", required=True, help="frame directory or video file")
    sp.add_argument("--frames", type=int, default=None, help="source frame count")
    sp.add_argument("--clips", type=int, default=None, help="views per sample")
    sp.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, TaxonomyError, SynthError) as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"error[checkpoint]: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except TrainingDiverged as exc:
        print(f"error[divergence]: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except Exception as exc:  # noqa: BLE001 - boundary of the process
        logger.exception("unhandled failure")
        print(f"error[runtime]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
