"""Dataset manifests, clip decoding, and deterministic batch assembly.

A manifest is a line-delimited file: clip_path, source_frame_count,
event_id, set_id, element_id (tab-separated, '#' comments). A clip is
either a directory of per-frame images (sorted by filename) or a single
video file; the decoder is picked by extension.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from PIL import Image

from .sampling import (
    Normalization,
    SamplingSpec,
    plan_multi_level_indices,
    rescale_shorter_side,
)
from .taxonomy import LEVELS, LabelTriple, Taxonomy, validate_triple

VIDEO_EXTENSIONS = {".mp4", ".avi", ".mkv", ".mov", ".webm"}
WORKERS_ENV = "TRIACT_NUM_WORKERS"


@dataclass(frozen=True)
class ManifestRow:
    clip_path: str
    frame_count: int
    triple: LabelTriple


def load_manifest(path: str | Path, taxonomy: Taxonomy | None = None) -> list[ManifestRow]:
    """Read a manifest; relative clip paths resolve against the manifest dir.

    If a taxonomy is given, every row's label triple is validated against it.
    """
    path = Path(path)
    base = path.parent
    rows: list[ManifestRow] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(
                    f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}"
                )
            clip_path, count, event_id, set_id, element_id = parts
            resolved = clip_path if os.path.isabs(clip_path) else str(base / clip_path)
            triple = LabelTriple(int(event_id), int(set_id), int(element_id))
            if taxonomy is not None and not validate_triple(triple, taxonomy):
                raise ValueError(
                    f"{path}:{lineno}: label triple {triple.as_tuple()} is "
                    f"inconsistent with the taxonomy"
                )
            rows.append(ManifestRow(resolved, int(count), triple))
    if not rows:
        raise ValueError(f"empty manifest: {path}")
    return rows


def save_manifest(rows: Sequence[ManifestRow], path: str | Path) -> None:
    """Write a manifest; clip paths are stored relative to the manifest dir."""
    path = Path(path)
    base = path.parent.resolve()
    lines = ["# clip_path\tsource_frame_count\tevent_id\tset_id\telement_id"]
    for row in rows:
        clip = Path(row.clip_path).resolve()
        try:
            rel = clip.relative_to(base)
        except ValueError:
            rel = clip
        t = row.triple
        lines.append(
            f"{rel}\t{row.frame_count}\t{t.event_id}\t{t.set_id}\t{t.element_id}"
        )
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_frames_from_dir(clip_dir: Path, indices: Sequence[int]) -> np.ndarray:
    files = sorted(p for p in clip_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        files = sorted(
            p for p in clip_dir.iterdir() if p.suffix.lower() in (".jpg", ".jpeg")
        )
    if not files:
        raise FileNotFoundError(f"no frame images in {clip_dir}")
    frames = []
    cache: dict[int, np.ndarray] = {}
    for i in indices:
        if i >= len(files):
            raise IndexError(f"frame index {i} >= {len(files)} frames in {clip_dir}")
        if i not in cache:
            with Image.open(files[i]) as img:
                cache[i] = np.asarray(img.convert("RGB"))
        frames.append(cache[i])
    return np.stack(frames)


def _read_frames_from_video(video_path: Path, indices: Sequence[int]) -> np.ndarray:
    import cv2

    wanted = set(int(i) for i in indices)
    capture = cv2.VideoCapture(str(video_path))
    if not capture.isOpened():
        raise IOError(f"cannot open video {video_path}")
    found: dict[int, np.ndarray] = {}
    pos = 0
    try:
        while wanted - found.keys():
            ok, frame = capture.read()
            if not ok:
                break
            if pos in wanted:
                found[pos] = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
            pos += 1
    finally:
        capture.release()
    missing = sorted(wanted - found.keys())
    if missing:
        raise IndexError(f"frame indices {missing} beyond end of {video_path}")
    return np.stack([found[int(i)] for i in indices])


def read_clip_frames(clip_path: str | Path, indices: Sequence[int]) -> np.ndarray:
    """Decode the requested frames of a clip as [len(indices), H, W, 3] uint8."""
    path = Path(clip_path)
    if path.is_dir():
        return _read_frames_from_dir(path, indices)
    if path.suffix.lower() in VIDEO_EXTENSIONS:
        return _read_frames_from_video(path, indices)
    raise ValueError(
        f"cannot decode clip {path}: not a frame directory and extension "
        f"{path.suffix!r} is not a known video format"
    )


def num_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "0")
    try:
        return max(0, int(value))
    except ValueError:
        return 0


@dataclass
class ClipViews:
    """One sample's per-pathway input tensors plus its labels."""

    inputs: dict[str, torch.Tensor]  # level -> [num_clips, 3, T, S, S]
    targets: dict[str, int]
    row: ManifestRow


def load_clip_views(
    row: ManifestRow,
    specs: Mapping[str, SamplingSpec],
    mode: str,
    rng: np.random.Generator | int,
    rescale_size: int,
    normalization: Normalization,
    num_clips: int = 1,
) -> ClipViews:
    """Sample, decode, crop, and normalize one source clip for each pathway.

    All pathways share the temporal anchor (via plan_multi_level_indices)
    and the spatial crop window of each test/train view.
    """
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    crop_sizes = {spec.crop_size for spec in specs.values()}
    if len(crop_sizes) != 1:
        raise ValueError(f"pathways must share one crop size, got {crop_sizes}")
    crop = crop_sizes.pop()
    levels = [lvl for lvl in LEVELS if lvl in specs] or list(specs)
    plans = plan_multi_level_indices(
        row.frame_count, {lvl: specs[lvl] for lvl in levels}, mode, seed=rng,
        num_clips=num_clips,
    )
    n_views = len(next(iter(plans.values())).clips)
    union: list[int] = sorted(
        {i for plan in plans.values() for clip in plan.clips for i in clip}
    )
    frames = read_clip_frames(row.clip_path, union)
    position = {idx: k for k, idx in enumerate(union)}

    rescaled = np.stack([rescale_shorter_side(f, rescale_size) for f in frames])
    h, w = rescaled.shape[1:3]
    if h < crop or w < crop:
        raise ValueError(f"frame {h}x{w} smaller than crop {crop} after rescale")
    mean = np.asarray(normalization.mean, dtype=np.float32)
    std = np.asarray(normalization.std, dtype=np.float32)

    inputs: dict[str, list[torch.Tensor]] = {lvl: [] for lvl in levels}
    for view in range(n_views):
        # one crop window per view, shared by all pathways
        if mode == "train_random":
            oy = int(rng.integers(0, h - crop + 1))
            ox = int(rng.integers(0, w - crop + 1))
        else:
            oy, ox = (h - crop) // 2, (w - crop) // 2
        for level in levels:
            idxs = [position[i] for i in plans[level].clips[view]]
            clip = rescaled[idxs, oy : oy + crop, ox : ox + crop, :].astype(np.float32)
            clip = (clip / 255.0 - mean) / std
            tensor = torch.from_numpy(clip).permute(3, 0, 1, 2)  # [3, T, S, S]
            inputs[level].append(tensor)
    t = row.triple
    return ClipViews(
        inputs={lvl: torch.stack(views) for lvl, views in inputs.items()},
        targets={"event": t.event_id, "set": t.set_id, "element": t.element_id},
        row=row,
    )


def assemble_batch(
    rows: Sequence[ManifestRow],
    specs: Mapping[str, SamplingSpec],
    mode: str,
    sample_rngs: Sequence[np.random.Generator],
    rescale_size: int,
    normalization: Normalization,
    num_clips: int = 1,
) -> tuple[dict[str, torch.Tensor], dict[str, torch.Tensor], list[ManifestRow]]:
    """Build per-level input batches [B * num_clips, 3, T, S, S] and targets [B].

    Decoding may run in a worker pool (TRIACT_NUM_WORKERS); the output
    order is always the row order.
    """
    if len(rows) != len(sample_rngs):
        raise ValueError("need one rng per row")

    def load(args):
        row, rng = args
        return load_clip_views(
            row, specs, mode, rng, rescale_size, normalization, num_clips
        )

    workers = num_workers()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            views = list(pool.map(load, zip(rows, sample_rngs)))
    else:
        views = [load(a) for a in zip(rows, sample_rngs)]

    inputs = {
        lvl: torch.cat([v.inputs[lvl] for v in views], dim=0) for lvl in specs
    }
    targets = {
        lvl: torch.tensor([v.targets[lvl] for v in views], dtype=torch.long)
        for lvl in LEVELS
    }
    return inputs, targets, list(rows)


def epoch_order(
    n_rows: int, epoch: int, seed: int, shuffle: bool = True
) -> np.ndarray:
    """Deterministic sample order for (seed, epoch)."""
    if not shuffle:
        return np.arange(n_rows)
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    return rng.permutation(n_rows)


def sample_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Per-sample RNG stream: a pure function of (seed, epoch, sample index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, index]))
