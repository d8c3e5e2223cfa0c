"""Frame-index planning and clip preprocessing.

Each hierarchy level reads the source clip at its own rate: a plan picks
``num_frames`` indices spaced ``interval`` source frames apart. Short clips
are handled by clamping indices to the last frame (repeat-last padding).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

MODES = ("train_random", "test_center", "test_multi")

# Default per-level rates: sparse for events, dense for elements.
DEFAULT_RATES = {"event": (4, 16), "set": (8, 8), "element": (32, 2)}
# Alternative set-pathway rate; selectable via config.
SET_RATE_T16 = (16, 4)


@dataclass(frozen=True)
class Normalization:
    """Per-channel mean/std applied to unit-scaled RGB pixels."""

    mean: tuple[float, float, float] = (0.485, 0.456, 0.406)
    std: tuple[float, float, float] = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class SamplingSpec:
    num_frames: int
    interval: int
    crop_size: int = 224
    level: str = "element"

    def __post_init__(self):
        if self.num_frames < 1:
            raise ValueError(f"num_frames must be >= 1, got {self.num_frames}")
        if self.interval < 1:
            raise ValueError(f"interval must be >= 1, got {self.interval}")
        if self.crop_size < 1:
            raise ValueError(f"crop_size must be >= 1, got {self.crop_size}")

    @property
    def span(self) -> int:
        """Source frames covered by one clip: (num_frames - 1) * interval + 1."""
        return (self.num_frames - 1) * self.interval + 1


@dataclass(frozen=True)
class FrameIndexPlan:
    clips: tuple[tuple[int, ...], ...]
    mode: str


def default_specs(crop_size: int = 224, set_rate: str = "t8") -> dict[str, SamplingSpec]:
    """Per-level sampling specs: event 4x16, set 8x8 (or 16x4), element 32x2."""
    rates = dict(DEFAULT_RATES)
    if set_rate == "t16":
        rates["set"] = SET_RATE_T16
    elif set_rate != "t8":
        raise ValueError(f"set_rate must be 't8' or 't16', got {set_rate!r}")
    return {
        level: SamplingSpec(num_frames=t, interval=i, crop_size=crop_size, level=level)
        for level, (t, i) in rates.items()
    }


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _clip_indices(start: int, spec: SamplingSpec, n: int) -> tuple[int, ...]:
    return tuple(min(start + i * spec.interval, n - 1) for i in range(spec.num_frames))


def _resolve_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _plan_starts(
    n: int, spec: SamplingSpec, mode: str, rng: np.random.Generator, num_clips: int
) -> list[int]:
    max_start = max(0, n - spec.span)
    if mode == "train_random":
        return [int(rng.integers(0, max_start + 1))]
    if mode == "test_center":
        return [max(0, (n - spec.span) // 2)]
    if mode == "test_multi":
        if num_clips < 1:
            raise ValueError(f"num_clips must be >= 1, got {num_clips}")
        if num_clips == 1:
            return [max_start // 2]
        return [
            _round_half_up(i * max_start / (num_clips - 1)) for i in range(num_clips)
        ]
    raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")


def plan_indices(
    source_frame_count: int,
    spec: SamplingSpec,
    mode: str,
    seed: int | np.random.Generator = 0,
    num_clips: int = 6,
) -> FrameIndexPlan:
    """Plan frame indices for one pathway.

    train_random draws the clip start uniformly from [0, max(0, N - span)];
    test_center starts at floor((N - span) / 2) clamped at 0; test_multi
    spaces num_clips starts evenly over [0, max(0, N - span)]. All indices
    are clamped to N - 1.
    """
    if source_frame_count < 1:
        raise ValueError(f"source_frame_count must be >= 1, got {source_frame_count}")
    rng = _resolve_rng(seed)
    starts = _plan_starts(source_frame_count, spec, mode, rng, num_clips)
    clips = tuple(_clip_indices(s, spec, source_frame_count) for s in starts)
    return FrameIndexPlan(clips=clips, mode=mode)


def plan_multi_level_indices(
    source_frame_count: int,
    specs: Mapping[str, SamplingSpec],
    mode: str,
    seed: int | np.random.Generator = 0,
    num_clips: int = 6,
) -> dict[str, FrameIndexPlan]:
    """Plan indices for several pathways over the same source clip.

    All pathways share one temporal anchor per clip: the start of the
    largest-span pathway is drawn once (per mode), and the other pathways
    center their spans on the same point. With test_center every pathway
    is centered on the video independently, which coincides with the
    shared anchor.
    """
    if source_frame_count < 1:
        raise ValueError(f"source_frame_count must be >= 1, got {source_frame_count}")
    if not specs:
        raise ValueError("specs must contain at least one level")
    rng = _resolve_rng(seed)
    n = source_frame_count
    ref = max(specs.values(), key=lambda s: s.span)
    ref_starts = _plan_starts(n, ref, mode, rng, num_clips)
    centers = [s + (ref.span - 1) / 2 for s in ref_starts]
    plans = {}
    for level, spec in specs.items():
        max_start = max(0, n - spec.span)
        starts = [
            min(max(_round_half_up(c - (spec.span - 1) / 2), 0), max_start)
            for c in centers
        ]
        clips = tuple(_clip_indices(s, spec, n) for s in starts)
        plans[level] = FrameIndexPlan(clips=clips, mode=mode)
    return plans


def rescale_shorter_side(frame: np.ndarray, target: int) -> np.ndarray:
    """Bilinear-resize so the shorter side equals target, keeping aspect."""
    h, w = frame.shape[:2]
    if min(h, w) == target:
        return frame
    scale = target / min(h, w)
    new_h, new_w = max(1, _round_half_up(h * scale)), max(1, _round_half_up(w * scale))
    img = Image.fromarray(frame).resize((new_w, new_h), Image.BILINEAR)
    return np.asarray(img)


def crop_and_scale(
    frames: Sequence[np.ndarray] | np.ndarray,
    crop_size: int,
    mode: str = "test_center",
    seed: int | np.random.Generator = 0,
    rescale_size: int = 256,
    normalization: Normalization = Normalization(),
) -> np.ndarray:
    """Rescale, crop and normalize a clip to [T, crop_size, crop_size, 3] float32.

    The shorter side is rescaled to rescale_size, then a center crop
    (test modes) or random crop (train_random) of crop_size is taken.
    Pixels are scaled to [0, 1] and normalized per channel.
    """
    if len(frames) == 0:
        raise ValueError("clip has no frames")
    rng = _resolve_rng(seed)
    out = np.empty((len(frames), crop_size, crop_size, 3), dtype=np.float32)
    offsets = None
    for t, frame in enumerate(frames):
        frame = np.asarray(frame)
        if frame.ndim != 3 or frame.shape[2] != 3:
            raise ValueError(f"expected [H, W, 3] frame, got shape {frame.shape}")
        if min(frame.shape[:2]) < 1:
            raise ValueError(f"frame smaller than 1 px: shape {frame.shape}")
        frame = rescale_shorter_side(frame, rescale_size)
        h, w = frame.shape[:2]
        if h < crop_size or w < crop_size:
            raise ValueError(
                f"frame {h}x{w} smaller than crop {crop_size} after rescale"
            )
        if offsets is None:
            # one crop window per clip, shared by all frames
            if mode == "train_random":
                offsets = (
                    int(rng.integers(0, h - crop_size + 1)),
                    int(rng.integers(0, w - crop_size + 1)),
                )
            else:
                offsets = ((h - crop_size) // 2, (w - crop_size) // 2)
        oy, ox = offsets
        out[t] = frame[oy : oy + crop_size, ox : ox + crop_size, :].astype(np.float32)
    out /= 255.0
    mean = np.asarray(normalization.mean, dtype=np.float32)
    std = np.asarray(normalization.std, dtype=np.float32)
    out -= mean
    out /= std
    return out
