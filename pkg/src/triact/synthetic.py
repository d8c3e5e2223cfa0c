"""Desk-scale synthetic hierarchical video dataset.

Each level of the label hierarchy is controlled by a distinct cue so the
multi-rate, multi-task mechanism can be verified without a real corpus:

* event: background color family; visible in any single frame.
* set: the moving object's shape; visible in a frame but spatially subtle.
* element: the frequency of the object's sinusoidal oscillation; invisible
  in a single frame (random phase, random direction, random amplitude) and
  resolvable only from densely sampled frames.

Object size is drawn from a shared target-area range for every shape, so
color histograms carry no shape information; position, direction, phase,
and amplitude are random per clip, so a single frame carries no element
information. Generation is deterministic: per-clip RNG streams are
derived from (seed, split, element, clip).
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .datasets import ManifestRow, save_manifest
from .taxonomy import Taxonomy, build_taxonomy, lift, save_taxonomy

SHAPES = ("square", "circle", "triangle", "diamond", "plus", "hbar")
OBJECT_COLOR = (0.92, 0.92, 0.88)

# motion-code band in cycles per source frame; the dense pathway's sampling
# rate resolves the whole band, the sparse pathway's does not
FREQ_LO = 0.05
FREQ_HI = 0.22

AMPLITUDE_FRAC = (0.10, 0.1875)  # oscillation amplitude, fraction of frame size
CENTER_FRAC = (0.40, 0.60)  # object rest position, fraction of frame size
AREA_FRAC = (0.022, 0.056)  # object pixel area, fraction of frame area


class SynthError(ValueError):
    """Unsatisfiable generator specification."""


@dataclass(frozen=True)
class SynthSpec:
    num_events: int = 2
    num_sets: int = 4
    num_elements: int = 8
    clips_per_element: int = 30
    test_clips_per_element: int = 10
    frames_per_clip: int = 72
    frame_size: int = 48
    noise_level: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.num_events <= self.num_sets <= self.num_elements:
            raise SynthError(
                "need 1 <= events <= sets <= elements, got "
                f"({self.num_events}, {self.num_sets}, {self.num_elements})"
            )
        if self.num_sets > len(SHAPES):
            raise SynthError(
                f"at most {len(SHAPES)} sets are supported (one shape each), "
                f"got {self.num_sets}"
            )
        if self.clips_per_element < 1 or self.test_clips_per_element < 0:
            raise SynthError("clips_per_element must be >= 1")
        if self.frames_per_clip < 1 or self.frame_size < 16:
            raise SynthError("frames_per_clip must be >= 1 and frame_size >= 16")
        if not 0.0 <= self.noise_level < 1.0:
            raise SynthError(f"noise_level must be in [0, 1), got {self.noise_level}")
        capacity = motion_code_capacity(self.noise_level)
        if self.max_elements_per_set > capacity:
            raise SynthError(
                f"{self.max_elements_per_set} elements per set exceed the "
                f"{capacity} distinguishable motion codes at noise "
                f"{self.noise_level}"
            )

    @property
    def set_parents(self) -> tuple[int, ...]:
        return tuple(i * self.num_events // self.num_sets for i in range(self.num_sets))

    @property
    def element_parents(self) -> tuple[int, ...]:
        return tuple(
            i * self.num_sets // self.num_elements for i in range(self.num_elements)
        )

    @property
    def max_elements_per_set(self) -> int:
        parents = self.element_parents
        return max(parents.count(s) for s in range(self.num_sets))


def motion_code_capacity(noise_level: float) -> int:
    """Distinguishable oscillation frequencies in the band at a noise level."""
    min_separation = 0.02 + 0.08 * noise_level
    return int((FREQ_HI - FREQ_LO) / min_separation) + 1


def build_synth_taxonomy(spec: SynthSpec) -> Taxonomy:
    records = []
    for i in range(spec.num_events):
        records.append(("event", i, f"event_{i}", None))
    for i, parent in enumerate(spec.set_parents):
        records.append(("set", i, f"set_{i}_{SHAPES[i]}", parent))
    siblings = _within_set_indices(spec)
    for i, parent in enumerate(spec.element_parents):
        freq = element_frequency(spec, i)
        records.append(
            ("element", i, f"element_{i}_s{siblings[i]}_f{freq:.4f}", parent)
        )
    return build_taxonomy(records)


def _within_set_indices(spec: SynthSpec) -> list[int]:
    seen: dict[int, int] = {}
    out = []
    for parent in spec.element_parents:
        out.append(seen.get(parent, 0))
        seen[parent] = out[-1] + 1
    return out


def element_frequency(spec: SynthSpec, element_id: int) -> float:
    """Oscillation frequency (cycles/frame) encoding the element label."""
    parent = spec.element_parents[element_id]
    siblings = spec.element_parents.count(parent)
    k = _within_set_indices(spec)[element_id]
    if siblings == 1:
        return FREQ_LO
    return FREQ_LO + k * (FREQ_HI - FREQ_LO) / (siblings - 1)


def event_background(event_id: int, num_events: int) -> np.ndarray:
    """Background RGB (floats in [0, 1]) for one event's color family."""
    hue = (event_id / num_events + 0.07) % 1.0
    return np.asarray(colorsys.hsv_to_rgb(hue, 0.55, 0.35), dtype=np.float32)


def _shape_mask(shape: str, size: int, cy: float, cx: float, area: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    dy, dx = yy - cy, xx - cx
    if shape == "square":
        half = np.sqrt(area) / 2
        return np.maximum(np.abs(dx), np.abs(dy)) <= half
    if shape == "circle":
        r = np.sqrt(area / np.pi)
        return dx * dx + dy * dy <= r * r
    if shape == "triangle":
        b = np.sqrt(area / 0.45)
        h = 0.9 * b
        inside_y = np.abs(dy) <= h / 2
        return inside_y & (np.abs(dx) <= (dy + h / 2) / h * (b / 2))
    if shape == "diamond":
        d = np.sqrt(area / 2)
        return np.abs(dx) + np.abs(dy) <= d
    if shape == "plus":
        w = np.sqrt(area / 5)
        return ((np.abs(dx) <= w / 2) & (np.abs(dy) <= 1.5 * w)) | (
            (np.abs(dy) <= w / 2) & (np.abs(dx) <= 1.5 * w)
        )
    if shape == "hbar":
        t = np.sqrt(area / 3)
        return (np.abs(dx) <= 1.5 * t) & (np.abs(dy) <= t / 2)
    raise ValueError(f"unknown shape {shape!r}")


def render_clip(spec: SynthSpec, element_id: int, rng: np.random.Generator) -> np.ndarray:
    """Render one clip as [frames, size, size, 3] uint8."""
    size = spec.frame_size
    set_id = spec.element_parents[element_id]
    event_id = spec.set_parents[set_id]
    shape = SHAPES[set_id]
    freq = element_frequency(spec, element_id)
    bg = event_background(event_id, spec.num_events)

    center = rng.uniform(CENTER_FRAC[0] * size, CENTER_FRAC[1] * size, size=2)
    amplitude = rng.uniform(AMPLITUDE_FRAC[0] * size, AMPLITUDE_FRAC[1] * size)
    angle = rng.uniform(0.0, np.pi)
    phase = rng.uniform(0.0, 2 * np.pi)
    area = rng.uniform(AREA_FRAC[0], AREA_FRAC[1]) * size * size
    direction = np.array([np.sin(angle), np.cos(angle)])  # (dy, dx)

    obj = np.asarray(OBJECT_COLOR, dtype=np.float32)
    sigma = 0.25 * spec.noise_level
    frames = np.empty((spec.frames_per_clip, size, size, 3), dtype=np.uint8)
    for t in range(spec.frames_per_clip):
        offset = amplitude * np.sin(2 * np.pi * freq * t + phase)
        cy, cx = center + offset * direction
        img = np.broadcast_to(bg, (size, size, 3)).copy()
        img[_shape_mask(shape, size, cy, cx, area)] = obj
        if sigma > 0:
            img = img + rng.normal(0.0, sigma, size=img.shape).astype(np.float32)
        frames[t] = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return frames


@dataclass(frozen=True)
class SynthOutput:
    taxonomy_path: Path
    train_manifest_path: Path
    test_manifest_path: Path
    num_train_clips: int
    num_test_clips: int


def generate(spec: SynthSpec, output_dir: str | Path) -> SynthOutput:
    """Render the dataset and write taxonomy, frames, and manifests."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    taxonomy = build_synth_taxonomy(spec)
    taxonomy_path = out / "taxonomy.txt"
    save_taxonomy(taxonomy, taxonomy_path)

    manifests = {}
    splits = (
        ("train", spec.clips_per_element),
        ("test", spec.test_clips_per_element),
    )
    for split_id, (split, clips_per_element) in enumerate(splits):
        rows = []
        for element_id in range(spec.num_elements):
            triple = lift(element_id, taxonomy)
            for clip_index in range(clips_per_element):
                rng = np.random.default_rng(
                    np.random.SeedSequence(
                        [spec.seed, split_id, element_id, clip_index]
                    )
                )
                frames = render_clip(spec, element_id, rng)
                clip_dir = (
                    out / split / f"element_{element_id:03d}" / f"clip_{clip_index:04d}"
                )
                clip_dir.mkdir(parents=True, exist_ok=True)
                for t in range(frames.shape[0]):
                    Image.fromarray(frames[t]).save(clip_dir / f"{t:05d}.png")
                rows.append(
                    ManifestRow(str(clip_dir), spec.frames_per_clip, triple)
                )
        manifest_path = out / f"{split}_manifest.txt"
        save_manifest(rows, manifest_path)
        manifests[split] = (manifest_path, len(rows))

    return SynthOutput(
        taxonomy_path=taxonomy_path,
        train_manifest_path=manifests["train"][0],
        test_manifest_path=manifests["test"][0],
        num_train_clips=manifests["train"][1],
        num_test_clips=manifests["test"][1],
    )
