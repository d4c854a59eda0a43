"""Seeded synthetic landmark corpus: jittered "real" faces and part-shifted fakes.

Fakes get one rigid offset applied to a whole landmark part (mouth by
default) before the random pose transform, mimicking a face whose parts are
individually fine but globally misplaced. Every sample is generated from a
sub-seed derived from (seed, class, index), so output is independent of
generation order or batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .align import ReferenceShape
from .dataset import Dataset, Label, LandmarkSet, N_LANDMARKS, save_manifest, serialize_pts

PART_INDEX_GROUPS: dict[str, tuple[int, ...]] = {
    "jaw": tuple(range(0, 17)),
    "brows": tuple(range(17, 27)),
    "nose": tuple(range(27, 36)),
    "eyes": tuple(range(36, 48)),
    "mouth": tuple(range(48, 68)),
}


@dataclass(frozen=True)
class PoseRanges:
    """Uniform sampling ranges of the random similarity transform (pixels/degrees)."""

    scale: tuple[float, float] = (80.0, 400.0)
    rotation_deg: float = 15.0
    translation: tuple[float, float] = (0.0, 500.0)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_per_class: int = 100
    shape_noise: float = 0.01
    pose: PoseRanges = field(default_factory=PoseRanges)
    fake_part: tuple[int, ...] = PART_INDEX_GROUPS["mouth"]
    fake_shift_mean: float = 0.06
    fake_shift_std: float = 0.02
    fake_shift_direction: tuple[float, float] | None = None  # None = random per sample
    frames_per_video: int | None = None

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ValueError("n_per_class must be >= 1")
        if self.shape_noise < 0:
            raise ValueError("shape_noise must be >= 0")
        part = tuple(int(i) for i in self.fake_part)
        if not part or any(i < 0 or i >= N_LANDMARKS for i in part):
            raise ValueError("fake_part must be a nonempty subset of 0..67")
        object.__setattr__(self, "fake_part", part)
        if self.fake_shift_direction is not None:
            dx, dy = self.fake_shift_direction
            norm = math.hypot(dx, dy)
            if norm == 0:
                raise ValueError("fake_shift_direction cannot be the zero vector")
            object.__setattr__(self, "fake_shift_direction", (dx / norm, dy / norm))


def _sample_rng(config: SynthConfig, class_tag: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, class_tag, index]))


def _one_sample(
    config: SynthConfig, template: ReferenceShape, fake: bool, index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Return (canonical, posed) points for one sample.

    Draw order is fixed: jitter, then shift magnitude/direction (fakes only),
    then pose scale/rotation/translation.
    """
    rng = _sample_rng(config, 1 if fake else 0, index)
    shape = template.points + rng.normal(0.0, config.shape_noise, size=(N_LANDMARKS, 2))
    if fake:
        magnitude = max(0.0, rng.normal(config.fake_shift_mean, config.fake_shift_std))
        if config.fake_shift_direction is None:
            angle = rng.uniform(0.0, 2.0 * math.pi)
            direction = np.array([math.cos(angle), math.sin(angle)])
        else:
            direction = np.array(config.fake_shift_direction)
        shape = shape.copy()
        shape[list(config.fake_part)] += magnitude * direction

    scale = rng.uniform(*config.pose.scale)
    theta = math.radians(rng.uniform(-config.pose.rotation_deg, config.pose.rotation_deg))
    translation = rng.uniform(config.pose.translation[0], config.pose.translation[1], size=2)
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    posed = shape @ (scale * rot).T + translation
    return shape, posed


def canonical_shapes(config: SynthConfig, template: ReferenceShape, fake: bool) -> np.ndarray:
    """The unit-square shapes before the pose transform, (n, 68, 2)."""
    out = np.empty((config.n_per_class, N_LANDMARKS, 2))
    for i in range(config.n_per_class):
        out[i], _ = _one_sample(config, template, fake, i)
    return out


def _records(config: SynthConfig, template: ReferenceShape, fake: bool) -> Iterator[LandmarkSet]:
    label = Label.FAKE if fake else Label.REAL
    prefix = label.value
    for i in range(config.n_per_class):
        _, posed = _one_sample(config, template, fake, i)
        group = None
        if config.frames_per_video:
            group = f"{prefix}_vid_{i // config.frames_per_video:04d}"
        yield LandmarkSet(id=f"{prefix}_{i:05d}", points=posed, label=label, group=group)


def generate_real(config: SynthConfig, template: ReferenceShape) -> list[LandmarkSet]:
    return list(_records(config, template, fake=False))


def generate_fake(config: SynthConfig, template: ReferenceShape) -> list[LandmarkSet]:
    return list(_records(config, template, fake=True))


def write_corpus(config: SynthConfig, template: ReferenceShape, out_dir: str | Path) -> Path:
    """Emit one .pts file per sample plus a manifest.csv; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for rec in generate_real(config, template) + generate_fake(config, template):
        filename = f"{rec.id}.pts"
        (out / filename).write_text(serialize_pts(rec.points), encoding="utf-8")
        records.append(LandmarkSet(id=filename, points=rec.points, label=rec.label, group=rec.group))
    dataset = Dataset(records=tuple(records), source="synthetic")
    manifest = out / "manifest.csv"
    save_manifest(dataset, manifest)
    return manifest
