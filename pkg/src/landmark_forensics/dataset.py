"""Landmark file parsing, dataset manifests, splitting, and video grouping.

Landmark sets follow the iBUG 68-point convention: indices 0-16 jaw contour,
17-26 brows, 27-35 nose, 36-47 eyes, 48-67 mouth.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    MalformedFile,
    MissingFile,
    UnknownLabel,
    UnlabeledRecord,
    WrongPointCount,
)

N_LANDMARKS = 68


class Label(enum.Enum):
    REAL = "real"
    FAKE = "fake"
    UNLABELED = "unlabeled"


def _parse_label(text: str) -> Label:
    token = text.strip().lower()
    if token == "":
        return Label.UNLABELED
    try:
        return Label(token)
    except ValueError:
        raise UnknownLabel(f"label must be 'real' or 'fake', got {text!r}") from None


@dataclass(frozen=True)
class LandmarkSet:
    """One face: 68 ordered (x, y) points in source-image pixel coordinates."""

    id: str
    points: np.ndarray
    label: Label = Label.UNLABELED
    group: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise WrongPointCount(
                f"{self.id}: expected {N_LANDMARKS} (x, y) points, got shape {pts.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise MalformedFile(f"{self.id}: non-finite coordinate")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of landmark records with unique ids."""

    records: tuple[LandmarkSet, ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def labels(self) -> list[Label]:
        return [rec.label for rec in self.records]


# -- .pts files ---------------------------------------------------------------

def parse_pts(text: str) -> np.ndarray:
    """Parse an iBUG ``.pts`` file into a (68, 2) float array.

    The format is ``version: ...``, ``n_points: 68``, then 68 ``x y`` lines
    between ``{`` and ``}``.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if len(lines) < 4 or not lines[0].startswith("version:"):
        raise MalformedFile("missing 'version:' header")
    if not lines[1].startswith("n_points:"):
        raise MalformedFile("missing 'n_points:' header")
    try:
        declared = int(lines[1].split(":", 1)[1])
    except ValueError:
        raise MalformedFile(f"unreadable n_points: {lines[1]!r}") from None
    if declared != N_LANDMARKS:
        raise WrongPointCount(f"n_points is {declared}, expected {N_LANDMARKS}")
    if lines[2] != "{":
        raise MalformedFile("missing opening brace")
    if lines[-1] != "}":
        raise MalformedFile("missing closing brace")

    coords = []
    for ln in lines[3:-1]:
        parts = ln.split()
        if len(parts) != 2:
            raise MalformedFile(f"expected 'x y', got {ln!r}")
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise MalformedFile(f"non-numeric coordinate in {ln!r}") from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MalformedFile(f"non-finite coordinate in {ln!r}")
        coords.append((x, y))
    if len(coords) != declared:
        raise WrongPointCount(f"declared {declared} points but found {len(coords)}")
    return np.array(coords, dtype=np.float64)


def serialize_pts(points: np.ndarray) -> str:
    """Render 68 points as ``.pts`` text; parse_pts(serialize_pts(p)) == p."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape != (N_LANDMARKS, 2):
        raise WrongPointCount(f"expected ({N_LANDMARKS}, 2) points, got {pts.shape}")
    body = "\n".join(f"{repr(float(x))} {repr(float(y))}" for x, y in pts)
    return f"version: 1\nn_points: {N_LANDMARKS}\n{{\n{body}\n}}\n"


def load_pts(path: str | Path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"landmark file not found: {p}")
    return parse_pts(p.read_text(encoding="utf-8"))


# -- manifests and feature CSVs -----------------------------------------------

MANIFEST_HEADER = ["path", "label", "group"]
FEATURE_HEADER = ["id", "group", "label"] + [
    f"{axis}{i}" for i in range(N_LANDMARKS) for axis in ("x", "y")
]


def load_manifest(path: str | Path, *, skip_errors: bool = False) -> Dataset:
    """Load a ``path,label,group`` manifest CSV into a Dataset.

    Relative landmark paths are resolved against the manifest's directory.
    With ``skip_errors`` set, rows whose landmark file is missing or fails to
    parse are dropped (counted in ``Dataset.source``) instead of raising.
    """
    manifest = Path(path)
    if not manifest.is_file():
        raise MissingFile(f"manifest not found: {manifest}")
    base = manifest.parent
    records: list[LandmarkSet] = []
    skipped = 0
    with manifest.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != MANIFEST_HEADER:
            raise MalformedFile(
                f"manifest header must be {','.join(MANIFEST_HEADER)!r}, "
                f"got {reader.fieldnames!r}"
            )
        for row in reader:
            rel = row["path"].strip()
            label = _parse_label(row["label"])
            group = row["group"].strip() or None
            target = Path(rel)
            if not target.is_absolute():
                target = base / target
            try:
                points = load_pts(target)
            except (MissingFile, MalformedFile, WrongPointCount):
                if skip_errors:
                    skipped += 1
                    continue
                raise
            records.append(LandmarkSet(id=rel, points=points, label=label, group=group))
    source = str(manifest)
    if skipped:
        source += f" ({skipped} rows skipped)"
    return Dataset(records=tuple(records), source=source)


def save_manifest(dataset: Dataset, path: str | Path) -> None:
    """Write a manifest CSV; record ids are used as the path column."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for rec in dataset:
            label = "" if rec.label is Label.UNLABELED else rec.label.value
            writer.writerow([rec.id, label, rec.group or ""])


def load_feature_csv(path: str | Path) -> Dataset:
    """Load an ``id,group,label,x0,y0,...,x67,y67`` CSV of raw coordinates."""
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"feature CSV not found: {p}")
    records: list[LandmarkSet] = []
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != FEATURE_HEADER:
            raise MalformedFile("feature CSV header does not match id,group,label,x0,y0,...")
        for row in reader:
            if len(row) != len(FEATURE_HEADER):
                raise MalformedFile(f"row for {row[:1]} has {len(row)} fields")
            try:
                flat = np.array([float(v) for v in row[3:]], dtype=np.float64)
            except ValueError:
                raise MalformedFile(f"non-numeric coordinate in row {row[0]!r}") from None
            records.append(
                LandmarkSet(
                    id=row[0],
                    points=flat.reshape(N_LANDMARKS, 2),
                    label=_parse_label(row[2]),
                    group=row[1].strip() or None,
                )
            )
    return Dataset(records=tuple(records), source=str(p))


def save_feature_csv(dataset: Dataset, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FEATURE_HEADER)
        for rec in dataset:
            label = "" if rec.label is Label.UNLABELED else rec.label.value
            coords = [repr(float(v)) for v in rec.points.reshape(-1)]
            writer.writerow([rec.id, rec.group or "", label] + coords)


def load_records(path: str | Path) -> Dataset:
    """Load either a manifest CSV or a feature CSV, sniffing the header."""
    p = Path(path)
    if not p.is_file():
        raise MissingFile(f"dataset file not found: {p}")
    with p.open(newline="", encoding="utf-8") as fh:
        first = fh.readline()
    header = [h.strip() for h in first.strip().split(",")]
    if header[:3] == MANIFEST_HEADER:
        return load_manifest(p)
    if header[:3] == FEATURE_HEADER[:3]:
        return load_feature_csv(p)
    raise MalformedFile(f"unrecognized CSV header in {p}")


# -- splitting and grouping -----------------------------------------------------

def _class_permutation(n: int, seed: int, class_tag: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([seed, class_tag]))
    return rng.permutation(n)


def split_train_test(
    dataset: Dataset, train_fraction: float, seed: int
) -> tuple[Dataset, Dataset]:
    """Deterministic stratified split: per class, a seeded shuffle sends the
    first ``floor(fraction * N_c)`` records to train.

    Output datasets preserve the input record order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    for rec in dataset:
        if rec.label is Label.UNLABELED:
            raise UnlabeledRecord(f"record {rec.id!r} is unlabeled")

    train_idx: set[int] = set()
    for tag, label in enumerate((Label.REAL, Label.FAKE)):
        idx = [i for i, rec in enumerate(dataset.records) if rec.label is label]
        if not idx:
            continue
        perm = _class_permutation(len(idx), seed, tag)
        n_train = int(math.floor(train_fraction * len(idx)))
        train_idx.update(idx[j] for j in perm[:n_train])

    train = tuple(r for i, r in enumerate(dataset.records) if i in train_idx)
    test = tuple(r for i, r in enumerate(dataset.records) if i not in train_idx)
    return (
        Dataset(records=train, source=f"{dataset.source} [train]"),
        Dataset(records=test, source=f"{dataset.source} [test]"),
    )


def group_by_video(dataset: Dataset) -> dict[str, list[str]]:
    """Map group id -> record ids; ungrouped records form singleton groups."""
    groups: dict[str, list[str]] = {}
    for rec in dataset:
        key = rec.group if rec.group is not None else rec.id
        groups.setdefault(key, []).append(rec.id)
    return groups
