"""ROC/AUROC metrics, per-video score aggregation, and marginal densities.

AUROC follows the Mann-Whitney definition with half credit for ties; the
rank-sum implementation below is exactly equal to the all-pairs count, and
the trapezoidal area of ``roc_curve`` reproduces it under the same tie
convention.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .dataset import N_LANDMARKS, Label
from .errors import EmptyClassWarning, MixedLabelGroup, SingleClass

DENSITY_RANGE = (-0.25, 1.25)  # aligned points are not clipped, allow overshoot


@dataclass(frozen=True)
class RocCurve:
    """Operating points (fpr, tpr) with the score threshold producing each.

    The initial (0, 0) point carries threshold None (no score classifies as
    positive); every other threshold t means "score >= t is positive".
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: tuple[float | None, ...]

    def __post_init__(self):
        fpr = np.asarray(self.fpr, dtype=np.float64)
        tpr = np.asarray(self.tpr, dtype=np.float64)
        if fpr.shape != tpr.shape or len(self.thresholds) != fpr.size:
            raise ValueError("curve arrays disagree in length")
        if fpr[0] != 0.0 or tpr[0] != 0.0 or fpr[-1] != 1.0 or tpr[-1] != 1.0:
            raise ValueError("curve must run from (0,0) to (1,1)")
        if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
            raise ValueError("curve coordinates must be non-decreasing")
        fpr.flags.writeable = False
        tpr.flags.writeable = False
        object.__setattr__(self, "fpr", fpr)
        object.__setattr__(self, "tpr", tpr)

    def area(self) -> float:
        return float(np.trapezoid(self.tpr, self.fpr))


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    roc: RocCurve
    n_positive: int
    n_negative: int
    level: str  # "frame" | "video"

    def __post_init__(self):
        if abs(self.auroc - self.roc.area()) > 1e-12:
            raise ValueError("report AUROC disagrees with its ROC curve area")

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "auroc": self.auroc,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
            "roc": [
                {"fpr": float(f), "tpr": float(t), "threshold": th}
                for f, t, th in zip(self.roc.fpr, self.roc.tpr, self.roc.thresholds)
            ],
        }


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.dtype == object or labels.dtype.kind in "US":
        labels = np.array([1 if _is_positive(lb) else 0 for lb in labels])
    labels = labels.astype(np.int64)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    if not np.all(np.isin(labels, (0, 1))):
        raise ValueError("labels must be binary")
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise SingleClass("need at least one positive and one negative")
    return scores, labels


def _is_positive(label) -> bool:
    if isinstance(label, Label):
        return label is Label.FAKE
    if isinstance(label, str):
        return label.strip().lower() in ("fake", "1", "pos", "positive")
    return bool(label)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scores: Sequence[float], labels: Sequence) -> float:
    """P(random positive outscores random negative), ties counted half."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    ranks = _average_ranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores: Sequence[float], labels: Sequence) -> RocCurve:
    """Thresholds at each distinct score, descending; score >= t is positive."""
    scores, labels = _check_binary(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(1 - sorted_labels)
    # keep only the last entry of each tie block: that is the point where the
    # threshold has admitted the whole block
    distinct = np.flatnonzero(np.diff(sorted_scores, append=-np.inf) != 0)
    fpr = np.concatenate([[0.0], fp[distinct] / n_neg])
    tpr = np.concatenate([[0.0], tp[distinct] / n_pos])
    thresholds: tuple[float | None, ...] = (None, *map(float, sorted_scores[distinct]))
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds)


def evaluate(scores: Sequence[float], labels: Sequence, level: str = "frame") -> EvalReport:
    scores, labels = _check_binary(scores, labels)
    curve = roc_curve(scores, labels)
    return EvalReport(
        auroc=auroc(scores, labels),
        roc=curve,
        n_positive=int(labels.sum()),
        n_negative=int(labels.size - labels.sum()),
        level=level,
    )


@dataclass(frozen=True)
class GroupScore:
    group: str
    label: Label
    score: float


def aggregate_by_group(
    scores: Sequence[float],
    groups: Sequence[str],
    labels: Sequence[Label],
    average: str = "score",
) -> list[GroupScore]:
    """Mean score per group, in first-appearance order.

    ``average="label"`` averages thresholded predictions (score > 0) instead
    of raw scores. Groups mixing real and fake members are an error.
    """
    if average not in ("score", "label"):
        raise ValueError(f"average must be 'score' or 'label', got {average!r}")
    if not (len(scores) == len(groups) == len(labels)):
        raise ValueError("scores, groups, and labels must have equal length")
    by_group: dict[str, list[int]] = {}
    for i, g in enumerate(groups):
        by_group.setdefault(str(g), []).append(i)
    out: list[GroupScore] = []
    for g, idx in by_group.items():
        group_labels = {labels[i] for i in idx}
        if len(group_labels) > 1:
            raise MixedLabelGroup(f"group {g!r} mixes labels {sorted(l.value for l in group_labels)}")
        vals = [float(scores[i]) for i in idx]
        if average == "label":
            vals = [1.0 if v > 0 else 0.0 for v in vals]
        out.append(GroupScore(group=g, label=group_labels.pop(), score=float(np.mean(vals))))
    return out


@dataclass(frozen=True)
class DensityTable:
    """Per-coordinate class-conditional histograms of aligned landmarks."""

    bins: int
    lo: float
    hi: float
    mass: dict[str, np.ndarray]  # class name -> (68, 2, bins), rows sum to 1
    counts: dict[str, int]

    def bin_edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.bins + 1)


def marginal_density(
    aligned_by_class: Mapping[str, Sequence[np.ndarray]],
    bins: int = 100,
    value_range: tuple[float, float] = DENSITY_RANGE,
) -> DensityTable:
    """Normalized histogram of every coordinate, per class.

    Out-of-range values land in the nearest edge bin. Classes without samples
    get empty (all-zero) histograms and a warning.
    """
    lo, hi = float(value_range[0]), float(value_range[1])
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    mass: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    for cls, shapes in aligned_by_class.items():
        table = np.zeros((N_LANDMARKS, 2, bins))
        arr = np.asarray(list(shapes), dtype=np.float64)
        counts[cls] = 0 if arr.size == 0 else arr.shape[0]
        if arr.size == 0:
            warnings.warn(f"class {cls!r} has no samples", EmptyClassWarning)
            mass[cls] = table
            continue
        if arr.ndim != 3 or arr.shape[1:] != (N_LANDMARKS, 2):
            raise ValueError(f"class {cls!r}: expected (n, 68, 2) shapes, got {arr.shape}")
        clipped = np.clip(arr, lo, hi)
        for li in range(N_LANDMARKS):
            for axis in range(2):
                hist, _ = np.histogram(clipped[:, li, axis], bins=bins, range=(lo, hi))
                table[li, axis] = hist / arr.shape[0]
        mass[cls] = table
    return DensityTable(bins=bins, lo=lo, hi=hi, mass=mass, counts=counts)


def write_density_csv(table: DensityTable, path: str | Path) -> None:
    """Plot-ready rows: coordinate_index,axis,class,bin_lo,bin_hi,mass."""
    edges = table.bin_edges()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["coordinate_index", "axis", "class", "bin_lo", "bin_hi", "mass"])
        for cls in table.mass:
            grid = table.mass[cls]
            for li in range(N_LANDMARKS):
                for axis, axis_name in enumerate(("x", "y")):
                    for b in range(table.bins):
                        writer.writerow(
                            [li, axis_name, cls, repr(float(edges[b])),
                             repr(float(edges[b + 1])), repr(float(grid[li, axis, b]))]
                        )
