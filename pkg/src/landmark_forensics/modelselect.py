"""Hyperparameter selection: stratified k-fold CV and (c, gamma) grid search.

Cell training seeds are derived from (seed, cell, fold), so evaluating cells
in any order, or concurrently, yields identical results; the winning cell is
the maximal mean validation AUROC with ties broken toward smaller c, then
smaller gamma.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Label
from .errors import (
    AllCellsFailed,
    ClassTooSmall,
    LandmarkForensicsError,
    SingleClass,
    UnlabeledRecord,
)
from .evaluation import auroc
from .features import N_FEATURES
from .svm import KernelParams, SvmModel, TrainParams, train_smo

DEFAULT_C_VALUES = (0.1, 1.0, 10.0, 100.0)
DEFAULT_GAMMA_VALUES = tuple(g / N_FEATURES for g in (0.001, 0.01, 0.1, 1.0))

_FINAL_FOLD_TAG = 0x7F


@dataclass(frozen=True)
class Grid:
    c_values: tuple[float, ...] = DEFAULT_C_VALUES
    gamma_values: tuple[float, ...] = DEFAULT_GAMMA_VALUES

    def __post_init__(self):
        for name, vals in (("c_values", self.c_values), ("gamma_values", self.gamma_values)):
            vals = tuple(float(v) for v in vals)
            if not vals:
                raise ValueError(f"{name} must be nonempty")
            if any(v <= 0 or not np.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be strictly positive")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly ascending")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class CellResult:
    c: float
    gamma: float
    fold_aurocs: tuple[float, ...]
    mean_auroc: float
    std_auroc: float
    failed: bool = False
    error: str | None = None


@dataclass(frozen=True)
class CvResult:
    cells: tuple[CellResult, ...]
    chosen_c: float
    chosen_gamma: float
    k: int
    seed: int

    def chosen_cell(self) -> CellResult:
        for cell in self.cells:
            if cell.c == self.chosen_c and cell.gamma == self.chosen_gamma:
                return cell
        raise LandmarkForensicsError("chosen cell missing from results")

    def to_metadata(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "chosen_c": self.chosen_c,
            "chosen_gamma": self.chosen_gamma,
            "cells": [
                {
                    "c": cell.c,
                    "gamma": cell.gamma,
                    "fold_aurocs": list(cell.fold_aurocs),
                    "mean_auroc": cell.mean_auroc,
                    "std_auroc": cell.std_auroc,
                    "failed": cell.failed,
                    "error": cell.error,
                }
                for cell in self.cells
            ],
        }


def stratified_kfold(labels: Sequence[Label], k: int, seed: int) -> list[np.ndarray]:
    """Deal each class's seeded shuffle round-robin into k folds.

    Per-fold class counts differ by at most one within each class.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if any(lb is Label.UNLABELED for lb in labels):
        raise UnlabeledRecord("cross-validation needs fully labeled data")
    folds: list[list[int]] = [[] for _ in range(k)]
    for tag, label in enumerate((Label.REAL, Label.FAKE)):
        idx = np.array([i for i, lb in enumerate(labels) if lb is label], dtype=np.intp)
        if idx.size < k:
            raise ClassTooSmall(f"class {label.value} has {idx.size} members, needs >= {k}")
        rng = np.random.default_rng(np.random.SeedSequence([seed, tag]))
        for pos, j in enumerate(rng.permutation(idx.size)):
            folds[pos % k].append(int(idx[j]))
    return [np.array(sorted(f), dtype=np.intp) for f in folds]


def _cell_seed(seed: int, ci: int, gi: int, fold: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, ci, gi, fold])


def _train_cell(X, y_labels, c, gamma, seed_seq, kkt_tolerance, max_passes) -> SvmModel:
    from .svm import compute_class_weights  # local import keeps module load light

    weights = compute_class_weights(list(y_labels))
    params = TrainParams(
        c=c,
        kernel=KernelParams(gamma=gamma),
        class_weights=weights,
        kkt_tolerance=kkt_tolerance,
        max_passes=max_passes,
        seed=int(seed_seq.generate_state(1)[0]),
    )
    return train_smo(X, list(y_labels), params)


def grid_search(
    features: np.ndarray,
    labels: Sequence[Label],
    grid: Grid,
    k: int,
    seed: int,
    kkt_tolerance: float = 1e-3,
    max_passes: int = 10,
) -> tuple[CvResult, SvmModel]:
    """Pick (c, gamma) by mean validation AUROC, then retrain on all data.

    Class weights are recomputed on each training subset. Failed cells are
    excluded from the argmax; if every cell fails the search raises.
    """
    from .svm import decision_many

    X = np.asarray(features, dtype=np.float64)
    labels = list(labels)
    n_real = sum(1 for lb in labels if lb is Label.REAL)
    n_fake = sum(1 for lb in labels if lb is Label.FAKE)
    if n_real == 0 or n_fake == 0:
        raise SingleClass("grid search needs both classes")

    folds = stratified_kfold(labels, k, seed)
    all_idx = np.arange(len(labels), dtype=np.intp)
    y_binary = np.array([1 if lb is Label.FAKE else 0 for lb in labels])

    cells: list[CellResult] = []
    for ci, c in enumerate(grid.c_values):
        for gi, gamma in enumerate(grid.gamma_values):
            fold_scores: list[float] = []
            error: str | None = None
            for fi, val_idx in enumerate(folds):
                train_idx = np.setdiff1d(all_idx, val_idx)
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")  # non-convergence still scores
                        model = _train_cell(
                            X[train_idx],
                            [labels[t] for t in train_idx],
                            c,
                            gamma,
                            _cell_seed(seed, ci, gi, fi),
                            kkt_tolerance,
                            max_passes,
                        )
                    scores = decision_many(model, X[val_idx])
                    fold_scores.append(auroc(scores, y_binary[val_idx]))
                except LandmarkForensicsError as exc:
                    error = f"fold {fi}: {exc}"
                    break
            if error is not None:
                cells.append(
                    CellResult(c, gamma, tuple(fold_scores), float("nan"), float("nan"),
                               failed=True, error=error)
                )
            else:
                arr = np.array(fold_scores)
                cells.append(
                    CellResult(c, gamma, tuple(fold_scores),
                               float(arr.mean()), float(arr.std()))
                )

    viable = [cell for cell in cells if not cell.failed]
    if not viable:
        raise AllCellsFailed("; ".join(c.error or "?" for c in cells))
    # argmax mean AUROC; ties -> smaller c, then smaller gamma
    best = max(viable, key=lambda cell: (cell.mean_auroc, -cell.c, -cell.gamma))

    result = CvResult(
        cells=tuple(cells), chosen_c=best.c, chosen_gamma=best.gamma, k=k, seed=seed
    )
    final = _train_cell(
        X,
        labels,
        best.c,
        best.gamma,
        _cell_seed(seed, grid.c_values.index(best.c), grid.gamma_values.index(best.gamma),
                   _FINAL_FOLD_TAG),
        kkt_tolerance,
        max_passes,
    )
    metadata = dict(final.training_metadata)
    metadata["cv"] = result.to_metadata()
    metadata["retrained_on_full_training_set"] = True
    final = SvmModel(
        support_vectors=final.support_vectors,
        dual_coefficients=final.dual_coefficients,
        bias=final.bias,
        kernel=final.kernel,
        standardizer=final.standardizer,
        reference_shape=final.reference_shape,
        alignment_config=final.alignment_config,
        class_weights=final.class_weights,
        training_metadata=metadata,
    )
    return result, final


def write_cv_csv(result: CvResult, path: str | Path) -> None:
    """Per-fold AUROC rows plus one summary row per cell (fold column 'mean')."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["c", "gamma", "fold", "auroc"])
        for cell in result.cells:
            for fi, score in enumerate(cell.fold_aurocs):
                writer.writerow([repr(cell.c), repr(cell.gamma), fi, repr(score)])
            mean = "failed" if cell.failed else repr(cell.mean_auroc)
            writer.writerow([repr(cell.c), repr(cell.gamma), "mean", mean])
