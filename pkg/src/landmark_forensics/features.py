"""Flattening aligned landmarks into 136-D features and z-scoring them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import N_LANDMARKS
from .errors import AlreadyStandardized, DimensionMismatch, TooFewSamples

N_FEATURES = 2 * N_LANDMARKS

_ZERO_VARIANCE_FLOOR = 1e-12


@dataclass(frozen=True)
class FeatureVector:
    """136 interleaved (x, y) coordinates, raw or standardized."""

    values: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if vals.shape != (N_FEATURES,):
            raise DimensionMismatch(f"expected {N_FEATURES} components, got {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("feature vector has non-finite components")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class Standardizer:
    """Per-component mean and population standard deviation of training data."""

    mean: np.ndarray
    scale: np.ndarray
    sample_count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        scale = np.asarray(self.scale, dtype=np.float64).reshape(-1)
        if mean.shape != (N_FEATURES,) or scale.shape != (N_FEATURES,):
            raise DimensionMismatch("standardizer arrays must have 136 components")
        if np.any(scale <= 0.0):
            raise ValueError("standardizer scale components must be positive")
        if self.sample_count < 2:
            raise TooFewSamples("standardizer must be fitted from >= 2 samples")
        mean.flags.writeable = False
        scale.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "scale", scale)


def flatten(aligned: np.ndarray) -> FeatureVector:
    """[x0, y0, x1, y1, ...] in landmark-index order."""
    points = np.asarray(aligned, dtype=np.float64)
    if points.shape != (N_LANDMARKS, 2):
        raise DimensionMismatch(f"expected ({N_LANDMARKS}, 2) points, got {points.shape}")
    return FeatureVector(values=points.reshape(-1), standardized=False)


def unflatten(feature: FeatureVector | np.ndarray) -> np.ndarray:
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature)
    return values.reshape(N_LANDMARKS, 2).copy()


def fit_standardizer(features: list[FeatureVector] | np.ndarray) -> Standardizer:
    """Fit per-component mean and population std (divide by n).

    Components whose std falls below 1e-12 get scale 1 so standardizing
    degenerate synthetic data never divides by zero.
    """
    matrix = as_matrix(features)
    n = matrix.shape[0]
    if n < 2:
        raise TooFewSamples(f"need >= 2 samples to fit a standardizer, got {n}")
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # population: divide by n
    scale = np.where(std < _ZERO_VARIANCE_FLOOR, 1.0, std)
    return Standardizer(mean=mean, scale=scale, sample_count=n)


def standardize(standardizer: Standardizer, feature: FeatureVector) -> FeatureVector:
    if feature.standardized:
        raise AlreadyStandardized("feature vector is already standardized")
    values = (feature.values - standardizer.mean) / standardizer.scale
    return FeatureVector(values=values, standardized=True)


def unstandardize(standardizer: Standardizer, feature: FeatureVector) -> FeatureVector:
    if not feature.standardized:
        raise AlreadyStandardized("feature vector is not standardized")
    values = feature.values * standardizer.scale + standardizer.mean
    return FeatureVector(values=values, standardized=False)


def standardize_matrix(standardizer: Standardizer, matrix: np.ndarray) -> np.ndarray:
    """Vectorized standardization of an (n, 136) raw feature matrix."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != N_FEATURES:
        raise DimensionMismatch(f"expected (n, {N_FEATURES}) matrix, got {matrix.shape}")
    return (matrix - standardizer.mean) / standardizer.scale


def as_matrix(features: list[FeatureVector] | np.ndarray) -> np.ndarray:
    """Stack feature vectors into an (n, 136) array."""
    if isinstance(features, np.ndarray):
        matrix = np.asarray(features, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] != N_FEATURES:
            raise DimensionMismatch(f"expected (n, {N_FEATURES}) matrix, got {matrix.shape}")
        return matrix
    return np.array([f.values for f in features], dtype=np.float64)
