"""Warping landmark sets onto a canonical reference shape.

Each face is mapped into the unit square by a least-squares affine transform
estimated from the inner landmarks only (jaw contour excluded), so face
outline variation does not steer the fit. The reference shape itself is the
generalized-Procrustes mean of training real faces, rescaled into the unit
square with a margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import N_LANDMARKS, LandmarkSet
from .errors import (
    DegenerateLandmarks,
    DegenerateSource,
    EmptyIndexSet,
    EmptyInput,
)

INNER_INDICES = tuple(range(17, N_LANDMARKS))  # everything but the jaw contour

_GPA_SUBSAMPLE_LIMIT = 5000


@dataclass(frozen=True)
class AffineTransform:
    """Planar affine map p -> linear @ p + translation."""

    linear: np.ndarray  # (2, 2)
    translation: np.ndarray  # (2,)

    def __post_init__(self):
        lin = np.asarray(self.linear, dtype=np.float64).reshape(2, 2)
        tr = np.asarray(self.translation, dtype=np.float64).reshape(2)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(tr))):
            raise ValueError("affine transform entries must be finite")
        lin.flags.writeable = False
        tr.flags.writeable = False
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "translation", tr)

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """Return the transform equal to applying ``inner`` first, then self."""
        return AffineTransform(
            linear=self.linear @ inner.linear,
            translation=self.linear @ inner.translation + self.translation,
        )


@dataclass(frozen=True)
class AlignmentConfig:
    inner_indices: tuple[int, ...] = INNER_INDICES
    gpa_max_iterations: int = 10
    gpa_tolerance: float = 1e-8
    reference_margin: float = 0.05

    def __post_init__(self):
        idx = tuple(int(i) for i in self.inner_indices)
        if len(idx) < 3:
            raise ValueError("inner_indices needs at least 3 landmarks")
        if any(i < 0 or i >= N_LANDMARKS for i in idx):
            raise ValueError("inner_indices out of range 0..67")
        object.__setattr__(self, "inner_indices", idx)

    def to_dict(self) -> dict:
        return {
            "inner_indices": list(self.inner_indices),
            "gpa_max_iterations": self.gpa_max_iterations,
            "gpa_tolerance": self.gpa_tolerance,
            "reference_margin": self.reference_margin,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AlignmentConfig":
        return cls(
            inner_indices=tuple(data["inner_indices"]),
            gpa_max_iterations=int(data["gpa_max_iterations"]),
            gpa_tolerance=float(data["gpa_tolerance"]),
            reference_margin=float(data["reference_margin"]),
        )


@dataclass(frozen=True)
class ReferenceShape:
    """The canonical 68-point configuration inside the unit square."""

    points: np.ndarray  # (68, 2) in [0, 1]^2
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (N_LANDMARKS, 2):
            raise ValueError(f"reference shape needs {N_LANDMARKS} points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("reference shape has non-finite coordinates")
        if pts.min() < -1e-12 or pts.max() > 1.0 + 1e-12:
            raise ValueError("reference shape leaves the unit square")
        if _points_collinear(pts[list(INNER_INDICES)]):
            raise DegenerateLandmarks("reference inner points are collinear")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)


def _points_collinear(points: np.ndarray, tol: float = 1e-9) -> bool:
    centered = points - points.mean(axis=0)
    scale = np.sqrt((centered**2).sum(axis=1).mean())
    if scale == 0.0:
        return True
    s = np.linalg.svd(centered / scale, compute_uv=False)
    return bool(s[-1] < tol)


def estimate_affine(src: np.ndarray, dst: np.ndarray) -> AffineTransform:
    """Least-squares affine transform over all 6 parameters.

    Minimizes sum_i ||linear @ src_i + translation - dst_i||^2. The source
    points are centered and scaled before solving so the fit stays accurate
    for pixel-scale inputs; the result is mathematically unchanged.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError("src and dst must both be (k, 2) arrays")
    k = src.shape[0]
    if k < 3:
        raise DegenerateSource(f"need at least 3 correspondences, got {k}")
    if _points_collinear(src):
        raise DegenerateSource("source points are collinear or coincident")

    center = src.mean(axis=0)
    scale = np.sqrt(((src - center) ** 2).sum(axis=1).mean())
    norm = (src - center) / scale

    design = np.column_stack([norm, np.ones(k)])
    solution, _, rank, _ = np.linalg.lstsq(design, dst, rcond=None)
    if rank < 3:
        raise DegenerateSource("normal equations are singular")
    linear_norm = solution[:2].T  # rows of solution are the x/y coefficients
    offset_norm = solution[2]
    linear = linear_norm / scale
    translation = offset_norm - linear @ center
    return AffineTransform(linear=linear, translation=translation)


def apply_affine(transform: AffineTransform, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    return points @ transform.linear.T + transform.translation


def estimate_similarity(src: np.ndarray, dst: np.ndarray) -> AffineTransform:
    """Least-squares similarity transform (rotation + uniform scale + shift).

    Closed-form solution of the linear system in (a, b, tx, ty) with
    linear part [[a, -b], [b, a]].
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    src_c = src.mean(axis=0)
    dst_c = dst.mean(axis=0)
    p = src - src_c
    q = dst - dst_c
    denom = (p**2).sum()
    if denom <= 0.0:
        raise DegenerateSource("similarity fit from coincident points")
    a = (p * q).sum() / denom
    b = (p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]).sum() / denom
    linear = np.array([[a, -b], [b, a]])
    translation = dst_c - linear @ src_c
    return AffineTransform(linear=linear, translation=translation)


def align(
    landmarks: LandmarkSet | np.ndarray,
    reference: ReferenceShape,
    config: AlignmentConfig | None = None,
) -> np.ndarray:
    """Warp all 68 landmarks onto the reference.

    The transform is fit on the configured inner subset only, then applied to
    every point. Output coordinates are not clipped to the unit square:
    points that land outside it are legitimate features.
    """
    config = config or AlignmentConfig()
    points = landmarks.points if isinstance(landmarks, LandmarkSet) else np.asarray(landmarks)
    idx = list(config.inner_indices)
    try:
        transform = estimate_affine(points[idx], reference.points[idx])
    except DegenerateSource as exc:
        raise DegenerateLandmarks(f"inner landmarks degenerate: {exc}") from exc
    return apply_affine(transform, points)


def residual(
    aligned: np.ndarray, reference: ReferenceShape, indices: Sequence[int]
) -> float:
    """Root-mean-square distance between aligned and reference points."""
    idx = list(indices)
    if not idx:
        raise EmptyIndexSet("residual needs a nonempty index set")
    diff = np.asarray(aligned)[idx] - reference.points[idx]
    return float(np.sqrt((diff**2).sum(axis=1).mean()))


def _normalize_similarity(points: np.ndarray) -> np.ndarray:
    """Center at the origin and scale to unit root-mean-square radius."""
    centered = points - points.mean(axis=0)
    size = np.sqrt((centered**2).sum(axis=1).mean())
    if size <= 0.0:
        raise DegenerateLandmarks("shape collapsed to a point during GPA")
    return centered / size


def _rescale_to_unit_square(points: np.ndarray, margin: float) -> np.ndarray:
    """Min-max map of the bounding box into [margin, 1-margin]^2.

    Aspect ratio is preserved: the longer axis spans the full margin box and
    the shorter axis is centered inside it.
    """
    lo = points.min(axis=0)
    extent = points.max(axis=0) - lo
    longest = extent.max()
    if longest <= 0.0:
        raise DegenerateLandmarks("degenerate bounding box")
    span = 1.0 - 2.0 * margin
    scale = span / longest
    scaled = (points - lo) * scale
    slack = (span - extent * scale) / 2.0
    return margin + scaled + slack


def compute_reference_shape(
    training_reals: Iterable[LandmarkSet] | Sequence[np.ndarray],
    config: AlignmentConfig | None = None,
    seed: int = 0,
) -> ReferenceShape:
    """Build the canonical reference by generalized Procrustes analysis.

    Similarity transforms (not full affine) are used during the iteration so
    the mean cannot collapse; the converged mean is then rescaled into the
    unit square. More than 5000 input shapes are reduced to a seeded
    subsample of 5000.
    """
    config = config or AlignmentConfig()
    shapes = [
        np.asarray(s.points if isinstance(s, LandmarkSet) else s, dtype=np.float64)
        for s in training_reals
    ]
    if not shapes:
        raise EmptyInput("reference shape needs at least one landmark set")
    for s in shapes:
        if _points_collinear(s):
            raise DegenerateLandmarks("an input shape is collinear")

    n_total = len(shapes)
    if n_total > _GPA_SUBSAMPLE_LIMIT:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A]))
        pick = rng.permutation(n_total)[:_GPA_SUBSAMPLE_LIMIT]
        shapes = [shapes[i] for i in sorted(pick)]

    reference = shapes[0]
    iterations = 0
    converged = False
    previous: np.ndarray | None = None
    for iterations in range(1, config.gpa_max_iterations + 1):
        stack = np.empty((len(shapes), N_LANDMARKS, 2))
        for i, shape in enumerate(shapes):
            transform = estimate_similarity(shape, reference)
            stack[i] = apply_affine(transform, shape)
        mean = _normalize_similarity(stack.mean(axis=0))
        if previous is not None:
            movement = float(np.sqrt(((mean - previous) ** 2).sum(axis=1).mean()))
            if movement < config.gpa_tolerance:
                reference = mean
                converged = True
                break
        previous = mean
        reference = mean

    points = _rescale_to_unit_square(reference, config.reference_margin)
    return ReferenceShape(
        points=points,
        provenance={
            "sample_count": n_total,
            "seed": seed,
            "iterations": iterations,
            "converged": converged,
        },
    )
