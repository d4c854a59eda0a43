"""Class-weighted soft-margin RBF SVM trained by sequential minimal optimization.

The dual problem solved here is

    max_a  sum_i a_i - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t.   0 <= a_i <= c * w_{y_i},   sum_i a_i y_i = 0

with per-sample box constraints carrying the class weights. Pair updates
follow Platt's closed-form two-variable step; the second index of each pair
is drawn from a seeded generator so training is reproducible.

Fake faces are the positive class (+1): positive decision scores mean
"synthesized".
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .align import AlignmentConfig, ReferenceShape, align
from .dataset import Label, LandmarkSet
from .errors import (
    ComputeError,
    CorruptModel,
    DimensionMismatch,
    IoFailure,
    NoConvergenceWarning,
    SchemaVersionMismatch,
    SingleClass,
    UnlabeledRecord,
)
from .features import FeatureVector,N_FEATURES, Standardizer, flatten, standardize

MODEL_SCHEMA_VERSION = 1

_SV_THRESHOLD = 1e-8
_MIN_ALPHA_STEP = 1e-5
_HARD_SWEEP_CAP = 10_000


@dataclass(frozen=True)
class KernelParams:
    """RBF kernel width: k(x, z) = exp(-gamma * ||x - z||^2)."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")


@dataclass(frozen=True)
class TrainParams:
    c: float
    kernel: KernelParams
    class_weights: dict[Label, float]
    kkt_tolerance: float = 1e-3
    max_passes: int = 10
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.c) and self.c > 0):
            raise ValueError(f"c must be positive, got {self.c}")
        for label in (Label.REAL, Label.FAKE):
            w = self.class_weights.get(label)
            if w is None or not (np.isfinite(w) and w > 0):
                raise ValueError(f"class weight for {label} must be positive")


@dataclass(frozen=True)
class SvmModel:
    """Trained decision function plus everything needed for end-to-end inference."""

    support_vectors: np.ndarray  # (m, d)
    dual_coefficients: np.ndarray  # (m,), alpha_i * y_i
    bias: float
    kernel: KernelParams
    standardizer: Standardizer | None = None
    reference_shape: ReferenceShape | None = None
    alignment_config: AlignmentConfig | None = None
    class_weights: dict[Label, float] = field(default_factory=dict)
    training_metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        coef = np.asarray(self.dual_coefficients, dtype=np.float64)
        if sv.ndim != 2 or coef.shape != (sv.shape[0],):
            raise ValueError("support vector / coefficient shapes disagree")
        if sv.shape[0] < 1:
            raise ValueError("a model needs at least one support vector")
        if not (np.all(np.isfinite(sv)) and np.all(np.isfinite(coef)) and np.isfinite(self.bias)):
            raise ValueError("model parameters must be finite")
        if np.any(coef == 0.0):
            raise ValueError("dual coefficients of support vectors cannot be zero")
        if abs(coef.sum()) > 1e-6:
            raise ValueError(f"dual coefficients must sum to 0, got {coef.sum():.3e}")
        sv.flags.writeable = False
        coef.flags.writeable = False
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefficients", coef)


def rbf_kernel(x: np.ndarray, z: np.ndarray, params: KernelParams) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if x.shape != z.shape:
        raise DimensionMismatch(f"kernel arguments differ in dimension: {x.shape} vs {z.shape}")
    diff = x - z
    return float(np.exp(-params.gamma * np.dot(diff, diff)))


def rbf_gram(features: np.ndarray, gamma: float) -> np.ndarray:
    """Full kernel matrix; fine for desk-scale n, quadratic in memory."""
    X = np.asarray(features, dtype=np.float64)
    sq = (X**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


def compute_class_weights(labels: Sequence[Label]) -> dict[Label, float]:
    """Weights inversely proportional to class frequency: w_c = N / (2 * N_c)."""
    n_real = sum(1 for lb in labels if lb is Label.REAL)
    n_fake = sum(1 for lb in labels if lb is Label.FAKE)
    if n_real + n_fake != len(labels):
        raise UnlabeledRecord("class weights need fully labeled data")
    if n_real == 0 or n_fake == 0:
        raise SingleClass("both classes must be present")
    n = n_real + n_fake
    return {Label.REAL: n / (2.0 * n_real), Label.FAKE: n / (2.0 * n_fake)}


def labels_to_y(labels: Sequence[Label]) -> np.ndarray:
    """Real -> -1, Fake -> +1."""
    y = np.empty(len(labels))
    for i, lb in enumerate(labels):
        if lb is Label.REAL:
            y[i] = -1.0
        elif lb is Label.FAKE:
            y[i] = 1.0
        else:
            raise UnlabeledRecord(f"sample {i} is unlabeled")
    return y


def dual_objective(gram: np.ndarray, y: np.ndarray, alpha: np.ndarray) -> float:
    """Value of the dual being maximized; shared definition for solver and tests."""
    coef = alpha * y
    return float(alpha.sum() - 0.5 * coef @ gram @ coef)


def _kkt_violations(alpha, r, c_vec):
    """Per-sample KKT residual magnitude given r_i = y_i f_i - 1."""
    at_zero = alpha <= _SV_THRESHOLD
    at_upper = alpha >= c_vec - _SV_THRESHOLD
    viol = np.abs(r)
    viol = np.where(at_zero, np.maximum(0.0, -r), viol)
    viol = np.where(at_upper, np.maximum(0.0, r), viol)
    return viol


def _finalize_bias(gram, y, alpha, c_vec):
    """Bias making the KKT conditions hold on free support vectors (averaged).

    Without free vectors, take the midpoint of the feasible bias interval
    implied by the bound samples.
    """
    f0 = gram @ (alpha * y)
    margin_b = y - f0  # bias that would put sample i exactly on its margin
    free = (alpha > _SV_THRESHOLD) & (alpha < c_vec - _SV_THRESHOLD)
    if np.any(free):
        return float(margin_b[free].mean())
    at_zero = alpha <= _SV_THRESHOLD
    lower_set = ((y > 0) & at_zero) | ((y < 0) & ~at_zero)
    upper_set = ((y > 0) & ~at_zero) | ((y < 0) & at_zero)
    lo = margin_b[lower_set].max() if np.any(lower_set) else None
    hi = margin_b[upper_set].min() if np.any(upper_set) else None
    if lo is None and hi is None:
        return 0.0
    if lo is None:
        return float(hi)
    if hi is None:
        return float(lo)
    return float((lo + hi) / 2.0)


def _pair_step(i, j, alpha, errors, gram, y, c_vec, bias):
    """Platt's two-variable update. Returns the new bias or None if no progress.

    Mutates alpha and the error cache in place on success; the update keeps
    sum_i alpha_i y_i exactly invariant.
    """
    ai, aj = alpha[i], alpha[j]
    yi, yj = y[i], y[j]
    s = yi * yj
    if s < 0:
        low = max(0.0, aj - ai)
        high = min(c_vec[j], c_vec[i] + aj - ai)
    else:
        low = max(0.0, ai + aj - c_vec[i])
        high = min(c_vec[j], ai + aj)
    if low >= high:
        return None

    kii, kjj, kij = gram[i, i], gram[j, j], gram[i, j]
    eta = kii + kjj - 2.0 * kij
    ei, ej = errors[i], errors[j]
    if eta > 0.0:
        aj_new = aj + yj * (ei - ej) / eta
        aj_new = min(max(aj_new, low), high)
    else:
        # objective is flat or concave along the pair direction: test the ends
        f1 = yi * (ei + bias) - ai * kii - s * aj * kij
        f2 = yj * (ej + bias) - s * ai * kij - aj * kjj
        l1 = ai + s * (aj - low)
        h1 = ai + s * (aj - high)
        low_obj = l1 * f1 + low * f2 + 0.5 * l1**2 * kii + 0.5 * low**2 * kjj + s * low * l1 * kij
        high_obj = h1 * f1 + high * f2 + 0.5 * h1**2 * kii + 0.5 * high**2 * kjj + s * high * h1 * kij
        if low_obj < high_obj - 1e-12:
            aj_new = low
        elif low_obj > high_obj + 1e-12:
            aj_new = high
        else:
            return None
    if abs(aj_new - aj) < _MIN_ALPHA_STEP:
        return None

    ai_new = ai + s * (aj - aj_new)
    ai_new = min(max(ai_new, 0.0), c_vec[i])

    d_i = yi * (ai_new - ai)
    d_j = yj * (aj_new - aj)
    b1 = bias - ei - d_i * kii - d_j * kij
    b2 = bias - ej - d_i * kij - d_j * kjj
    if _SV_THRESHOLD < ai_new < c_vec[i] - _SV_THRESHOLD:
        new_bias = b1
    elif _SV_THRESHOLD < aj_new < c_vec[j] - _SV_THRESHOLD:
        new_bias = b2
    else:
        new_bias = (b1 + b2) / 2.0

    errors += d_i * gram[i] + d_j * gram[j] + (new_bias - bias)
    alpha[i] = ai_new
    alpha[j] = aj_new
    return new_bias


def train_smo(
    features: np.ndarray,
    labels: Sequence[Label] | np.ndarray,
    params: TrainParams,
) -> SvmModel:
    """Solve the class-weighted dual by SMO.

    Sweeps the KKT violators, pairing each with seeded-random partners until a
    step moves some alpha by more than 1e-5. Training converges when a sweep
    finds no violator beyond ``kkt_tolerance``; after ``max_passes``
    consecutive sweeps without any change it stops and, if violations remain,
    emits a NoConvergenceWarning (the model is still returned).
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("training needs an (n >= 2, d) feature matrix")
    if isinstance(labels, np.ndarray) and labels.dtype != object:
        y = np.asarray(labels, dtype=np.float64)
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("numeric labels must be -1 or +1")
    else:
        y = labels_to_y(list(labels))
    n = X.shape[0]
    if y.shape != (n,):
        raise DimensionMismatch("labels and features disagree in length")
    if np.all(y > 0) or np.all(y < 0):
        raise SingleClass("training needs both classes")

    w_real = params.class_weights[Label.REAL]
    w_fake = params.class_weights[Label.FAKE]
    c_vec = params.c * np.where(y > 0, w_fake, w_real)

    gram = rbf_gram(X, params.kernel.gamma)
    alpha = np.zeros(n)
    bias = 0.0
    rng = np.random.default_rng(np.random.SeedSequence([params.seed]))
    tol = params.kkt_tolerance

    sweeps = 0
    quiet_sweeps = 0
    converged = False
    while sweeps < _HARD_SWEEP_CAP:
        sweeps += 1
        coef = alpha * y
        errors = gram @ coef + bias - y
        r = errors * y
        violators = np.flatnonzero(
            ((r < -tol) & (alpha < c_vec - 1e-12)) | ((r > tol) & (alpha > 1e-12))
        )
        if violators.size == 0:
            converged = True
            break
        changed = 0
        for i in violators:
            ri = errors[i] * y[i]
            still = (ri < -tol and alpha[i] < c_vec[i] - 1e-12) or (
                ri > tol and alpha[i] > 1e-12
            )
            if not still:
                continue
            for j in rng.permutation(n):
                if j == i:
                    continue
                new_bias = _pair_step(i, j, alpha, errors, gram, y, c_vec, bias)
                if new_bias is not None:
                    bias = new_bias
                    changed += 1
                    break
        if changed == 0:
            quiet_sweeps += 1
            if quiet_sweeps >= params.max_passes:
                break
        else:
            quiet_sweeps = 0

    bias = _finalize_bias(gram, y, alpha, c_vec)
    coef = alpha * y
    r = (gram @ coef + bias - y) * y
    max_violation = float(_kkt_violations(alpha, r, c_vec).max())
    if not converged and max_violation > tol:
        warnings.warn(
            f"SMO stopped after {sweeps} sweeps with max KKT violation "
            f"{max_violation:.3e} (tolerance {tol:.1e})",
            NoConvergenceWarning,
        )

    support = np.flatnonzero(alpha > _SV_THRESHOLD)
    if support.size == 0:
        raise ComputeError("SMO produced no support vectors")

    metadata = {
        "solver": "smo",
        "c": params.c,
        "seed": params.seed,
        "kkt_tolerance": params.kkt_tolerance,
        "max_passes": params.max_passes,
        "sweeps": sweeps,
        "converged": converged,
        "max_kkt_violation": max_violation,
        "support_indices": [int(i) for i in support],
        "parameter_count": int(support.size * (X.shape[1] + 1) + 1),
    }
    return SvmModel(
        support_vectors=X[support],
        dual_coefficients=(alpha * y)[support],
        bias=bias,
        kernel=params.kernel,
        class_weights=dict(params.class_weights),
        training_metadata=metadata,
    )


# -- inference ----------------------------------------------------------------

_BATCH_CHUNK = 256


def decision_many(model: SvmModel, features: np.ndarray) -> np.ndarray:
    """Decision scores for an (n, d) batch; positive means Fake."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    sv = model.support_vectors
    if X.shape[1] != sv.shape[1]:
        raise DimensionMismatch(
            f"feature dimension {X.shape[1]} != support vector dimension {sv.shape[1]}"
        )
    gamma = model.kernel.gamma
    out = np.empty(X.shape[0])
    for start in range(0, X.shape[0], _BATCH_CHUNK):
        block = X[start : start + _BATCH_CHUNK]
        diff = block[:, None, :] - sv[None, :, :]
        d2 = np.einsum("bmd,bmd->bm", diff, diff)
        k = np.exp(-gamma * d2)
        out[start : start + _BATCH_CHUNK] = (
            np.sum(k * model.dual_coefficients, axis=1) + model.bias
        )
    return out


def decision(model: SvmModel, feature: FeatureVector | np.ndarray) -> float:
    values = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature)
    return float(decision_many(model, values[None, :])[0])


def predict_face(model: SvmModel, landmarks: LandmarkSet) -> tuple[Label, float]:
    """Full pipeline on one face: align, flatten, standardize, score."""
    if model.reference_shape is None or model.standardizer is None:
        raise ValueError("model lacks the alignment/standardization state for inference")
    aligned = align(landmarks, model.reference_shape, model.alignment_config)
    feature = standardize(model.standardizer, flatten(aligned))
    score = decision(model, feature)
    return (Label.FAKE if score > 0 else Label.REAL, score)


# -- persistence ----------------------------------------------------------------

def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_vec(values) -> list[str]:
    return [_fmt(v) for v in np.asarray(values, dtype=np.float64).reshape(-1)]


def _stringify_reals(obj):
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, dict):
        return {k: _stringify_reals(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_stringify_reals(v) for v in obj]
    return obj


def save_model(model: SvmModel, path: str | Path) -> None:
    """Write the model as JSON with every real serialized as a decimal string
    that round-trips the exact 64-bit value."""
    if model.standardizer is None or model.reference_shape is None or model.alignment_config is None:
        raise ValueError("only full pipeline models can be saved")
    if model.support_vectors.shape[1] != N_FEATURES:
        raise ValueError("only 136-D models can be saved")
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "gamma": _fmt(model.kernel.gamma),
        "bias": _fmt(model.bias),
        "support_vectors": [_fmt_vec(row) for row in model.support_vectors],
        "dual_coefficients": _fmt_vec(model.dual_coefficients),
        "standardizer": {
            "mean": _fmt_vec(model.standardizer.mean),
            "scale": _fmt_vec(model.standardizer.scale),
            "sample_count": model.standardizer.sample_count,
        },
        "reference_shape": [[_fmt(x), _fmt(y)] for x, y in model.reference_shape.points],
        "alignment_config": _stringify_reals(model.alignment_config.to_dict()),
        "class_weights": {
            "real": _fmt(model.class_weights[Label.REAL]),
            "fake": _fmt(model.class_weights[Label.FAKE]),
        },
        "training_metadata": _stringify_reals(model.training_metadata),
    }
    text = json.dumps(doc, separators=(",", ":")) + "\n"
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write model file {path}: {exc}") from exc


def load_model(path: str | Path) -> SvmModel:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read model file {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptModel(f"model file is not valid JSON: {exc}") from exc

    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise SchemaVersionMismatch(
            f"unsupported model schema version {version!r} (expected {MODEL_SCHEMA_VERSION})"
        )
    try:
        sv = np.array([[float(v) for v in row] for row in doc["support_vectors"]])
        coef = np.array([float(v) for v in doc["dual_coefficients"]])
        std = doc["standardizer"]
        standardizer = Standardizer(
            mean=np.array([float(v) for v in std["mean"]]),
            scale=np.array([float(v) for v in std["scale"]]),
            sample_count=int(std["sample_count"]),
        )
        reference = ReferenceShape(
            points=np.array([[float(x), float(y)] for x, y in doc["reference_shape"]]),
            provenance={"source": str(path)},
        )
        config_doc = dict(doc["alignment_config"])
        config = AlignmentConfig(
            inner_indices=tuple(int(i) for i in config_doc["inner_indices"]),
            gpa_max_iterations=int(config_doc["gpa_max_iterations"]),
            gpa_tolerance=float(config_doc["gpa_tolerance"]),
            reference_margin=float(config_doc["reference_margin"]),
        )
        weights = {
            Label.REAL: float(doc["class_weights"]["real"]),
            Label.FAKE: float(doc["class_weights"]["fake"]),
        }
        metadata = doc.get("training_metadata", {})
        model = SvmModel(
            support_vectors=sv,
            dual_coefficients=coef,
            bias=float(doc["bias"]),
            kernel=KernelParams(gamma=float(doc["gamma"])),
            standardizer=standardizer,
            reference_shape=reference,
            alignment_config=config,
            class_weights=weights,
            training_metadata=metadata,
        )
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptModel(f"model file violates invariants: {exc}") from exc

    if sv.shape[1] != N_FEATURES:
        raise CorruptModel(f"support vectors must be {N_FEATURES}-D, got {sv.shape[1]}")
    c = metadata.get("c")
    if c is not None:
        c = float(c)
        box = np.where(coef > 0, c * weights[Label.FAKE], c * weights[Label.REAL])
        if np.any(np.abs(coef) > box + 1e-9):
            raise CorruptModel("a dual coefficient exceeds its box constraint")
    return model
