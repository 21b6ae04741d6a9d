"""Patch classifiers.

A classifier is any object with an integer ``patch_size`` and a
``classify(patch) -> ndarray`` method returning 10 class probabilities. The
built-in classifiers also expose ``classify_features`` so the segmenter can
feed them features computed in bulk from summed-area tables.

Features are derived from exact integer channel sums, which makes the bulk
route and the per-patch route produce bit-identical results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import NUM_CLASSES, Palette, Raster

MODEL_MAGIC = "landpatch-model v1"
KINDS = ("constant", "centroid", "linear_softmax")


class ModelFileError(ValueError):
    """Raised when a model file cannot be parsed."""


class PatchSizeError(ValueError):
    """Raised when a patch does not match a classifier's declared size."""


@dataclass(frozen=True)
class PatchFeatures:
    """Per-channel population mean and standard deviation of a patch."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]

    def as_array(self) -> np.ndarray:
        return np.array(self.mean + self.std, dtype=np.float64)


def channel_sums(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact per-channel sum and sum of squares of an (h, w, 3) uint8 block."""
    flat = pixels.reshape(-1, 3).astype(np.int64)
    return flat.sum(axis=0), (flat * flat).sum(axis=0)


def features_from_sums(s: np.ndarray, ss: np.ndarray, n: int) -> np.ndarray:
    """Build the (..., 6) feature array from integer sums over ``n`` pixels.

    The variance numerator ``n*ss - s*s`` is formed in integers so it is exact.
    """
    s = np.asarray(s, dtype=np.int64)
    ss = np.asarray(ss, dtype=np.int64)
    if n <= (1 << 20):
        num = n * ss - s * s
    else:  # guards int64 overflow for very large patches
        num = np.asarray(n * ss.astype(object) - s.astype(object) ** 2, dtype=np.float64)
    mean = s.astype(np.float64) / n
    std = np.sqrt(np.asarray(num, dtype=np.float64)) / n
    return np.concatenate([mean, std], axis=-1)


def extract_features(patch: Raster) -> PatchFeatures:
    n = patch.width * patch.height
    s, ss = channel_sums(patch.pixels)
    f = features_from_sums(s, ss, n)
    return PatchFeatures(tuple(float(v) for v in f[:3]), tuple(float(v) for v in f[3:]))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the last axis of a (..., 10) array.

    Reductions are written as explicit lane loops so a single row and a batch
    give the same bits.
    """
    logits = np.asarray(logits, dtype=np.float64)
    top = logits[..., 0].copy()
    for k in range(1, logits.shape[-1]):
        top = np.maximum(top, logits[..., k])
    e = np.exp(logits - top[..., None])
    total = e[..., 0].copy()
    for k in range(1, e.shape[-1]):
        total = total + e[..., k]
    return e / total[..., None]


def _one_hot(labels: np.ndarray) -> np.ndarray:
    out = np.zeros(labels.shape + (NUM_CLASSES,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


class _FeatureClassifier:
    patch_size: int

    def _check(self, patch: Raster) -> None:
        if patch.width != self.patch_size or patch.height != self.patch_size:
            raise PatchSizeError(
                f"patch is {patch.width}x{patch.height}, classifier expects "
                f"{self.patch_size}x{self.patch_size}"
            )

    def classify(self, patch: Raster) -> np.ndarray:
        self._check(patch)
        s, ss = channel_sums(patch.pixels)
        feats = features_from_sums(s, ss, self.patch_size * self.patch_size)
        return self.classify_features(feats[None, :])[0]

    def classify_features(self, features: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class ConstantClassifier(_FeatureClassifier):
    """Always predicts one class with probability 1."""

    kind = "constant"

    def __init__(self, label: int, patch_size: int = 256):
        if not 0 <= label < NUM_CLASSES:
            raise ValueError(f"class {label} out of range")
        self.label = int(label)
        self.patch_size = int(patch_size)

    def classify_features(self, features):
        labels = np.full(len(features), self.label, dtype=np.intp)
        return _one_hot(labels)


class CentroidClassifier(_FeatureClassifier):
    """Nearest centroid on mean RGB; ties go to the lowest class index."""

    kind = "centroid"

    def __init__(self, centroids, patch_size: int = 256):
        c = np.array(centroids, dtype=np.float64)
        if c.shape != (NUM_CLASSES, 3) or not np.all(np.isfinite(c)):
            raise ValueError("centroids must be a finite 10x3 array")
        self.centroids = c
        self.centroids.flags.writeable = False
        self.patch_size = int(patch_size)

    @classmethod
    def from_palette(cls, palette: Palette, patch_size: int = 256) -> CentroidClassifier:
        return cls([c.color for c in palette.classes], patch_size)

    def classify_features(self, features):
        mean = np.asarray(features, dtype=np.float64)[:, :3]
        diff = mean[:, None, :] - self.centroids[None, :, :]
        sq = diff * diff
        dist = sq[..., 0] + sq[..., 1] + sq[..., 2]
        return _one_hot(np.argmin(dist, axis=1))


@dataclass(frozen=True)
class LinearSoftmaxModel:
    weights: np.ndarray        # (10, 6)
    biases: np.ndarray         # (10,)
    feature_scale: np.ndarray  # (6,)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64)
        s = np.array(self.feature_scale, dtype=np.float64)
        if w.shape != (NUM_CLASSES, 6) or b.shape != (NUM_CLASSES,) or s.shape != (6,):
            raise ValueError("linear model needs 10x6 weights, 10 biases, 6 scales")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
            raise ValueError("linear model parameters must be finite")
        if np.any(s <= 0):
            raise ValueError("feature_scale entries must be > 0")
        for name, arr in (("weights", w), ("biases", b), ("feature_scale", s)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def classify_linear(model: LinearSoftmaxModel, features) -> np.ndarray:
    """Softmax of ``weights @ (features / feature_scale) + biases``.

    Accepts a single 6-vector (or PatchFeatures) or an (N, 6) batch.
    """
    if isinstance(features, PatchFeatures):
        features = features.as_array()
    x = np.asarray(features, dtype=np.float64) / model.feature_scale
    logits = np.broadcast_to(model.biases, x.shape[:-1] + (NUM_CLASSES,)).copy()
    for j in range(6):
        logits = logits + x[..., j:j + 1] * model.weights[:, j]
    return softmax(logits)


class LinearSoftmaxClassifier(_FeatureClassifier):
    kind = "linear_softmax"

    def __init__(self, model: LinearSoftmaxModel, patch_size: int = 256):
        self.model = model
        self.patch_size = int(patch_size)

    def classify_features(self, features):
        return classify_linear(self.model, features)


def classify(model, patch: Raster) -> np.ndarray:
    """Classify one patch with any classifier honouring the contract."""
    size = model.patch_size
    if patch.width != size or patch.height != size:
        raise PatchSizeError(
            f"patch is {patch.width}x{patch.height}, classifier expects {size}x{size}"
        )
    return model.classify(patch)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def _floats(tokens, lineno) -> list[float]:
    try:
        vals = [float(t) for t in tokens]
    except ValueError:
        raise ModelFileError(f"malformed model file: bad number on line {lineno}") from None
    if not all(math.isfinite(v) for v in vals):
        raise ModelFileError(f"malformed model file: non-finite value on line {lineno}")
    return vals


def _class_rows(lines, width, what) -> list[list[float]]:
    if len(lines) != NUM_CLASSES:
        raise ModelFileError(
            f"malformed model file: expected {NUM_CLASSES} {what} lines, got {len(lines)}"
        )
    rows: dict[int, list[float]] = {}
    for lineno, tokens in lines:
        if len(tokens) != width + 1:
            raise ModelFileError(
                f"malformed model file: line {lineno} needs {width + 1} fields"
            )
        try:
            k = int(tokens[0])
        except ValueError:
            raise ModelFileError(f"malformed model file: bad class index on line {lineno}") from None
        if not 0 <= k < NUM_CLASSES or k in rows:
            raise ModelFileError(f"malformed model file: bad class index {k} on line {lineno}")
        rows[k] = _floats(tokens[1:], lineno)
    return [rows[k] for k in range(NUM_CLASSES)]


def load_model(path):
    """Parse a ``landpatch-model v1`` file into a classifier."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"{path}: cannot read model file ({exc.strerror or exc})") from exc
    lines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        stripped = raw.strip()
        if stripped and not stripped.startswith("#"):
            lines.append((lineno, stripped.split()))
    if len(lines) < 3 or " ".join(lines[0][1]) != MODEL_MAGIC:
        raise ModelFileError("malformed model file: missing header")
    (_, kind_tok), (_, size_tok) = lines[1], lines[2]
    if len(kind_tok) != 2 or kind_tok[0] != "kind":
        raise ModelFileError("malformed model file: missing kind line")
    kind = kind_tok[1]
    if kind not in KINDS:
        raise ModelFileError(f"malformed model file: unknown kind {kind!r}")
    if len(size_tok) != 2 or size_tok[0] != "patch_size" or not size_tok[1].isdigit():
        raise ModelFileError("malformed model file: missing patch_size line")
    patch_size = int(size_tok[1])
    if patch_size < 1:
        raise ModelFileError("malformed model file: patch_size must be positive")
    body = lines[3:]

    if kind == "constant":
        if len(body) != 1 or len(body[0][1]) != 2 or body[0][1][0] != "class":
            raise ModelFileError("malformed model file: constant model needs 'class <k>'")
        try:
            k = int(body[0][1][1])
        except ValueError:
            raise ModelFileError("malformed model file: bad class index") from None
        if not 0 <= k < NUM_CLASSES:
            raise ModelFileError(f"malformed model file: class {k} out of range")
        return ConstantClassifier(k, patch_size)

    if kind == "centroid":
        return CentroidClassifier(_class_rows(body, 3, "centroid"), patch_size)

    if not body or body[0][1][0] != "scale" or len(body[0][1]) != 7:
        raise ModelFileError("malformed model file: linear_softmax needs 'scale s1..s6'")
    scale = _floats(body[0][1][1:], body[0][0])
    rows = np.array(_class_rows(body[1:], 7, "weight"))
    try:
        model = LinearSoftmaxModel(rows[:, :6], rows[:, 6], scale)
    except ValueError as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    return LinearSoftmaxClassifier(model, patch_size)


def save_model(classifier, path) -> None:
    out = [MODEL_MAGIC, f"kind {classifier.kind}", f"patch_size {classifier.patch_size}"]
    if classifier.kind == "constant":
        out.append(f"class {classifier.label}")
    elif classifier.kind == "centroid":
        for k, (r, g, b) in enumerate(classifier.centroids):
            out.append(f"{k} {float(r)!r} {float(g)!r} {float(b)!r}")
    else:
        m = classifier.model
        out.append("scale " + " ".join(repr(float(v)) for v in m.feature_scale))
        for k in range(NUM_CLASSES):
            vals = list(m.weights[k]) + [m.biases[k]]
            out.append(f"{k} " + " ".join(repr(float(v)) for v in vals))
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
