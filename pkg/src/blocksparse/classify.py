"""Classification by block-sparse representation over per-class training blocks."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Dictionary, make_rng, random_basis
from .errors import (InconsistentDimensions, NonDivisibleDownsample, RankDeficientCovariance,
                     UnreadableImage, ZeroSignal)
from .solvers import SolveSpec, solve_many

REDUCERS = ("eigen", "rand", "down")
IMAGE_SUFFIXES = (".pgm", ".png")
DEFAULT_DELTA = 0.05
# extra radius when an equality-constrained test vector lies off the dictionary range
WIDEN_SLACK = 1e-6


# -- feature reduction ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureReducer:
    """Linear map to ``dim`` features: PCA (``eigen``), Gaussian projection
    (``rand``) or strided subsampling (``down``)."""

    kind: str
    dim: int
    projection: Optional[np.ndarray] = None
    indices: Optional[np.ndarray] = None
    seed: int = 0
    factor: Optional[int] = None

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "down":
            return x[self.indices]
        return self.projection @ x


def fit_reducer(X, kind: str, dim: int | None = None, seed: int = 0,
                factor: int | None = None, image_shape=None) -> FeatureReducer:
    """Fit a reducer on training columns ``X`` (features x samples).

    ``eigen`` keeps the leading ``dim`` principal directions of the centered
    training data; ``rand`` draws i.i.d. ``N(0, 1/dim)`` entries; ``down``
    keeps every ``factor``-th sample (of each image axis when ``image_shape``
    is given).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[0]
    if kind == "down":
        if factor is None:
            if dim is None or image_shape is not None or p % dim:
                raise NonDivisibleDownsample("give an integer factor dividing the input size")
            factor = p // dim
        factor = int(factor)
        if factor < 1:
            raise NonDivisibleDownsample("downsampling factor must be >= 1")
        if image_shape is not None:
            h, w = image_shape
            if h * w != p:
                raise InconsistentDimensions(f"image shape {image_shape} does not match {p} features")
            if h % factor or w % factor:
                raise NonDivisibleDownsample(f"factor {factor} does not divide image shape {image_shape}")
            idx = np.arange(p).reshape(h, w)[::factor, ::factor].ravel()
        else:
            if p % factor:
                raise NonDivisibleDownsample(f"factor {factor} does not divide length {p}")
            idx = np.arange(0, p, factor)
        return FeatureReducer("down", len(idx), indices=idx, seed=seed, factor=factor)

    if dim is None or not 1 <= dim <= p:
        raise ValueError(f"dim must lie in [1, {p}]")
    if kind == "eigen":
        centered = X - X.mean(axis=1, keepdims=True)
        U, s, _ = np.linalg.svd(centered, full_matrices=False)
        tol = 1e-10 * max(s[0] if s.size else 0.0, 1e-300) * max(centered.shape)
        if int(np.sum(s > tol)) < dim:
            raise RankDeficientCovariance(
                f"training covariance has rank {int(np.sum(s > tol))} < {dim}")
        return FeatureReducer("eigen", dim, projection=U[:, :dim].T.copy(), seed=seed)
    if kind == "rand":
        rng = make_rng(seed, 0)
        return FeatureReducer("rand", dim, projection=rng.normal(0.0, 1.0 / np.sqrt(dim), (dim, p)),
                              seed=seed)
    raise ValueError(f"unknown reducer {kind!r}; choose from {REDUCERS}")


def apply(reducer: FeatureReducer, x) -> np.ndarray:
    return reducer.apply(x)


# -- labeled dictionary -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LabeledDictionary:
    """Dictionary whose block ``i`` holds the training vectors of ``labels[i]``."""

    dictionary: Dictionary
    labels: tuple


def build_labeled_dictionary(X, labels) -> LabeledDictionary:
    """Group training columns by label (sorted) and unit-normalize them."""
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    if X.shape[1] != labels.shape[0]:
        raise InconsistentDimensions("one label per training column is required")
    classes = sorted(set(labels.tolist()))
    blocks = [X[:, labels == c] for c in classes]
    return LabeledDictionary(Dictionary.from_blocks(blocks), tuple(classes))


@dataclass(frozen=True, eq=False)
class Classification:
    """Predicted label with per-class residuals; ``flagged`` marks low confidence."""

    label: object
    residuals: np.ndarray
    converged: bool
    flagged: bool
    reason: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "residuals": self.residuals.tolist(),
                "converged": self.converged, "flagged": self.flagged, "reason": self.reason}


def _normalize_columns(Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    norms = np.linalg.norm(Y, axis=0)
    if np.any(norms == 0):
        raise ZeroSignal("cannot classify a zero test vector")
    return Y / norms


def _pick(labeled: LabeledDictionary, residuals):
    i = int(np.argmin(residuals))  # first minimum, i.e. smallest class index
    tie = np.sum(residuals <= residuals[i] + 1e-12) > 1
    return labeled.labels[i], tie


def classify_many(labeled: LabeledDictionary, Y, spec: SolveSpec | None = None) -> list:
    """Classify every column of ``Y`` by the smallest class reconstruction residual.

    Test vectors are scaled to unit norm.  A vector farther than ``delta``
    from the span of the dictionary cannot meet the ball constraint; it is
    solved with ``delta`` widened by that distance and flagged.
    """
    spec = spec or SolveSpec(family="P'", q=2, delta=DEFAULT_DELTA, certificate=False)
    d = labeled.dictionary
    Y = _normalize_columns(Y)
    if Y.shape[0] != d.D:
        raise InconsistentDimensions(f"test vectors have {Y.shape[0]} features, expected {d.D}")
    B = d.matrix
    slack = spec.delta if spec.delta is not None else 0.0
    dist = np.linalg.norm(Y - B @ np.linalg.lstsq(B, Y, rcond=None)[0], axis=0)
    far = dist > max(slack, 1e-8)
    solutions = [None] * Y.shape[1]
    near = np.flatnonzero(~far)
    if near.size:
        for t, sol in zip(near, solve_many(d, Y[:, near], spec)):
            solutions[t] = sol
    for t in np.flatnonzero(far):
        wide = replace(spec, delta=float(dist[t]) + (slack or WIDEN_SLACK))
        solutions[t] = solve_many(d, Y[:, [t]], wide)[0]

    out = []
    for t, sol in enumerate(solutions):
        c = sol.coefficients.values
        res = np.array([np.linalg.norm(Y[:, t] - d.block(i) @ c[d.structure.slice(i)])
                        for i in range(d.n)])
        label, tie = _pick(labeled, res)
        reasons = []
        if far[t]:
            reasons.append("outside dictionary range, delta widened")
        if not sol.converged:
            reasons.append("solver did not converge")
        if tie:
            reasons.append("tied residuals")
        out.append(Classification(label, res, sol.converged, bool(reasons), "; ".join(reasons)))
    return out


def classify(labeled: LabeledDictionary, y, spec: SolveSpec | None = None) -> Classification:
    return classify_many(labeled, np.asarray(y, dtype=float)[:, None], spec)[0]


def nearest_subspace(labeled: LabeledDictionary, y) -> Classification:
    """Class whose subspace (span of its training block) is closest to ``y``."""
    y = _normalize_columns(y)[:, 0]
    res = np.array([np.linalg.norm(y - A @ (A.T @ y)) for A in labeled.dictionary.bases])
    label, tie = _pick(labeled, res)
    return Classification(label, res, True, bool(tie), "tied residuals" if tie else "")


def accuracy(predictions, truth) -> float:
    labels = [p.label if isinstance(p, Classification) else p for p in predictions]
    return float(np.mean([a == b for a, b in zip(labels, truth)]))


# -- data ----------------------------------------------------------------------

def synthetic_union_of_subspaces(n: int = 10, d: int = 5, m: int = 10, D: int = 60,
                                 noise: float = 0.01, tests_per_class: int = 20,
                                 seed: int = 0):
    """Training and test points drawn from ``n`` random ``d``-dim subspaces of ``R^D``.

    Points are unit vectors of their subspace plus i.i.d. ``N(0, noise^2)``
    entries.  Returns ``(X_train, y_train, X_test, y_test)`` with labels
    ``1..n``.
    """
    X_tr, y_tr, X_te, y_te = [], [], [], []
    for i in range(n):
        basis = random_basis(D, d, make_rng(seed, i, 0))
        rng = make_rng(seed, i, 1)
        for count, X, labels in ((m, X_tr, y_tr), (tests_per_class, X_te, y_te)):
            W = rng.standard_normal((d, count))
            P = basis @ (W / np.linalg.norm(W, axis=0))
            X.append(P + noise * rng.standard_normal(P.shape))
            labels += [i + 1] * count
    return np.hstack(X_tr), np.array(y_tr), np.hstack(X_te), np.array(y_te)


def _read_image(path: Path) -> np.ndarray:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise UnreadableImage(f"{path}: expected 8-bit grayscale, got mode {img.mode!r}")
            return np.asarray(img, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError) as exc:
        raise UnreadableImage(f"{path}: {exc}") from exc


def ingest_images(directory, manifest: dict | None = None):
    """Load grayscale images from per-class subdirectories.

    ``manifest`` maps subdirectory names to class ids; by default the sorted
    subdirectories get ids ``1..n``.  Files are read in sorted order and
    vectorized row-major with values in ``[0, 1]``.

    Returns
    -------
    X : ndarray, shape (pixels, images)
    labels : ndarray of class ids
    shape : (height, width) of every image
    """
    root = Path(directory)
    if not root.is_dir():
        raise UnreadableImage(f"{root} is not a directory")
    if manifest is None:
        subdirs = sorted(p.name for p in root.iterdir() if p.is_dir())
        manifest = {name: i + 1 for i, name in enumerate(subdirs)}
    columns, labels, shape = [], [], None
    for name in sorted(manifest):
        folder = root / name
        if not folder.is_dir():
            raise UnreadableImage(f"missing class directory {folder}")
        for path in sorted(folder.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            img = _read_image(path)
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise InconsistentDimensions(f"{path} has shape {img.shape}, expected {shape}")
            columns.append(img.ravel())
            labels.append(manifest[name])
    if not columns:
        raise UnreadableImage(f"no images found under {root}")
    return np.column_stack(columns), np.array(labels), shape
