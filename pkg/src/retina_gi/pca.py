"""Eigen-pattern training and binarisation for projector-ready PCA patterns."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .core import DecodeError, PatternStack, RngSpec, load_image
from .patterns import _random_bits

log = logging.getLogger(__name__)

ZERO_STD = 1e-12
SYMMETRY_TOL = 1e-10
COV_BLOCK_ROWS = 256
SCALINGS = ("std", "variance")


class DatasetError(ValueError):
    pass


def load_dataset(directory, h: int, w: int, limit: int | None = None) -> np.ndarray:
    """Stack every decodable image in ``directory`` (lexicographic order) as one row.

    Returns an ``(M, h*w)`` float array. Undecodable files are skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"{directory}: not a directory")
    rows = []
    for path in sorted(p for p in directory.iterdir() if p.is_file()):
        if limit is not None and len(rows) >= limit:
            break
        try:
            rows.append(load_image(path, h, w).ravel())
        except DecodeError as exc:
            log.warning("skipping %s: %s", path.name, exc)
    if len(rows) < 2:
        raise DatasetError(f"{directory}: need at least 2 usable images, found {len(rows)}")
    return np.vstack(rows)


def _check_training(x) -> np.ndarray:
    x = check_array(x, dtype=np.float64, ensure_min_samples=2)
    return x


def standardize(x, scaling: str = "std"):
    """Z-score each column; returns ``(x_std, mean, scale)``.

    ``scale`` is the sample standard deviation (divisor M-1), or the sample
    variance when ``scaling="variance"``. Near-constant columns get scale 1.
    """
    if scaling not in SCALINGS:
        raise ValueError(f"scaling must be one of {SCALINGS}")
    x = _check_training(x)
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    scale = std**2 if scaling == "variance" else std.copy()
    scale[std < ZERO_STD] = 1.0
    xs = x - mean
    xs[:, std < ZERO_STD] = 0.0
    return xs / scale, mean, scale


def _tree_sum(parts):
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def covariance(xstd) -> np.ndarray:
    """Sample covariance ``xstd.T @ xstd / (M-1)`` of an already-centred matrix.

    Row blocks are reduced pairwise in row order, so the result does not
    depend on how the blocks are scheduled.
    """
    xstd = _check_training(xstd)
    m = xstd.shape[0]
    parts = [b.T @ b for b in (xstd[i : i + COV_BLOCK_ROWS] for i in range(0, m, COV_BLOCK_ROWS))]
    sigma = _tree_sum(parts) / (m - 1)
    return 0.5 * (sigma + sigma.T)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # rows; largest-magnitude entry made positive, first index wins ties
    idx = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(vecs.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vecs * signs[:, None]


def eigendecompose_sorted(sigma, n_components: int | None = None):
    """Eigenvalues (descending) and eigenvectors (as rows) of a symmetric matrix.

    With ``n_components`` only the leading part of the spectrum is computed.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {sigma.shape}")
    asym = np.max(np.abs(sigma - sigma.T)) if sigma.size else 0.0
    if asym >= SYMMETRY_TOL:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")
    n = sigma.shape[0]
    if n_components is None or n_components >= n:
        vals, vecs = np.linalg.eigh(sigma)
    else:
        vals, vecs = scipy.linalg.eigh(sigma, subset_by_index=[n - n_components, n - 1])
    order = np.argsort(vals, kind="stable")[::-1]
    return vals[order], _fix_signs(vecs[:, order].T)


def extract_positive(p) -> np.ndarray:
    """Keep positive pixels, zero the rest."""
    return np.maximum(np.asarray(p, dtype=np.float64), 0.0)


def quantize_bitplane(p, bit: int = 0) -> np.ndarray:
    """Min-max normalise to 0..255 (round half up) and return bit-plane ``bit``."""
    if not 0 <= bit <= 7:
        raise ValueError(f"bit index must be in 0..7, got {bit}")
    p = np.asarray(p, dtype=np.float64)
    lo, hi = p.min(), p.max()
    if hi - lo <= 0:
        return np.zeros(p.shape, dtype=np.uint8)
    q = np.floor((p - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    return (q >> bit) & 1


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    scale: np.ndarray
    eigenvalues: np.ndarray
    components: np.ndarray
    height: int
    width: int
    n_samples: int
    scaling: str = "std"

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def __post_init__(self):
        n = self.mean.shape[0]
        if self.height * self.width != n:
            raise ValueError(f"pattern shape {self.height}x{self.width} does not hold {n} pixels")
        k = self.components.shape[0]
        if self.components.shape != (k, n) or self.eigenvalues.shape != (k,) or self.scale.shape != (n,):
            raise ValueError("inconsistent PCA model array shapes")

    def save(self, path) -> None:
        """Write a JSON header at ``path`` and float64 arrays to ``<path>.bin``."""
        path = Path(path)
        binpath = path.with_name(path.name + ".bin")
        header = {
            "N": self.n_features,
            "n_components": int(self.components.shape[0]),
            "h": self.height,
            "w": self.width,
            "M": self.n_samples,
            "scaling": self.scaling,
            "dtype": "<f8",
            "order": ["mean", "scale", "eigenvalues", "components"],
            "binary": binpath.name,
        }
        path.write_text(json.dumps(header, indent=2))
        with open(binpath, "wb") as fh:
            for arr in (self.mean, self.scale, self.eigenvalues, self.components):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PcaModel":
        path = Path(path)
        header = json.loads(path.read_text())
        n, k = int(header["N"]), int(header.get("n_components", header["N"]))
        raw = np.fromfile(path.with_name(header["binary"]), dtype="<f8")
        if raw.size != 2 * n + k + k * n:
            raise ValueError(f"{path}: sidecar holds {raw.size} values, expected {2 * n + k + k * n}")
        mean, scale, vals, comps = np.split(raw, [n, 2 * n, 2 * n + k])
        return cls(mean, scale, vals, comps.reshape(k, n), int(header["h"]), int(header["w"]),
                   int(header["M"]), header.get("scaling", "std"))


def fit_pca(x, height: int, width: int, scaling: str = "std", n_components: int | None = None) -> PcaModel:
    xs, mean, scale = standardize(x, scaling)
    if xs.shape[1] != height * width:
        raise ValueError(f"{xs.shape[1]} pixels per row, pattern shape is {height}x{width}")
    vals, comps = eigendecompose_sorted(covariance(xs), n_components)
    return PcaModel(mean, scale, vals, comps, height, width, xs.shape[0], scaling)


def gen_pca_stack(model: PcaModel, T: int, bit: int, rng: RngSpec) -> PatternStack:
    """Binarised eigen-patterns in descending-eigenvalue order, then random fill.

    Pattern ``t < n_components`` is bit-plane ``bit`` of the positive part of
    component ``t``; any further patterns are coin flips from substream ``t``.
    """
    if T < 0:
        raise ValueError("pattern count must be non-negative")
    h, w = model.height, model.width
    k = model.components.shape[0]
    bits = np.empty((T, h, w), dtype=np.uint8)
    for t in range(T):
        if t < k:
            bits[t] = quantize_bitplane(extract_positive(model.components[t].reshape(h, w)), bit)
        else:
            bits[t] = _random_bits(rng, t, h * w).reshape(h, w)
    return PatternStack(bits)


class PcaPatternGenerator(BaseEstimator, TransformerMixin):
    """Learn eigen-patterns from vectorised training images.

    Parameters
    ----------
    pattern_shape : tuple of int, optional
        ``(height, width)`` of one pattern. Defaults to a square.
    scaling : {"std", "variance"}
        Column divisor used when standardising.
    bit : int
        Bit-plane projected by :meth:`generate`.
    n_components : int, optional
        Keep only the leading eigenvectors.
    """

    def __init__(self, pattern_shape=None, scaling="std", bit=0, n_components=None):
        self.pattern_shape = pattern_shape
        self.scaling = scaling
        self.bit = bit
        self.n_components = n_components

    def _shape(self, n):
        if self.pattern_shape is not None:
            return tuple(int(s) for s in self.pattern_shape)
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise ValueError(f"cannot infer a square pattern shape for {n} pixels; set pattern_shape")
        return side, side

    def fit(self, X, y=None):
        X = _check_training(X)
        h, w = self._shape(X.shape[1])
        self.model_ = fit_pca(X, h, w, self.scaling, self.n_components)
        self.n_features_in_ = X.shape[1]
        return self

    @property
    def components_(self):
        check_is_fitted(self, "model_")
        return self.model_.components

    @property
    def explained_variance_(self):
        check_is_fitted(self, "model_")
        return self.model_.eigenvalues

    def transform(self, X):
        """Project standardised rows onto the eigen-patterns."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        xs = (X - self.model_.mean) / self.model_.scale
        return xs @ self.model_.components.T

    def generate(self, n_patterns: int, rng: RngSpec) -> PatternStack:
        check_is_fitted(self, "model_")
        return gen_pca_stack(self.model_, n_patterns, self.bit, rng)
