"""Image recovery from patterns and bucket measurements.

Two routes: the second-order correlation estimate, and total-variation
compressed sensing solved by an augmented-Lagrangian (ADMM) splitting
``G o = c`` with soft-thresholding on ``c``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .core import MeasurementRecord, PatternStack
from .validation import check_measurements, check_stack, check_stack_record

BOUNDARIES = ("replicate", "periodic")
# continuation schedule: start weight as a fraction of |A^T b|_inf, halve every N iterations
CONTINUATION_START = 0.1
CONTINUATION_EVERY = 10


@dataclass(frozen=True)
class TvConfig:
    tv_weight: float = 1e-5
    penalty: float = 1.0
    max_iters: int = 300
    rel_tol: float = 1e-6
    boundary: str = "replicate"

    def __post_init__(self):
        if not self.tv_weight > 0:
            raise ValueError("tv_weight must be positive")
        if not self.penalty > 0:
            raise ValueError("penalty must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ReconResult:
    image: np.ndarray
    raw: np.ndarray
    iterations_used: int
    final_residual: float
    initial_residual: float | None = None

    def diagnostics(self) -> dict:
        return {
            "iterations_used": self.iterations_used,
            "final_residual": self.final_residual,
            "initial_residual": self.initial_residual,
        }


def minmax(a: np.ndarray) -> np.ndarray:
    """Scale to ``[0, 1]``; constant input maps to zeros."""
    lo, hi = a.min(), a.max()
    if hi - lo <= 0:
        return np.zeros_like(a, dtype=np.float64)
    return (a - lo) / (hi - lo)


# ---------------------------------------------------------------------------
# gradient operator

def gradient(u, shape, boundary: str = "replicate") -> np.ndarray:
    """Forward differences, horizontal block first then vertical, length ``2*H*W``.

    ``replicate`` sets the last column/row difference to zero; ``periodic``
    wraps around.
    """
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}")
    u = np.asarray(u, dtype=np.float64).reshape(shape)
    if boundary == "periodic":
        gx = np.roll(u, -1, axis=1) - u
        gy = np.roll(u, -1, axis=0) - u
    else:
        gx = np.zeros_like(u)
        gy = np.zeros_like(u)
        gx[:, :-1] = u[:, 1:] - u[:, :-1]
        gy[:-1, :] = u[1:, :] - u[:-1, :]
    return np.concatenate([gx.ravel(), gy.ravel()])


def gradient_adjoint(c, shape, boundary: str = "replicate") -> np.ndarray:
    """Transpose of :func:`gradient`, returned as a flat image vector."""
    if boundary not in BOUNDARIES:
        raise ValueError(f"boundary must be one of {BOUNDARIES}")
    h, w = shape
    c = np.asarray(c, dtype=np.float64)
    px = c[: h * w].reshape(h, w)
    py = c[h * w :].reshape(h, w)
    if boundary == "periodic":
        out = np.roll(px, 1, axis=1) - px + np.roll(py, 1, axis=0) - py
    else:
        out = np.zeros((h, w))
        out[:, :-1] -= px[:, :-1]
        out[:, 1:] += px[:, :-1]
        out[:-1, :] -= py[:-1, :]
        out[1:, :] += py[:-1, :]
    return out.ravel()


def _diff_1d(n, periodic):
    d = sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n), format="lil")
    if periodic:
        d[n - 1, 0] = 1.0
    else:
        d[n - 1, n - 1] = 0.0
    return d.tocsr()


def gradient_matrix(shape, boundary: str = "replicate") -> sp.csr_matrix:
    """Sparse ``(2*H*W, H*W)`` matrix of :func:`gradient`."""
    h, w = shape
    periodic = boundary == "periodic"
    gx = sp.kron(sp.identity(h), _diff_1d(w, periodic))
    gy = sp.kron(_diff_1d(h, periodic), sp.identity(w))
    return sp.vstack([gx, gy]).tocsr()


# ---------------------------------------------------------------------------
# reconstruction

def reconstruct_correlation(stack, rec) -> ReconResult:
    """``<I S> - <I><S>`` per pixel, averaged over patterns."""
    stack = check_stack(stack)
    rec = check_measurements(rec)
    check_stack_record(stack, rec, min_count=2)
    s = stack.as_matrix()
    i = rec.intensities
    # centring I first equals <I S> - <I><S> and is exactly zero for constant I
    raw = ((i - i.mean()) @ s) / rec.count
    # diagnostic residual after the best affine rescale of raw
    design = np.column_stack([s @ raw, s.sum(axis=1)])
    coef, *_ = np.linalg.lstsq(design, i, rcond=None)
    norm_i = np.linalg.norm(i)
    resid = np.linalg.norm(design @ coef - i) / norm_i if norm_i > 0 else 0.0
    raw = raw.reshape(stack.shape)
    return ReconResult(minmax(raw), raw, 1, float(resid))


def _soft(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def reconstruct_tv(stack, rec, cfg: TvConfig = TvConfig()) -> ReconResult:
    """Approximately minimise ``tv_weight*|G o|_1 + 0.5*|S o - I|^2``.

    Measurements are scaled so ``max|I| = 1``, then patterns and measurements
    are centred along the pattern row-sum direction (plain centring over the
    pattern index when every pattern has the same number of lit pixels). The
    mean-free part of the image is found by ADMM on the centred system and
    the constant offset is restored by least squares against the uncentred
    measurements.

    The shrinkage threshold starts at a fraction of ``|A^T b|_inf`` and is
    halved every few iterations until it reaches ``tv_weight / penalty``
    (continuation); the relative-change stopping test only applies once the
    target weight is reached. Without this, small TV weights need thousands
    of iterations to sparsify the gradient.
    """
    stack = check_stack(stack)
    rec = check_measurements(rec)
    check_stack_record(stack, rec, min_count=1)
    intens = rec.intensities
    if not np.all(np.isfinite(intens)):
        raise ValueError("measurements contain non-finite values")

    shape = stack.shape
    n = shape[0] * shape[1]
    s = stack.as_matrix()
    scale = float(np.max(np.abs(intens)))
    if scale == 0:
        scale = 1.0
    b = intens / scale
    row_sums = s.sum(axis=1)
    rs_norm2 = float(row_sums @ row_sums)
    # project out the row-sum direction: a constant image is then invisible
    # to the centred system and the offset can be fitted separately
    if rs_norm2 > 0:
        u = row_sums / np.sqrt(rs_norm2)
        a_c = s - np.outer(u, u @ s)
        b_c = b - u * (u @ b)
    else:
        a_c, b_c = s, b
    b_norm = float(np.linalg.norm(b))

    def restore(o):
        alpha = row_sums @ (b - s @ o) / rs_norm2 if rs_norm2 > 0 else 0.0
        full = o + alpha
        resid = np.linalg.norm(s @ full - b) / b_norm if b_norm > 0 else 0.0
        return full, float(resid)

    rho, lam = cfg.penalty, cfg.tv_weight
    g = gradient_matrix(shape, cfg.boundary)
    ata = a_c.T @ a_c
    ata -= ata.mean(axis=0, keepdims=True)
    ata -= ata.mean(axis=1, keepdims=True)
    k = ata + rho * (g.T @ g).toarray() + rho / n
    chol = scipy.linalg.cho_factor(k, lower=True, check_finite=False)
    atb = a_c.T @ b_c
    atb -= atb.mean()

    weight = max(lam, CONTINUATION_START * float(np.abs(atb).max()))
    o = np.zeros(n)
    c = np.zeros(2 * n)
    d = np.zeros(2 * n)
    first_resid = None
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        o_new = scipy.linalg.cho_solve(chol, atb + rho * (g.T @ (c - d)), check_finite=False)
        go = g @ o_new
        c = _soft(go + d, weight / rho)
        d += go - c
        step = np.linalg.norm(o_new - o)
        o = o_new
        if iters == 1:
            first_resid = restore(o)[1]
        if weight <= lam and step <= cfg.rel_tol * max(np.linalg.norm(o), np.finfo(float).tiny):
            break
        if iters % CONTINUATION_EVERY == 0:
            weight = max(lam, weight * 0.5)

    full, resid = restore(o)
    raw = (full * scale).reshape(shape)
    return ReconResult(minmax(raw), raw, iters, resid, first_resid)


# ---------------------------------------------------------------------------
# estimators

def _as_stack(X) -> PatternStack:
    if isinstance(X, PatternStack):
        return X
    X = np.asarray(X)
    if X.ndim != 3:
        raise ValueError("X must be a PatternStack or a (T, H, W) array")
    return PatternStack(X)


class TVReconstructor(RegressorMixin, BaseEstimator):
    """Total-variation compressed-sensing reconstruction as a linear regressor.

    ``fit(patterns, intensities)`` recovers the scene; ``coef_`` holds it as a
    flat vector so ``predict(patterns)`` returns the bucket signal it implies.

    Parameters
    ----------
    tv_weight : float
        Weight of the TV term relative to data fidelity (measurements are
        scaled to unit peak first).
    penalty : float
        Augmented-Lagrangian parameter.
    max_iters : int
    rel_tol : float
        Stop when the relative change of the iterate drops below this.
    boundary : {"replicate", "periodic"}
    """

    def __init__(self, tv_weight=1e-5, penalty=1.0, max_iters=300, rel_tol=1e-6, boundary="replicate"):
        self.tv_weight = tv_weight
        self.penalty = penalty
        self.max_iters = max_iters
        self.rel_tol = rel_tol
        self.boundary = boundary

    def config(self) -> TvConfig:
        return TvConfig(self.tv_weight, self.penalty, self.max_iters, self.rel_tol, self.boundary)

    def fit(self, X, y):
        stack = _as_stack(X)
        self.result_ = reconstruct_tv(stack, check_measurements(y), self.config())
        self.image_shape_ = stack.shape
        self.coef_ = self.result_.raw.ravel()
        self.image_ = self.result_.image
        self.n_iter_ = self.result_.iterations_used
        self.residual_ = self.result_.final_residual
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return _as_stack(X).as_matrix() @ self.coef_


class CorrelationReconstructor(BaseEstimator):
    """Second-order correlation ghost-imaging estimate."""

    def fit(self, X, y):
        stack = _as_stack(X)
        self.result_ = reconstruct_correlation(stack, check_measurements(y))
        self.image_shape_ = stack.shape
        self.image_ = self.result_.image
        return self


def reconstruct(stack: PatternStack, rec: MeasurementRecord, method: str = "tv",
                cfg: TvConfig = TvConfig()) -> ReconResult:
    if method == "tv":
        return reconstruct_tv(stack, rec, cfg)
    if method == "correlation":
        return reconstruct_correlation(stack, rec)
    raise ValueError(f"unknown reconstruction method {method!r}")
