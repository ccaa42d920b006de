"""PSNR and global SSIM, over the full frame or a rectangular region."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Roi
from .validation import check_image, check_roi, check_same_shape

BIT_DEPTH = 8
PEAK = 2**BIT_DEPTH - 1


@dataclass(frozen=True)
class SsimParams:
    k1: float = 0.01
    k2: float = 0.03
    L: float = 1.0

    def __post_init__(self):
        if self.k1 <= 0 or self.k2 <= 0 or self.L <= 0:
            raise ValueError("SSIM constants must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.L) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.L) ** 2


@dataclass(frozen=True)
class QualityReport:
    psnr_db: float
    ssim: float
    mse: float
    region: Roi | None = None

    def to_dict(self) -> dict:
        return {
            "psnr_db": _json_float(self.psnr_db),
            "ssim": self.ssim,
            "mse": self.mse,
            "region": None if self.region is None else self.region.to_dict(),
        }


def _json_float(v: float):
    return "inf" if math.isinf(v) else v


def _region(truth, test, region):
    truth = check_image(truth, "truth")
    test = check_image(test, "test")
    check_same_shape(truth, test)
    if region is None:
        return truth.ravel(), test.ravel()
    roi = check_roi(region, truth.shape)
    return truth[roi.slices].ravel(), test[roi.slices].ravel()


def mse(truth, test, region: Roi | None = None) -> float:
    a, b = _region(truth, test, region)
    return float(np.mean((PEAK * (b - a)) ** 2))


def psnr(truth, test, region: Roi | None = None) -> float:
    """PSNR in dB on the 8-bit scale; ``inf`` for identical regions."""
    err = mse(truth, test, region)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / err)


def ssim(truth, test, region: Roi | None = None, params: SsimParams = SsimParams()) -> float:
    """Single-window SSIM over the whole region (sample variances and covariance)."""
    a, b = _region(truth, test, region)
    if a.size < 2:
        raise ValueError("SSIM needs at least 2 pixels")
    mu_a, mu_b = a.mean(), b.mean()
    da, db = a - mu_a, b - mu_b
    n1 = a.size - 1
    var_a, var_b = (da @ da) / n1, (db @ db) / n1
    cov = (da @ db) / n1
    c1, c2 = params.c1, params.c2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


def evaluate(truth, test, region: Roi | None = None, params: SsimParams = SsimParams()) -> QualityReport:
    err = mse(truth, test, region)
    p = math.inf if err == 0 else 10.0 * math.log10(PEAK**2 / err)
    return QualityReport(p, ssim(truth, test, region, params), err, region)


def _sub(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b) and a == b:
        return 0.0
    return a - b


def roi_increment(a: QualityReport, b: QualityReport) -> tuple[float, float]:
    """``(psnr_a - psnr_b, ssim_a - ssim_b)``; two infinite PSNRs give 0."""
    if a.region != b.region:
        raise ValueError(f"reports cover different regions: {a.region} vs {b.region}")
    return _sub(a.psnr_db, b.psnr_db), a.ssim - b.ssim
