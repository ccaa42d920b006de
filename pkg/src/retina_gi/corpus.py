"""Procedural image corpora for training and test objects.

``shapes`` scenes (a 1/f textured background under a few soft-edged, shaded
ellipses and boxes) stand in for a natural-image training set. ``strata``
(layered bands with texture) and ``bars`` (resolution-chart style bar
groups) are deliberately different categories for checking how trained
patterns generalise.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import RngSpec, Roi, resize_bilinear, write_pgm

KINDS = ("shapes", "strata", "bars")


def _pink_field(gen: np.random.Generator, size: int, exponent: float) -> np.ndarray:
    """Zero-mean, unit-std random field with a ``1/f**exponent`` amplitude spectrum."""
    f = np.hypot(*np.meshgrid(np.fft.fftfreq(size), np.fft.fftfreq(size), indexing="ij"))
    f[0, 0] = np.inf
    spec = np.fft.fft2(gen.standard_normal((size, size))) * f**-exponent
    field = np.fft.ifft2(spec).real
    return (field - field.mean()) / field.std()


def _soft_mask(dist: np.ndarray, size: int) -> np.ndarray:
    # dist < 0 inside; edge width about one source pixel
    return 1.0 / (1.0 + np.exp(np.clip(dist * size, -50, 50)))


def _shapes(gen: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    img = 0.5 + gen.uniform(-0.15, 0.15) + 0.12 * _pink_field(gen, size, 1.3)
    for _ in range(gen.integers(2, 5)):
        cy, cx = gen.normal(0.5, 0.15, 2)
        ry, rx = gen.uniform(0.08, 0.3, 2)
        ang = gen.uniform(0, np.pi)
        u = (xx - cx) * np.cos(ang) + (yy - cy) * np.sin(ang)
        v = -(xx - cx) * np.sin(ang) + (yy - cy) * np.cos(ang)
        if gen.random() < 0.6:
            dist = (np.hypot(u / rx, v / ry) - 1.0) * min(rx, ry)
        else:
            dist = np.maximum(np.abs(u) - rx, np.abs(v) - ry)
        shade = gen.uniform(0, 1) + gen.normal(0, 0.4) * u + gen.normal(0, 0.4) * v
        shade = shade + 0.08 * _pink_field(gen, size, 1.0)
        img = img + _soft_mask(dist, size) * (shade - img)
    return img


def _strata(gen: np.random.Generator, size: int) -> np.ndarray:
    """Layered horizontal bands with wavy boundaries and fine texture."""
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    n = int(gen.integers(3, 6))
    bounds = np.sort(gen.uniform(0.1, 0.9, n - 1))
    levels = gen.uniform(0, 1, n)
    img = np.full((size, size), levels[0])
    for k, y0 in enumerate(bounds):
        wave = y0 + 0.04 * np.sin(2 * np.pi * (gen.uniform(1, 4) * xx + gen.uniform(0, 1)))
        img = img + _soft_mask(wave - yy, size) * (levels[k + 1] - img)
    stripes = 0.1 * np.sin(2 * np.pi * gen.uniform(6, 14) * (xx + 0.3 * yy))
    return img + stripes + 0.06 * _pink_field(gen, size, 0.8)


def _bars(gen: np.random.Generator, size: int) -> np.ndarray:
    yy, xx = (np.mgrid[0:size, 0:size] + 0.5) / size
    img = np.full((size, size), gen.uniform(0.6, 1.0))
    for _ in range(gen.integers(2, 5)):
        cy, cx = gen.uniform(0.2, 0.8, 2)
        half = gen.uniform(0.08, 0.2)
        period = gen.uniform(0.03, 0.08)
        box = (np.abs(yy - cy) <= half) & (np.abs(xx - cx) <= half)
        coord = xx if gen.random() < 0.5 else yy
        stripes = np.floor(coord / period).astype(int) % 2 == 0
        img = np.where(box & stripes, gen.uniform(0.0, 0.3), img)
    return img


def make_scene(kind: str, size: int, rng: RngSpec) -> np.ndarray:
    """One ``size x size`` scene in ``[0, 1]``."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    gen = rng.generator()
    img = {"shapes": _shapes, "strata": _strata, "bars": _bars}[kind](gen, size)
    return np.clip(img, 0.0, 1.0)


def write_corpus(directory, n: int, size: int = 96, kind: str = "shapes", seed: int = 0) -> list[Path]:
    """Write ``n`` scenes as ``img_00000.pgm`` ... into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    base = RngSpec(seed).substream("corpus", kind)
    paths = []
    for i in range(n):
        p = directory / f"img_{i:05d}.pgm"
        write_pgm(p, make_scene(kind, size, base.substream(i)))
        paths.append(p)
    return paths


def make_test_object(kind: str, frame_shape, roi: Roi | None = None, seed: int = 0,
                     source_size: int = 96) -> np.ndarray:
    """A held-out scene resized to ``frame_shape``, stretched so the ROI spans ``[0, 1]``.

    Stretching on the ROI and clipping elsewhere keeps the frame's extremes
    inside the fovea.
    """
    img = make_scene(kind, source_size, RngSpec(seed).substream("test-object", kind))
    img = resize_bilinear(img, *frame_shape)
    roi = roi or Roi.full(frame_shape)
    part = img[roi.slices]
    lo, hi = part.min(), part.max()
    if hi - lo <= 0:
        return np.zeros(frame_shape)
    return np.clip((img - lo) / (hi - lo), 0.0, 1.0)
