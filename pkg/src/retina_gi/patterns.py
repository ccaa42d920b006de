"""Random and retina-like illumination patterns.

A retina-like pattern keeps a full-resolution rectangular fovea (the ROI) and
groups every other pixel into log-polar macro-cells around the ROI centre.
All pixels of one macro-cell switch together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PatternStack, RngSpec, Roi
from .validation import check_roi, check_stack

DEFAULT_RINGS = 6
DEFAULT_SECTORS = 16


def _random_bits(rng: RngSpec, t: int, n: int) -> np.ndarray:
    return rng.substream(t).generator().integers(0, 2, size=n, dtype=np.uint8)


def gen_random_stack(T: int, h: int, w: int, rng: RngSpec) -> PatternStack:
    """``T`` patterns of independent fair coin flips; pattern ``t`` uses substream ``t``."""
    if T < 0:
        raise ValueError("pattern count must be non-negative")
    if h < 1 or w < 1:
        raise ValueError("pattern size must be positive")
    bits = np.empty((T, h, w), dtype=np.uint8)
    for t in range(T):
        bits[t] = _random_bits(rng, t, h * w).reshape(h, w)
    return PatternStack(bits)


@dataclass(frozen=True, eq=False)
class RetinaGeometry:
    """Fovea rectangle plus log-polar periphery, as a per-pixel label map.

    Labels ``0 .. roi.area - 1`` are fovea pixels in row-major order; labels
    from ``roi.area`` upward are periphery macro-cells, numbered ring-major
    over the non-empty ``(ring, sector)`` cells.
    """

    height: int
    width: int
    roi: Roi
    rings: int
    sectors: int
    cell_map: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_fovea(self) -> int:
        return self.roi.area

    @property
    def n_periphery(self) -> int:
        return int(self.cell_map.max()) + 1 - self.roi.area if self.cell_map.size else 0

    @property
    def n_labels(self) -> int:
        return self.n_fovea + self.n_periphery

    def __eq__(self, other):
        if not isinstance(other, RetinaGeometry):
            return NotImplemented
        return (
            (self.height, self.width, self.roi, self.rings, self.sectors)
            == (other.height, other.width, other.roi, other.rings, other.sectors)
            and np.array_equal(self.cell_map, other.cell_map)
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "height": self.height,
                "width": self.width,
                "roi": self.roi.to_dict(),
                "rings": self.rings,
                "sectors": self.sectors,
                "cell_map": self.cell_map.ravel().tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "RetinaGeometry":
        d = json.loads(text)
        h, w = int(d["height"]), int(d["width"])
        cell_map = np.asarray(d["cell_map"], dtype=np.int64)
        if cell_map.size != h * w:
            raise ValueError("cell_map length does not match frame size")
        cell_map = cell_map.reshape(h, w)
        cell_map.setflags(write=False)
        return cls(h, w, Roi.from_dict(d["roi"]), int(d["rings"]), int(d["sectors"]), cell_map)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "RetinaGeometry":
        return cls.from_json(Path(path).read_text())


def _ring_sector(h, w, roi: Roi, rings, sectors):
    cy = roi.top + roi.height / 2.0
    cx = roi.left + roi.width / 2.0
    yy, xx = np.mgrid[0:h, 0:w]
    dy = yy + 0.5 - cy
    dx = xx + 0.5 - cx
    r = np.hypot(dy, dx)
    r0 = 0.5 * np.hypot(roi.height, roi.width)
    rmax = max(np.hypot(py - cy, px - cx) for py in (0, h) for px in (0, w))
    if rmax > r0:
        ring = np.floor(rings * np.log(np.maximum(r, r0) / r0) / np.log(rmax / r0)).astype(np.int64)
    else:
        ring = np.zeros((h, w), dtype=np.int64)
    ring = np.clip(ring, 0, rings - 1)
    theta = np.arctan2(dy, dx)
    sector = np.floor((theta + np.pi) / (2 * np.pi) * sectors).astype(np.int64) % sectors
    return ring, sector


def build_retina_geometry(h: int, w: int, roi: Roi, rings: int = DEFAULT_RINGS,
                          sectors: int = DEFAULT_SECTORS) -> RetinaGeometry:
    """Partition an ``h x w`` frame into a fovea and log-polar periphery cells.

    Ring boundaries are log-spaced between the ROI half-diagonal and the
    farthest frame corner, measured from the ROI centre; pixels closer than
    the half-diagonal but outside the ROI fall into ring 0. Sectors are
    uniform angular wedges.
    """
    roi = check_roi(roi, (h, w))
    full = roi.covers((h, w))
    if not full and (rings < 1 or sectors < 1):
        raise ValueError("rings and sectors must be >= 1 when the ROI leaves a periphery")
    cell_map = np.empty((h, w), dtype=np.int64)
    cell_map[roi.slices] = np.arange(roi.area).reshape(roi.shape)
    if not full:
        ring, sector = _ring_sector(h, w, roi, rings, sectors)
        outside = ~roi.mask((h, w))
        raw = ring[outside] * sectors + sector[outside]
        _, compact = np.unique(raw, return_inverse=True)
        cell_map[outside] = roi.area + compact.ravel()
    cell_map.setflags(write=False)
    return RetinaGeometry(h, w, roi, int(rings), int(sectors), cell_map)


def compose_retina_stack(geom: RetinaGeometry, roi_fill, rng: RngSpec) -> PatternStack:
    """Embed ``roi_fill`` in the fovea and draw one coin flip per periphery cell per pattern.

    The periphery bits of pattern ``t`` come from substream ``t`` of ``rng`` and
    do not depend on the fill, so two stacks composed with the same ``rng``
    differ only inside the ROI.
    """
    roi_fill = check_stack(roi_fill)
    if roi_fill.shape != geom.roi.shape:
        raise ValueError(f"ROI fill is {roi_fill.shape}, ROI is {geom.roi.shape}")
    T = roi_fill.count
    out = np.zeros((T, geom.height, geom.width), dtype=np.uint8)
    out[:, geom.roi.slices[0], geom.roi.slices[1]] = roi_fill.bits
    n_cells = geom.n_periphery
    if n_cells:
        outside = ~geom.roi.mask(geom.shape)
        cell_of = geom.cell_map[outside] - geom.n_fovea
        for t in range(T):
            out[t][outside] = _random_bits(rng, t, n_cells)[cell_of]
    return PatternStack(out)
