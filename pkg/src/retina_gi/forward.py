"""Single-pixel bucket detector and additive white Gaussian noise."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MeasurementRecord, RngSpec
from .validation import check_image, check_stack

# noise is drawn in fixed index blocks, each from its own substream
NOISE_BLOCK = 4096


@dataclass(frozen=True)
class NoiseSpec:
    power_dbw: float
    rng: RngSpec

    def __post_init__(self):
        if not np.isfinite(self.power_dbw):
            raise ValueError("noise power must be finite")

    @property
    def variance(self) -> float:
        """Noise variance on a unit load, as MATLAB's ``wgn`` defines dBW."""
        return 10.0 ** (self.power_dbw / 10.0)


def measure(stack, obj) -> MeasurementRecord:
    """Bucket intensities: for each pattern, the sum of object values it illuminates."""
    stack = check_stack(stack)
    obj = check_image(obj, "object")
    if stack.shape != obj.shape:
        raise ValueError(f"patterns are {stack.shape}, object is {obj.shape}")
    return MeasurementRecord(stack.as_matrix() @ obj.ravel())


def add_wgn(rec: MeasurementRecord, noise: NoiseSpec) -> MeasurementRecord:
    if rec.noisy:
        raise RuntimeError("measurement record already carries noise")
    n = rec.count
    sigma = np.sqrt(noise.variance)
    g = np.empty(n)
    for b, start in enumerate(range(0, n, NOISE_BLOCK)):
        stop = min(start + NOISE_BLOCK, n)
        g[start:stop] = noise.rng.substream("wgn", b).generator().standard_normal(stop - start)
    return MeasurementRecord(rec.intensities + sigma * g, noise.power_dbw, int(noise.rng.seed))


def save_record(rec: MeasurementRecord, path) -> None:
    """CSV ``t,intensity`` plus a ``<path>.json`` metadata sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "intensity"])
        for t, v in enumerate(rec.intensities):
            w.writerow([t, repr(float(v))])
    path.with_name(path.name + ".json").write_text(json.dumps(rec.metadata(), indent=2))


def load_record(path) -> MeasurementRecord:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "intensity"]:
            raise ValueError(f"{path}: expected header 't,intensity', got {header}")
        rows = [(int(t), float(v)) for t, v in reader]
    if [t for t, _ in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: measurement indices are not 0..T-1 in order")
    meta = {}
    side = path.with_name(path.name + ".json")
    if side.exists():
        meta = json.loads(side.read_text())
    return MeasurementRecord(np.array([v for _, v in rows]), meta.get("noise_power_dbw"), meta.get("rng_seed"))
