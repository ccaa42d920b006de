"""End-to-end simulation driver: train, synthesise, measure, reconstruct, score.

Every cell of the ``method x count x noise power x seed`` grid is independent
and deterministic. Pattern stacks for one seed are nested across counts
(pattern ``t`` never depends on ``T``), and the noise draws are shared
across methods and powers, so cells differ only in what the grid says.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import RngSpec, Roi, load_image, write_pgm
from .forward import NoiseSpec, add_wgn, measure
from .metrics import evaluate, roi_increment
from .patterns import DEFAULT_RINGS, DEFAULT_SECTORS, build_retina_geometry, compose_retina_stack, gen_random_stack
from .pca import fit_pca, gen_pca_stack, load_dataset
from .recon import TvConfig, reconstruct_correlation, reconstruct_tv

log = logging.getLogger(__name__)

METHODS = ("random-gi", "random-rgi", "pca-gi", "pca-rgi")
FAILURE_MARKER = "FAILED"


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass
class ExperimentConfig:
    object: str
    dataset: str
    out: str = "out"
    frame: tuple = (32, 32)
    roi: Roi | None = None
    rings: int = DEFAULT_RINGS
    sectors: int = DEFAULT_SECTORS
    dataset_limit: int | None = 5000
    counts: list = field(default_factory=lambda: [102, 205, 307, 410, 512, 1024])
    noise_dbw: list | None = None
    methods: list = field(default_factory=lambda: list(METHODS))
    seeds: list = field(default_factory=lambda: [0, 1, 2])
    tv: TvConfig = field(default_factory=TvConfig)
    bit: int = 0
    pca_scaling: str = "std"
    baseline_correlation: bool = False
    workers: int = 1

    def __post_init__(self):
        self.frame = tuple(int(v) for v in self.frame)
        if self.roi is None:
            self.roi = Roi.centered(self.frame, (self.frame[0] // 2, self.frame[1] // 2))
        elif isinstance(self.roi, dict):
            self.roi = Roi.from_dict(self.roi)
        if isinstance(self.tv, dict):
            self.tv = TvConfig(**self.tv)
        self.counts = [int(c) for c in self.counts]
        self.seeds = [int(s) for s in self.seeds]
        self.methods = list(self.methods)
        if self.noise_dbw is not None:
            self.noise_dbw = [float(p) for p in self.noise_dbw]
        self.validate()

    def validate(self) -> None:
        h, w = self.frame
        if h < 1 or w < 1:
            raise ValueError("frame must be at least 1x1")
        if not self.roi.fits(self.frame):
            raise ValueError(f"{self.roi} does not fit the {h}x{w} frame")
        if not self.methods:
            raise ValueError("methods list is empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if not self.counts or any(c < 1 or c > 2 * h * w for c in self.counts):
            raise ValueError(f"measurement counts must lie in 1..{2 * h * w}")
        if not self.seeds:
            raise ValueError("seeds list is empty")
        if not 0 <= self.bit <= 7:
            raise ValueError("bit must be in 0..7")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def powers(self) -> list:
        return [None] if not self.noise_dbw else list(self.noise_dbw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["frame"] = list(self.frame)
        d["roi"] = self.roi.to_dict()
        d["tv"] = self.tv.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw)


@dataclass(frozen=True)
class Cell:
    method: str
    count: int
    power: float | None
    seed: int

    @property
    def power_tag(self) -> str:
        return "none" if self.power is None else f"{self.power:g}"

    def filename(self, prefix="recon") -> str:
        return f"{prefix}_{self.method}_{self.count}_{self.power_tag}_{self.seed}.pgm"


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, exc) from exc
        return False


class Experiment:
    """Holds the trained models and geometry shared by every cell of one config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        h, w = cfg.frame
        with _Stage("load-object"):
            self.truth = load_image(cfg.object, h, w)
        with _Stage("geometry"):
            self.geom = build_retina_geometry(h, w, cfg.roi, cfg.rings, cfg.sectors)
        self.models = {}
        with _Stage("train-pca"):
            if "pca-gi" in cfg.methods:
                self.models["frame"] = self._train(h, w)
            if "pca-rgi" in cfg.methods:
                self.models["roi"] = self._train(*cfg.roi.shape)

    def _train(self, h, w):
        x = load_dataset(self.cfg.dataset, h, w, self.cfg.dataset_limit)
        log.info("training %dx%d PCA on %d images", h, w, x.shape[0])
        return fit_pca(x, h, w, self.cfg.pca_scaling)

    def stack(self, method: str, count: int, seed: int):
        base = RngSpec(seed)
        h, w = self.cfg.frame
        roi_h, roi_w = self.cfg.roi.shape
        if method == "random-gi":
            return gen_random_stack(count, h, w, base.substream("frame"))
        if method == "pca-gi":
            return gen_pca_stack(self.models["frame"], count, self.cfg.bit, base.substream("pca-tail"))
        if method == "random-rgi":
            fill = gen_random_stack(count, roi_h, roi_w, base.substream("roi-fill"))
        else:
            fill = gen_pca_stack(self.models["roi"], count, self.cfg.bit, base.substream("pca-tail"))
        return compose_retina_stack(self.geom, fill, base.substream("periphery"))

    def run_cell(self, cell: Cell) -> dict:
        with _Stage("patterns"):
            stack = self.stack(cell.method, cell.count, cell.seed)
        with _Stage("measure"):
            rec = measure(stack, self.truth)
            if cell.power is not None:
                rec = add_wgn(rec, NoiseSpec(cell.power, RngSpec(cell.seed).substream("noise")))
        with _Stage("reconstruct"):
            res = reconstruct_tv(stack, rec, self.cfg.tv)
            corr = reconstruct_correlation(stack, rec) if self.cfg.baseline_correlation and cell.count >= 2 else None
        with _Stage("evaluate"):
            out = {
                "method": cell.method,
                "count": cell.count,
                "noise_dbw": cell.power,
                "seed": cell.seed,
                "overall": evaluate(self.truth, res.image),
                "fovea": evaluate(self.truth, res.image, self.cfg.roi),
                "diagnostics": res.diagnostics(),
                "image": res.image,
            }
            if corr is not None:
                out["correlation"] = {
                    "overall": evaluate(self.truth, corr.image),
                    "fovea": evaluate(self.truth, corr.image, self.cfg.roi),
                    "image": corr.image,
                }
        return out


def cells_for(cfg: ExperimentConfig) -> list[Cell]:
    return [Cell(m, t, p, s) for m in cfg.methods for t in cfg.counts for p in cfg.powers for s in cfg.seeds]


def _num(v):
    if v is None:
        return None
    v = float(v)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _cell_json(r: dict) -> dict:
    d = {
        "method": r["method"],
        "count": r["count"],
        "noise_dbw": r["noise_dbw"],
        "seed": r["seed"],
        "overall": r["overall"].to_dict(),
        "fovea": r["fovea"].to_dict(),
        "diagnostics": r["diagnostics"],
    }
    if "correlation" in r:
        d["correlation"] = {k: r["correlation"][k].to_dict() for k in ("overall", "fovea")}
    return d


def _increments(results: list[dict]) -> list[dict]:
    by_key = {(r["method"], r["count"], r["noise_dbw"], r["seed"]): r for r in results}
    out = []
    for r in results:
        if r["method"] != "pca-rgi":
            continue
        other = by_key.get(("random-rgi", r["count"], r["noise_dbw"], r["seed"]))
        if other is None:
            continue
        dp, ds = roi_increment(r["fovea"], other["fovea"])
        out.append({"count": r["count"], "noise_dbw": r["noise_dbw"], "seed": r["seed"],
                    "delta_psnr_db": _num(dp), "delta_ssim": ds})
    return out


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.4f}"


def _mean(values):
    if any(math.isinf(v) for v in values):
        return math.inf if all(v > 0 for v in values if math.isinf(v)) else math.nan
    return float(np.mean(values))


def table_csv(cfg: ExperimentConfig, results: list[dict]) -> str:
    """Seed-averaged quality table: one row per power x metric x region x method, one column per count."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["noise_dbw", "metric", "region", "method", *cfg.counts])
    for p in cfg.powers:
        for metric, attr in (("PSNR", "psnr_db"), ("SSIM", "ssim")):
            for region in ("overall", "fovea"):
                for m in cfg.methods:
                    row = []
                    for t in cfg.counts:
                        vals = [getattr(r[region], attr) for r in results
                                if r["method"] == m and r["count"] == t and r["noise_dbw"] == p]
                        row.append(_fmt(_mean(vals)))
                    w.writerow(["none" if p is None else f"{p:g}", metric, region, m, *row])
    return buf.getvalue()


def curves_csv(results: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "count", "noise_dbw", "seed", "fovea_psnr_db", "fovea_ssim"])
    for r in results:
        w.writerow([r["method"], r["count"], "none" if r["noise_dbw"] is None else f"{r['noise_dbw']:g}",
                    r["seed"], _fmt(r["fovea"].psnr_db), _fmt(r["fovea"].ssim)])
    return buf.getvalue()


def _execute(cfg: ExperimentConfig, write_images: bool = True) -> tuple[list[dict], Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILURE_MARKER
    if marker.exists():
        marker.unlink()
    try:
        exp = Experiment(cfg)
        cells = cells_for(cfg)
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(exp.run_cell, cells))
        else:
            results = [exp.run_cell(c) for c in cells]
        if write_images:
            with _Stage("write-images"):
                for cell, r in zip(cells, results):
                    write_pgm(out / cell.filename(), r["image"])
                    if "correlation" in r:
                        write_pgm(out / cell.filename("recon-corr"), r["correlation"]["image"])
    except PipelineError as exc:
        marker.write_text(f"stage: {exc.stage}\nerror: {exc}\n")
        raise
    return results, out


def _report(cfg: ExperimentConfig, results: list[dict], kind: str) -> dict:
    return {
        "kind": kind,
        "config": cfg.to_dict(),
        "cells": [_cell_json(r) for r in results],
        "increments": _increments(results),
    }


def _dump(path: Path, text: str) -> None:
    path.write_text(text)


def run_pipeline(cfg: ExperimentConfig) -> dict:
    """Run every configured cell; write ``report.json``, ``table.csv`` and per-cell PGMs."""
    results, out = _execute(cfg)
    report = _report(cfg, results, "pipeline")
    _dump(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _dump(out / "table.csv", table_csv(cfg, results))
    return report


def run_sweep(cfg: ExperimentConfig) -> dict:
    """Noise sweep: like :func:`run_pipeline`, plus ``curves.csv`` of fovea quality per power."""
    if not cfg.noise_dbw:
        raise ValueError("a sweep needs at least one noise power")
    results, out = _execute(cfg)
    report = _report(cfg, results, "sweep")
    _dump(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    _dump(out / "table.csv", table_csv(cfg, results))
    _dump(out / "curves.csv", curves_csv(results))
    return report
