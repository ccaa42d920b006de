"""Retina-like ghost imaging with trained eigen-patterns and TV reconstruction."""
from .core import (
    DecodeError,
    FormatError,
    MeasurementRecord,
    PatternStack,
    RngSpec,
    Roi,
    load_image,
    load_pattern_stack,
    save_pattern_stack,
    write_pgm,
)
from .experiment import ExperimentConfig, PipelineError, run_pipeline, run_sweep
from .forward import NoiseSpec, add_wgn, measure
from .metrics import QualityReport, SsimParams, evaluate, psnr, roi_increment, ssim
from .patterns import RetinaGeometry, build_retina_geometry, compose_retina_stack, gen_random_stack
from .pca import PcaModel, PcaPatternGenerator, fit_pca, gen_pca_stack, load_dataset
from .recon import (
    CorrelationReconstructor,
    ReconResult,
    TvConfig,
    TVReconstructor,
    reconstruct,
    reconstruct_correlation,
    reconstruct_tv,
)

__version__ = "0.1.0"

__all__ = [
    "DecodeError", "FormatError", "MeasurementRecord", "PatternStack", "RngSpec", "Roi",
    "load_image", "load_pattern_stack", "save_pattern_stack", "write_pgm",
    "ExperimentConfig", "PipelineError", "run_pipeline", "run_sweep",
    "NoiseSpec", "add_wgn", "measure",
    "QualityReport", "SsimParams", "evaluate", "psnr", "roi_increment", "ssim",
    "RetinaGeometry", "build_retina_geometry", "compose_retina_stack", "gen_random_stack",
    "PcaModel", "PcaPatternGenerator", "fit_pca", "gen_pca_stack", "load_dataset",
    "CorrelationReconstructor", "ReconResult", "TvConfig", "TVReconstructor",
    "reconstruct", "reconstruct_correlation", "reconstruct_tv",
]
