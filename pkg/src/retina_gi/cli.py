"""Command-line entry point: ``retina-gi <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import RngSpec, Roi, image_shape, load_image, load_pattern_stack, save_pattern_stack, write_pgm
from .corpus import KINDS, make_test_object, write_corpus
from .experiment import METHODS, ExperimentConfig, PipelineError, run_pipeline, run_sweep
from .forward import NoiseSpec, add_wgn, load_record, measure, save_record
from .metrics import evaluate
from .patterns import DEFAULT_RINGS, DEFAULT_SECTORS, build_retina_geometry, compose_retina_stack, gen_random_stack
from .pca import PcaModel, fit_pca, gen_pca_stack, load_dataset
from .recon import BOUNDARIES, TvConfig, reconstruct

PATTERN_KINDS = ("random", "pca", "random-retina", "pca-retina")


def _csv(conv):
    def parse(text):
        return [conv(v) for v in text.split(",") if v.strip()]
    return parse


def _size(text):
    parts = [int(v) for v in text.lower().replace("x", ",").split(",")]
    if len(parts) == 1:
        parts *= 2
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("size must be H, HxW or H,W")
    return tuple(parts)


def _roi(text):
    parts = [int(v) for v in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("roi must be top,left,height,width")
    return Roi(*parts)


def _bit(text):
    b = int(text)
    if not 0 <= b <= 7:
        raise argparse.ArgumentTypeError("bit must be in 0..7")
    return b


def _add_tv(p):
    g = p.add_argument_group("TV solver")
    d = TvConfig()
    g.add_argument("--tv-weight", type=float, default=d.tv_weight)
    g.add_argument("--penalty", type=float, default=d.penalty)
    g.add_argument("--max-iters", type=int, default=d.max_iters)
    g.add_argument("--rel-tol", type=float, default=d.rel_tol)
    g.add_argument("--boundary", choices=BOUNDARIES, default=d.boundary)


def _tv(args) -> TvConfig:
    return TvConfig(args.tv_weight, args.penalty, args.max_iters, args.rel_tol, args.boundary)


def cmd_make_corpus(args):
    paths = write_corpus(args.out, args.count, args.size, args.kind, args.seed)
    print(f"wrote {len(paths)} images to {args.out}")


def cmd_make_object(args):
    roi = args.roi or Roi.centered(args.size, (args.size[0] // 2, args.size[1] // 2))
    write_pgm(args.out, make_test_object(args.kind, args.size, roi, args.seed))
    print(f"wrote {args.out}")


def cmd_train_pca(args):
    h, w = args.size
    x = load_dataset(args.dataset, h, w, args.limit)
    model = fit_pca(x, h, w, args.scaling, args.components)
    model.save(args.out)
    print(f"trained on {x.shape[0]} images; model written to {args.out}")


def cmd_gen_patterns(args):
    rng = RngSpec(args.seed)
    h, w = args.size
    if args.kind in ("random", "pca"):
        if args.kind == "random":
            stack = gen_random_stack(args.count, h, w, rng.substream("frame"))
        else:
            stack = gen_pca_stack(_model(args), args.count, args.bit, rng.substream("pca-tail"))
    else:
        roi = args.roi or Roi.centered((h, w), (h // 2, w // 2))
        geom = build_retina_geometry(h, w, roi, args.rings, args.sectors)
        if args.kind == "random-retina":
            fill = gen_random_stack(args.count, *roi.shape, rng.substream("roi-fill"))
        else:
            fill = gen_pca_stack(_model(args), args.count, args.bit, rng.substream("pca-tail"))
        stack = compose_retina_stack(geom, fill, rng.substream("periphery"))
        if args.geometry_out:
            geom.save(args.geometry_out)
    save_pattern_stack(stack, args.out)
    print(f"wrote {stack.count} patterns of {stack.height}x{stack.width} to {args.out}")


def _model(args) -> PcaModel:
    if not args.model:
        raise SystemExit("--model is required for PCA patterns")
    return PcaModel.load(args.model)


def cmd_simulate(args):
    stack = load_pattern_stack(args.patterns)
    obj = load_image(args.object, stack.height, stack.width)
    rec = measure(stack, obj)
    if args.noise_dbw is not None:
        rec = add_wgn(rec, NoiseSpec(args.noise_dbw, RngSpec(args.seed).substream("noise")))
    save_record(rec, args.out)
    print(f"wrote {rec.count} measurements to {args.out}")


def cmd_reconstruct(args):
    stack = load_pattern_stack(args.patterns)
    rec = load_record(args.measurements)
    cfg = _tv(args)
    res = reconstruct(stack, rec, args.method, cfg)
    write_pgm(args.out, res.image)
    diag = {**res.diagnostics(), "method": args.method}
    if args.method == "tv":
        diag["config"] = cfg.to_dict()
    Path(args.out).with_suffix(".json").write_text(json.dumps(diag, indent=2) + "\n")
    print(json.dumps(diag))


def cmd_evaluate(args):
    truth = load_image(args.truth, *(args.size or image_shape(args.truth)))
    test = load_image(args.test, *truth.shape)
    out = {"overall": evaluate(truth, test).to_dict()}
    if args.roi:
        out["roi"] = evaluate(truth, test, args.roi).to_dict()
    print(json.dumps(out, indent=2))


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config)
    over = {
        "out": args.out,
        "methods": args.methods,
        "counts": args.counts,
        "noise_dbw": args.noise_dbw,
        "bit": args.bit,
        "seeds": [args.seed] if args.seed is not None else None,
        "baseline_correlation": True if args.baseline_correlation else None,
    }
    return cfg.with_overrides(**over)


def cmd_pipeline(args):
    report = run_pipeline(_experiment_config(args))
    print(f"{len(report['cells'])} cells written to {report['config']['out']}")


def cmd_sweep(args):
    report = run_sweep(_experiment_config(args))
    print(f"{len(report['cells'])} cells written to {report['config']['out']}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retina-gi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="write a procedural training corpus of PGM images")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=2000)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--kind", choices=KINDS, default="shapes")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("make-object", help="write a held-out test object")
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=KINDS, default="shapes")
    p.add_argument("--size", type=_size, default=(32, 32))
    p.add_argument("--roi", type=_roi)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_object)

    p = sub.add_parser("train-pca", help="train eigen-patterns from an image directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--size", type=_size, required=True)
    p.add_argument("--limit", type=int)
    p.add_argument("--scaling", choices=("std", "variance"), default="std")
    p.add_argument("--components", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_pca)

    p = sub.add_parser("gen-patterns", help="synthesise a pattern stack")
    p.add_argument("--kind", choices=PATTERN_KINDS, default="random")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=_size, default=(32, 32))
    p.add_argument("--roi", type=_roi)
    p.add_argument("--rings", type=int, default=DEFAULT_RINGS)
    p.add_argument("--sectors", type=int, default=DEFAULT_SECTORS)
    p.add_argument("--model", help="PCA model header (JSON) for pca kinds")
    p.add_argument("--bit", type=_bit, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--geometry-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_patterns)

    p = sub.add_parser("simulate", help="bucket measurements of an object")
    p.add_argument("--patterns", required=True)
    p.add_argument("--object", required=True)
    p.add_argument("--noise-dbw", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="recover an image from patterns and measurements")
    p.add_argument("--patterns", required=True)
    p.add_argument("--measurements", required=True)
    p.add_argument("--method", choices=("tv", "correlation"), default="tv")
    p.add_argument("--out", required=True)
    _add_tv(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of a reconstruction against the truth")
    p.add_argument("--truth", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--size", type=_size)
    p.add_argument("--roi", type=_roi)
    p.set_defaults(func=cmd_evaluate)

    for name, func, helptext in (("pipeline", cmd_pipeline, "run the full method comparison"),
                                 ("sweep", cmd_sweep, "run a noise-power sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out")
        p.add_argument("--seed", type=int)
        p.add_argument("--methods", type=_csv(str))
        p.add_argument("--counts", type=_csv(int))
        p.add_argument("--noise-dbw", type=_csv(float))
        p.add_argument("--bit", type=_bit)
        p.add_argument("--baseline-correlation", action="store_true")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "methods", None):
        bad = [m for m in args.methods if m not in METHODS]
        if bad:
            print(f"error: unknown methods {bad}", file=sys.stderr)
            return 2
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error in stage {exc.stage}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
