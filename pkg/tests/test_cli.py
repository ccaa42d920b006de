import json

import numpy as np
import pytest

from retina_gi.cli import main
from retina_gi.core import load_image, load_pattern_stack
from retina_gi.forward import load_record
from retina_gi.patterns import RetinaGeometry


def run(*argv):
    return main([str(a) for a in argv])


def test_stage_by_stage(tmp_path, small_corpus, capsys):
    t = tmp_path
    assert run("make-object", "--out", t / "obj.pgm", "--size", "16", "--seed", "2") == 0
    assert run("train-pca", "--dataset", small_corpus, "--size", "8", "--out", t / "m.json") == 0
    assert run("gen-patterns", "--kind", "pca-retina", "--count", "80", "--size", "16", "--model", t / "m.json",
               "--geometry-out", t / "g.json", "--out", t / "p.rgip") == 0
    assert load_pattern_stack(t / "p.rgip").count == 80
    assert RetinaGeometry.load(t / "g.json").roi.shape == (8, 8)
    assert run("simulate", "--patterns", t / "p.rgip", "--object", t / "obj.pgm", "--noise-dbw", "-30",
               "--out", t / "m.csv") == 0
    assert load_record(t / "m.csv").noise_power_dbw == -30
    assert run("reconstruct", "--patterns", t / "p.rgip", "--measurements", t / "m.csv", "--out", t / "r.pgm") == 0
    diag = json.loads((t / "r.json").read_text())
    assert diag["method"] == "tv" and diag["config"]["boundary"] == "replicate"
    capsys.readouterr()
    assert run("evaluate", "--truth", t / "obj.pgm", "--test", t / "r.pgm", "--roi", "4,4,8,8") == 0
    out = json.loads(capsys.readouterr().out)
    assert out["roi"]["region"] == {"top": 4, "left": 4, "height": 8, "width": 8}


@pytest.mark.parametrize("kind", ["random", "random-retina"])
def test_random_kinds(tmp_path, kind):
    assert run("gen-patterns", "--kind", kind, "--count", "5", "--size", "8x12", "--out", tmp_path / "p.rgip") == 0
    assert load_pattern_stack(tmp_path / "p.rgip").shape == (8, 12)


def test_correlation_method(tmp_path):
    obj = tmp_path / "o.pgm"
    run("make-object", "--out", obj, "--size", "8")
    run("gen-patterns", "--count", "30", "--size", "8", "--out", tmp_path / "p.rgip")
    run("simulate", "--patterns", tmp_path / "p.rgip", "--object", obj, "--out", tmp_path / "m.csv")
    assert run("reconstruct", "--method", "correlation", "--patterns", tmp_path / "p.rgip",
               "--measurements", tmp_path / "m.csv", "--out", tmp_path / "c.pgm") == 0
    assert load_image(tmp_path / "c.pgm", 8, 8).max() == 1.0


def test_pipeline_flags_override(tmp_path, tiny_object):
    obj, roi = tiny_object
    cfg = {"object": str(obj), "dataset": str(tmp_path), "frame": [32, 32], "roi": roi.to_dict(),
           "methods": ["random-gi", "random-rgi"], "counts": [10]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    out = tmp_path / "run"
    assert run("pipeline", "--config", tmp_path / "c.json", "--out", out, "--seed", "4",
               "--methods", "random-rgi", "--counts", "20,40") == 0
    rep = json.loads((out / "report.json").read_text())
    assert {(c["method"], c["count"], c["seed"]) for c in rep["cells"]} == {("random-rgi", 20, 4), ("random-rgi", 40, 4)}


def test_sweep_cli(tmp_path, tiny_object):
    obj, roi = tiny_object
    (tmp_path / "c.json").write_text(json.dumps({"object": str(obj), "dataset": str(tmp_path),
                                                 "methods": ["random-gi"], "counts": [30], "seeds": [0]}))
    assert run("sweep", "--config", tmp_path / "c.json", "--out", tmp_path / "s", "--noise-dbw", "-30") == 0
    assert len((tmp_path / "s" / "curves.csv").read_text().splitlines()) == 2


def test_sweep_without_powers_fails(tmp_path, tiny_object, capsys):
    obj, _ = tiny_object
    (tmp_path / "c.json").write_text(json.dumps({"object": str(obj), "dataset": str(tmp_path),
                                                 "methods": ["random-gi"], "counts": [30]}))
    assert run("sweep", "--config", tmp_path / "c.json", "--out", tmp_path / "s") == 1
    assert "noise power" in capsys.readouterr().err


def test_stage_error_reported(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"object": str(tmp_path / "missing.pgm"), "dataset": ".",
                                                 "frame": [4, 4], "methods": ["random-gi"], "counts": [4]}))
    assert run("pipeline", "--config", tmp_path / "c.json", "--out", tmp_path / "o") == 1
    assert "load-object" in capsys.readouterr().err


def test_unknown_method(tmp_path, capsys):
    (tmp_path / "c.json").write_text("{}")
    assert run("pipeline", "--config", tmp_path / "c.json", "--methods", "nope") == 2


def test_bad_bit_rejected():
    with pytest.raises(SystemExit):
        run("gen-patterns", "--count", "1", "--bit", "8", "--out", "x")


def test_pca_kind_requires_model(tmp_path):
    with pytest.raises(SystemExit):
        run("gen-patterns", "--kind", "pca", "--count", "2", "--out", tmp_path / "p.rgip")
