import numpy as np
import pytest

from retina_gi.core import RngSpec, Roi, load_image
from retina_gi.corpus import KINDS, make_scene, make_test_object, write_corpus


@pytest.mark.parametrize("kind", KINDS)
def test_scene_range_and_determinism(kind):
    a = make_scene(kind, 40, RngSpec(3))
    assert a.shape == (40, 40) and a.min() >= 0 and a.max() <= 1
    np.testing.assert_array_equal(a, make_scene(kind, 40, RngSpec(3)))
    assert a.std() > 0.01


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_scene("faces", 8, RngSpec(0))


def test_write_corpus(tmp_path):
    paths = write_corpus(tmp_path, 4, size=16, seed=2)
    assert [p.name for p in paths] == [f"img_{i:05d}.pgm" for i in range(4)]
    assert load_image(paths[0], 16, 16).shape == (16, 16)


def test_test_object_spans_roi():
    roi = Roi.centered((32, 32), (16, 16))
    obj = make_test_object("shapes", (32, 32), roi, seed=1)
    part = obj[roi.slices]
    assert part.min() == 0.0 and part.max() == 1.0
    assert obj.min() >= 0 and obj.max() <= 1


def test_test_object_not_in_corpus(tmp_path):
    roi = Roi.full((16, 16))
    obj = make_test_object("shapes", (16, 16), roi, seed=0, source_size=16)
    for p in write_corpus(tmp_path, 20, size=16, seed=0):
        assert not np.allclose(load_image(p, 16, 16), obj, atol=2 / 255)
