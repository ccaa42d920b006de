import numpy as np
import pytest

from retina_gi.core import MeasurementRecord, PatternStack, RngSpec
from retina_gi.forward import NoiseSpec, add_wgn, load_record, measure, save_record
from retina_gi.patterns import gen_random_stack


def test_all_ones_pattern():
    rec = measure(PatternStack(np.ones((1, 2, 2))), np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert rec.intensities.tolist() == [2.0]


def test_all_zeros_pattern(rng):
    rec = measure(PatternStack(np.zeros((3, 4, 4))), rng.random((4, 4)))
    assert rec.intensities.tolist() == [0.0, 0.0, 0.0]


def test_canonical_basis(rng):
    obj = rng.random((3, 5))
    rec = measure(PatternStack(np.eye(15, dtype=np.uint8).reshape(15, 3, 5)), obj)
    np.testing.assert_array_equal(rec.intensities, obj.ravel())


def test_linearity(rng):
    s = gen_random_stack(20, 6, 6, RngSpec(0))
    a, b = rng.random((6, 6)) / 2, rng.random((6, 6)) / 2
    np.testing.assert_allclose(measure(s, a + b).intensities,
                               measure(s, a).intensities + measure(s, b).intensities, atol=1e-12)


@pytest.mark.parametrize("bad", [np.ones((3, 3)), np.full((4, 4), 1.5)])
def test_bad_object(bad):
    with pytest.raises(ValueError):
        measure(PatternStack(np.ones((1, 4, 4))), bad)


def test_variance_from_dbw():
    assert NoiseSpec(-10, RngSpec(0)).variance == pytest.approx(0.1, rel=1e-12)


def test_empty_record_gets_metadata():
    out = add_wgn(MeasurementRecord(np.zeros(0)), NoiseSpec(-20, RngSpec(4)))
    assert out.count == 0 and out.noise_power_dbw == -20 and out.rng_seed == 4


def test_noise_moments():
    out = add_wgn(MeasurementRecord(np.zeros(100_000)), NoiseSpec(0.0, RngSpec(11)))
    assert -0.016 <= out.intensities.mean() <= 0.016
    assert 0.985 <= out.intensities.var(ddof=1) <= 1.015


def test_noise_deterministic_and_prefix_stable():
    spec = NoiseSpec(-5, RngSpec(2))
    long = add_wgn(MeasurementRecord(np.zeros(5000)), spec).intensities
    short = add_wgn(MeasurementRecord(np.zeros(300)), spec).intensities
    np.testing.assert_array_equal(long[:300], short)


def test_double_noise_rejected():
    rec = add_wgn(MeasurementRecord(np.zeros(3)), NoiseSpec(0, RngSpec(0)))
    with pytest.raises(RuntimeError):
        add_wgn(rec, NoiseSpec(0, RngSpec(0)))


def test_nonfinite_power():
    with pytest.raises(ValueError):
        NoiseSpec(float("nan"), RngSpec(0))


def test_record_round_trip(tmp_path, rng):
    rec = add_wgn(MeasurementRecord(rng.random(17) * 100), NoiseSpec(-30, RngSpec(3)))
    save_record(rec, tmp_path / "m.csv")
    assert load_record(tmp_path / "m.csv") == rec


def test_record_bad_header(tmp_path):
    (tmp_path / "m.csv").write_text("a,b\n0,1\n")
    with pytest.raises(ValueError):
        load_record(tmp_path / "m.csv")
