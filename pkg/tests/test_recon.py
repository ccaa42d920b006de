import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog
from sklearn.base import clone

from retina_gi.core import MeasurementRecord, PatternStack, RngSpec
from retina_gi.forward import measure
from retina_gi.metrics import psnr
from retina_gi.patterns import gen_random_stack
from retina_gi.recon import (
    CorrelationReconstructor,
    TvConfig,
    TVReconstructor,
    gradient,
    gradient_adjoint,
    gradient_matrix,
    minmax,
    reconstruct,
    reconstruct_correlation,
    reconstruct_tv,
)


def canonical(h, w):
    return PatternStack(np.eye(h * w, dtype=np.uint8).reshape(h * w, h, w))


def blocks16():
    o = np.zeros((16, 16))
    o[3:9, 2:12] = 0.8
    o[10:14, 5:15] = 0.3
    o[6:13, 9:12] = 1.0
    return o


class TestGradient:
    def test_constant(self):
        assert not gradient(np.full(12, 3.0), (3, 4)).any()

    def test_vertical_step(self):
        u = np.zeros((5, 6))
        u[3:] = 2.5
        g = gradient(u, (5, 6))
        gy = g[30:]
        assert np.count_nonzero(gy) == 6 and np.allclose(gy[gy != 0], 2.5)
        assert not g[:30].any()

    @pytest.mark.parametrize("boundary", ["replicate", "periodic"])
    def test_adjoint(self, boundary):
        rng = np.random.default_rng(0)
        for _ in range(5):
            u, v = rng.normal(size=42), rng.normal(size=84)
            lhs = gradient(u, (6, 7), boundary) @ v
            rhs = u @ gradient_adjoint(v, (6, 7), boundary)
            assert abs(lhs - rhs) < 1e-10

    @pytest.mark.parametrize("boundary", ["replicate", "periodic"])
    def test_matrix_agrees(self, boundary):
        u = np.random.default_rng(1).normal(size=20)
        np.testing.assert_allclose(gradient_matrix((4, 5), boundary) @ u, gradient(u, (4, 5), boundary), atol=1e-14)

    def test_periodic_wraps(self):
        u = np.arange(3.0)
        np.testing.assert_allclose(gradient(u, (1, 3), "periodic")[:3], [1, 1, -2])

    @settings(max_examples=25)
    @given(arrays(np.float64, 12, elements=st.floats(-10, 10)), arrays(np.float64, 12, elements=st.floats(-10, 10)),
           st.floats(-3, 3), st.floats(-3, 3))
    def test_linear(self, a, b, x, y):
        lhs = gradient(x * a + y * b, (3, 4))
        rhs = x * gradient(a, (3, 4)) + y * gradient(b, (3, 4))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(lhs).max()))

    def test_bad_boundary(self):
        with pytest.raises(ValueError):
            gradient(np.zeros(4), (2, 2), "mirror")


class TestCorrelation:
    def test_canonical_pearson(self, rng):
        obj = rng.random((6, 6))
        s = canonical(6, 6)
        res = reconstruct_correlation(s, measure(s, obj))
        assert np.corrcoef(res.raw.ravel(), obj.ravel())[0, 1] == pytest.approx(1.0, abs=1e-10)

    def test_constant_measurements(self):
        s = gen_random_stack(20, 4, 4, RngSpec(0))
        res = reconstruct_correlation(s, MeasurementRecord(np.full(20, 3.0)))
        np.testing.assert_allclose(res.raw, 0.0, atol=1e-15)
        assert not res.image.any()

    def test_single_pattern(self):
        s = gen_random_stack(1, 4, 4, RngSpec(0))
        with pytest.raises(ValueError):
            reconstruct_correlation(s, MeasurementRecord([1.0]))

    def test_affine_invariance(self, rng):
        s = gen_random_stack(50, 5, 5, RngSpec(1))
        i = measure(s, rng.random((5, 5))).intensities
        a = reconstruct_correlation(s, MeasurementRecord(i)).image
        b = reconstruct_correlation(s, MeasurementRecord(3.0 * i + 7.0)).image
        np.testing.assert_allclose(a, b, atol=1e-12)


def tv_lp(stack, intensities):
    """Reference: min |G o|_1 subject to S o = I, as a linear program."""
    s = stack.as_matrix()
    t, n = s.shape
    g = gradient_matrix(stack.shape)
    m = g.shape[0]
    eye = sp.identity(m)
    a_ub = sp.vstack([sp.hstack([g, -eye]), sp.hstack([-g, -eye])])
    a_eq = sp.hstack([sp.csr_matrix(s), sp.csr_matrix((t, m))])
    res = linprog(np.r_[np.zeros(n), np.ones(m)], A_ub=a_ub, b_ub=np.zeros(2 * m), A_eq=a_eq,
                  b_eq=intensities, bounds=[(None, None)] * n + [(0, None)] * m, method="highs")
    assert res.status == 0
    return res.x[:n].reshape(stack.shape)


class TestTv:
    def test_canonical_matches_linear_solve(self, rng):
        obj = rng.random((8, 8))
        s = canonical(8, 8)
        rec = measure(s, obj)
        oracle = np.linalg.solve(s.as_matrix(), rec.intensities).reshape(8, 8)
        res = reconstruct_tv(s, rec, TvConfig(tv_weight=1e-6, max_iters=2000, rel_tol=1e-10))
        assert np.abs(res.raw - oracle).max() <= 1e-3

    def test_zero_fixed_point(self):
        res = reconstruct_tv(PatternStack(np.zeros((5, 4, 4))), MeasurementRecord(np.zeros(5)))
        assert not res.raw.any() and not res.image.any()

    def test_piecewise_constant_recovery(self):
        obj = blocks16()
        s = gen_random_stack(128, 16, 16, RngSpec(0))
        rec = measure(s, obj)
        # the LP oracle confirms the object is the TV-minimal consistent image
        assert psnr(obj, minmax(tv_lp(s, rec.intensities))) > 60
        res = reconstruct_tv(s, rec)
        assert psnr(obj, res.image) > 30

    def test_residual_not_worse_than_first_iterate(self):
        s = gen_random_stack(300, 16, 16, RngSpec(3))
        res = reconstruct_tv(s, measure(s, blocks16()))
        assert res.final_residual <= res.initial_residual

    def test_iteration_cap_is_not_an_error(self):
        s = gen_random_stack(60, 12, 12, RngSpec(4))
        res = reconstruct_tv(s, measure(s, np.random.default_rng(4).random((12, 12))), TvConfig(max_iters=3))
        assert res.iterations_used == 3 and res.final_residual >= 0

    def test_deterministic(self):
        s = gen_random_stack(40, 8, 8, RngSpec(5))
        rec = measure(s, np.random.default_rng(5).random((8, 8)))
        np.testing.assert_array_equal(reconstruct_tv(s, rec).raw, reconstruct_tv(s, rec).raw)

    def test_periodic_boundary_runs(self):
        s = gen_random_stack(128, 16, 16, RngSpec(0))
        res = reconstruct_tv(s, measure(s, blocks16()), TvConfig(boundary="periodic"))
        assert psnr(blocks16(), res.image) > 30

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            reconstruct_tv(gen_random_stack(2, 2, 2, RngSpec(0)), MeasurementRecord([1.0, np.nan]))

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct_tv(gen_random_stack(3, 2, 2, RngSpec(0)), MeasurementRecord([1.0, 2.0]))

    @pytest.mark.parametrize("kw", [dict(tv_weight=0), dict(penalty=-1), dict(max_iters=0),
                                    dict(rel_tol=0), dict(boundary="zero")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TvConfig(**kw)

    def test_dispatch(self):
        s = canonical(3, 3)
        rec = measure(s, np.eye(3))
        assert reconstruct(s, rec, "correlation").iterations_used == 1
        with pytest.raises(ValueError):
            reconstruct(s, rec, "magic")


class TestEstimators:
    def test_tv_regressor(self):
        s = gen_random_stack(128, 16, 16, RngSpec(0))
        y = measure(s, blocks16()).intensities
        est = TVReconstructor().fit(s, y)
        assert est.image_.shape == (16, 16) and est.n_iter_ >= 1
        assert est.score(s, y) > 0.999
        assert clone(est).get_params() == est.get_params()

    def test_tv_accepts_arrays(self):
        bits = np.eye(9, dtype=np.uint8).reshape(9, 3, 3)
        est = TVReconstructor(tv_weight=1e-8, max_iters=2000, rel_tol=1e-10).fit(bits, np.arange(9.0) / 10)
        np.testing.assert_allclose(est.coef_, np.arange(9.0) / 10, atol=1e-4)

    def test_correlation_estimator(self, rng):
        s = canonical(4, 4)
        est = CorrelationReconstructor().fit(s, measure(s, rng.random((4, 4))).intensities)
        assert est.image_.min() == 0 and est.image_.max() == 1
