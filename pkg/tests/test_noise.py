import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from apfbm.fbm import TimeGrid
from apfbm.noise import OuParams, brownian_increments, coarsen_gammas, gaussian_seq, ou_marginal, ou_step
from apfbm.streams import check_seed, make_rng


class TestOuParams:
    @pytest.mark.parametrize("eps", [-0.1, 1.5, float("nan")])
    def test_range(self, eps):
        with pytest.raises(ValueError):
            OuParams(eps)

    def test_limit_flag(self):
        assert OuParams(0.0).is_limit
        assert not OuParams(1e-12).is_limit


class TestOuStep:
    def test_one_relaxation_time(self):
        assert ou_step(1.0, OuParams(0.3), 0.3, 0.0) == pytest.approx(0.36787944117144233, rel=1e-15)

    @pytest.mark.parametrize("m", [-3.0, 0.0, 2.5])
    def test_limit_flag_returns_gamma(self, m):
        assert ou_step(m, OuParams(0.0), 0.1, 0.7) == 0.7

    def test_small_step_is_identity(self):
        assert ou_step(1.3, OuParams(0.5), 1e-14, 0.0) == pytest.approx(1.3, rel=1e-12)

    def test_large_ratio_underflows_to_gamma(self):
        assert ou_step(5.0, OuParams(1e-6), 1.0, 0.25) == 0.25

    def test_broadcast(self):
        out = ou_step(np.zeros(3), OuParams(0.1), 0.1, np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(out, np.sqrt(1 - math.exp(-2)) * np.array([1.0, 2.0, 3.0]))

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            ou_step(0.0, OuParams(0.1), 0.0, 0.0)

    @given(st.floats(1e-3, 1.0), st.floats(1e-4, 2.0))
    def test_stationary_law_preserved(self, eps, dt):
        # N(0,1) in, N(0,1) out: decay^2 + (1 - decay^2) = 1
        a = ou_step(1.0, OuParams(eps), dt, 0.0)
        b = ou_step(0.0, OuParams(eps), dt, 1.0)
        assert a**2 + b**2 == pytest.approx(1.0, rel=1e-12)


class TestOuMarginal:
    def test_start(self):
        assert ou_marginal(OuParams(0.2, 1.7), 0.0) == (1.7, 0.0)

    def test_one_relaxation_time(self):
        mean, var = ou_marginal(OuParams(0.4, 2.0), 0.4)
        assert mean == pytest.approx(0.7357588823428847, rel=1e-14)
        assert var == pytest.approx(0.8646647167633873, rel=1e-14)

    def test_stationary(self):
        assert ou_marginal(OuParams(0.01, 3.0), 100.0) == (0.0, 1.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            ou_marginal(OuParams(0.0), 1.0)
        with pytest.raises(ValueError):
            ou_marginal(OuParams(0.1), -1.0)

    @pytest.mark.parametrize("m0", [0.0, 1.5])
    def test_chain_matches_marginal(self, m0):
        params, dt, M = OuParams(0.1, m0), 0.05, 20000
        rng = make_rng(11, "ou", m0)
        m = np.full(M, m0)
        for n in range(1, 21):
            m = ou_step(m, params, dt, rng.standard_normal(M))
            if n in (1, 5, 20):
                mean, var = ou_marginal(params, n * dt)
                assert abs(m.mean() - mean) < 4 * math.sqrt(var / M)
                assert abs(m.var(ddof=1) - var) < 4 * var * math.sqrt(2 / (M - 1))


class TestBrownian:
    grid = TimeGrid(1.0, 16)

    def test_variance(self):
        inc = brownian_increments(self.grid, make_rng(12), n_paths=20000)
        v = inc[:, 3].var(ddof=1)
        assert abs(v - self.grid.dt) < 3 * self.grid.dt * math.sqrt(2 / 19999)

    def test_independence(self):
        inc = brownian_increments(self.grid, make_rng(13), n_paths=20000) / math.sqrt(self.grid.dt)
        rho = np.mean(inc[:, 1:] * inc[:, :-1])
        assert abs(rho) < 3 / math.sqrt(inc.size)

    def test_terminal_is_normal(self):
        inc = brownian_increments(self.grid, make_rng(14), n_paths=5000)
        assert stats.kstest(inc.sum(axis=1), "norm", args=(0, 1)).pvalue > 0.01

    def test_shape(self):
        assert brownian_increments(self.grid, make_rng(0)).shape == (16,)


class TestGaussianSeq:
    def test_replay(self):
        grid = TimeGrid(1.0, 50)
        a = gaussian_seq(grid, 99, "run", 3)
        b = gaussian_seq(grid, 99, "run", 3)
        c = gaussian_seq(grid, 99, "run", 4)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_coarsening_is_standard_normal(self):
        g = make_rng(15).standard_normal((20000, 8))
        c = coarsen_gammas(g, 4)
        assert c.shape == (20000, 2)
        np.testing.assert_allclose(c[:, 0], g[:, :4].sum(axis=1) / 2.0)
        assert abs(c.var() - 1) < 4 * math.sqrt(2 / c.size)

    def test_coarsen_identity_and_error(self):
        g = np.arange(6.0)
        assert coarsen_gammas(g, 1) is g
        with pytest.raises(ValueError):
            coarsen_gammas(g, 4)


class TestStreams:
    @pytest.mark.parametrize("seed", [-1, 2**64, 1.5, "7"])
    def test_bad_seed(self, seed):
        with pytest.raises((ValueError, TypeError)):
            check_seed(seed)

    def test_substreams_distinct_and_stable(self):
        a = make_rng(5, "driver", 0).standard_normal(4)
        np.testing.assert_array_equal(a, make_rng(5, "driver", 0).standard_normal(4))
        assert not np.array_equal(a, make_rng(5, "driver", 1).standard_normal(4))
        assert not np.array_equal(a, make_rng(5, "gamma", 0).standard_normal(4))
        assert not np.array_equal(a, make_rng(6, "driver", 0).standard_normal(4))
