import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ggmclust.core import NotPositiveDefiniteError
from ggmclust.linalg import inv_spd, logdet_spd, solve_stationarity, sym_eig

from oracles import random_spd


def _residual(V, R, lam):
    return np.linalg.norm(-np.linalg.inv(V) + lam * V - R)


class TestSolveStationarity:
    def test_scalar_root(self):
        # -1/v + 2 v = 1  ->  2v^2 - v - 1 = 0  ->  v = 1
        np.testing.assert_allclose(solve_stationarity(np.array([[1.0]]), 2.0), [[1.0]])

    def test_zero_rhs(self):
        np.testing.assert_allclose(solve_stationarity(np.zeros((3, 3)), 4.0), 0.5 * np.eye(3), atol=1e-15)

    def test_strongly_negative_spectrum(self):
        # the cancellation-prone branch: V ~ -1/w for w << 0
        R = np.diag([-1e8, -1e4, 1e4])
        V = solve_stationarity(R, 1e-6)
        assert np.all(np.linalg.eigvalsh(V) > 0)
        np.testing.assert_allclose(V[0, 0], 1e-8, rtol=1e-12)
        assert _residual(V, R, 1e-6) <= 1e-8 * (1 + np.linalg.norm(R))

    @settings(max_examples=200, deadline=None)
    @given(
        d=st.integers(1, 12),
        log_lam=st.floats(-2, 6),
        log_scale=st.floats(-4, 1),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_residual_and_spd(self, d, log_lam, log_scale, seed):
        # cond(V) grows like ||R||^2 / lam; beyond ~1e8 no float64 V meets the bound
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((d, d)) * 10.0 ** log_scale
        R = A + A.T
        lam = 10.0 ** log_lam
        V = solve_stationarity(R, lam)
        assert np.all(np.linalg.eigvalsh(V) > 0)
        assert _residual(V, R, lam) <= 1e-8 * (1 + np.linalg.norm(R))

    @settings(max_examples=100, deadline=None)
    @given(d=st.integers(1, 8), log_lam=st.floats(-4, 8), seed=st.integers(0, 2**32 - 1))
    def test_always_spd(self, d, log_lam, seed):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((d, d)) * 1e3
        V = solve_stationarity(A + A.T, 10.0 ** log_lam)
        assert np.all(np.linalg.eigvalsh(V) > 0)

    def test_rejects_nonpositive_lambda(self):
        with pytest.raises(ValueError):
            solve_stationarity(np.eye(2), 0.0)


class TestSymEig:
    def test_reconstruction(self, rng):
        A = random_spd(5, rng) - 2 * np.eye(5)
        w, Q = sym_eig(A)
        assert np.all(np.diff(w) >= 0)
        np.testing.assert_allclose((Q * w) @ Q.T, A, atol=1e-12)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            sym_eig(np.array([[1.0, 1.0], [0.0, 1.0]]))


class TestSpdHelpers:
    def test_logdet_matches_slogdet(self, rng):
        A = random_spd(6, rng, cond=1e4)
        np.testing.assert_allclose(logdet_spd(A), np.linalg.slogdet(A)[1], rtol=1e-12)

    def test_inverse(self, rng):
        A = random_spd(6, rng)
        np.testing.assert_allclose(inv_spd(A) @ A, np.eye(6), atol=1e-12)

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefiniteError):
            logdet_spd(np.diag([1.0, -1.0]))
        with pytest.raises(NotPositiveDefiniteError):
            inv_spd(np.zeros((2, 2)))
