import numpy as np
import pytest

from ggmclust.admm import (
    AdmmConfig,
    beta_zero_solution,
    embed_blocks,
    map_objective,
    solve_map,
    write_trace_csv,
)
from ggmclust.core import Clustering, Hyperparams, SampleStats

from conftest import random_instance
from oracles import map_objective_oracle


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestBetaZero:
    def test_closed_form_recovered(self, rng):
        # residual tolerance bounds iterate error only up to conditioning;
        # 1e-9 residuals give 1e-6 relative accuracy on these instances
        cfg = AdmmConfig(tol_primal=1e-9, tol_dual=1e-9, exact_beta_zero=False)
        for _ in range(10):
            stats, c = random_instance(rng)
            h = Hyperparams.default(c, 0.0)
            sol = solve_map(stats, c, h, cfg)
            assert sol.converged
            X_eps, X_blocks = beta_zero_solution(stats, c, h)
            assert _rel(sol.X_eps, X_eps) <= 1e-6
            for A, B in zip(sol.X_blocks, X_blocks):
                assert _rel(A, B) <= 1e-6

    def test_default_tolerance_is_close(self, rng):
        stats, c = random_instance(rng)
        h = Hyperparams.default(c, 0.0)
        sol = solve_map(stats, c, h, AdmmConfig(exact_beta_zero=False))
        assert sol.iterations > 0
        _, X_blocks = beta_zero_solution(stats, c, h)
        for A, B in zip(sol.X_blocks, X_blocks):
            assert _rel(A, B) <= 1e-3

    def test_shortcut(self, rng):
        stats, c = random_instance(rng)
        h = Hyperparams.default(c, 0.0)
        sol = solve_map(stats, c, h)
        assert sol.iterations == 0 and sol.converged
        _, X_blocks = beta_zero_solution(stats, c, h)
        for A, B in zip(sol.X_blocks, X_blocks):
            np.testing.assert_array_equal(A, B)

    def test_closed_form_values(self):
        # p = 1: X = (n + a) / (n S + A) with a = nu + 2 = 4
        stats = SampleStats(10, np.array([[0.5]]))
        c = Clustering((0,))
        X_eps, (X1,) = beta_zero_solution(stats, c, Hyperparams.default(c, 0.0))
        np.testing.assert_allclose(X1, [[14.0 / 6.0]])
        np.testing.assert_allclose(X_eps, [[4.0]])


class TestAgainstOracle:
    @pytest.mark.parametrize("beta", [0.01, 0.02, 0.3])
    def test_objective_matches_lbfgs(self, rng, beta):
        for _ in range(4):
            stats, c = random_instance(rng, p=int(rng.integers(2, 7)))
            h = Hyperparams.default(c, beta)
            sol = solve_map(stats, c, h)
            assert sol.converged
            ref = map_objective_oracle(stats, c, h)
            assert sol.objective <= ref + 1e-5 * abs(ref)
            np.testing.assert_allclose(sol.objective, ref, rtol=1e-5)

    def test_reported_objective(self, rng):
        stats, c = random_instance(rng)
        h = Hyperparams.default(c, 0.02)
        sol = solve_map(stats, c, h)
        np.testing.assert_allclose(sol.objective, map_objective(sol.X_eps, sol.X_blocks, stats, c, h), rtol=1e-12)

    def test_geometric_and_adaptive_agree(self, rng):
        stats, c = random_instance(rng, p=5, n=60)
        h = Hyperparams.default(c, 0.02)
        a = solve_map(stats, c, h, AdmmConfig(rho_schedule="adaptive"))
        g = solve_map(stats, c, h, AdmmConfig(rho_schedule="geometric"))
        assert a.converged and g.converged
        np.testing.assert_allclose(a.objective, g.objective, rtol=1e-6)


class TestNewtonPolish:
    def test_rescues_truncated_admm(self, rng):
        stats, c = random_instance(rng, p=6, n=50)
        h = Hyperparams.default(c, 0.02)
        sol = solve_map(stats, c, h, AdmmConfig(max_iters=3))
        assert sol.converged and not sol.admm_converged
        assert sol.newton_steps > 0
        np.testing.assert_allclose(sol.objective, map_objective_oracle(stats, c, h), rtol=1e-8)

    def test_agrees_with_plain_admm(self, rng):
        for _ in range(3):
            stats, c = random_instance(rng)
            h = Hyperparams.default(c, 0.05)
            a = solve_map(stats, c, h)
            b = solve_map(stats, c, h, AdmmConfig(polish=False))
            assert a.converged and b.converged
            assert a.objective <= b.objective + 1e-9 * abs(b.objective)
            np.testing.assert_allclose(a.objective, b.objective, rtol=1e-6)

    def test_ill_conditioned_blocks(self):
        # near-singular block precisions stall first-order ADMM
        rng = np.random.default_rng(3)
        d, k, n = 4, 3, 4000
        blocks = []
        for _ in range(k):
            G = rng.standard_normal((d + 1, d))
            blocks.append(np.linalg.inv(G.T @ G))
        Sigma = np.zeros((d * k, d * k))
        for j, B in enumerate(blocks):
            Sigma[j * d:(j + 1) * d, j * d:(j + 1) * d] = B
        X = rng.multivariate_normal(np.zeros(d * k), Sigma, size=n)
        stats = SampleStats.from_data(X)
        c = Clustering(tuple(np.repeat(np.arange(k), d).tolist()))
        h = Hyperparams.default(c, 0.02)
        sol = solve_map(stats, c, h, AdmmConfig(polish_after=200))
        assert sol.converged
        ref = map_objective_oracle(stats, c, h)
        assert sol.objective <= ref + 1e-7 * abs(ref)
        for M in [sol.X_eps, sol.Z] + sol.X_blocks:
            assert np.linalg.eigvalsh(M)[0] > 0

    def test_beta_zero_not_polished(self, rng):
        stats, c = random_instance(rng)
        sol = solve_map(stats, c, Hyperparams.default(c, 0.0), AdmmConfig(exact_beta_zero=False))
        assert sol.newton_steps == 0


class TestSolverContract:
    def test_residuals_at_convergence(self, rng):
        for _ in range(5):
            stats, c = random_instance(rng)
            sol = solve_map(stats, c, Hyperparams.default(c, 0.02))
            assert sol.converged
            assert sol.primal_residual <= 1e-6 * (1 + np.linalg.norm(sol.Z))
            assert sol.dual_residual <= 1e-6 * (1 + np.linalg.norm(sol.U))

    def test_iterates_spd(self, rng):
        stats, c = random_instance(rng)
        sol = solve_map(stats, c, Hyperparams.default(c, 0.05))
        for M in [sol.X_eps, sol.Z] + sol.X_blocks:
            assert np.linalg.eigvalsh(M)[0] > 0

    def test_max_iters_flags_nonconvergence(self, rng):
        stats, c = random_instance(rng, p=6, n=50)
        sol = solve_map(stats, c, Hyperparams.default(c, 0.02), AdmmConfig(max_iters=3, polish=False))
        assert not sol.converged and not sol.admm_converged
        assert sol.iterations == 3

    def test_permutation_equivariance(self, rng):
        stats, c = random_instance(rng, p=6, n=40, k=2)
        perm = rng.permutation(6)
        stats_p = SampleStats(stats.n, stats.S[np.ix_(perm, perm)])
        c_p = Clustering(tuple(np.asarray(c.labels)[perm].tolist()))
        a = solve_map(stats, c, Hyperparams.default(c, 0.02))
        b = solve_map(stats_p, c_p, Hyperparams.default(c_p, 0.02))
        np.testing.assert_allclose(a.objective, b.objective, rtol=1e-7)

    def test_dimension_mismatch(self, rng):
        stats, _ = random_instance(rng, p=4)
        c = Clustering((0, 1, 1))
        with pytest.raises(ValueError):
            solve_map(stats, c, Hyperparams.default(c))

    def test_embed_blocks(self):
        c = Clustering((0, 1, 0))
        M = embed_blocks([np.array([[1.0, 2.0], [2.0, 3.0]]), np.array([[5.0]])], c)
        np.testing.assert_array_equal(M, [[1, 0, 2], [0, 5, 0], [2, 0, 3]])

    def test_trace_csv(self, rng, tmp_path):
        stats, c = random_instance(rng, p=4)
        sol = solve_map(stats, c, Hyperparams.default(c, 0.02), AdmmConfig(record_trace=True))
        path = tmp_path / "trace.csv"
        write_trace_csv(sol, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,objective,primal_residual,dual_residual,rho"
        assert len(lines) == sol.iterations + 1

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(polish_after=0)
        with pytest.raises(ValueError):
            AdmmConfig(rho_init=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(rho_schedule="fixed")
