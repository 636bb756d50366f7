import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import calinski_harabasz_score

from ggmclust.candidates import linkage_candidates
from ggmclust.core import Clustering, Hyperparams, SampleStats
from ggmclust.marginal import analytic_log_marginal_basic
from ggmclust.mcmc import McmcConfig
from ggmclust.selection import (
    Criterion,
    aic_score,
    chi_score,
    ebic_score,
    posterior_over_k,
    score,
    score_record,
    select,
)
from ggmclust.synth import SynthSpec, generate_dataset

from oracles import set_partitions


def _block_loglik_direct(stats, c, ridge=0.001):
    # Gaussian log-likelihood of the ridge block MLE, written out densely
    n, p = stats.n, stats.p
    Theta = np.zeros((p, p))
    for idx in c.blocks():
        Theta[np.ix_(idx, idx)] = np.linalg.inv(stats.S[np.ix_(idx, idx)] + ridge * np.eye(len(idx)))
    return 0.5 * n * (np.linalg.slogdet(Theta)[1] - np.trace(stats.S @ Theta) - p * np.log(2 * np.pi))


@pytest.fixture
def small():
    return generate_dataset(SynthSpec(cluster_sizes=(3, 3), n=300, seed=11))


class TestCriterion:
    def test_parse(self):
        assert Criterion.parse("ebic:0.5").gamma == 0.5
        assert Criterion.parse("proposed-vi:0.01").beta == 0.01
        assert Criterion.parse("basic-iw").name == "basic-iw"
        assert Criterion.parse("proposed-mcmc").name == "proposed-mcmc:0.02"

    def test_defaults(self):
        assert Criterion("ebic").exclude_one_cluster
        assert Criterion("aic").exclude_one_cluster
        assert not Criterion("proposed-vi").exclude_one_cluster

    def test_invalid(self):
        with pytest.raises(ValueError):
            Criterion("bic")
        with pytest.raises(ValueError):
            Criterion.parse("aic:3")
        with pytest.raises(ValueError):
            Criterion("proposed-vi", beta=1.0)


class TestScores:
    def test_ebic_aic_formulas(self, small):
        c = small.truth
        ll = _block_loglik_direct(small.stats, c)
        E = 6
        np.testing.assert_allclose(ebic_score(small.stats, c, 0.5), -(-2 * ll + E * np.log(300) + 4 * 0.5 * E * np.log(6)), rtol=1e-10)
        np.testing.assert_allclose(aic_score(small.stats, c), -(-2 * ll + 2 * (6 + E)), rtol=1e-10)

    def test_chi_matches_sklearn(self, small):
        c = Clustering((0, 0, 1, 1, 2, 2))
        d = np.sqrt(np.diag(small.stats.S))
        R = small.stats.S / np.outer(d, d)
        np.testing.assert_allclose(chi_score(small.stats, c), calinski_harabasz_score(R, c.as_array()), rtol=1e-12)

    def test_chi_degenerate(self, small):
        assert chi_score(small.stats, Clustering((0,) * 6)) == -np.inf
        assert chi_score(small.stats, Clustering(tuple(range(6)))) == -np.inf

    def test_basic_iw_is_analytic(self, small):
        c = small.truth
        np.testing.assert_allclose(score(small.stats, c, Criterion("basic-iw")), analytic_log_marginal_basic(small.stats, c, Hyperparams.default(c)))

    def test_mcmc_record(self, small):
        rec = score_record(small.stats, small.truth, Criterion("proposed-mcmc", beta=0.02), mcmc_cfg=McmcConfig(samples=100, kappa=1.0))
        assert {"log_marginal", "std_error", "acceptance_rates", "score"} <= set(rec)

    def test_dimension_mismatch(self, small):
        with pytest.raises(ValueError):
            score(small.stats, Clustering((0, 1)), Criterion("aic"))


class TestPosteriorOverK:
    def test_sums_to_one(self):
        cands = [Clustering(l) for l in [(0, 0, 1), (0, 1, 1), (0, 1, 2), (0, 0, 0)]]
        post = posterior_over_k([-1.0, -2.0, -0.5, -10.0], cands)
        assert set(post) == {1, 2, 3}
        np.testing.assert_allclose(sum(post.values()), 1.0)
        np.testing.assert_allclose(post[2], (np.exp(-1) + np.exp(-2)) / (np.exp(-1) + np.exp(-2) + np.exp(-0.5) + np.exp(-10)))

    def test_large_magnitudes(self):
        cands = [Clustering((0, 1)), Clustering((0, 0))]
        post = posterior_over_k([-1e6, -1e6 - np.log(3)], cands)
        np.testing.assert_allclose(post[2], 0.75)

    def test_refuses_non_likelihood(self):
        with pytest.raises(ValueError):
            posterior_over_k([0.0], [Clustering((0, 1))], Criterion("ebic"))
        with pytest.raises(ValueError):
            posterior_over_k([0.0], [Clustering((0, 1))], Criterion("chi"))

    @settings(max_examples=50, deadline=None)
    @given(scores=st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=15))
    def test_probability_vector(self, scores):
        parts = [Clustering(l) for l in list(set_partitions(4))[: len(scores)]]
        post = posterior_over_k(scores, parts)
        assert all(0.0 <= v <= 1.0 for v in post.values())
        np.testing.assert_allclose(sum(post.values()), 1.0)


class TestSelect:
    def test_ties_broken_by_labels(self):
        # identity covariance: the two pairings score exactly the same
        stats = SampleStats(10, np.eye(4))
        cands = [Clustering((0, 1, 1, 0)), Clustering((0, 0, 1, 1))]
        res = select(stats, cands, Criterion("basic-iw"))
        assert res.scores[0] == res.scores[1]
        assert res.best == Clustering((0, 0, 1, 1))

    def test_ties_prefer_fewer_clusters(self, monkeypatch):
        import ggmclust.selection as sel

        monkeypatch.setattr(sel, "score_record", lambda stats, c, *a, **k: {"score": 0.0})
        cands = [Clustering((0, 1, 2)), Clustering((0, 1, 1))]
        res = select(SampleStats(5, np.eye(3)), cands, Criterion("aic"))
        assert res.best == Clustering((0, 1, 1))

    def test_excludes_one_cluster(self, small):
        cands = [Clustering((0,) * 6), small.truth]
        res = select(small.stats, cands, Criterion("aic"))
        assert all(c.k > 1 for c in res.candidates)
        assert res.posterior_k is None

    def test_recovers_truth(self, small):
        cands = list(linkage_candidates(small.stats, "average")) + [Clustering((0,) * 6)]
        for crit in ("proposed-vi", "basic-iw"):
            res = select(small.stats, cands, Criterion.parse(crit))
            assert res.best == small.truth
            assert res.posterior_k[2] > 0.5
            out = res.to_json()
            assert out["best"]["k"] == 2

    def test_permutation_invariant_choice(self, small):
        perm = np.random.default_rng(0).permutation(6)
        stats_p = SampleStats(small.stats.n, small.stats.S[np.ix_(perm, perm)])
        cands = list(linkage_candidates(small.stats, "average"))
        cands_p = [Clustering(tuple(c.as_array()[perm].tolist())) for c in cands]
        a = select(small.stats, cands, Criterion("proposed-vi"))
        b = select(stats_p, cands_p, Criterion("proposed-vi"))
        assert Clustering(tuple(a.best.as_array()[perm].tolist())) == b.best
