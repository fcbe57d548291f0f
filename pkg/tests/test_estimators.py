import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from qdag.estimators import DdqnDiscovery, GreedyBicSearch, RankGaussianTransformer
from qdag.graphs import Dag
from qdag.scoring import rank_gaussian_transform
from qdag.sem import simulate_sem


def chain_data(p=4, n=800, seed=3, w=0.8):
    weights = np.zeros((p, p))
    adj = np.zeros((p, p), dtype=np.int8)
    for i in range(p - 1):
        weights[i, i + 1] = w
        adj[i, i + 1] = 1
    return simulate_sem(Dag(adj), weights, n, seed=seed), adj


class TestRankGaussianTransformer:
    def test_fit_transform_matches_function(self):
        x, _ = chain_data()
        tr = RankGaussianTransformer().fit(x)
        assert np.array_equal(tr.transform(x), rank_gaussian_transform(x))

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            RankGaussianTransformer().transform(np.zeros((5, 2)))

    def test_feature_count_checked(self):
        x, _ = chain_data()
        tr = RankGaussianTransformer().fit(x)
        with pytest.raises(ValueError):
            tr.transform(x[:, :2])

    def test_clone(self):
        clone(RankGaussianTransformer())


class TestGreedyBicSearch:
    def test_fit_recovers_chain_skeleton(self):
        x, adj = chain_data(n=2000)
        est = GreedyBicSearch(budget=12).fit(x)
        skel_est = {frozenset(e) for e in zip(*np.nonzero(est.adjacency_))}
        skel_true = {frozenset(e) for e in zip(*np.nonzero(adj))}
        assert skel_est == skel_true
        assert est.n_features_in_ == 4
        assert est.dataset_kind_ == "copula-gaussian"

    def test_get_set_params(self):
        est = GreedyBicSearch(budget=5, max_iters=7)
        params = est.get_params()
        assert params == {"budget": 5, "max_iters": 7}
        est.set_params(max_iters=9)
        assert est.max_iters == 9
        clone(est)

    def test_score_on_new_data(self):
        x, _ = chain_data(n=1000, seed=3)
        x2, _ = chain_data(n=1000, seed=4)
        est = GreedyBicSearch().fit(x)
        assert np.isfinite(est.score(x2))


class TestDdqnDiscovery:
    def _fit(self, **kwargs):
        x, adj = chain_data(n=800)
        base = dict(episodes=8, hidden_widths=(16,), warmup_transitions=40,
                    batch=16, random_state=0)
        base.update(kwargs)
        return DdqnDiscovery(**base).fit(x), x, adj

    def test_fit_attributes_and_safety(self):
        est, x, _ = self._fit()
        assert est.adjacency_.shape == (4, 4)
        assert est.score_ >= est.opponent_score_
        assert est.report_.safety_ok
        assert est.dataset_kind_ == "copula-gaussian"

    def test_clone_and_params_round_trip(self):
        est = DdqnDiscovery(episodes=3, gamma=0.5)
        dup = clone(est)
        assert dup.get_params() == est.get_params()

    def test_score_method(self):
        est, x, _ = self._fit()
        x2, _ = chain_data(n=500, seed=9)
        assert np.isfinite(est.score(x2))

    def test_prune_flag(self):
        est, _, _ = self._fit(prune=True, prune_threshold=0.05)
        assert est.adjacency_.sum() <= est.report_.output_graph.edge_count()

    def test_external_opponent(self, tmp_path):
        x, adj = chain_data(n=600)
        path = tmp_path / "opp.csv"
        np.savetxt(path, adj, fmt="%d", delimiter=",")
        est = DdqnDiscovery(opponent=str(path), episodes=4, hidden_widths=(16,),
                            warmup_transitions=30, batch=8, random_state=1).fit(x)
        assert np.array_equal(est.opponent_adjacency_, adj)

    def test_determinism_under_random_state(self):
        a, x, _ = self._fit(random_state=5)
        b = DdqnDiscovery(episodes=8, hidden_widths=(16,), warmup_transitions=40,
                          batch=16, random_state=5).fit(x)
        assert np.array_equal(a.adjacency_, b.adjacency_)
