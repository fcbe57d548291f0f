import math

import numpy as np
import pytest

from qdag.errors import EditRejected, InputError
from qdag.graphs import Dag, EdgeEdit, Op, apply_edit, decode_action, valid_action_mask
from qdag.scoring import (
    KIND_BINARY,
    KIND_COPULA,
    DiscreteBicScorer,
    GaussianBicScorer,
    ScoredDataset,
    delta_score,
    discrete_bic,
    gaussian_bic,
    load_dataset_csv,
    make_scorer,
    prepare_dataset,
    rank_gaussian_transform,
    save_dataset_csv,
)
from qdag.sem import SemSpec, random_dag, simulate_sem

from oracles import all_dags, discrete_bic_total, gaussian_bic_total, normal_quantile_bisect


def dag_from_edges(p, edges):
    adj = np.zeros((p, p), dtype=np.int8)
    for i, j in edges:
        adj[i, j] = 1
    return Dag(adj)


def chain_dataset(n=2000, seed=3, w=0.8):
    weights = np.zeros((3, 3))
    weights[0, 1] = weights[1, 2] = w
    chain = dag_from_edges(3, [(0, 1), (1, 2)])
    return prepare_dataset(simulate_sem(chain, weights, n, seed=seed)), chain


class TestRankGaussianTransform:
    def test_three_point_column(self):
        out = rank_gaussian_transform(np.array([[1.0], [2.0], [3.0]]))
        assert out[1, 0] == 0.0
        # quantile at 5/6, against a bisection inversion of the normal CDF
        expected = normal_quantile_bisect(5.0 / 6.0)
        assert out[2, 0] == pytest.approx(expected, abs=1e-10)
        assert out[2, 0] == pytest.approx(0.96742, abs=1e-5)
        assert out[0, 0] == pytest.approx(-expected, abs=1e-10)

    def test_monotone_invariance_exact(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(50, 4))
        monotone = np.exp(3.0 * x) + 7.0
        assert np.array_equal(rank_gaussian_transform(x), rank_gaussian_transform(monotone))

    def test_ties_get_average_ranks(self):
        out = rank_gaussian_transform(np.array([[1.0], [1.0], [2.0], [3.0]]))
        assert out[0, 0] == out[1, 0]

    def test_constant_column_named(self):
        x = np.ones((5, 3))
        x[:, 0] = np.arange(5)
        x[:, 2] = np.arange(5) * 2
        with pytest.raises(InputError, match="column 1"):
            rank_gaussian_transform(x)

    def test_too_few_rows(self):
        with pytest.raises(InputError):
            rank_gaussian_transform(np.array([[1.0], [2.0]]))


class TestPrepareDataset:
    def test_binary_detection(self):
        ds = prepare_dataset(np.array([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]))
        assert ds.kind == KIND_BINARY
        assert ds.column_kinds == ("binary", "binary")

    def test_continuous_detection(self):
        rng = np.random.default_rng(0)
        ds = prepare_dataset(rng.normal(size=(10, 2)))
        assert ds.kind == KIND_COPULA

    def test_mixed_rejected(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(10, 2))
        x[:, 1] = (x[:, 1] > 0).astype(float)
        with pytest.raises(InputError, match="mixed"):
            prepare_dataset(x)

    def test_copula_columns_match_recomputed_transform(self):
        rng = np.random.default_rng(5)
        raw = rng.gamma(2.0, size=(40, 3))
        ds = prepare_dataset(raw)
        again = rank_gaussian_transform(raw)
        assert np.max(np.abs(ds.values.mean(axis=0) - again.mean(axis=0))) < 1e-9


class TestGaussianBic:
    def test_empty_graph_closed_form(self):
        rng = np.random.default_rng(1)
        raw = rng.normal(size=(300, 4))
        ds = prepare_dataset(raw)
        value = gaussian_bic(ds, Dag.empty(4))
        n = ds.n
        expected_ll = sum(
            -0.5 * n * (math.log(2 * math.pi * np.mean(ds.values[:, j] ** 2)) + 1)
            for j in range(4)
        )
        assert value.loglik == pytest.approx(expected_ll, rel=1e-12)
        assert value.k == 4
        assert value.penalty == pytest.approx(0.5 * 4 * math.log(n))
        assert value.total == pytest.approx(value.loglik - value.penalty)
        # the transform centers columns, so mean square ~ variance
        for j in range(4):
            col = ds.values[:, j]
            assert np.mean(col ** 2) == pytest.approx(np.var(col), rel=1e-9)

    def test_chain_beats_empty(self):
        ds, chain = chain_dataset()
        s_true = gaussian_bic(ds, chain)
        s_empty = gaussian_bic(ds, Dag.empty(3))
        assert s_true.total > s_empty.total
        assert s_true.total == pytest.approx(gaussian_bic_total(ds.values, chain.adj), rel=1e-10)

    def test_exhaustive_p3_against_oracle(self):
        ds, _ = chain_dataset(n=400, seed=9)
        adjs = all_dags(3)
        assert len(adjs) == 25
        for adj in adjs:
            mine = gaussian_bic(ds, Dag(adj)).total
            ref = gaussian_bic_total(ds.values, adj)
            assert abs(mine - ref) <= 1e-8 * abs(ref)

    def test_collinear_parents_survive(self):
        # duplicate a column's information: x2 = x0 + x1 exactly in raw space
        rng = np.random.default_rng(2)
        raw = rng.normal(size=(100, 4))
        raw[:, 2] = raw[:, 0]  # after rank transform columns 0 and 2 identical
        ds = prepare_dataset(raw)
        g = dag_from_edges(4, [(0, 3), (2, 3)])
        value = gaussian_bic(ds, g)
        assert np.isfinite(value.total)

    def test_variance_clamp_flag(self):
        raw = np.column_stack([np.arange(100.0), np.arange(100.0) * 2 + 3])
        ds = prepare_dataset(raw)
        # column 1 is an exact monotone copy: identical transform, zero residual
        value = gaussian_bic(ds, dag_from_edges(2, [(0, 1)]))
        assert value.clamped
        assert np.isfinite(value.total)

    def test_n_too_small_for_parents(self):
        ds = ScoredDataset(
            values=rank_gaussian_transform(np.random.default_rng(0).normal(size=(3, 3))),
            kind=KIND_COPULA,
            column_kinds=("continuous",) * 3,
        )
        g = dag_from_edges(3, [(0, 2), (1, 2)])
        with pytest.raises(InputError):
            gaussian_bic(ds, g)


class TestDiscreteBic:
    def test_single_column_halves(self):
        ds = prepare_dataset(np.array([[0.0], [1.0]]))
        value = discrete_bic(ds, Dag.empty(1))
        assert value.loglik == pytest.approx(-2 * math.log(2))
        assert value.k == 1
        assert value.penalty == pytest.approx(0.5 * math.log(2))

    def test_independent_coins_prefer_empty(self):
        rng = np.random.default_rng(11)
        x = rng.integers(0, 2, size=(2000, 2)).astype(float)
        ds = prepare_dataset(x)
        g = dag_from_edges(2, [(0, 1)])
        assert discrete_bic(ds, g).total < discrete_bic(ds, Dag.empty(2)).total
        assert discrete_bic(ds, g).total == pytest.approx(
            discrete_bic_total(ds.values, g.adj), rel=1e-12
        )

    def test_deterministic_copy_prefers_edge(self):
        x = np.zeros((100, 2))
        x[::2, 0] = 1.0
        x[:, 1] = x[:, 0]
        ds = prepare_dataset(x)
        g = dag_from_edges(2, [(0, 1)])
        diff = discrete_bic(ds, g).total - discrete_bic(ds, Dag.empty(2)).total
        assert diff > 0
        # counts oracle: with the edge, node 1 is deterministic (loglik 0);
        # without, it is a fair coin: 100 * log(1/2); k rises by 1
        expected = -100 * math.log(0.5) - 0.5 * math.log(100)
        assert diff == pytest.approx(expected, rel=1e-12)

    def test_parent_guard(self):
        x = np.random.default_rng(0).integers(0, 2, size=(30, 22)).astype(float)
        ds = prepare_dataset(x)
        adj = np.zeros((22, 22), dtype=np.int8)
        adj[:21, 21] = 1
        with pytest.raises(InputError, match="guard"):
            discrete_bic(ds, Dag(adj))

    def test_exhaustive_p3_against_oracle(self):
        rng = np.random.default_rng(3)
        base = rng.integers(0, 2, size=(200, 3)).astype(float)
        base[:, 2] = np.where(rng.random(200) < 0.8, base[:, 0], base[:, 2])
        ds = prepare_dataset(base)
        for adj in all_dags(3):
            mine = discrete_bic(ds, Dag(adj)).total
            ref = discrete_bic_total(ds.values, adj)
            assert mine == pytest.approx(ref, rel=1e-10)


class TestDeltaScore:
    def test_add_remove_telescoping(self):
        ds, chain = chain_dataset()
        d_remove = delta_score(ds, chain, EdgeEdit(Op.REMOVE, 0, 1))
        after = apply_edit(chain, EdgeEdit(Op.REMOVE, 0, 1))
        d_add = delta_score(ds, after, EdgeEdit(Op.ADD, 0, 1))
        assert d_remove + d_add == pytest.approx(0.0, abs=1e-8)

    def test_invalid_edit_raises(self):
        ds, chain = chain_dataset()
        with pytest.raises(EditRejected):
            delta_score(ds, chain, EdgeEdit(Op.ADD, 0, 1))

    def test_matches_full_rescore_random_p5(self):
        spec = SemSpec(p=5, expected_in_degree=2.0, seed=21)
        dag, weights = random_dag(spec)
        ds = prepare_dataset(simulate_sem(dag, weights, 400, seed=22))
        scorer = GaussianBicScorer(ds)
        rng = np.random.default_rng(23)
        g = Dag.empty(5)
        checked = 0
        while checked < 300:
            mask = valid_action_mask(g, budget=12)
            choices = np.flatnonzero(mask)
            idx = int(choices[rng.integers(choices.size)])
            edit = decode_action(idx, 5)
            d = scorer.delta(g, edit)
            nxt = apply_edit(g, edit, budget=12)
            full = scorer.score(nxt).total - scorer.score(g).total
            assert d == pytest.approx(full, rel=1e-8, abs=1e-8)
            g = nxt
            checked += 1

    def test_reverse_touches_both_endpoints_only(self):
        ds, chain = chain_dataset()
        edit = EdgeEdit(Op.REVERSE, 0, 1)
        scorer = GaussianBicScorer(ds)
        d = scorer.delta(chain, edit)
        nxt = apply_edit(chain, edit)
        # full rescore difference decomposes over nodes 0 and 1 alone
        ll_before = {j: scorer.local_loglik(j, chain.parents(j))[0] for j in range(3)}
        ll_after = {j: scorer.local_loglik(j, nxt.parents(j))[0] for j in range(3)}
        assert ll_before[2] == ll_after[2]
        node_diff = sum(ll_after[j] - ll_before[j] for j in (0, 1))
        assert d == pytest.approx(node_diff, rel=1e-10)  # k unchanged for reverse

    def test_discrete_delta_matches_full(self):
        rng = np.random.default_rng(7)
        x = rng.integers(0, 2, size=(300, 4)).astype(float)
        x[:, 1] = np.where(rng.random(300) < 0.9, x[:, 0], x[:, 1])
        ds = prepare_dataset(x)
        scorer = DiscreteBicScorer(ds)
        g = Dag.empty(4)
        for _ in range(60):
            mask = valid_action_mask(g, budget=8)
            choices = np.flatnonzero(mask)
            edit = decode_action(int(choices[rng.integers(choices.size)]), 4)
            d = scorer.delta(g, edit)
            nxt = apply_edit(g, edit, budget=8)
            assert d == pytest.approx(scorer.score(nxt).total - scorer.score(g).total,
                                      rel=1e-8, abs=1e-8)
            g = nxt


class TestScoreInvariants:
    def test_decomposability(self):
        ds, _ = chain_dataset(n=500, seed=13)
        scorer = GaussianBicScorer(ds)
        rng = np.random.default_rng(4)
        for adj in [a for a in all_dags(3) if rng.random() < 0.5]:
            g = Dag(adj)
            value = scorer.score(g)
            per_node_ll = sum(scorer.local_loglik(j, g.parents(j))[0] for j in range(3))
            per_node_k = sum(len(g.parents(j)) + 1 for j in range(3))
            assert value.loglik == pytest.approx(per_node_ll)
            assert value.k == per_node_k

    def test_copula_invariance_full_score(self):
        rng = np.random.default_rng(6)
        raw = rng.normal(size=(200, 3))
        g = dag_from_edges(3, [(0, 1), (1, 2)])
        a = gaussian_bic(prepare_dataset(raw), g)
        b = gaussian_bic(prepare_dataset(np.tanh(raw) * 5 + 2), g)
        assert a.total == b.total

    def test_penalty_law(self):
        g = dag_from_edges(3, [(0, 1)])
        values = {}
        for n in (100, 1000):
            ds, _ = chain_dataset(n=n, seed=17)
            values[n] = gaussian_bic(ds, g)
        ratio = values[1000].penalty / values[100].penalty
        assert ratio == pytest.approx(math.log(1000) / math.log(100), rel=1e-12)

    def test_markov_equivalent_pair(self):
        weights = np.zeros((2, 2))
        weights[0, 1] = 0.9
        g01 = dag_from_edges(2, [(0, 1)])
        n = 10_000
        ds = prepare_dataset(simulate_sem(g01, weights, n, seed=19))
        s_fwd = gaussian_bic(ds, g01)
        s_rev = gaussian_bic(ds, dag_from_edges(2, [(1, 0)]))
        assert s_fwd.k == s_rev.k
        assert abs(s_fwd.total - s_rev.total) < 1e-6 * n

    def test_concurrent_scoring_is_consistent(self):
        from concurrent.futures import ThreadPoolExecutor

        ds, _ = chain_dataset(n=500, seed=23)
        graphs = [Dag(a) for a in all_dags(3)]
        scorer = GaussianBicScorer(ds)
        serial = [scorer.score(g).total for g in graphs]
        with ThreadPoolExecutor(max_workers=8) as pool:
            threaded = list(pool.map(lambda g: GaussianBicScorer(ds).score(g).total, graphs))
        assert serial == pytest.approx(threaded, rel=1e-12)


class TestDatasetCsv:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(20, 3))
        path = tmp_path / "d.csv"
        save_dataset_csv(x, path)
        back = load_dataset_csv(path)
        assert np.array_equal(back, x)

    def test_nan_cell_diagnosed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,2.0\n3.0,nan\n")
        with pytest.raises(InputError, match=r"row 2.*'b'"):
            load_dataset_csv(path)

    def test_blank_cell_diagnosed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1.0,\n")
        with pytest.raises(InputError, match=r"row 1.*'b'"):
            load_dataset_csv(path)

    def test_non_numeric_cell(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\nx,2.0\n")
        with pytest.raises(InputError, match="row 1"):
            load_dataset_csv(path)


def test_make_scorer_dispatch():
    assert isinstance(make_scorer(prepare_dataset(np.array([[0.0], [1.0], [1.0]]))),
                      DiscreteBicScorer)
    rng = np.random.default_rng(0)
    assert isinstance(make_scorer(prepare_dataset(rng.normal(size=(5, 2)))),
                      GaussianBicScorer)
