"""Scikit-learn style estimator wrappers around the discovery pipeline.

These follow the usual conventions: constructor arguments are stored
verbatim (so ``get_params`` / ``set_params`` / ``clone`` work), all
validation happens in ``fit``, and fitted state lives in
trailing-underscore attributes.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .agent import AgentConfig, prune_graph, train
from .errors import InputError
from .opponent import OpponentSpec, build_opponent, greedy_search
from .scoring import make_scorer, prepare_dataset, rank_gaussian_transform

__all__ = ["RankGaussianTransformer", "GreedyBicSearch", "DdqnDiscovery"]


class RankGaussianTransformer(TransformerMixin, BaseEstimator):
    """Map each column through ranks to standard-normal quantiles.

    The transform is computed on the matrix it is applied to (ranks are a
    property of the batch, not of the fit data); ``fit`` only records and
    validates the column count.
    """

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] < 3:
            raise ValueError("need at least 3 rows")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return rank_gaussian_transform(X)


class GreedyBicSearch(BaseEstimator):
    """Greedy single-edit hill climb under the BIC score.

    Fitted attributes: ``adjacency_`` (p x p 0/1 array), ``score_`` (the
    BIC total), ``dataset_kind_``.
    """

    def __init__(self, budget=None, max_iters=1000):
        self.budget = budget
        self.max_iters = max_iters

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        dataset = prepare_dataset(X)
        budget = self.budget if self.budget is not None else 4 * dataset.p
        graph = greedy_search(dataset, budget, self.max_iters)
        self.n_features_in_ = dataset.p
        self.adjacency_ = np.asarray(graph.adj, dtype=np.int8).copy()
        self.graph_ = graph
        self.score_ = make_scorer(dataset).score(graph).total
        self.dataset_kind_ = dataset.kind
        return self

    def score(self, X, y=None):
        check_is_fitted(self)
        dataset = prepare_dataset(check_array(X, dtype=np.float64))
        return make_scorer(dataset).score(self.graph_).total


class DdqnDiscovery(BaseEstimator):
    """Double-DQN refinement of a warm-start graph under the BIC score.

    ``opponent`` is "greedy" for the built-in hill climb or a path to a
    weighted/binary adjacency CSV. The output graph is guaranteed to score
    at least as well as the warm start on the training data.

    Fitted attributes: ``adjacency_``, ``opponent_adjacency_``, ``score_``,
    ``opponent_score_``, ``report_`` (the full run report),
    ``dataset_kind_``.
    """

    def __init__(self, opponent="greedy", opponent_threshold=0.3,
                 opponent_max_iters=1000, episodes=500, horizon=None,
                 budget=None, gamma=0.98, tau=0.005, lambda_sparsity=1e-3,
                 step_cost=1e-4, invalid_penalty=0.1, champion_period=5,
                 eps_start=1.0, eps_end=0.05, eps_decay_fraction=0.5,
                 batch=64, buffer_capacity=100_000, warmup_transitions=500,
                 learning_rate=1e-3, hidden_widths=(256, 256), prune=False,
                 prune_threshold=0.05, random_state=0):
        self.opponent = opponent
        self.opponent_threshold = opponent_threshold
        self.opponent_max_iters = opponent_max_iters
        self.episodes = episodes
        self.horizon = horizon
        self.budget = budget
        self.gamma = gamma
        self.tau = tau
        self.lambda_sparsity = lambda_sparsity
        self.step_cost = step_cost
        self.invalid_penalty = invalid_penalty
        self.champion_period = champion_period
        self.eps_start = eps_start
        self.eps_end = eps_end
        self.eps_decay_fraction = eps_decay_fraction
        self.batch = batch
        self.buffer_capacity = buffer_capacity
        self.warmup_transitions = warmup_transitions
        self.learning_rate = learning_rate
        self.hidden_widths = hidden_widths
        self.prune = prune
        self.prune_threshold = prune_threshold
        self.random_state = random_state

    def _agent_config(self) -> AgentConfig:
        seed = self.random_state
        if not isinstance(seed, numbers.Integral):
            raise ValueError("random_state must be an integer seed")
        return AgentConfig(
            gamma=self.gamma,
            tau=self.tau,
            lambda_sparsity=self.lambda_sparsity,
            step_cost=self.step_cost,
            invalid_penalty=self.invalid_penalty,
            budget=self.budget,
            horizon=self.horizon,
            episodes=self.episodes,
            champion_period=self.champion_period,
            eps_start=self.eps_start,
            eps_end=self.eps_end,
            eps_decay_fraction=self.eps_decay_fraction,
            batch=self.batch,
            buffer_capacity=self.buffer_capacity,
            warmup_transitions=self.warmup_transitions,
            learning_rate=self.learning_rate,
            hidden_widths=tuple(self.hidden_widths),
            seed=int(seed),
        )

    def _opponent_spec(self) -> OpponentSpec:
        if self.opponent == "greedy":
            return OpponentSpec(kind="greedy", max_iters=self.opponent_max_iters)
        return OpponentSpec(kind="external", path=str(self.opponent),
                            threshold=self.opponent_threshold,
                            max_iters=self.opponent_max_iters)

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        dataset = prepare_dataset(X)
        cfg = self._agent_config().resolved(dataset.p)
        warm = build_opponent(dataset, self._opponent_spec(), cfg.budget)
        report = train(dataset, warm, cfg)
        out = report.output_graph
        if self.prune:
            out = prune_graph(dataset, out, self.prune_threshold)
        self.n_features_in_ = dataset.p
        self.adjacency_ = np.asarray(out.adj, dtype=np.int8).copy()
        self.graph_ = out
        self.opponent_adjacency_ = np.asarray(warm.adj, dtype=np.int8).copy()
        self.score_ = make_scorer(dataset).score(out).total
        self.opponent_score_ = report.warm_score.total
        self.report_ = report
        self.dataset_kind_ = dataset.kind
        return self

    def score(self, X, y=None):
        """BIC total of the learned graph on (possibly new) data."""
        check_is_fitted(self)
        dataset = prepare_dataset(check_array(X, dtype=np.float64))
        if dataset.p != self.n_features_in_:
            raise InputError(
                f"X has {dataset.p} features, expected {self.n_features_in_}"
            )
        return make_scorer(dataset).score(self.graph_).total
