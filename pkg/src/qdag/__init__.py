"""Causal DAG discovery by double-DQN refinement of a warm-start graph.

A classical opponent (greedy BIC hill climb, or an imported adjacency)
supplies the warm start; a masked double-DQN agent edits edges under a BIC
reward; the returned graph never scores below the opponent. The
``theorems`` module turns the method's finite-sample guarantees into
runnable experiments.
"""

from .agent import AgentConfig, RunReport, prune_graph, train
from .errors import ConfigError, EditRejected, InputError, NoValidActions, Rejection
from .estimators import DdqnDiscovery, GreedyBicSearch, RankGaussianTransformer
from .graphs import (
    Dag,
    EdgeEdit,
    Op,
    StructureMetrics,
    apply_edit,
    decode_action,
    encode_action,
    is_acyclic,
    structure_metrics,
    valid_action_mask,
)
from .opponent import OpponentSpec, binarize, build_opponent, greedy_search
from .scoring import (
    ScoredDataset,
    ScoreValue,
    delta_score,
    discrete_bic,
    gaussian_bic,
    prepare_dataset,
    rank_gaussian_transform,
)
from .sem import SemSpec, random_dag, simulate_sem, split
from .theorems import (
    CandidateSet,
    hitting_time_experiment,
    population_score,
    safety_audit,
    sample_bound,
    selection_experiment,
)

__version__ = "0.1.0"

__all__ = [
    "AgentConfig",
    "CandidateSet",
    "ConfigError",
    "Dag",
    "DdqnDiscovery",
    "EdgeEdit",
    "EditRejected",
    "GreedyBicSearch",
    "InputError",
    "NoValidActions",
    "Op",
    "OpponentSpec",
    "RankGaussianTransformer",
    "Rejection",
    "RunReport",
    "ScoreValue",
    "ScoredDataset",
    "SemSpec",
    "StructureMetrics",
    "apply_edit",
    "binarize",
    "build_opponent",
    "decode_action",
    "delta_score",
    "discrete_bic",
    "encode_action",
    "gaussian_bic",
    "greedy_search",
    "hitting_time_experiment",
    "is_acyclic",
    "population_score",
    "prepare_dataset",
    "prune_graph",
    "rank_gaussian_transform",
    "random_dag",
    "safety_audit",
    "sample_bound",
    "selection_experiment",
    "simulate_sem",
    "split",
    "structure_metrics",
    "train",
    "valid_action_mask",
]
