"""Warm-start graph construction.

Either a built-in greedy score ascent over single edge edits (a classical
hill climb that terminates at a 1-optimal graph) or an externally supplied
weighted adjacency, thresholded and cycle-broken into a DAG.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError
from .graphs import (
    Dag,
    apply_edit,
    decode_action,
    topological_order,
    valid_action_mask,
)
from .scoring import ScoredDataset, make_scorer

__all__ = [
    "OpponentSpec",
    "greedy_search",
    "binarize",
    "load_opponent_matrix",
    "build_opponent",
]

DEFAULT_THRESHOLD = 0.3
DEFAULT_MAX_ITERS = 1000


@dataclass(frozen=True)
class OpponentSpec:
    """How to obtain the warm-start graph.

    kind "greedy" runs the built-in hill climb; kind "external" loads a
    weighted or binary adjacency CSV from ``path`` and binarizes at
    ``threshold``.
    """

    kind: str = "greedy"
    path: str | None = None
    threshold: float = DEFAULT_THRESHOLD
    max_iters: int = DEFAULT_MAX_ITERS

    def __post_init__(self):
        if self.kind not in ("greedy", "external"):
            raise ConfigError(f"unknown opponent kind {self.kind!r}")
        if self.kind == "external" and not self.path:
            raise ConfigError("external opponent requires a path")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError(f"threshold must be in (0, 1], got {self.threshold}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")


def greedy_search(dataset: ScoredDataset, budget: int | None, max_iters: int = DEFAULT_MAX_ITERS) -> Dag:
    """Greedy single-edit ascent from the empty graph.

    Each iteration applies the valid edit with the largest strictly positive
    score delta (ties broken by smallest action index) and stops when no
    edit improves the score or ``max_iters`` is reached. The result is
    1-optimal whenever the loop stops on its own.
    """
    scorer = make_scorer(dataset)
    g = Dag.empty(dataset.p)
    for _ in range(max_iters):
        mask = valid_action_mask(g, budget)
        best_delta = 0.0
        best_idx = -1
        for idx in np.flatnonzero(mask):
            d = scorer.delta(g, decode_action(int(idx), g.p))
            if d > best_delta:
                best_delta = d
                best_idx = int(idx)
        if best_idx < 0:
            break
        g = apply_edit(g, decode_action(best_idx, g.p), budget)
    return g


def binarize(weights, threshold: float) -> Dag:
    """Threshold a weighted matrix into a DAG.

    Keeps edges with |weight| >= threshold (diagonal zeroed), then while a
    cycle remains deletes the on-cycle edge of smallest |weight|, breaking
    ties by smallest flat index.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InputError(f"weight matrix must be square, got shape {w.shape}")
    p = w.shape[0]
    mag = np.abs(w)
    np.fill_diagonal(mag, 0.0)
    adj = (mag >= threshold).astype(np.int8)
    np.fill_diagonal(adj, 0)
    while topological_order(adj) is None:
        reach = _reach(adj)
        on_cycle = [(mag[i, j], i * p + j, i, j)
                    for i, j in zip(*np.nonzero(adj)) if reach[j, i]]
        _, _, i, j = min(on_cycle)
        adj[i, j] = 0
    return Dag(adj)


def _reach(adj: np.ndarray) -> np.ndarray:
    r = adj.astype(bool)
    for _ in range(int(np.ceil(np.log2(max(2, adj.shape[0])))) + 1):
        nxt = r | (r.astype(np.uint8) @ r.astype(np.uint8) > 0)
        if np.array_equal(nxt, r):
            break
        r = nxt
    return r


def load_opponent_matrix(path, p_expected: int | None = None) -> np.ndarray:
    try:
        w = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: not a numeric CSV matrix ({exc})") from exc
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InputError(f"{path}: opponent matrix must be square, got {w.shape}")
    if p_expected is not None and w.shape[0] != p_expected:
        raise InputError(
            f"{path}: opponent matrix is {w.shape[0]}x{w.shape[0]} but the "
            f"dataset has p={p_expected} variables"
        )
    return w


def build_opponent(dataset: ScoredDataset, spec: OpponentSpec, budget: int | None) -> Dag:
    """Produce the binarized warm-start graph for a dataset."""
    if spec.kind == "greedy":
        return greedy_search(dataset, budget, spec.max_iters)
    w = load_opponent_matrix(spec.path, dataset.p)
    if np.isin(w, (0.0, 1.0)).all():
        # already binary: threshold is ignored, cycles still broken
        return binarize(w, threshold=0.5)
    return binarize(w, spec.threshold)
