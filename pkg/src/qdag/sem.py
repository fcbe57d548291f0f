"""Synthetic linear-Gaussian structural equation models.

A random DAG is drawn by sampling a uniform topological order and including
each order-respecting pair independently, with the inclusion probability
chosen so the expected in-degree matches the requested value. Data follows
x_j = sum_i W[i, j] * x_i + e_j with standard normal noise, solved exactly
by substitution along the topological order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graphs import Dag, topological_order

__all__ = ["SemSpec", "random_dag", "simulate_sem", "split"]


@dataclass(frozen=True)
class SemSpec:
    """Shape of the synthetic model: node count, density, weight law, seed."""

    p: int
    expected_in_degree: float = 3.0
    weight_low: float = 0.5
    weight_high: float = 1.0
    random_sign: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ConfigError(f"p must be >= 2, got {self.p}")
        if not 0.0 < self.weight_low <= self.weight_high:
            raise ConfigError("need 0 < weight_low <= weight_high")
        if not 0.0 < self.expected_in_degree < self.p:
            raise ConfigError("expected_in_degree must be in (0, p)")


def random_dag(spec: SemSpec) -> tuple[Dag, np.ndarray]:
    """Sample (graph, weight matrix); W[i, j] is nonzero exactly on edges."""
    rng = np.random.default_rng(spec.seed)
    p = spec.p
    order = rng.permutation(p)
    prob = min(1.0, spec.expected_in_degree * 2.0 / (p - 1))
    coin = rng.random((p, p))
    mags = rng.uniform(spec.weight_low, spec.weight_high, size=(p, p))
    if spec.random_sign:
        signs = np.where(rng.random((p, p)) < 0.5, -1.0, 1.0)
    else:
        signs = np.ones((p, p))

    adj = np.zeros((p, p), dtype=np.int8)
    weights = np.zeros((p, p))
    for a in range(p):
        for b in range(a + 1, p):
            i, j = int(order[a]), int(order[b])
            if coin[a, b] < prob:
                adj[i, j] = 1
                weights[i, j] = mags[a, b] * signs[a, b]
    return Dag(adj), weights


def simulate_sem(dag: Dag, weights: np.ndarray, n: int, seed: int = 0) -> np.ndarray:
    """Draw n rows from the SEM by substitution in topological order."""
    order = topological_order(dag.adj)
    if order is None:
        raise ConfigError("weights do not describe a DAG")
    rng = np.random.default_rng(seed)
    p = dag.p
    noise = rng.standard_normal((n, p))
    x = np.zeros((n, p))
    for j in order:
        x[:, j] = x @ weights[:, j] + noise[:, j]
    return x


def split(data: np.ndarray, train_fraction: float, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint row partition into (train, validation pool), seeded."""
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    data = np.asarray(data)
    n = data.shape[0]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    return data[perm[:n_train]].copy(), data[perm[n_train:]].copy()
