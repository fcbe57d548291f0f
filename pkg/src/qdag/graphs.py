"""DAG state, edge edits, action indexing, masking, and recovery metrics.

Edge convention: ``adj[i][j] = 1`` means a directed edge ``i -> j``. A graph
with p nodes exposes a flat action space of size ``3 * p * p``; index
``op * p**2 + i * p + j`` encodes applying ``op`` (0=add, 1=remove,
2=reverse) to the ordered pair ``(i, j)``. Diagonal pairs are permanently
invalid.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import EditRejected, InputError, Rejection

__all__ = [
    "Op",
    "EdgeEdit",
    "Dag",
    "StructureMetrics",
    "is_acyclic",
    "topological_order",
    "encode_action",
    "decode_action",
    "num_actions",
    "check_edit",
    "apply_edit",
    "valid_action_mask",
    "structure_metrics",
    "save_adjacency_csv",
    "load_adjacency_csv",
    "save_edge_list",
    "load_edge_list",
]


class Op(IntEnum):
    ADD = 0
    REMOVE = 1
    REVERSE = 2


@dataclass(frozen=True)
class EdgeEdit:
    """A single move: add, remove, or reverse the edge i -> j."""

    op: Op
    i: int
    j: int

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError(f"self-loop edit ({self.i}, {self.j}) is not allowed")


def _validated_adj(adj) -> np.ndarray:
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"adjacency must be square, got shape {a.shape}")
    if not np.isin(a, (0, 1)).all():
        raise InputError("adjacency entries must be 0 or 1")
    a = a.astype(np.int8)
    if np.diagonal(a).any():
        raise InputError("adjacency has a nonzero diagonal entry")
    return a


class Dag:
    """Immutable directed acyclic graph over p nodes.

    Construction validates squareness, 0/1 entries, a zero diagonal, and
    acyclicity. The underlying array is made read-only; edits go through
    :func:`apply_edit`, which returns a new instance.
    """

    __slots__ = ("adj",)

    def __init__(self, adj, *, _validated: bool = False):
        if _validated:
            a = adj
        else:
            a = _validated_adj(adj)
            if topological_order(a) is None:
                raise InputError("adjacency contains a directed cycle")
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @classmethod
    def empty(cls, p: int) -> "Dag":
        return cls(np.zeros((p, p), dtype=np.int8))

    @property
    def p(self) -> int:
        return self.adj.shape[0]

    def edge_count(self) -> int:
        return int(self.adj.sum())

    def parents(self, j: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.adj[:, j]))

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adj[i, j])

    def edges(self) -> list[tuple[int, int]]:
        ii, jj = np.nonzero(self.adj)
        return list(zip(ii.tolist(), jj.tolist()))

    def key(self) -> bytes:
        return self.adj.tobytes()

    def __setattr__(self, name, value):
        raise AttributeError("Dag is immutable")

    def __eq__(self, other):
        return isinstance(other, Dag) and np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(self.adj.tobytes())

    def __repr__(self):
        return f"Dag(p={self.p}, edges={self.edge_count()})"


def topological_order(adj) -> list[int] | None:
    """Kahn's algorithm. Returns a topological order, or None if cyclic."""
    a = np.asarray(adj)
    p = a.shape[0]
    indeg = a.sum(axis=0).astype(np.int64)
    stack = [int(v) for v in np.flatnonzero(indeg == 0)[::-1]]
    order: list[int] = []
    while stack:
        v = stack.pop()
        order.append(v)
        for w in np.flatnonzero(a[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                stack.append(int(w))
    return order if len(order) == p else None


def is_acyclic(adj) -> bool:
    """True iff the 0/1 matrix admits a topological order.

    Raises InputError for non-square matrices, non-binary entries, or a
    nonzero diagonal.
    """
    a = _validated_adj(adj)
    return topological_order(a) is not None


def num_actions(p: int) -> int:
    return 3 * p * p


def encode_action(edit: EdgeEdit, p: int) -> int:
    return int(edit.op) * p * p + edit.i * p + edit.j


def decode_action(idx: int, p: int) -> EdgeEdit:
    """Inverse of encode_action. Diagonal indices (i == j) are permanently
    invalid and raise ValueError."""
    if not 0 <= idx < 3 * p * p:
        raise ValueError(f"action index {idx} out of range for p={p}")
    op, rest = divmod(idx, p * p)
    i, j = divmod(rest, p)
    if i == j:
        raise ValueError(f"action index {idx} is a self-loop slot")
    return EdgeEdit(Op(op), i, j)


def _reachable(adj: np.ndarray) -> np.ndarray:
    """Boolean matrix R with R[a, b] true iff a path a -> ... -> b exists (length >= 1)."""
    r = adj.astype(bool)
    p = adj.shape[0]
    steps = max(1, int(np.ceil(np.log2(p))) + 1)
    for _ in range(steps):
        nxt = r | (r.astype(np.uint8) @ r.astype(np.uint8) > 0)
        if np.array_equal(nxt, r):
            break
        r = nxt
    return r


def _path_exists_skipping_edge(adj: np.ndarray, i: int, j: int) -> bool:
    """Is there a path i -> ... -> j in the graph with the direct edge i -> j removed?"""
    first = [int(w) for w in np.flatnonzero(adj[i]) if w != j]
    seen = set(first)
    stack = first
    while stack:
        v = stack.pop()
        if v == j:
            return True
        for w in np.flatnonzero(adj[v]):
            w = int(w)
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def check_edit(g: Dag, edit: EdgeEdit, budget: int | None) -> Rejection | None:
    """Why the edit would be rejected, or None when it is valid.

    ``budget`` of None disables the edge-budget check.
    """
    adj = g.adj
    i, j = edit.i, edit.j
    if edit.op == Op.ADD:
        if adj[i, j]:
            return Rejection.EDGE_EXISTS
        if adj[j, i] or _reachable(adj)[j, i]:
            return Rejection.WOULD_CYCLE
        if budget is not None and g.edge_count() + 1 > budget:
            return Rejection.BUDGET_EXCEEDED
        return None
    if edit.op == Op.REMOVE:
        if not adj[i, j]:
            return Rejection.EDGE_ABSENT
        return None
    # reverse
    if not adj[i, j]:
        return Rejection.EDGE_ABSENT
    if _path_exists_skipping_edge(adj, i, j):
        return Rejection.WOULD_CYCLE
    return None


def apply_edit(g: Dag, edit: EdgeEdit, budget: int | None = None) -> Dag:
    """Apply a valid edit, returning a new Dag; raise EditRejected otherwise.

    The input graph is never mutated. Rejection reasons are EDGE_EXISTS,
    EDGE_ABSENT, WOULD_CYCLE, or BUDGET_EXCEEDED.
    """
    reason = check_edit(g, edit, budget)
    if reason is not None:
        raise EditRejected(reason, f"{edit.op.name}({edit.i}->{edit.j})")
    adj = g.adj.copy()
    if edit.op == Op.ADD:
        adj[edit.i, edit.j] = 1
    elif edit.op == Op.REMOVE:
        adj[edit.i, edit.j] = 0
    else:
        adj[edit.i, edit.j] = 0
        adj[edit.j, edit.i] = 1
    return Dag(adj, _validated=True)


def valid_action_mask(g: Dag, budget: int | None) -> np.ndarray:
    """Boolean vector of length 3*p*p; True where apply_edit would succeed."""
    adj = g.adj
    p = g.p
    present = adj.astype(bool)
    offdiag = ~np.eye(p, dtype=bool)
    reach = _reachable(adj)

    budget_ok = budget is None or g.edge_count() + 1 <= budget
    add = (~present) & offdiag & (~reach.T) & budget_ok
    remove = present.copy()
    reverse = np.zeros((p, p), dtype=bool)
    for i, j in zip(*np.nonzero(adj)):
        reverse[i, j] = not _path_exists_skipping_edge(adj, int(i), int(j))
    return np.concatenate([add.ravel(), remove.ravel(), reverse.ravel()])


@dataclass(frozen=True)
class StructureMetrics:
    """Edge-recovery metrics of an estimate against a ground truth graph."""

    tpr: float
    fdr: float
    shd: int
    score: float
    empty_truth: bool = False


def structure_metrics(est: Dag, truth: Dag) -> StructureMetrics:
    """TPR, FDR, SHD and the composite score (TPR + (1-FDR) + 1/(1+SHD)) / 3.

    SHD counts insertions, deletions, and reversals, a reversed edge costing
    one. A truth graph with no edges sets TPR to 1 and flags the result; an
    empty estimate has FDR 0.
    """
    if est.p != truth.p:
        raise InputError(f"node count mismatch: est p={est.p}, truth p={truth.p}")
    e = est.adj.astype(bool)
    t = truth.adj.astype(bool)

    n_truth = int(t.sum())
    n_est = int(e.sum())
    tp = int((e & t).sum())
    fp = n_est - tp

    empty_truth = n_truth == 0
    tpr = 1.0 if empty_truth else tp / n_truth
    fdr = 0.0 if n_est == 0 else fp / n_est

    # per unordered pair: same direction 0, reversed 1, present in one only 1
    upper = np.triu(np.ones_like(e), k=1).astype(bool)
    agree = e & t
    skel_e = e | e.T
    skel_t = t | t.T
    reversed_pair = (e & t.T) & ~agree & ~agree.T
    diff_pair = (skel_e ^ skel_t) | reversed_pair | reversed_pair.T
    shd = int(diff_pair[upper | upper.T].sum() // 2)

    score = (tpr + (1.0 - fdr) + 1.0 / (1.0 + shd)) / 3.0
    return StructureMetrics(tpr=tpr, fdr=fdr, shd=shd, score=score, empty_truth=empty_truth)


def save_adjacency_csv(g: Dag, path) -> None:
    np.savetxt(path, g.adj, fmt="%d", delimiter=",")


def load_adjacency_csv(path) -> Dag:
    try:
        a = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: not a 0/1 integer CSV matrix ({exc})") from exc
    try:
        return Dag(a)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc


def save_edge_list(g: Dag, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"p={g.p}\n")
        for i, j in g.edges():
            fh.write(f"{i} {j}\n")


def load_edge_list(path) -> Dag:
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("p="):
        raise InputError(f"{path}: first line must be 'p=<n>'")
    try:
        p = int(lines[0][2:])
    except ValueError as exc:
        raise InputError(f"{path}: bad node count line {lines[0]!r}") from exc
    adj = np.zeros((p, p), dtype=np.int8)
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise InputError(f"{path}: bad edge line {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (0 <= i < p and 0 <= j < p):
            raise InputError(f"{path}: edge ({i}, {j}) out of range for p={p}")
        adj[i, j] = 1
    try:
        return Dag(adj)
    except InputError as exc:
        raise InputError(f"{path}: {exc}") from exc
