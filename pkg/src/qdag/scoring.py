"""Empirical BIC scorers over DAGs.

Two variants share one surface: a Gaussian scorer applied after a per-column
rank-to-normal-quantile transform (for continuous data), and a discrete
Bernoulli scorer (for all-binary data). Both decompose node-wise, which the
delta path exploits: an edit refits only the one or two nodes whose parent
sets changed.

Score convention: total = loglik - penalty, penalty = 0.5 * k * log(n),
where k counts free parameters (Gaussian: one coefficient per edge plus one
variance per node; discrete: one Bernoulli parameter per parent
configuration).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import rankdata

from .errors import EditRejected, InputError
from .graphs import Dag, EdgeEdit, Op, check_edit

__all__ = [
    "KIND_COPULA",
    "KIND_BINARY",
    "ScoreValue",
    "ScoredDataset",
    "rank_gaussian_transform",
    "prepare_dataset",
    "load_dataset_csv",
    "save_dataset_csv",
    "make_scorer",
    "GaussianBicScorer",
    "DiscreteBicScorer",
    "gaussian_bic",
    "discrete_bic",
    "delta_score",
]

KIND_COPULA = "copula-gaussian"
KIND_BINARY = "discrete-binary"

VARIANCE_FLOOR = 1e-12
GRAM_SV_CUTOFF = 1e-10
MAX_DISCRETE_PARENTS = 20


@dataclass(frozen=True)
class ScoreValue:
    """A decomposed BIC value: total = loglik - penalty."""

    total: float
    loglik: float
    penalty: float
    k: int
    clamped: bool = False

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "loglik": self.loglik,
            "penalty": self.penalty,
            "k": self.k,
            "clamped": self.clamped,
        }


@dataclass(frozen=True)
class ScoredDataset:
    """Preprocessed sample matrix ready for scoring.

    ``values`` holds the post-transform matrix for the copula kind, or the
    raw 0/1 matrix for the binary kind. ``column_kinds`` records the
    per-column detection outcome ("binary" or "continuous").
    """

    values: np.ndarray
    kind: str
    column_kinds: tuple[str, ...]

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def rank_gaussian_transform(raw) -> np.ndarray:
    """Map each column through ranks to standard-normal quantiles.

    A value with 1-based rank r (average ranks on ties) maps to the normal
    quantile of (r - 0.5) / n. Requires n >= 3 and no constant column.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"expected a 2-d sample matrix, got shape {x.shape}")
    n, p = x.shape
    if n < 3:
        raise InputError(f"need at least 3 rows for the rank transform, got {n}")
    out = np.empty_like(x)
    for j in range(p):
        col = x[:, j]
        if np.all(col == col[0]):
            raise InputError(f"column {j} is constant; cannot rank-transform")
        r = rankdata(col, method="average")
        out[:, j] = ndtri((r - 0.5) / n)
    return out


def _column_kinds(x: np.ndarray) -> tuple[str, ...]:
    return tuple(
        "binary" if np.isin(x[:, j], (0.0, 1.0)).all() else "continuous"
        for j in range(x.shape[1])
    )


def prepare_dataset(raw) -> ScoredDataset:
    """Detect the data kind and preprocess.

    All columns binary -> discrete scorer on the raw 0/1 values. No column
    binary -> copula scorer on the rank-transformed values. A mixture of
    binary and continuous columns is rejected.
    """
    x = np.asarray(raw, dtype=np.float64)
    if x.ndim != 2:
        raise InputError(f"expected a 2-d sample matrix, got shape {x.shape}")
    if not np.isfinite(x).all():
        bad = np.argwhere(~np.isfinite(x))[0]
        raise InputError(f"non-finite value at row {bad[0] + 1}, column {bad[1]}")
    kinds = _column_kinds(x)
    if all(k == "binary" for k in kinds):
        return ScoredDataset(values=x.copy(), kind=KIND_BINARY, column_kinds=kinds)
    if any(k == "binary" for k in kinds):
        binary_cols = [j for j, k in enumerate(kinds) if k == "binary"]
        raise InputError(
            f"mixed dataset: columns {binary_cols} are binary while others are "
            "continuous; not coercing"
        )
    return ScoredDataset(
        values=rank_gaussian_transform(x), kind=KIND_COPULA, column_kinds=kinds
    )


def load_dataset_csv(path) -> np.ndarray:
    """Read a numeric CSV with one header row. NaN or blank cells are rejected
    with the offending row and column named (rows counted from 1, header
    excluded)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        rows: list[list[float]] = []
        for rnum, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}: row {rnum} has {len(row)} cells, expected {len(header)}"
                )
            vals = []
            for cnum, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise InputError(
                        f"{path}: blank cell at row {rnum}, column {header[cnum]!r}"
                    )
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(
                        f"{path}: non-numeric cell {cell!r} at row {rnum}, "
                        f"column {header[cnum]!r}"
                    ) from None
                if math.isnan(v) or math.isinf(v):
                    raise InputError(
                        f"{path}: non-finite cell at row {rnum}, column {header[cnum]!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def save_dataset_csv(x: np.ndarray, path, columns: list[str] | None = None) -> None:
    x = np.asarray(x)
    names = columns or [f"x{j}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in x:
            writer.writerow([repr(float(v)) for v in row])


class GaussianBicScorer:
    """Node-wise Gaussian BIC on a copula-prepared dataset.

    Per node j with parents Pa(j), ordinary least squares of column j on the
    parent columns (no intercept), residual variance RSS/n, per-node
    log-likelihood -(n/2) * (log(2*pi*sigma2) + 1). Local results are
    memoized by (node, parent set), so rescoring after an edit touches only
    the changed nodes.
    """

    def __init__(self, dataset: ScoredDataset):
        if dataset.kind != KIND_COPULA:
            raise InputError(f"Gaussian scorer needs {KIND_COPULA} data, got {dataset.kind}")
        self.dataset = dataset
        self._x = dataset.values
        self._log_n = math.log(dataset.n)
        self._cache: dict[tuple[int, tuple[int, ...]], tuple[float, bool]] = {}

    def local_k(self, parents: tuple[int, ...]) -> int:
        return len(parents) + 1

    def local_loglik(self, j: int, parents: tuple[int, ...]) -> tuple[float, bool]:
        key = (j, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        x = self._x
        n = x.shape[0]
        y = x[:, j]
        if parents:
            if n <= len(parents) + 1:
                raise InputError(
                    f"n={n} too small for parent set of size {len(parents)} at node {j}"
                )
            xp = x[:, list(parents)]
            gram = xp.T @ xp
            rhs = xp.T @ y
            svals, vecs = np.linalg.eigh(gram)
            keep = svals > GRAM_SV_CUTOFF
            coeffs = vecs[:, keep] @ ((vecs[:, keep].T @ rhs) / svals[keep])
            resid = y - xp @ coeffs
            rss = float(resid @ resid)
        else:
            rss = float(y @ y)
        sigma2 = rss / n
        clamped = sigma2 < VARIANCE_FLOOR
        if clamped:
            sigma2 = VARIANCE_FLOOR
        ll = -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)
        self._cache[key] = (ll, clamped)
        return ll, clamped

    def fit_coefficients(self, j: int, parents: tuple[int, ...]) -> np.ndarray:
        """OLS coefficients of node j on its parents (pseudo-inverse path)."""
        if not parents:
            return np.zeros(0)
        x = self._x
        xp = x[:, list(parents)]
        gram = xp.T @ xp
        rhs = xp.T @ x[:, j]
        svals, vecs = np.linalg.eigh(gram)
        keep = svals > GRAM_SV_CUTOFF
        return vecs[:, keep] @ ((vecs[:, keep].T @ rhs) / svals[keep])

    def score(self, g: Dag) -> ScoreValue:
        if g.p != self.dataset.p:
            raise InputError(f"graph p={g.p} does not match data p={self.dataset.p}")
        loglik = 0.0
        k = 0
        clamped = False
        for j in range(g.p):
            pa = g.parents(j)
            ll, cl = self.local_loglik(j, pa)
            loglik += ll
            k += self.local_k(pa)
            clamped = clamped or cl
        penalty = 0.5 * k * self._log_n
        return ScoreValue(total=loglik - penalty, loglik=loglik, penalty=penalty,
                          k=k, clamped=clamped)

    def delta(self, g: Dag, edit: EdgeEdit) -> float:
        """score(apply_edit(g, edit)).total - score(g).total, refit only at
        the nodes whose parent sets change."""
        reason = check_edit(g, edit, budget=None)
        if reason is not None:
            raise EditRejected(reason, f"{edit.op.name}({edit.i}->{edit.j})")
        changes: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []
        pa_j = g.parents(edit.j)
        if edit.op == Op.ADD:
            changes.append((edit.j, pa_j, _with(pa_j, edit.i)))
        elif edit.op == Op.REMOVE:
            changes.append((edit.j, pa_j, _without(pa_j, edit.i)))
        else:
            pa_i = g.parents(edit.i)
            changes.append((edit.j, pa_j, _without(pa_j, edit.i)))
            changes.append((edit.i, pa_i, _with(pa_i, edit.j)))
        d = 0.0
        for node, old, new in changes:
            ll_old, _ = self.local_loglik(node, old)
            ll_new, _ = self.local_loglik(node, new)
            d += ll_new - ll_old
            d -= 0.5 * (self.local_k(new) - self.local_k(old)) * self._log_n
        return d


class DiscreteBicScorer:
    """Node-wise Bernoulli BIC on all-binary data.

    Per node j and observed parent configuration, the maximum-likelihood
    cell counts enter sum(n_cell * log(n_cell / n_config)) with 0*log(0)
    taken as 0; the parameter count is 2**|Pa(j)| per node.
    """

    def __init__(self, dataset: ScoredDataset):
        if dataset.kind != KIND_BINARY:
            raise InputError(f"discrete scorer needs {KIND_BINARY} data, got {dataset.kind}")
        self.dataset = dataset
        self._x = dataset.values.astype(np.int64)
        self._log_n = math.log(dataset.n)
        self._cache: dict[tuple[int, tuple[int, ...]], tuple[float, bool]] = {}

    def local_k(self, parents: tuple[int, ...]) -> int:
        return 2 ** len(parents)

    def local_loglik(self, j: int, parents: tuple[int, ...]) -> tuple[float, bool]:
        key = (j, parents)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        if len(parents) > MAX_DISCRETE_PARENTS:
            raise InputError(
                f"parent set of size {len(parents)} at node {j} exceeds the "
                f"configuration guard ({MAX_DISCRETE_PARENTS})"
            )
        x = self._x
        if parents:
            weights = 1 << np.arange(len(parents), dtype=np.int64)
            cfg = x[:, list(parents)] @ weights
        else:
            cfg = np.zeros(x.shape[0], dtype=np.int64)
        cells = cfg * 2 + x[:, j]
        counts = np.bincount(cells, minlength=2 ** (len(parents) + 1)).reshape(-1, 2)
        n_cfg = counts.sum(axis=1)
        nz = counts > 0
        ll = float((counts[nz] * np.log(counts[nz])).sum())
        nzc = n_cfg > 0
        ll -= float((n_cfg[nzc] * np.log(n_cfg[nzc])).sum())
        self._cache[key] = (ll, False)
        return ll, False

    def score(self, g: Dag) -> ScoreValue:
        if g.p != self.dataset.p:
            raise InputError(f"graph p={g.p} does not match data p={self.dataset.p}")
        loglik = 0.0
        k = 0
        for j in range(g.p):
            pa = g.parents(j)
            ll, _ = self.local_loglik(j, pa)
            loglik += ll
            k += self.local_k(pa)
        penalty = 0.5 * k * self._log_n
        return ScoreValue(total=loglik - penalty, loglik=loglik, penalty=penalty, k=k)

    def delta(self, g: Dag, edit: EdgeEdit) -> float:
        reason = check_edit(g, edit, budget=None)
        if reason is not None:
            raise EditRejected(reason, f"{edit.op.name}({edit.i}->{edit.j})")
        changes: list[tuple[int, tuple[int, ...], tuple[int, ...]]] = []
        pa_j = g.parents(edit.j)
        if edit.op == Op.ADD:
            changes.append((edit.j, pa_j, _with(pa_j, edit.i)))
        elif edit.op == Op.REMOVE:
            changes.append((edit.j, pa_j, _without(pa_j, edit.i)))
        else:
            pa_i = g.parents(edit.i)
            changes.append((edit.j, pa_j, _without(pa_j, edit.i)))
            changes.append((edit.i, pa_i, _with(pa_i, edit.j)))
        d = 0.0
        for node, old, new in changes:
            ll_old, _ = self.local_loglik(node, old)
            ll_new, _ = self.local_loglik(node, new)
            d += ll_new - ll_old
            d -= 0.5 * (self.local_k(new) - self.local_k(old)) * self._log_n
        return d


def _with(parents: tuple[int, ...], i: int) -> tuple[int, ...]:
    return tuple(sorted(parents + (i,)))


def _without(parents: tuple[int, ...], i: int) -> tuple[int, ...]:
    return tuple(v for v in parents if v != i)


def make_scorer(dataset: ScoredDataset):
    if dataset.kind == KIND_BINARY:
        return DiscreteBicScorer(dataset)
    return GaussianBicScorer(dataset)


def gaussian_bic(dataset: ScoredDataset, g: Dag) -> ScoreValue:
    return GaussianBicScorer(dataset).score(g)


def discrete_bic(dataset: ScoredDataset, g: Dag) -> ScoreValue:
    return DiscreteBicScorer(dataset).score(g)


def delta_score(dataset: ScoredDataset, g: Dag, edit: EdgeEdit) -> float:
    return make_scorer(dataset).delta(g, edit)
