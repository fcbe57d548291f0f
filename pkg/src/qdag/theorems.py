"""Executable checks of the three finite-sample guarantees.

Safety: the returned graph never scores below the warm start. Hitting time:
under pure exploration, the mean number of episodes to reach the 1-optimal
target is bounded by (A_max / eps) ** d for a warm start at improving-path
distance d. Champion selection: with candidates fixed, the probability that
the empirical score picks a population-suboptimal candidate decays with the
sample size while the population gap grows; the required sample size obeys
n >= (8 L^2 / gap^2) * log(2 |C| / delta).
"""

from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agent import AgentConfig, RunReport, prune_graph, select_action, train
from .errors import ConfigError, InputError
from .graphs import Dag, apply_edit, decode_action, valid_action_mask
from .opponent import OpponentSpec, build_opponent
from .scoring import KIND_COPULA, ScoredDataset, make_scorer, prepare_dataset
from .sem import SemSpec, random_dag, simulate_sem

__all__ = [
    "CandidateSet",
    "SelectionTrialResult",
    "SelectionOutcome",
    "build_candidate_set",
    "population_score",
    "selection_experiment",
    "selection_verdict",
    "sample_bound",
    "enumerate_dags",
    "ExhaustiveAnalysis",
    "exhaustive_analysis",
    "warm_starts_at_distances",
    "HittingRow",
    "hitting_time_experiment",
    "hitting_verdict",
    "SafetyVerdict",
    "safety_audit",
    "write_selection_csv",
    "write_hitting_csv",
    "write_safety_csv",
]


# ---------------------------------------------------------------------------
# candidate sets


@dataclass(frozen=True)
class CandidateSet:
    """Labeled candidate graphs, fixed for the whole experiment.

    Must be non-empty, contain the label "opponent", and hold no duplicate
    adjacency matrices.
    """

    items: tuple[tuple[str, Dag], ...]

    def __post_init__(self):
        if not self.items:
            raise ConfigError("candidate set is empty")
        labels = [lbl for lbl, _ in self.items]
        if "opponent" not in labels:
            raise ConfigError("candidate set must contain the opponent graph")
        if len(set(labels)) != len(labels):
            raise ConfigError("duplicate candidate labels")
        keys = [g.key() for _, g in self.items]
        if len(set(keys)) != len(keys):
            raise ConfigError("duplicate adjacency matrices in candidate set")
        ps = {g.p for _, g in self.items}
        if len(ps) != 1:
            raise ConfigError("candidates disagree on node count")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> list[str]:
        return [lbl for lbl, _ in self.items]

    @property
    def graphs(self) -> list[Dag]:
        return [g for _, g in self.items]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for lbl, g in self.items:
            h.update(lbl.encode())
            h.update(g.key())
        return h.hexdigest()


def build_candidate_set(dataset: ScoredDataset, budget: int | None,
                        agent_cfg: AgentConfig,
                        opponent_spec: OpponentSpec | None = None,
                        max_snapshots: int = 4,
                        prune_threshold: float = 0.05) -> CandidateSet:
    """Opponent graph + last agent champion snapshots + pruned variants."""
    spec = opponent_spec or OpponentSpec()
    opponent = build_opponent(dataset, spec, budget)
    report = train(dataset, opponent, agent_cfg)
    snaps = [g for g in report.snapshot_graphs if g.key() != opponent.key()]
    snaps = snaps[-max_snapshots:]

    items: list[tuple[str, Dag]] = [("opponent", opponent)]
    seen = {opponent.key()}
    for k, g in enumerate(snaps, start=1):
        if g.key() not in seen:
            items.append((f"agent-snapshot-{k}", g))
            seen.add(g.key())
    if dataset.kind == KIND_COPULA:
        for k, g in enumerate(snaps, start=1):
            pruned = prune_graph(dataset, g, prune_threshold)
            if pruned.key() not in seen:
                items.append((f"pruned-variant-{k}", pruned))
                seen.add(pruned.key())
    return CandidateSet(items=tuple(items))


# ---------------------------------------------------------------------------
# population score and the selection experiment


def population_score(pool: ScoredDataset, g: Dag, n: int) -> float:
    """Per-sample population score mu(A) - (k / 2n) * log n.

    mu is the mean per-sample log-likelihood over the validation pool with
    parameters fit on the pool; n is the evaluation sample size the penalty
    refers to, not the pool size.
    """
    if n < 1:
        raise ConfigError(f"evaluation sample size must be >= 1, got {n}")
    value = make_scorer(pool).score(g)
    mu = value.loglik / pool.n
    return mu - (value.k / (2.0 * n)) * math.log(n)


@dataclass(frozen=True)
class SelectionTrialResult:
    n: int
    trial: int
    selected: str
    population_best: str
    empirical_gap: float
    misselected: bool


@dataclass(frozen=True)
class SelectionOutcome:
    """All trial rows plus the per-n summary curve (rate, population gap)."""

    rows: tuple[SelectionTrialResult, ...]
    summary: tuple[tuple[int, float, float], ...]  # (n, misselection rate, delta_n)
    trials: int


def _score_candidates(candidates: CandidateSet, dataset: ScoredDataset) -> list[float]:
    scorer = make_scorer(dataset)
    return [scorer.score(g).total for g in candidates.graphs]


def _argmax_prefer_opponent(labels: list[str], totals: list[float]) -> int:
    best = max(totals)
    tied = [i for i, v in enumerate(totals) if v == best]
    for i in tied:
        if labels[i] == "opponent":
            return i
    return tied[0]


def selection_experiment(spec: SemSpec, candidates: CandidateSet, pool: np.ndarray,
                         sample_sizes: list[int], trials: int, seed: int = 0,
                         threads: int = 1) -> SelectionOutcome:
    """Estimate mis-selection probability and the population gap per n.

    For each sample size, fresh data is drawn from the SEM described by
    ``spec``; every candidate is scored and the empirical argmax (ties going
    to the opponent) is compared against the population argmax computed from
    the validation pool. The candidate set is fingerprinted before and after
    to guarantee immutability across the loop.
    """
    if len(candidates) < 2:
        raise ConfigError("gap undefined: need at least 2 candidates")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    dag, weights = random_dag(spec)
    if dag.p != candidates.graphs[0].p:
        raise InputError("candidate node count does not match the SEM spec")
    pool_ds = prepare_dataset(pool)
    fingerprint = candidates.fingerprint()
    labels = candidates.labels

    per_n_best: dict[int, tuple[int, float]] = {}
    for n in sample_sizes:
        lam = [population_score(pool_ds, g, n) for g in candidates.graphs]
        order = np.argsort(lam)[::-1]
        best_idx = int(order[0])
        delta_n = float(lam[best_idx] - lam[int(order[1])])
        per_n_best[n] = (best_idx, delta_n)

    jobs = [(n, t) for n in sample_sizes for t in range(trials)]
    children = np.random.SeedSequence(seed).spawn(len(jobs))

    def run_trial(job_idx: int) -> SelectionTrialResult:
        n, t = jobs[job_idx]
        x = simulate_sem(dag, weights, n, seed=children[job_idx])
        ds = prepare_dataset(x)
        totals = _score_candidates(candidates, ds)
        sel = _argmax_prefer_opponent(labels, totals)
        top_two = sorted(totals, reverse=True)[:2]
        emp_gap = (top_two[0] - top_two[1]) / n
        best_idx, _ = per_n_best[n]
        return SelectionTrialResult(
            n=n, trial=t, selected=labels[sel], population_best=labels[best_idx],
            empirical_gap=emp_gap, misselected=labels[sel] != labels[best_idx],
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            rows = list(pool_exec.map(run_trial, range(len(jobs))))
    else:
        rows = [run_trial(i) for i in range(len(jobs))]

    if candidates.fingerprint() != fingerprint:
        raise RuntimeError("candidate set changed during the experiment")

    summary = []
    for n in sample_sizes:
        n_rows = [r for r in rows if r.n == n]
        rate = sum(r.misselected for r in n_rows) / len(n_rows)
        summary.append((n, rate, per_n_best[n][1]))
    return SelectionOutcome(rows=tuple(rows), summary=tuple(summary), trials=trials)


def selection_verdict(outcome: SelectionOutcome) -> tuple[bool, list[str]]:
    """Rate nonincreasing with at most one inversion of <= 1/trials;
    population gap nondecreasing in n."""
    messages: list[str] = []
    rates = [r for _, r, _ in outcome.summary]
    gaps = [g for _, _, g in outcome.summary]
    inversions = [
        (i, rates[i + 1] - rates[i])
        for i in range(len(rates) - 1)
        if rates[i + 1] > rates[i]
    ]
    tol = 1.0 / outcome.trials + 1e-12
    rate_ok = not inversions or (len(inversions) == 1 and inversions[0][1] <= tol)
    if not rate_ok:
        messages.append(f"mis-selection rate not nonincreasing: {rates} (inversions {inversions})")
    gap_ok = all(gaps[i + 1] >= gaps[i] for i in range(len(gaps) - 1))
    if not gap_ok:
        messages.append(f"population gap not nondecreasing: {gaps}")
    return rate_ok and gap_ok, messages


def sample_bound(lipschitz: float, delta_gap: float, num_candidates: int,
                 fail_prob: float) -> int:
    """ceil((8 L^2 / gap^2) * ln(2 |C| / delta))."""
    if lipschitz <= 0:
        raise ConfigError(f"Lipschitz constant must be > 0, got {lipschitz}")
    if delta_gap <= 0:
        raise ConfigError("delta_gap must be > 0; the bound is unbounded at 0")
    if num_candidates < 1:
        raise ConfigError(f"need at least one candidate, got {num_candidates}")
    if not 0.0 < fail_prob < 1.0:
        raise ConfigError(f"fail_prob must be in (0, 1), got {fail_prob}")
    value = (8.0 * lipschitz * lipschitz / (delta_gap * delta_gap)) * math.log(
        2.0 * num_candidates / fail_prob
    )
    return math.ceil(value)


# ---------------------------------------------------------------------------
# exhaustive analysis and the hitting-time experiment


def enumerate_dags(p: int, budget: int | None = None) -> list[Dag]:
    """All labeled DAGs on p nodes (p <= 5), optionally within an edge budget."""
    if p > 5:
        raise ConfigError(f"exhaustive enumeration is limited to p <= 5, got {p}")
    pairs = [(i, j) for i in range(p) for j in range(p) if i != j]
    out: list[Dag] = []
    for mask in range(1 << len(pairs)):
        edge_count = mask.bit_count()
        if budget is not None and edge_count > budget:
            continue
        children = [0] * p
        for b, (i, j) in enumerate(pairs):
            if mask >> b & 1:
                children[i] |= 1 << j
        if not _acyclic_bits(children, p):
            continue
        adj = np.zeros((p, p), dtype=np.int8)
        for b, (i, j) in enumerate(pairs):
            if mask >> b & 1:
                adj[i, j] = 1
        out.append(Dag(adj, _validated=True))
    return out


def _acyclic_bits(children: list[int], p: int) -> bool:
    indeg = [0] * p
    for i in range(p):
        m = children[i]
        while m:
            indeg[(m & -m).bit_length() - 1] += 1
            m &= m - 1
    stack = [v for v in range(p) if indeg[v] == 0]
    seen = 0
    while stack:
        v = stack.pop()
        seen += 1
        m = children[v]
        while m:
            j = (m & -m).bit_length() - 1
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
            m &= m - 1
    return seen == p


@dataclass
class ExhaustiveAnalysis:
    """Scores, the 1-optimal target, improving-path distances, and A_max."""

    graphs: list[Dag]
    totals: dict[bytes, float]
    best: Dag
    distances: dict[bytes, int]
    a_max: int


def exhaustive_analysis(dataset: ScoredDataset, budget: int | None) -> ExhaustiveAnalysis:
    """Score every feasible DAG, locate the global optimum (which is
    1-optimal), and BFS shortest strictly-improving-path distances to it."""
    graphs = enumerate_dags(dataset.p, budget)
    scorer = make_scorer(dataset)
    totals = {g.key(): scorer.score(g).total for g in graphs}
    best = graphs[int(np.argmax([totals[g.key()] for g in graphs]))]

    a_max = 0
    preds: dict[bytes, list[bytes]] = {g.key(): [] for g in graphs}
    for g in graphs:
        mask = valid_action_mask(g, budget)
        a_max = max(a_max, int(mask.sum()))
        for idx in np.flatnonzero(mask):
            nxt = apply_edit(g, decode_action(int(idx), g.p), budget)
            if totals[nxt.key()] > totals[g.key()]:
                preds[nxt.key()].append(g.key())

    distances = {best.key(): 0}
    frontier = [best.key()]
    d = 0
    while frontier:
        d += 1
        nxt_frontier = []
        for key in frontier:
            for pk in preds[key]:
                if pk not in distances:
                    distances[pk] = d
                    nxt_frontier.append(pk)
        frontier = nxt_frontier
    return ExhaustiveAnalysis(graphs=graphs, totals=totals, best=best,
                              distances=distances, a_max=a_max)


def warm_starts_at_distances(analysis: ExhaustiveAnalysis, distances: list[int]) -> list[Dag]:
    """Pick one representative graph per requested distance (first found)."""
    out = []
    for d in distances:
        match = next((g for g in analysis.graphs
                      if analysis.distances.get(g.key()) == d), None)
        if match is None:
            raise ConfigError(f"no graph at improving-path distance {d}")
        out.append(match)
    return out


@dataclass(frozen=True)
class HittingRow:
    distance: int
    mean_episodes: float
    bound: float
    repeats: int
    censored: int
    samples: tuple[int, ...]


def hitting_time_experiment(dataset: ScoredDataset, warm_starts: list[Dag],
                            eps: float, episodes_cap: int, repeats: int,
                            seed: int = 0, budget: int | None = None,
                            horizon: int | None = None) -> list[HittingRow]:
    """Mean episodes until the 1-optimal target is first visited, per warm
    start, against the bound (A_max / eps) ** d.

    Runs pure exploration (eps must be 1; uniform draws over the valid set,
    the same mechanism the agent uses when exploring). Repeats that never
    hit within ``episodes_cap`` are flagged censored and excluded from the
    mean.
    """
    if eps != 1.0:
        raise ConfigError("the hitting-time harness runs pure exploration; eps must be 1.0")
    if dataset.p > 5:
        raise ConfigError("hitting-time experiment requires p <= 5")
    horizon = horizon if horizon is not None else 2 * dataset.p
    analysis = exhaustive_analysis(dataset, budget)
    target_key = analysis.best.key()

    rows: list[HittingRow] = []
    ss = np.random.SeedSequence(seed)
    for w_idx, warm in enumerate(warm_starts):
        d = analysis.distances.get(warm.key())
        if d is None:
            raise ConfigError(
                f"warm start {w_idx} has no strictly improving path to the target"
            )
        bound = (analysis.a_max / eps) ** d
        hits: list[int] = []
        censored = 0
        for child in ss.spawn(repeats):
            rng = np.random.default_rng(child)
            hit = None
            for ep in range(1, episodes_cap + 1):
                state = warm
                if state.key() == target_key:
                    hit = ep
                    break
                for _ in range(horizon):
                    mask = valid_action_mask(state, budget)
                    if not mask.any():
                        break
                    action = select_action(None, state, mask, 1.0, rng)
                    state = apply_edit(state, decode_action(action, state.p), budget)
                    if state.key() == target_key:
                        hit = ep
                        break
                if hit is not None:
                    break
            if hit is None:
                censored += 1
            else:
                hits.append(hit)
        mean = float(np.mean(hits)) if hits else float("nan")
        rows.append(HittingRow(distance=d, mean_episodes=mean, bound=bound,
                               repeats=repeats, censored=censored,
                               samples=tuple(hits)))
    return rows


def hitting_verdict(rows: list[HittingRow]) -> tuple[bool, list[str]]:
    """Means within the bound, and nondecreasing in d at one-sided 95%."""
    messages: list[str] = []
    ok = True
    for row in rows:
        if row.censored:
            messages.append(
                f"d={row.distance}: {row.censored}/{row.repeats} repeats censored"
            )
        if not math.isnan(row.mean_episodes) and row.mean_episodes > row.bound:
            ok = False
            messages.append(
                f"d={row.distance}: mean {row.mean_episodes:.3f} exceeds bound {row.bound:.3f}"
            )
    ordered = sorted(rows, key=lambda r: r.distance)
    for a, b in zip(ordered[:-1], ordered[1:]):
        if not a.samples or not b.samples:
            continue
        mean_a, mean_b = np.mean(a.samples), np.mean(b.samples)
        if mean_b >= mean_a:
            continue
        se = math.sqrt(np.var(a.samples, ddof=1) / len(a.samples)
                       + np.var(b.samples, ddof=1) / len(b.samples))
        z = (mean_a - mean_b) / se if se > 0 else math.inf
        if z > 1.645:
            ok = False
            messages.append(
                f"means significantly decreasing from d={a.distance} "
                f"({mean_a:.3f}) to d={b.distance} ({mean_b:.3f}), z={z:.2f}"
            )
    return ok, messages


# ---------------------------------------------------------------------------
# safety audit


@dataclass(frozen=True)
class SafetyVerdict:
    passed: bool
    violations: tuple[tuple[int, float, float], ...]  # (index, out total, warm total)


def safety_audit(reports: list[RunReport]) -> SafetyVerdict:
    """Pass iff every report has output score >= warm-start score, exactly."""
    violations = []
    for i, rep in enumerate(reports):
        if not rep.output_score.total >= rep.warm_score.total:
            violations.append((i, rep.output_score.total, rep.warm_score.total))
    return SafetyVerdict(passed=not violations, violations=tuple(violations))


# ---------------------------------------------------------------------------
# CSV emission


def write_selection_csv(outcome: SelectionOutcome, rows_path, summary_path) -> None:
    with open(rows_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "trial", "selected", "best", "misselected", "gap"])
        for r in outcome.rows:
            writer.writerow([r.n, r.trial, r.selected, r.population_best,
                             int(r.misselected), repr(r.empirical_gap)])
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "rate", "gap"])
        for n, rate, gap in outcome.summary:
            writer.writerow([n, repr(rate), repr(gap)])


def write_hitting_csv(rows: list[HittingRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d", "mean_episodes", "bound", "repeats", "censored"])
        for r in rows:
            writer.writerow([r.distance, repr(r.mean_episodes), repr(r.bound),
                             r.repeats, r.censored])


def write_safety_csv(reports: list[RunReport], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["run", "warm_total", "output_total", "ok"])
        for i, rep in enumerate(reports):
            writer.writerow([i, repr(rep.warm_score.total),
                             repr(rep.output_score.total),
                             int(rep.output_score.total >= rep.warm_score.total)])
