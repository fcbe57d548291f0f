"""Double-DQN refinement of a warm-start DAG under a BIC reward.

Every episode resets to the warm-start graph and takes masked edge edits
for a fixed horizon. Rewards are score deltas normalized by the node count,
minus a sparsity term on the next state's edge count and a constant step
cost; moves that slip past masking are punished with a fixed penalty and
leave the state unchanged. Learning is a standard double-DQN update: the
online network picks the argmax over valid next actions, the Polyak-averaged
target network values it.

The best-scoring graph ever visited is tracked continuously as the
champion; the run returns the better of champion and warm start, so the
output score can never fall below the opponent's.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, InputError, NoValidActions
from .graphs import Dag, apply_edit, check_edit, decode_action, valid_action_mask
from .network import AdamOptimizer, QNetwork, polyak_update
from .scoring import KIND_COPULA, GaussianBicScorer, ScoredDataset, ScoreValue, make_scorer

__all__ = [
    "AgentConfig",
    "Transition",
    "ReplayBuffer",
    "ChampionEvent",
    "RunReport",
    "reward",
    "epsilon_at",
    "select_action",
    "double_dqn_target",
    "transition_step",
    "train",
    "prune_graph",
]


@dataclass(frozen=True)
class AgentConfig:
    """Hyperparameters of a training run.

    ``budget`` and ``horizon`` default to 4p and 2p once the node count is
    known (see :meth:`resolved`). The exploration rate decays linearly from
    ``eps_start`` to ``eps_end`` over the first ``eps_decay_fraction`` of
    all nominal steps and then stays at the floor, which must be positive.
    """

    gamma: float = 0.98
    tau: float = 0.005
    lambda_sparsity: float = 1e-3
    step_cost: float = 1e-4
    invalid_penalty: float = 0.1
    budget: int | None = None
    horizon: int | None = None
    episodes: int = 500
    champion_period: int = 5
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    batch: int = 64
    buffer_capacity: int = 100_000
    warmup_transitions: int = 500
    learning_rate: float = 1e-3
    hidden_widths: tuple[int, ...] = (256, 256)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"tau must be in (0, 1], got {self.tau}")
        if self.lambda_sparsity < 0 or self.step_cost < 0:
            raise ConfigError("lambda_sparsity and step_cost must be >= 0")
        if self.invalid_penalty <= 0:
            raise ConfigError(f"invalid_penalty must be > 0, got {self.invalid_penalty}")
        if self.eps_end <= 0:
            raise ConfigError(f"eps_end must be > 0, got {self.eps_end}")
        if not self.eps_end <= self.eps_start <= 1.0:
            raise ConfigError("need eps_end <= eps_start <= 1")
        if not 0.0 < self.eps_decay_fraction <= 1.0:
            raise ConfigError("eps_decay_fraction must be in (0, 1]")
        if self.episodes < 0 or self.batch < 1 or self.buffer_capacity < 1:
            raise ConfigError("episodes >= 0, batch >= 1, buffer_capacity >= 1 required")
        if self.warmup_transitions < 1:
            raise ConfigError("warmup_transitions must be >= 1")
        if self.champion_period < 1:
            raise ConfigError("champion_period must be >= 1")
        for b in (self.budget, self.horizon):
            if b is not None and b < 1:
                raise ConfigError("budget and horizon must be >= 1 when given")
        if not self.hidden_widths or any(w < 1 for w in self.hidden_widths):
            raise ConfigError("hidden_widths must be a non-empty tuple of positives")

    def resolved(self, p: int) -> "AgentConfig":
        """Fill the p-dependent defaults (budget 4p, horizon 2p)."""
        return replace(
            self,
            budget=self.budget if self.budget is not None else 4 * p,
            horizon=self.horizon if self.horizon is not None else 2 * p,
        )

    def as_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "lambda_sparsity": self.lambda_sparsity,
            "step_cost": self.step_cost,
            "invalid_penalty": self.invalid_penalty,
            "budget": self.budget,
            "horizon": self.horizon,
            "episodes": self.episodes,
            "champion_period": self.champion_period,
            "eps_start": self.eps_start,
            "eps_end": self.eps_end,
            "eps_decay_fraction": self.eps_decay_fraction,
            "batch": self.batch,
            "buffer_capacity": self.buffer_capacity,
            "warmup_transitions": self.warmup_transitions,
            "learning_rate": self.learning_rate,
            "hidden_widths": list(self.hidden_widths),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class Transition:
    """One stored step: (state, action, reward, next state) plus flags."""

    state: Dag
    action: int
    reward: float
    next_state: Dag
    valid: bool
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with FIFO eviction and uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._pos = 0

    def push(self, t: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._pos] = t
            self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        if batch > len(self._items):
            raise ValueError(f"cannot sample {batch} from buffer of {len(self._items)}")
        idx = rng.choice(len(self._items), size=batch, replace=False)
        return [self._items[i] for i in idx]

    def __len__(self) -> int:
        return len(self._items)


def reward(score_before: float, score_after: float, next_edges: int, p: int,
           cfg: AgentConfig) -> float:
    """(S' - S)/p - lambda * edges(A') - c, for a valid move."""
    return (score_after - score_before) / p - cfg.lambda_sparsity * next_edges - cfg.step_cost


def epsilon_at(step: int, total_steps: int, cfg: AgentConfig) -> float:
    decay_steps = max(1, int(round(cfg.eps_decay_fraction * total_steps)))
    if step >= decay_steps:
        return cfg.eps_end
    frac = step / decay_steps
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def select_action(q: QNetwork | None, state: Dag, mask: np.ndarray, eps: float,
                  rng: np.random.Generator) -> int:
    """Masked epsilon-greedy pick over flat action indices.

    With probability eps a uniform draw over the valid set, otherwise the
    argmax of the online network restricted to valid entries (ties go to
    the smallest index). ``q`` may be None when eps is 1. Raises
    NoValidActions on an empty mask.
    """
    valid = np.flatnonzero(mask)
    if valid.size == 0:
        raise NoValidActions("state admits no valid edit")
    if rng.random() < eps:
        return int(valid[rng.integers(valid.size)])
    if q is None:
        raise ValueError("a network is required when eps < 1")
    qv = q.forward(state.adj.reshape(1, -1).astype(np.float64))[0]
    qv = np.where(mask, qv, -np.inf)
    return int(np.argmax(qv))


def double_dqn_target(batch: list[Transition], q: QNetwork, q_target: QNetwork,
                      gamma: float, mask_fn) -> np.ndarray:
    """Per-item regression target y = r + gamma * Qbar(s', argmax_valid Q(s', .)).

    Terminal items (episode end, or no valid action from the next state)
    use y = r. ``mask_fn`` maps a state to its valid-action mask.
    """
    y = np.array([t.reward for t in batch], dtype=np.float64)
    if gamma == 0.0:
        return y
    rows = [i for i, t in enumerate(batch) if not t.terminal]
    if not rows:
        return y
    nxt = np.stack([batch[i].next_state.adj.reshape(-1) for i in rows]).astype(np.float64)
    q_online = q.forward(nxt)
    q_tgt = q_target.forward(nxt)
    for r_i, i in enumerate(rows):
        mask = mask_fn(batch[i].next_state)
        masked = np.where(mask, q_online[r_i], -np.inf)
        a_star = int(np.argmax(masked))
        y[i] += gamma * q_tgt[r_i, a_star]
    return y


def transition_step(scorer, g: Dag, score_total: float, action: int,
                    cfg: AgentConfig) -> tuple[Dag, float, float, bool]:
    """Apply one action. Invalid moves leave the state and score unchanged
    and earn -invalid_penalty; valid moves earn the shaped reward."""
    edit = decode_action(action, g.p)
    if check_edit(g, edit, cfg.budget) is not None:
        return g, score_total, -cfg.invalid_penalty, False
    d = scorer.delta(g, edit)
    g_next = apply_edit(g, edit, cfg.budget)
    total_next = score_total + d
    r = reward(score_total, total_next, g_next.edge_count(), g.p, cfg)
    return g_next, total_next, r, True


@dataclass(frozen=True)
class ChampionEvent:
    episode: int
    step: int
    score: float
    edge_count: int


@dataclass
class RunReport:
    """Everything a run produced: configuration echo, scores, traces, output.

    ``to_json`` emits the documented report format; the graph-valued fields
    are in-memory conveniences (the JSON carries the final adjacency only).
    """

    config: dict
    seed: int
    scorer_kind: str
    warm_score: ScoreValue
    output_score: ScoreValue
    champion_trajectory: list[ChampionEvent]
    episode_trace: list[tuple[int, float, float]]
    period_log: list[tuple[int, float]]
    final_adjacency: list[list[int]]
    safety_ok: bool
    wall_clock_seconds: float
    max_edges_seen: int
    output_graph: Dag | None = None
    warm_graph: Dag | None = None
    snapshot_graphs: list[Dag] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "seed": self.seed,
            "scorer": self.scorer_kind,
            "warm_score": self.warm_score.as_dict(),
            "output_score": self.output_score.as_dict(),
            "champion_trajectory": [
                [e.episode, e.step, e.score, e.edge_count] for e in self.champion_trajectory
            ],
            "episode_trace": [list(t) for t in self.episode_trace],
            "period_log": [list(t) for t in self.period_log],
            "final_adjacency": self.final_adjacency,
            "safety_ok": self.safety_ok,
            "wall_clock_seconds": self.wall_clock_seconds,
            "max_edges_seen": self.max_edges_seen,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        doc = json.loads(text)
        adj = doc["final_adjacency"]
        return cls(
            config=doc["config"],
            seed=doc["seed"],
            scorer_kind=doc["scorer"],
            warm_score=ScoreValue(**doc["warm_score"]),
            output_score=ScoreValue(**doc["output_score"]),
            champion_trajectory=[ChampionEvent(*row) for row in doc["champion_trajectory"]],
            episode_trace=[tuple(t) for t in doc["episode_trace"]],
            period_log=[tuple(t) for t in doc["period_log"]],
            final_adjacency=adj,
            safety_ok=doc["safety_ok"],
            wall_clock_seconds=doc["wall_clock_seconds"],
            max_edges_seen=doc["max_edges_seen"],
            output_graph=Dag(np.asarray(adj, dtype=np.int8)),
        )


def train(dataset: ScoredDataset, warm: Dag, cfg: AgentConfig) -> RunReport:
    """Run the full training loop and return the report.

    The output graph is the champion if it strictly beats the warm start's
    exact rescored total, else the warm start itself; the safety verdict
    compares exact ScoreValue totals.
    """
    t0 = time.perf_counter()
    if warm.p != dataset.p:
        raise InputError(f"warm start p={warm.p} does not match data p={dataset.p}")
    cfg = cfg.resolved(dataset.p)
    if warm.edge_count() > cfg.budget:
        raise ConfigError(
            f"warm start has {warm.edge_count()} edges, over the budget {cfg.budget}"
        )
    p = dataset.p
    rng = np.random.default_rng(cfg.seed)
    scorer = make_scorer(dataset)
    online = QNetwork(p * p, cfg.hidden_widths, 3 * p * p, rng)
    target = online.copy()
    optimizer = AdamOptimizer(online.params, cfg.learning_rate)
    buffer = ReplayBuffer(cfg.buffer_capacity)

    mask_cache: dict[bytes, np.ndarray] = {}

    def mask_for(g: Dag) -> np.ndarray:
        m = mask_cache.get(g.key())
        if m is None:
            m = valid_action_mask(g, cfg.budget)
            mask_cache[g.key()] = m
        return m

    warm_value = scorer.score(warm)
    champion, champion_total = warm, warm_value.total
    trajectory = [ChampionEvent(0, 0, warm_value.total, warm.edge_count())]
    snapshots = [warm]
    episode_trace: list[tuple[int, float, float]] = []
    period_log: list[tuple[int, float]] = []
    max_edges_seen = warm.edge_count()

    total_steps = cfg.episodes * cfg.horizon
    gstep = 0
    for ep in range(1, cfg.episodes + 1):
        state, state_total = warm, warm_value.total
        for t in range(1, cfg.horizon + 1):
            mask = mask_for(state)
            if not mask.any():
                break
            eps = epsilon_at(gstep, total_steps, cfg)
            action = select_action(online, state, mask, eps, rng)
            gstep += 1
            nxt, nxt_total, r, valid = transition_step(scorer, state, state_total, action, cfg)
            next_mask = mask_for(nxt)
            terminal = t == cfg.horizon or not next_mask.any()
            buffer.push(Transition(state, action, r, nxt, valid, terminal))
            max_edges_seen = max(max_edges_seen, nxt.edge_count())
            if nxt_total > champion_total:
                champion, champion_total = nxt, nxt_total
                trajectory.append(ChampionEvent(ep, t, nxt_total, nxt.edge_count()))
                snapshots.append(nxt)
            state, state_total = nxt, nxt_total
            if len(buffer) >= max(cfg.warmup_transitions, cfg.batch):
                batch = buffer.sample(cfg.batch, rng)
                y = double_dqn_target(batch, online, target, cfg.gamma, mask_for)
                states = np.stack(
                    [b.state.adj.reshape(-1) for b in batch]
                ).astype(np.float64)
                actions = [b.action for b in batch]
                _, grads = online.loss_and_grads(states, actions, y)
                optimizer.step(online.params, grads)
                polyak_update(target.params, online.params, cfg.tau)
            if terminal:
                break
        episode_trace.append((ep, state_total, champion_total))
        if ep % cfg.champion_period == 0:
            period_log.append((ep, champion_total))

    champion_exact = scorer.score(champion)
    if champion_exact.total > warm_value.total:
        out, out_value = champion, champion_exact
    else:
        out, out_value = warm, warm_value
    safety_ok = out_value.total >= warm_value.total
    return RunReport(
        config=cfg.as_dict(),
        seed=cfg.seed,
        scorer_kind=dataset.kind,
        warm_score=warm_value,
        output_score=out_value,
        champion_trajectory=trajectory,
        episode_trace=episode_trace,
        period_log=period_log,
        final_adjacency=out.adj.astype(int).tolist(),
        safety_ok=safety_ok,
        wall_clock_seconds=time.perf_counter() - t0,
        max_edges_seen=max_edges_seen,
        output_graph=out,
        warm_graph=warm,
        snapshot_graphs=snapshots,
    )


def prune_graph(dataset: ScoredDataset, g: Dag, threshold: float = 0.05) -> Dag:
    """Drop edges whose refit OLS coefficient is below ``threshold`` in
    absolute value. A plain coefficient pruner, not the CAM procedure."""
    if dataset.kind != KIND_COPULA:
        raise InputError("coefficient pruning requires continuous (copula) data")
    scorer = GaussianBicScorer(dataset)
    adj = g.adj.copy()
    for j in range(g.p):
        pa = g.parents(j)
        if not pa:
            continue
        coeffs = scorer.fit_coefficients(j, pa)
        for i, c in zip(pa, coeffs):
            if abs(c) < threshold:
                adj[i, j] = 0
    return Dag(adj)
