"""Baseline policies, tabular Q-learning and the exact lexicographic solver."""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import MoralityEnv
from .morality import (
    DEFAULT_BETA,
    MoralityChain,
    compute_weights,
    morality_function,
    morality_metric,
)
from .scenarios import ScenarioConfig, bind_ranges
from .world import ActionKind, WorldState, reset, step

N_ACTIONS = len(ActionKind)
TABLE_SCHEMA_VERSION = 1


class SolverResourceError(RuntimeError):
    pass


class RandomPolicy:
    """Uniform over the six actions. Re-seeded per episode so rollouts are reproducible."""

    deterministic = False

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self, episode_seed: int) -> None:
        self.rng = np.random.default_rng([self.seed, episode_seed])

    def act(self, world=None) -> ActionKind:
        return ActionKind(int(self.rng.integers(N_ACTIONS)))


class ScriptedPolicy:
    """Replays ``actions`` by timestep, then STAYs forever."""

    deterministic = True

    def __init__(self, actions: Sequence = (), name: str = "scripted"):
        self.actions = [ActionKind.parse(a) for a in actions]
        self.name = name

    def act(self, world: WorldState) -> ActionKind:
        t = world.timestep
        return self.actions[t] if t < len(self.actions) else ActionKind.STAY


def random_policy(seed: int = 0) -> RandomPolicy:
    return RandomPolicy(seed)


def scripted_policy(actions: Sequence = (), name: str = "scripted") -> ScriptedPolicy:
    return ScriptedPolicy(actions, name)


class TabularPolicy:
    """Greedy policy over a table keyed by world digest; unseen states fall back to ``default``."""

    deterministic = True

    def __init__(self, table: dict[str, np.ndarray] | None = None, default: ActionKind = ActionKind.STAY):
        self.table = table if table is not None else {}
        self.default = default

    def act(self, world: WorldState) -> ActionKind:
        q = self.table.get(world.digest())
        if q is None:
            return self.default
        return ActionKind(int(np.argmax(q)))

    def save(self, path) -> None:
        doc = {
            "schema_version": TABLE_SCHEMA_VERSION,
            "actions": [a.name for a in ActionKind],
            "default": self.default.name,
            "table": {k: [float(x) for x in v] for k, v in sorted(self.table.items())},
        }
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> TabularPolicy:
        doc = json.loads(Path(path).read_text())
        if doc.get("schema_version") != TABLE_SCHEMA_VERSION:
            raise ValueError(f"unsupported table schema {doc.get('schema_version')}")
        if doc.get("actions") != [a.name for a in ActionKind]:
            raise ValueError("table action order does not match ActionKind")
        table = {k: np.asarray(v, dtype=float) for k, v in doc["table"].items()}
        return cls(table, ActionKind[doc.get("default", "STAY")])


@dataclass
class TrainConfig:
    alpha: float = 0.1
    gamma: float = 0.99
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int | None = None  # default: first half of training
    total_steps: int = 20_000
    reward_mode: str = "env_only"  # or "shaped"
    cost_weight: float = 1.0  # lambda in R_E - lambda * C_t
    normalize_cost: bool = False
    beta: Fraction = DEFAULT_BETA
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1):
            raise ValueError("epsilon must lie in [0, 1]")
        if self.cost_weight < 0:
            raise ValueError("cost weight must be >= 0")
        if self.reward_mode not in ("env_only", "shaped"):
            raise ValueError(f"unknown reward mode {self.reward_mode!r}")

    def epsilon(self, step_idx: int) -> float:
        decay = self.eps_decay_steps if self.eps_decay_steps is not None else max(self.total_steps // 2, 1)
        frac = min(step_idx / decay, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


# Shaping presets: unit cost weight, and a heavier weight that pushes the learner toward the moral optimum.
SHAPED_DEFAULT = dict(reward_mode="shaped", cost_weight=1.0)
SHAPED_COST_WEIGHT_50 = dict(reward_mode="shaped", cost_weight=50.0)


@dataclass
class TrainResult:
    policy: TabularPolicy
    episodes: int
    episode_returns: list[float] = field(default_factory=list)


def q_learn(scenario: ScenarioConfig, chain: MoralityChain, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Epsilon-greedy tabular Q-learning on the env reward or the cost-shaped reward."""
    env = MoralityEnv(scenario, chain, beta=config.beta, normalize_cost=config.normalize_cost)
    rng = np.random.default_rng(config.seed)
    table: dict[str, np.ndarray] = {}
    shaped = config.reward_mode == "shaped"

    def q(key):
        v = table.get(key)
        if v is None:
            v = table[key] = np.zeros(N_ACTIONS)
        return v

    steps = 0
    episodes = 0
    returns = []
    while steps < config.total_steps:
        env.reset(seed=config.seed + episodes)
        key = env.world.digest()
        done = False
        ep_ret = 0.0
        while not done and steps < config.total_steps:
            qs = q(key)
            if rng.random() < config.epsilon(steps):
                a = int(rng.integers(N_ACTIONS))
            else:
                best = np.flatnonzero(qs == qs.max())
                a = int(best[0]) if len(best) == 1 else int(rng.choice(best))
            _, r, terminated, truncated, info = env.step(ActionKind(a))
            if shaped:
                r = r - config.cost_weight * info["cost"]
            ep_ret += r
            next_key = env.world.digest()
            target = r if terminated else r + config.gamma * q(next_key).max()
            qs[a] += config.alpha * (target - qs[a])
            key = next_key
            steps += 1
            done = terminated or truncated
        episodes += 1
        returns.append(ep_ret)
    return TrainResult(TabularPolicy(table), episodes, returns)


# ---------------------------------------------------------------------------
# exact solver


def terminal_adherence(world: WorldState, chain: MoralityChain) -> dict[str, Fraction]:
    """Per-norm episode outcome read off a final world state (no event stream needed)."""
    harmed = {"human": 0, "animal": 0, "robot": 0, "agent": int(world.agent.harmed)}
    pushed, personal, caused = set(), set(), set()
    for g in world.characters:
        if g.pushed_by_agent:
            pushed.add(g.kind)
        if g.harmed:
            harmed[g.kind] += g.quantity
            if g.pushed_by_agent:
                personal.add(g.kind)
            if g.harmed_via_lever:
                caused.add(g.kind)
    if world.agent.harmed and world.agent.harmed_via_lever:
        caused.add("agent")

    def any_kind(kinds: set, norm_kind):
        if norm_kind is None:
            return bool(kinds - {"agent"})
        return norm_kind in kinds

    out = {}
    for n in chain.norms:
        k = n.subject_kind
        if n.signature == "harm_count":
            count = harmed[k] if k is not None else sum(v for kk, v in harmed.items() if kk != "agent")
            lo, hi = (Fraction(v) for v in n.utility_range)
            # tracker levels start at the range floor and grow by the harmed count
            out[n.id] = Fraction(count) / (hi - lo)
        elif n.signature == "push":
            out[n.id] = Fraction(int(any_kind(pushed, k)))
        elif n.signature == "harm":
            kinds = {kk for kk, v in harmed.items() if v}
            out[n.id] = Fraction(int(any_kind(kinds, k)))
        elif n.signature == "personal_harm":
            out[n.id] = Fraction(int(any_kind(personal, k)))
        elif n.signature == "caused_harm":
            out[n.id] = Fraction(int(any_kind(caused, k)))
        elif n.signature == "landmark":
            out[n.id] = Fraction(int(world.landmark_reached))
    return out


@dataclass
class SolveResult:
    policy: TabularPolicy
    plan: list[ActionKind]
    per_norm_adherence: dict[str, float]
    per_norm_m: dict[str, float]
    metric: float
    metric_exact: Fraction
    expected_return: float
    states_explored: int


def exact_solve(
    scenario: ScenarioConfig,
    chain: MoralityChain,
    horizon: int | None = None,
    beta=DEFAULT_BETA,
    max_states: int = 2_000_000,
    subset=None,
) -> SolveResult:
    """Exhaustive search over the deterministic transition graph.

    Maximises the morality metric of the induced episode, then the
    undiscounted return. States at ``horizon`` are treated as final.
    """
    chain = bind_ranges(chain, scenario)
    weights = compute_weights(chain, beta)
    horizon = scenario.reward.max_steps if horizon is None else min(horizon, scenario.reward.max_steps)
    memo: dict[tuple, tuple[Fraction, float, int]] = {}
    table: dict[str, np.ndarray] = {}

    def metric_of(world: WorldState) -> Fraction:
        adh = terminal_adherence(world, chain)
        m = [1 - adh[n.id] if n.modality.value == "prohibited" else adh[n.id] for n in chain.norms]
        return morality_metric(chain, weights, m, subset=subset, exact=True)

    def solve(world: WorldState) -> tuple[Fraction, float]:
        key = world.key()
        hit = memo.get(key)
        if hit is not None:
            return hit[0], hit[1]
        if world.episode_over or world.timestep >= horizon:
            memo[key] = (metric_of(world), 0.0, int(ActionKind.STAY))
            return memo[key][:2]
        if len(memo) >= max_states:
            raise SolverResourceError(
                f"state space exceeds {max_states} states; reduce the horizon (currently {horizon})"
            )
        best = None
        for a in ActionKind:
            child = world.copy()
            out = step(child, a, with_observation=False)
            m, ret = solve(child)
            ret += out.reward
            if best is None or (m, ret) > (best[0], best[1]):
                best = (m, ret, int(a))
        memo[key] = best
        # encode preference so argmax picks the solver's choice
        prefs = np.zeros(N_ACTIONS)
        prefs[best[2]] = 1.0
        table[world.digest()] = prefs
        return best[0], best[1]

    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, horizon * 4 + 1000))
    try:
        world, _ = reset(scenario)
        metric_exact, ret = solve(world)
    finally:
        sys.setrecursionlimit(limit)

    plan = []
    w = world.copy()
    while not w.episode_over and w.timestep < horizon:
        a = ActionKind(memo[w.key()][2])
        plan.append(a)
        step(w, a, with_observation=False)
    adh = {k: float(v) for k, v in terminal_adherence(w, chain).items()}
    per_m = {n.id: morality_function(n, adh[n.id]) for n in chain.norms}
    return SolveResult(
        policy=TabularPolicy(table),
        plan=plan,
        per_norm_adherence=adh,
        per_norm_m=per_m,
        # same float path as evaluate() so equal outcomes report equal metrics
        metric=morality_metric(chain, weights, [per_m[n.id] for n in chain.norms], subset=subset),
        metric_exact=metric_exact,
        expected_return=ret,
        states_explored=len(memo),
    )
