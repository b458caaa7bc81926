"""Gymnasium-style wrapper tying the world engine to a morality chain and cost tracker."""

from __future__ import annotations

from .ledger import CostTracker, EpisodeTrace, StepRecord, derive_events
from .morality import DEFAULT_BETA, MoralityChain
from .scenarios import ScenarioConfig, bind_ranges, chain_to_dict, config_hash, scenario_to_dict
from .world import ActionKind, EpisodeFinishedError, WorldState, flatten_observation, reset, step


class MoralityEnv:
    """``reset()`` / ``step(action)`` returning ``(obs, reward, terminated, truncated, info)``.

    ``info`` carries ``norm_events`` for the active chain, the step ``cost``,
    and the chain-independent ``facts`` (harm records, interact effect) that
    traces store so they can be rescored under other chains.
    """

    def __init__(
        self,
        scenario: ScenarioConfig,
        chain: MoralityChain | None = None,
        beta=DEFAULT_BETA,
        normalize_cost: bool = False,
        flatten: bool = False,
    ):
        self.scenario = scenario
        self.chain = bind_ranges(chain, scenario) if chain is not None else None
        self.beta = beta
        self.tracker = CostTracker(self.chain, beta, normalize_cost) if self.chain is not None else None
        self.flatten = flatten
        self.world: WorldState | None = None

    @property
    def action_space_n(self) -> int:
        return len(ActionKind)

    def _obs(self, obs):
        return flatten_observation(obs) if self.flatten else obs

    def reset(self, seed: int = 0):
        self.world, obs = reset(self.scenario, seed)
        if self.tracker is not None:
            self.tracker.reset()
        return self._obs(obs), {"state_digest": self.world.digest(), "t": 0}

    def step(self, action):
        if self.world is None:
            raise EpisodeFinishedError("call reset() before step()")
        out = step(self.world, action)
        cost = 0.0
        if self.chain is not None:
            out.norm_events = derive_events(out.harms, out.interact, self.chain, out.t, out.landmark_reached)
            cost = self.tracker.record_step(out.norm_events, out.t, terminal=out.terminated or out.truncated)
        info = {
            "t": out.t,
            "norm_events": [e.to_dict() for e in out.norm_events],
            "cost": cost,
            "facts": {
                "harms": [h.to_dict() for h in out.harms],
                "interact": out.interact.to_dict(),
                "landmark_reached": out.landmark_reached,
            },
            "state_digest": self.world.digest(),
            "_outcome": out,
        }
        return self._obs(out.observation), out.reward, out.terminated, out.truncated, info

    def episode_adherence(self) -> dict[str, float]:
        return self.tracker.episode_adherence()

    def header(self, seed: int) -> dict:
        doc = scenario_to_dict(self.scenario)
        chain_doc = chain_to_dict(self.chain, self.beta) if self.chain is not None else None
        return {
            "type": "header",
            "scenario": self.scenario.name,
            "scenario_hash": config_hash(doc),
            "chain": chain_doc,
            "seed": seed,
            "totals": self.scenario.totals(),
            "max_steps": self.scenario.reward.max_steps,
        }


def rollout(env: MoralityEnv, policy, seed: int = 0) -> EpisodeTrace:
    """Run one full episode of ``policy`` and return its trace."""
    if hasattr(policy, "reset"):
        policy.reset(seed)
    env.reset(seed)
    trace = EpisodeTrace(env.header(seed))
    done = False
    while not done:
        action = ActionKind.parse(policy.act(env.world))
        _, reward, terminated, truncated, info = env.step(action)
        out = info["_outcome"]
        trace.records.append(StepRecord(
            t=info["t"], action=action.name, reward=reward, cost=info["cost"],
            norm_events=list(out.norm_events), state_digest=info["state_digest"],
            harms=list(out.harms), interact=out.interact, landmark_reached=out.landmark_reached,
            terminated=terminated, truncated=truncated,
        ))
        done = terminated or truncated
    if env.tracker is not None:
        trace.adherence = env.episode_adherence()
    return trace
