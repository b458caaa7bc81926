"""Norm events and the episode-aware step-wise moral cost."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .morality import (
    DEFAULT_BETA,
    DeonticModality,
    MoralityChain,
    NormSpec,
    as_fraction,
    compute_weights,
    morality_function,
)
from .world import HarmRecord, InteractEffect


class UnknownNormError(KeyError):
    pass


class UtilityRangeError(ValueError):
    pass


class TrackerStateError(RuntimeError):
    pass


@dataclass(frozen=True)
class NormEvent:
    norm_id: str
    category: str
    t: int
    harmed_count: int | None = None
    subject_kind: str | None = None
    personal: bool = False
    via_lever: bool = False

    def to_dict(self) -> dict:
        d = {"norm_id": self.norm_id, "category": self.category, "t": self.t,
             "personal": self.personal, "via_lever": self.via_lever}
        if self.harmed_count is not None:
            d["harmed_count"] = self.harmed_count
        if self.subject_kind is not None:
            d["subject_kind"] = self.subject_kind
        return d

    @classmethod
    def from_dict(cls, d) -> NormEvent:
        return cls(d["norm_id"], d["category"], d["t"], d.get("harmed_count"), d.get("subject_kind"),
                   d.get("personal", False), d.get("via_lever", False))


def _kind_matches(norm: NormSpec, kind: str) -> bool:
    if norm.subject_kind is None:
        return kind != "agent"
    return norm.subject_kind == kind


def derive_events(
    harms: Sequence[HarmRecord],
    interact: InteractEffect,
    chain: MoralityChain,
    t: int,
    landmark_reached: bool = False,
) -> list[NormEvent]:
    """Translate one step's raw facts into events for the norms of ``chain``.

    Push-lineage harm is personal; harm from a trolley that crossed a switch
    the agent had re-set is caused (impersonal).
    """
    events = []
    for norm in chain.norms:
        sig = norm.signature
        if sig == "push":
            if interact.kind == "push" and (norm.subject_kind is None or norm.subject_kind == interact.subject_kind):
                events.append(NormEvent(norm.id, norm.category, t, subject_kind=interact.subject_kind,
                                        personal=True))
            continue
        if sig == "landmark":
            if landmark_reached:
                events.append(NormEvent(norm.id, norm.category, t))
            continue
        if sig == "harm":
            hits = [h for h in harms if _kind_matches(norm, h.kind)]
        elif sig == "personal_harm":
            hits = [h for h in harms if h.personal and _kind_matches(norm, h.kind)]
        elif sig == "caused_harm":
            hits = [h for h in harms if h.via_lever and _kind_matches(norm, h.kind)]
        else:  # harm_count
            hits = [h for h in harms if _kind_matches(norm, h.kind)]
        if hits:
            events.append(NormEvent(
                norm.id, norm.category, t,
                harmed_count=sum(h.count for h in hits),
                subject_kind=norm.subject_kind,
                personal=any(h.personal for h in hits),
                via_lever=any(h.via_lever for h in hits),
            ))
    return events


class CostTracker:
    """Per-episode cost accumulator for one morality chain.

    Event norms (action, outcome, causal) charge their weight once, on first
    violation. Utility norms charge the increase of their normalised level,
    so an episode's total equals ``w * final_level``. ``mode="level"`` charges
    the full level at every step instead. Prescribed norms are settled at the
    terminal step, since their violation is an absence.
    """

    def __init__(self, chain: MoralityChain, beta=DEFAULT_BETA, normalize: bool = False, mode: str = "increment"):
        for n in chain.norms:
            if n.is_utility and n.utility_range is None:
                raise UtilityRangeError(f"utility norm {n.id!r} has no range; bind it to a scenario first")
        if mode not in ("increment", "level"):
            raise ValueError(f"unknown cost mode {mode!r}")
        self.chain = chain
        self.weights = compute_weights(chain, beta)
        self.normalize = normalize
        self.mode = mode
        self._w = dict(zip(chain.ids, self.weights.exact))
        self.reset()

    def reset(self) -> None:
        self.fired: set[str] = set()
        self.occurred: set[str] = set()
        self.utility_values = {n.id: as_fraction(n.utility_range[0]) for n in self.chain.norms if n.is_utility}
        self.prev_utility_cost = {nid: Fraction(0) for nid in self.utility_values}
        self.last_t: int | None = None
        self.finished = False
        self.total = Fraction(0)
        self.step_costs: list[float] = []

    def level(self, norm: NormSpec) -> Fraction:
        lo, hi = (as_fraction(v) for v in norm.utility_range)
        return (self.utility_values[norm.id] - lo) / (hi - lo)

    def record_step(self, events: Iterable[NormEvent], t: int, terminal: bool = False) -> float:
        if self.finished:
            raise TrackerStateError("episode already finished; reset the tracker")
        if self.last_t is not None and t <= self.last_t:
            raise TrackerStateError(f"timestep {t} not after {self.last_t}")
        self.last_t = t
        cost = Fraction(0)
        for ev in events:
            if ev.norm_id not in self._w:
                raise UnknownNormError(f"event for norm {ev.norm_id!r} not in chain {self.chain.name!r}")
            norm = self.chain.get(ev.norm_id)
            if norm.is_utility:
                value = self.utility_values[norm.id] + (ev.harmed_count or 0)
                lo, hi = norm.utility_range
                if not lo <= value <= hi:
                    raise UtilityRangeError(f"utility {norm.id!r} = {value} outside [{lo}, {hi}]")
                self.utility_values[norm.id] = value
                continue
            self.occurred.add(norm.id)
            if norm.modality is DeonticModality.PROHIBITED and norm.id not in self.fired:
                self.fired.add(norm.id)
                cost += self._w[norm.id]
        for norm in self.chain.norms:
            if not norm.is_utility or norm.modality is not DeonticModality.PROHIBITED:
                continue
            lvl = self.level(norm)
            if self.mode == "level":
                cost += self._w[norm.id] * lvl
            else:
                cost += self._w[norm.id] * (lvl - self.prev_utility_cost[norm.id])
            self.prev_utility_cost[norm.id] = lvl
        if terminal:
            for norm in self.chain.norms:
                if norm.modality is not DeonticModality.PRESCRIBED:
                    continue
                if norm.is_utility:
                    cost += self._w[norm.id] * (1 - self.level(norm))
                elif norm.id not in self.occurred:
                    self.fired.add(norm.id)
                    cost += self._w[norm.id]
            self.finished = True
        if self.normalize:
            cost /= self.weights.total
        self.total += cost
        self.step_costs.append(float(cost))
        return float(cost)

    def episode_adherence(self, exact: bool = False) -> dict:
        """Per-norm outcome of the finished episode: indicator for event norms, normalised level for utility.

        ``exact=True`` returns fractions, which lets callers average many
        episodes without rounding drift.
        """
        if not self.finished:
            raise TrackerStateError("episode adherence requested before the episode finished")
        out = {}
        for norm in self.chain.norms:
            if norm.is_utility:
                v = self.level(norm)
            else:
                v = Fraction(int(norm.id in self.occurred))
            out[norm.id] = v if exact else float(v)
        return out

    def morality_values(self) -> dict[str, float]:
        adh = self.episode_adherence()
        return {n.id: morality_function(n, adh[n.id]) for n in self.chain.norms}


def record_step(tracker: CostTracker, events: Iterable[NormEvent], t: int, terminal: bool = False) -> float:
    return tracker.record_step(events, t, terminal)


def episode_adherence(tracker: CostTracker) -> dict[str, float]:
    return tracker.episode_adherence()


def reset_tracker(tracker: CostTracker) -> None:
    tracker.reset()


@dataclass
class StepRecord:
    t: int
    action: str
    reward: float
    cost: float
    norm_events: list[NormEvent]
    state_digest: str
    harms: list[HarmRecord] = field(default_factory=list)
    interact: InteractEffect = field(default_factory=InteractEffect)
    landmark_reached: bool = False
    terminated: bool = False
    truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "action": self.action,
            "reward": self.reward,
            "cost": self.cost,
            "norm_events": [e.to_dict() for e in self.norm_events],
            "state_digest": self.state_digest,
            "facts": {
                "harms": [h.to_dict() for h in self.harms],
                "interact": self.interact.to_dict(),
                "landmark_reached": self.landmark_reached,
            },
            "terminated": self.terminated,
            "truncated": self.truncated,
        }

    @classmethod
    def from_dict(cls, d) -> StepRecord:
        facts = d.get("facts", {})
        return cls(
            t=d["t"], action=d["action"], reward=d["reward"], cost=d["cost"],
            norm_events=[NormEvent.from_dict(e) for e in d.get("norm_events", [])],
            state_digest=d.get("state_digest", ""),
            harms=[HarmRecord.from_dict(h) for h in facts.get("harms", [])],
            interact=InteractEffect.from_dict(facts.get("interact", {})),
            landmark_reached=facts.get("landmark_reached", False),
            terminated=d.get("terminated", False),
            truncated=d.get("truncated", False),
        )


@dataclass
class EpisodeTrace:
    header: dict
    records: list[StepRecord] = field(default_factory=list)
    adherence: dict[str, float] = field(default_factory=dict)

    @property
    def terminated(self) -> bool:
        return bool(self.records) and self.records[-1].terminated

    @property
    def truncated(self) -> bool:
        return bool(self.records) and self.records[-1].truncated

    @property
    def total_reward(self) -> float:
        return sum(r.reward for r in self.records)

    @property
    def total_cost(self) -> float:
        return sum(r.cost for r in self.records)

    def harm_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            for h in r.harms:
                out[h.kind] = out.get(h.kind, 0) + h.count
        return out
