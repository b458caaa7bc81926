"""Deterministic grid-world engine: movement, levers, pushes, trolleys, harm, reward."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field

from .scenarios import CHARACTER_KINDS, ConfigError, ScenarioConfig, validate_scenario

Pos = tuple[int, int]


class EpisodeFinishedError(RuntimeError):
    """``step`` was called after the episode terminated or was truncated."""


class ActionKind(enum.IntEnum):
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4
    INTERACT = 5

    @classmethod
    def parse(cls, value) -> ActionKind:
        if isinstance(value, ActionKind):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown action {value!r}") from None
        return cls(int(value))


DELTAS = {
    ActionKind.UP: (0, -1),
    ActionKind.DOWN: (0, 1),
    ActionKind.LEFT: (-1, 0),
    ActionKind.RIGHT: (1, 0),
}
# Adjacency scan order for INTERACT.
SCAN_ORDER = (ActionKind.UP, ActionKind.DOWN, ActionKind.LEFT, ActionKind.RIGHT)


def _add(p: Pos, d: Pos) -> Pos:
    return (p[0] + d[0], p[1] + d[1])


@dataclass
class AgentState:
    pos: Pos
    harmed: bool = False
    terminated: bool = False
    harmed_via_lever: bool = False


@dataclass
class Lever:
    id: str
    pos: Pos
    num_states: int
    state: int
    linked_switch: str | None
    linked_pistons: tuple[str, ...] = ()


@dataclass
class RailSwitch:
    id: str
    location: Pos
    branches: tuple[str, ...]
    active_index: int
    initial_index: int


@dataclass
class Piston:
    id: str
    pos: Pos
    state: int


@dataclass
class CharacterGroup:
    id: str
    pos: Pos
    kind: str
    quantity: int
    pushable: bool = True
    harmed: bool = False
    pushed_by_agent: bool = False
    harmed_via_lever: bool = False


@dataclass
class Trolley:
    id: str
    segment: str
    index: int
    speed: int
    delay: int = 0
    active: bool = True
    harmed: bool = False
    diverted: bool = False


@dataclass(frozen=True)
class HarmRecord:
    kind: str  # human / animal / robot / agent
    count: int
    entity: str
    personal: bool = False
    via_lever: bool = False
    trolley: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "count": self.count, "entity": self.entity,
            "personal": self.personal, "via_lever": self.via_lever, "trolley": self.trolley,
        }

    @classmethod
    def from_dict(cls, d) -> HarmRecord:
        return cls(d["kind"], d["count"], d["entity"], d.get("personal", False),
                   d.get("via_lever", False), d.get("trolley"))


@dataclass(frozen=True)
class InteractEffect:
    """Which INTERACT sub-action fired. ``kind`` is none, lever, push, push_blocked or landmark."""

    kind: str = "none"
    target: str | None = None
    subject_kind: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target, "subject_kind": self.subject_kind}

    @classmethod
    def from_dict(cls, d) -> InteractEffect:
        return cls(d.get("kind", "none"), d.get("target"), d.get("subject_kind"))


NO_EFFECT = InteractEffect()


@dataclass
class WorldState:
    scenario: ScenarioConfig
    agent: AgentState
    levers: list[Lever]
    switches: list[RailSwitch]
    pistons: list[Piston]
    characters: list[CharacterGroup]
    trolleys: list[Trolley]
    seed: int = 0
    timestep: int = 0
    episode_over: bool = False
    landmark_reached: bool = False
    _segments: dict = field(default_factory=dict, repr=False, compare=False)
    _blocked: frozenset = field(default_factory=frozenset, repr=False, compare=False)

    @property
    def width(self) -> int:
        return self.scenario.width

    @property
    def height(self) -> int:
        return self.scenario.height

    def in_grid(self, p: Pos) -> bool:
        return 0 <= p[0] < self.width and 0 <= p[1] < self.height

    def group_at(self, p: Pos, unharmed_only: bool = False) -> CharacterGroup | None:
        for g in self.characters:
            if g.pos == p and not (unharmed_only and g.harmed):
                return g
        return None

    def lever_at(self, p: Pos) -> Lever | None:
        for lv in self.levers:
            if lv.pos == p:
                return lv
        return None

    def piston_at(self, p: Pos) -> Piston | None:
        for pi in self.pistons:
            if pi.pos == p:
                return pi
        return None

    def switch_at(self, p: Pos) -> RailSwitch | None:
        for sw in self.switches:
            if sw.location == p:
                return sw
        return None

    def switch(self, sid: str) -> RailSwitch:
        for sw in self.switches:
            if sw.id == sid:
                return sw
        raise KeyError(sid)

    def trolley_pos(self, tr: Trolley) -> Pos:
        return self._segments[tr.segment][tr.index]

    def active_trolley_at(self, p: Pos) -> Trolley | None:
        for tr in self.trolleys:
            if tr.active and self.trolley_pos(tr) == p:
                return tr
        return None

    def key(self) -> tuple:
        """Canonical hashable Markov state (everything that shapes the future and the outcome)."""
        return (
            self.agent.pos, self.agent.harmed, self.agent.terminated, self.agent.harmed_via_lever,
            tuple(lv.state for lv in self.levers),
            tuple(sw.active_index for sw in self.switches),
            tuple(p.state for p in self.pistons),
            tuple((t.segment, t.index, t.active, t.delay, t.harmed, t.diverted) for t in self.trolleys),
            tuple((g.pos, g.harmed, g.pushed_by_agent, g.harmed_via_lever) for g in self.characters),
            self.timestep, self.landmark_reached, self.episode_over,
        )

    def digest(self) -> str:
        return hashlib.sha256(repr(self.key()).encode()).hexdigest()[:20]

    def copy(self) -> WorldState:
        return WorldState(
            scenario=self.scenario,
            agent=AgentState(self.agent.pos, self.agent.harmed, self.agent.terminated, self.agent.harmed_via_lever),
            levers=[Lever(lv.id, lv.pos, lv.num_states, lv.state, lv.linked_switch, lv.linked_pistons)
                    for lv in self.levers],
            switches=[RailSwitch(s.id, s.location, s.branches, s.active_index, s.initial_index)
                      for s in self.switches],
            pistons=[Piston(p.id, p.pos, p.state) for p in self.pistons],
            characters=[CharacterGroup(g.id, g.pos, g.kind, g.quantity, g.pushable, g.harmed,
                                       g.pushed_by_agent, g.harmed_via_lever) for g in self.characters],
            trolleys=[Trolley(t.id, t.segment, t.index, t.speed, t.delay, t.active, t.harmed, t.diverted)
                      for t in self.trolleys],
            seed=self.seed,
            timestep=self.timestep,
            episode_over=self.episode_over,
            landmark_reached=self.landmark_reached,
            _segments=self._segments,
            _blocked=self._blocked,
        )


@dataclass
class StepOutcome:
    observation: dict
    reward: float
    terminated: bool
    truncated: bool
    t: int
    harms: list[HarmRecord] = field(default_factory=list)
    interact: InteractEffect = NO_EFFECT
    landmark_reached: bool = False
    norm_events: list = field(default_factory=list)

    @property
    def raw_harm_summary(self) -> dict[str, int]:
        out = {k: 0 for k in (*CHARACTER_KINDS, "agent")}
        for h in self.harms:
            out[h.kind] += h.count
        return out


# ---------------------------------------------------------------------------
# reset / step


def reset(scenario: ScenarioConfig, seed: int = 0) -> tuple[WorldState, dict]:
    """Build the initial world. The dynamics are deterministic; ``seed`` is recorded only."""
    validate_scenario(scenario)
    world = WorldState(
        scenario=scenario,
        agent=AgentState(scenario.agent_start),
        levers=[Lever(lv.id, lv.pos, lv.num_states, lv.state, lv.linked_switch, lv.linked_pistons)
                for lv in scenario.levers],
        switches=[RailSwitch(s.id, s.location, s.branches, s.active_index, s.active_index)
                  for s in scenario.switches],
        pistons=[Piston(p.id, p.pos, p.state) for p in scenario.pistons],
        characters=[CharacterGroup(c.id, c.pos, c.kind, c.quantity, c.pushable) for c in scenario.characters],
        trolleys=sorted(
            (Trolley(t.id, t.segment, t.index, t.speed, t.delay) for t in scenario.trolleys),
            key=lambda t: t.id,
        ),
        seed=seed,
        _segments={r.id: r.cells for r in scenario.rails},
        _blocked=frozenset(scenario.blocked),
    )
    return world, observe(world)


def _passable_for_agent(world: WorldState, p: Pos) -> bool:
    return (
        world.in_grid(p)
        and p not in world._blocked
        and world.lever_at(p) is None
        and world.piston_at(p) is None
        and world.group_at(p) is None
        and world.active_trolley_at(p) is None
    )


def _push_target_ok(world: WorldState, p: Pos) -> bool:
    return (
        world.in_grid(p)
        and p not in world._blocked
        and world.lever_at(p) is None
        and world.piston_at(p) is None
        and world.group_at(p) is None
        and p != world.agent.pos
    )


def _toggle(world: WorldState, lever: Lever) -> None:
    lever.state = (lever.state + 1) % lever.num_states
    if lever.linked_switch is not None:
        sw = world.switch(lever.linked_switch)
        sw.active_index = min(lever.state, len(sw.branches) - 1)
    for pid in lever.linked_pistons:
        for p in world.pistons:
            if p.id == pid:
                p.state = lever.state % 2


def resolve_interact(world: WorldState, harms: list[HarmRecord] | None = None) -> InteractEffect:
    """Apply INTERACT: lever first, then push, then landmark (interact mode).

    Harm caused immediately by a push (onto an occupied trolley cell) is
    appended to ``harms``.
    """
    apos = world.agent.pos
    for a in SCAN_ORDER:
        lever = world.lever_at(_add(apos, DELTAS[a]))
        if lever is not None:
            _toggle(world, lever)
            return InteractEffect("lever", lever.id)
    for a in SCAN_ORDER:
        d = DELTAS[a]
        group = world.group_at(_add(apos, d), unharmed_only=True)
        if group is None or not group.pushable:
            continue
        target = _add(group.pos, d)
        if not _push_target_ok(world, target):
            return InteractEffect("push_blocked", group.id, group.kind)
        group.pos = target
        group.pushed_by_agent = True
        tr = world.active_trolley_at(target)
        if tr is not None:
            group.harmed = True
            tr.active = False
            tr.harmed = True
            if harms is not None:
                harms.append(HarmRecord(group.kind, group.quantity, group.id, personal=True, trolley=tr.id))
        return InteractEffect("push", group.id, group.kind)
    if world.scenario.landmark_mode == "interact":
        lm = world.scenario.landmark
        if abs(lm[0] - apos[0]) + abs(lm[1] - apos[1]) <= 1:
            world.landmark_reached = True
            return InteractEffect("landmark")
    return NO_EFFECT


def _next_cell(world: WorldState, tr: Trolley) -> Pos | None:
    cells = world._segments[tr.segment]
    here = cells[tr.index]
    sw = world.switch_at(here)
    if sw is not None:
        branch = sw.branches[sw.active_index]
        if branch != tr.segment:
            tr.segment = branch
            cells = world._segments[branch]
            tr.index = cells.index(here)
        if sw.active_index != sw.initial_index:
            tr.diverted = True
    if tr.index + 1 >= len(cells):
        return None
    tr.index += 1
    return cells[tr.index]


def advance_trolleys(world: WorldState) -> list[HarmRecord]:
    """Move every active trolley up to ``speed`` cells, checking collisions at each cell."""
    harms: list[HarmRecord] = []
    for tr in world.trolleys:  # sorted by id at reset
        if not tr.active:
            continue
        if tr.delay > 0:
            tr.delay -= 1
            continue
        for _ in range(tr.speed):
            cell = _next_cell(world, tr)
            if cell is None:
                tr.active = False
                break
            hit = False
            group = world.group_at(cell, unharmed_only=True)
            if group is not None:
                group.harmed = True
                group.harmed_via_lever = tr.diverted
                harms.append(HarmRecord(group.kind, group.quantity, group.id,
                                        personal=group.pushed_by_agent, via_lever=tr.diverted, trolley=tr.id))
                hit = True
            if world.agent.pos == cell and not world.agent.harmed:
                world.agent.harmed = True
                world.agent.harmed_via_lever = tr.diverted
                harms.append(HarmRecord("agent", 1, "agent", via_lever=tr.diverted, trolley=tr.id))
                hit = True
            if hit:
                tr.active = False
                tr.harmed = True
                break
    return harms


def step(world: WorldState, action, with_observation: bool = True) -> StepOutcome:
    """Advance one timestep: agent, trolleys, harm, reward, termination."""
    if world.episode_over:
        raise EpisodeFinishedError("episode finished; call reset()")
    action = ActionKind.parse(action)
    cfg = world.scenario.reward
    harms: list[HarmRecord] = []
    effect = NO_EFFECT
    agent_was_harmed = world.agent.harmed
    reached_before = world.landmark_reached

    # agent phase
    if action in DELTAS:
        target = _add(world.agent.pos, DELTAS[action])
        if _passable_for_agent(world, target):
            world.agent.pos = target
    elif action is ActionKind.INTERACT:
        effect = resolve_interact(world, harms)
    if world.scenario.landmark_mode == "arrive" and world.agent.pos == world.scenario.landmark:
        world.landmark_reached = True

    # trolley phase
    harms.extend(advance_trolleys(world))

    world.timestep += 1
    reached = world.landmark_reached and not reached_before
    newly_harmed = world.agent.harmed and not agent_was_harmed
    reward = cfg.step_penalty
    if reached:
        reward += cfg.landmark_reward
    if newly_harmed:
        reward += cfg.agent_harm_penalty

    terminated = world.landmark_reached or world.agent.harmed
    truncated = not terminated and world.timestep >= cfg.max_steps
    if terminated:
        world.agent.terminated = True
    world.episode_over = terminated or truncated
    obs = observe(world) if with_observation else {}
    return StepOutcome(obs, reward, terminated, truncated, world.timestep, harms, effect, reached)


# ---------------------------------------------------------------------------
# observations


def _norm_pos(world: WorldState, p: Pos, normalize: bool):
    if not normalize:
        return [p[0], p[1]]
    w, h = world.width - 1, world.height - 1
    return [p[0] / w if w else 0.0, p[1] / h if h else 0.0]


def _one_hot(i: int, n: int) -> list[int]:
    v = [0] * n
    v[i] = 1
    return v


def observe(world: WorldState, entities=None, normalize: bool | None = None) -> dict:
    """Ordered mapping entity id -> component record; booleans are 0/1."""
    if entities is None:
        entities = world.scenario.observed_entities()
    if normalize is None:
        normalize = world.scenario.observation.normalize
    out = {}
    for name in entities:
        if name == "agent":
            a = world.agent
            out[name] = {"position": _norm_pos(world, a.pos, normalize), "harmed": int(a.harmed),
                         "terminated": int(a.terminated)}
            continue
        g = next((g for g in world.characters if g.id == name), None)
        if g is not None:
            out[name] = {"position": _norm_pos(world, g.pos, normalize), "harmed": int(g.harmed),
                         "quantity": g.quantity, "kind": _one_hot(CHARACTER_KINDS.index(g.kind), 3)}
            continue
        lv = next((lv for lv in world.levers if lv.id == name), None)
        if lv is not None:
            out[name] = {"state": _one_hot(lv.state, lv.num_states)}
            continue
        tr = next((t for t in world.trolleys if t.id == name), None)
        if tr is not None:
            out[name] = {"position": _norm_pos(world, world.trolley_pos(tr), normalize),
                         "harmed": int(tr.harmed), "active": int(tr.active)}
            continue
        sw = next((s for s in world.switches if s.id == name), None)
        if sw is not None:
            out[name] = {"active_index": sw.active_index}
            continue
        raise ConfigError(f"unknown observation entity {name!r}", "observation.entities")
    return out


def flatten_observation(obs: dict) -> list[float]:
    """Concatenate components in entity order; each record's fields are already in flatten order."""
    vec: list[float] = []
    for record in obs.values():
        for value in record.values():
            if isinstance(value, list):
                vec.extend(float(v) for v in value)
            else:
                vec.append(float(value))
    return vec


def observation_length(scenario: ScenarioConfig) -> int:
    """Flattened length from the scenario's entity list alone."""
    widths = {"agent": 4}
    widths.update({c.id: 7 for c in scenario.characters})
    widths.update({lv.id: lv.num_states for lv in scenario.levers})
    widths.update({t.id: 4 for t in scenario.trolleys})
    widths.update({s.id: 1 for s in scenario.switches})
    return sum(widths[e] for e in scenario.observed_entities())


# ---------------------------------------------------------------------------
# rendering

KIND_GLYPH = {"human": "H", "animal": "N", "robot": "R"}


def render_ascii(world: WorldState) -> str:
    """Two-character glyph per cell; later layers overwrite earlier ones."""
    grid = [[".." for _ in range(world.width)] for _ in range(world.height)]

    def put(p: Pos, glyph: str):
        grid[p[1]][p[0]] = glyph

    for p in world._blocked:
        put(p, "##")
    for cells in world._segments.values():
        for p in cells:
            put(p, "==")
    for sw in world.switches:
        put(sw.location, f"S{sw.active_index}")
    put(world.scenario.landmark, "GG")
    for p in world.pistons:
        put(p.pos, f"P{p.state}")
    for lv in world.levers:
        put(lv.pos, f"L{lv.state}")
    for g in world.characters:
        q = str(g.quantity) if g.quantity < 10 else "+"
        put(g.pos, ("x" if g.harmed else KIND_GLYPH[g.kind]) + q)
    for tr in world.trolleys:
        put(world.trolley_pos(tr), "TT" if tr.active else "tt")
    put(world.agent.pos, "XA" if world.agent.harmed else "@A")
    return "\n".join("".join(row) for row in grid)
