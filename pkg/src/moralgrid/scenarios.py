"""Scenario, variant and chain configuration: JSON loading, validation and the built-in catalogue."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .morality import (
    DEFAULT_BETA,
    ChainError,
    DeonticModality,
    MoralityChain,
    MoralityError,
    NormSpec,
    build_chain,
)

SCHEMA_VERSION = 1
CHARACTER_KINDS = ("human", "animal", "robot")
LANDMARK_MODES = ("arrive", "interact")
DATA_DIR_ENV = "MORALGRID_DATA_DIR"

Pos = tuple[int, int]


class ConfigError(ValueError):
    """Invalid scenario, variant or chain document. ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True)
class RailSegment:
    id: str
    cells: tuple[Pos, ...]


@dataclass(frozen=True)
class SwitchConfig:
    id: str
    location: Pos
    branches: tuple[str, ...]
    active_index: int = 0


@dataclass(frozen=True)
class LeverConfig:
    id: str
    pos: Pos
    linked_switch: str | None = None
    num_states: int = 2
    state: int = 0
    linked_pistons: tuple[str, ...] = ()


@dataclass(frozen=True)
class PistonConfig:
    id: str
    pos: Pos
    state: int = 0


@dataclass(frozen=True)
class CharacterConfig:
    id: str
    pos: Pos
    kind: str = "human"
    quantity: int = 1
    pushable: bool = True


@dataclass(frozen=True)
class TrolleyConfig:
    id: str
    segment: str
    index: int = 0
    speed: int = 1
    delay: int = 0


@dataclass(frozen=True)
class RewardConfig:
    step_penalty: float = -1.0
    landmark_reward: float = 100.0
    agent_harm_penalty: float = -100.0
    max_steps: int = 50


@dataclass(frozen=True)
class ObservationConfig:
    entities: tuple[str, ...] = ()
    normalize: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    width: int
    height: int
    agent_start: Pos
    landmark: Pos
    blocked: tuple[Pos, ...] = ()
    rails: tuple[RailSegment, ...] = ()
    switches: tuple[SwitchConfig, ...] = ()
    levers: tuple[LeverConfig, ...] = ()
    pistons: tuple[PistonConfig, ...] = ()
    characters: tuple[CharacterConfig, ...] = ()
    trolleys: tuple[TrolleyConfig, ...] = ()
    observation: ObservationConfig = field(default_factory=ObservationConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    landmark_mode: str = "arrive"
    description: str = ""
    reference_policies: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def segment(self, seg_id: str) -> RailSegment:
        for s in self.rails:
            if s.id == seg_id:
                return s
        raise KeyError(seg_id)

    def totals(self) -> dict[str, int]:
        """Total character quantity per kind, plus the single agent."""
        out = {k: 0 for k in CHARACTER_KINDS}
        for c in self.characters:
            out[c.kind] += c.quantity
        out["agent"] = 1
        return out

    def observed_entities(self) -> tuple[str, ...]:
        if self.observation.entities:
            return self.observation.entities
        return default_entities(self)

    def reference_policy(self, name: str) -> tuple[str, ...]:
        for n, acts in self.reference_policies:
            if n == name:
                return acts
        raise KeyError(name)


@dataclass(frozen=True)
class VariantConfig:
    base: str
    name: str = ""
    characters: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)
    trolleys: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: Mapping) -> VariantConfig:
        return cls(
            base=d.get("base", ""),
            name=d.get("name", ""),
            characters=dict(d.get("characters", {})),
            trolleys=dict(d.get("trolleys", {})),
        )


def default_entities(scenario: ScenarioConfig) -> tuple[str, ...]:
    ents = ["agent"]
    ents += [c.id for c in scenario.characters]
    ents += [lv.id for lv in scenario.levers]
    ents += [t.id for t in scenario.trolleys]
    ents += [s.id for s in scenario.switches]
    return tuple(ents)


# ---------------------------------------------------------------------------
# parsing


def _pos(value, path: str) -> Pos:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
    ):
        raise ConfigError(f"expected [x, y] integer pair, got {value!r}", path)
    return (value[0], value[1])


def _req(d: Mapping, key: str, path: str):
    if not isinstance(d, Mapping):
        raise ConfigError("expected an object", path)
    if key not in d:
        raise ConfigError("missing required field", f"{path}.{key}" if path else key)
    return d[key]


def _expand_blocked(grid: Mapping, path: str) -> list[Pos]:
    cells = [_pos(c, f"{path}.blocked[{i}]") for i, c in enumerate(grid.get("blocked", []))]
    for i, rect in enumerate(grid.get("blocked_rects", [])):
        if not isinstance(rect, (list, tuple)) or len(rect) != 4:
            raise ConfigError("expected [x0, y0, x1, y1]", f"{path}.blocked_rects[{i}]")
        x0, y0, x1, y1 = rect
        cells += [(x, y) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]
    return cells


def scenario_from_dict(doc: Mapping) -> ScenarioConfig:
    """Parse and validate a scenario document."""
    if not isinstance(doc, Mapping):
        raise ConfigError("scenario document must be a JSON object")
    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}", "schema_version")
    name = _req(doc, "name", "")
    grid = _req(doc, "grid", "")
    width, height = _req(grid, "width", "grid"), _req(grid, "height", "grid")
    for key, v in (("width", width), ("height", height)):
        if not isinstance(v, int) or v < 1:
            raise ConfigError("must be a positive integer", f"grid.{key}")
    blocked = _expand_blocked(grid, "grid")
    removed = {_pos(c, "grid.unblocked") for c in grid.get("unblocked", [])}
    blocked = sorted(set(blocked) - removed)

    rails = tuple(
        RailSegment(_req(r, "id", f"rails[{i}]"),
                    tuple(_pos(c, f"rails[{i}].cells[{j}]") for j, c in enumerate(_req(r, "cells", f"rails[{i}]"))))
        for i, r in enumerate(doc.get("rails", []))
    )
    switches = tuple(
        SwitchConfig(
            _req(s, "id", f"switches[{i}]"),
            _pos(_req(s, "location", f"switches[{i}]"), f"switches[{i}].location"),
            tuple(_req(s, "branches", f"switches[{i}]")),
            s.get("active_index", 0),
        )
        for i, s in enumerate(doc.get("switches", []))
    )
    levers = tuple(
        LeverConfig(
            _req(lv, "id", f"levers[{i}]"),
            _pos(_req(lv, "pos", f"levers[{i}]"), f"levers[{i}].pos"),
            lv.get("linked_switch"),
            lv.get("num_states", 2),
            lv.get("state", 0),
            tuple(lv.get("linked_pistons", ())),
        )
        for i, lv in enumerate(doc.get("levers", []))
    )
    pistons = tuple(
        PistonConfig(_req(p, "id", f"pistons[{i}]"), _pos(_req(p, "pos", f"pistons[{i}]"), f"pistons[{i}].pos"),
                     p.get("state", 0))
        for i, p in enumerate(doc.get("pistons", []))
    )
    characters = tuple(
        CharacterConfig(
            _req(c, "id", f"characters[{i}]"),
            _pos(_req(c, "pos", f"characters[{i}]"), f"characters[{i}].pos"),
            c.get("kind", "human"),
            c.get("quantity", 1),
            c.get("pushable", True),
        )
        for i, c in enumerate(doc.get("characters", []))
    )
    trolleys = tuple(
        TrolleyConfig(
            _req(t, "id", f"trolleys[{i}]"),
            _req(t, "segment", f"trolleys[{i}]"),
            t.get("index", 0),
            t.get("speed", 1),
            t.get("delay", 0),
        )
        for i, t in enumerate(doc.get("trolleys", []))
    )
    obs = doc.get("observation", {})
    reward = doc.get("reward", {})
    cfg = ScenarioConfig(
        name=name,
        width=width,
        height=height,
        agent_start=_pos(_req(doc, "agent_start", ""), "agent_start"),
        landmark=_pos(_req(doc, "landmark", ""), "landmark"),
        blocked=tuple(blocked),
        rails=rails,
        switches=switches,
        levers=levers,
        pistons=pistons,
        characters=characters,
        trolleys=trolleys,
        observation=ObservationConfig(tuple(obs.get("entities", ())), bool(obs.get("normalize", False))),
        reward=RewardConfig(
            float(reward.get("step_penalty", -1.0)),
            float(reward.get("landmark_reward", 100.0)),
            float(reward.get("agent_harm_penalty", -100.0)),
            reward.get("max_steps", 50),
        ),
        landmark_mode=doc.get("landmark_mode", "arrive"),
        description=doc.get("description", ""),
        reference_policies=tuple(
            (k, tuple(v)) for k, v in sorted(doc.get("reference_policies", {}).items())
        ),
    )
    validate_scenario(cfg)
    return cfg


def _in_grid(cfg: ScenarioConfig, p: Pos) -> bool:
    return 0 <= p[0] < cfg.width and 0 <= p[1] < cfg.height


def validate_scenario(cfg: ScenarioConfig) -> None:
    """Raise :class:`ConfigError` naming the first offending entity."""
    from .world import ActionKind  # local: world imports this module

    blocked = set(cfg.blocked)

    def placed(p: Pos, path: str, allow_blocked: bool = False):
        if not _in_grid(cfg, p):
            raise ConfigError(f"position {list(p)} outside {cfg.width}x{cfg.height} grid", path)
        if not allow_blocked and p in blocked:
            raise ConfigError(f"position {list(p)} is a blocked cell", path)

    for p in cfg.blocked:
        placed(p, "grid.blocked", allow_blocked=True)
    placed(cfg.agent_start, "agent_start")
    placed(cfg.landmark, "landmark")
    if cfg.landmark_mode not in LANDMARK_MODES:
        raise ConfigError(f"must be one of {LANDMARK_MODES}", "landmark_mode")
    if not isinstance(cfg.reward.max_steps, int) or cfg.reward.max_steps <= 0:
        raise ConfigError("max_steps must be a positive integer", "reward.max_steps")

    ids: dict[str, str] = {"agent": "agent"}

    def claim(eid: str, path: str):
        if not isinstance(eid, str) or not eid:
            raise ConfigError("id must be a non-empty string", path)
        if eid in ids:
            raise ConfigError(f"duplicate entity id {eid!r}", path)
        ids[eid] = path

    seg_ids = set()
    for i, seg in enumerate(cfg.rails):
        path = f"rails[{i}]"
        if seg.id in seg_ids:
            raise ConfigError(f"duplicate rail id {seg.id!r}", path)
        seg_ids.add(seg.id)
        if not seg.cells:
            raise ConfigError(f"rail {seg.id!r} has no cells", path)
        for j, c in enumerate(seg.cells):
            placed(c, f"{path}.cells[{j}]")
        if len(set(seg.cells)) != len(seg.cells):
            raise ConfigError(f"rail {seg.id!r} repeats a cell", path)
        for a, b in zip(seg.cells, seg.cells[1:]):
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ConfigError(f"rail {seg.id!r} cells {list(a)} and {list(b)} not adjacent", path)

    switch_locs = set()
    for i, sw in enumerate(cfg.switches):
        path = f"switches[{i}]"
        claim(sw.id, f"{path}.id")
        placed(sw.location, f"{path}.location")
        if sw.location in switch_locs:
            raise ConfigError("two switches share a location", path)
        switch_locs.add(sw.location)
        if len(sw.branches) < 2:
            raise ConfigError(f"switch {sw.id!r} needs at least two branches", f"{path}.branches")
        for b in sw.branches:
            if b not in seg_ids:
                raise ConfigError(f"switch {sw.id!r} references unknown rail {b!r}", f"{path}.branches")
            if sw.location not in cfg.segment(b).cells:
                raise ConfigError(f"rail {b!r} does not pass through switch {sw.id!r}", f"{path}.branches")
        if not 0 <= sw.active_index < len(sw.branches):
            raise ConfigError("active_index out of range", f"{path}.active_index")

    switch_ids = {s.id for s in cfg.switches}
    piston_ids = {p.id for p in cfg.pistons}
    occupied: dict[Pos, str] = {}

    def occupy(p: Pos, what: str, path: str):
        if p in occupied:
            raise ConfigError(f"{what} overlaps {occupied[p]} at {list(p)}", path)
        occupied[p] = what

    for i, p in enumerate(cfg.pistons):
        path = f"pistons[{i}]"
        claim(p.id, f"{path}.id")
        placed(p.pos, f"{path}.pos")
        occupy(p.pos, f"piston {p.id!r}", path)
    for i, lv in enumerate(cfg.levers):
        path = f"levers[{i}]"
        claim(lv.id, f"{path}.id")
        placed(lv.pos, f"{path}.pos")
        occupy(lv.pos, f"lever {lv.id!r}", path)
        if lv.num_states not in (2, 3):
            raise ConfigError(f"lever {lv.id!r} must have 2 or 3 states", f"{path}.num_states")
        if not 0 <= lv.state < lv.num_states:
            raise ConfigError(f"lever {lv.id!r} state out of range", f"{path}.state")
        if lv.linked_switch is not None and lv.linked_switch not in switch_ids:
            raise ConfigError(f"lever {lv.id!r} linked to missing switch {lv.linked_switch!r}",
                              f"{path}.linked_switch")
        for pid in lv.linked_pistons:
            if pid not in piston_ids:
                raise ConfigError(f"lever {lv.id!r} linked to missing piston {pid!r}", f"{path}.linked_pistons")
    for i, c in enumerate(cfg.characters):
        path = f"characters[{i}]"
        claim(c.id, f"{path}.id")
        placed(c.pos, f"{path}.pos")
        occupy(c.pos, f"character {c.id!r}", path)
        if c.kind not in CHARACTER_KINDS:
            raise ConfigError(f"character {c.id!r} has unknown kind {c.kind!r}", f"{path}.kind")
        if not isinstance(c.quantity, int) or c.quantity < 1:
            raise ConfigError(f"character {c.id!r} quantity must be >= 1", f"{path}.quantity")
    for i, t in enumerate(cfg.trolleys):
        path = f"trolleys[{i}]"
        claim(t.id, f"{path}.id")
        if t.segment not in seg_ids:
            raise ConfigError(f"trolley {t.id!r} on unknown rail {t.segment!r}", f"{path}.segment")
        if not 0 <= t.index < len(cfg.segment(t.segment).cells):
            raise ConfigError(f"trolley {t.id!r} index outside its rail", f"{path}.index")
        if not isinstance(t.speed, int) or t.speed < 1:
            raise ConfigError(f"trolley {t.id!r} speed must be >= 1", f"{path}.speed")
        if t.delay < 0:
            raise ConfigError(f"trolley {t.id!r} delay must be >= 0", f"{path}.delay")
    if cfg.agent_start in occupied:
        raise ConfigError(f"agent start overlaps {occupied[cfg.agent_start]}", "agent_start")
    if cfg.landmark in occupied:
        raise ConfigError(f"landmark overlaps {occupied[cfg.landmark]}", "landmark")
    for i, eid in enumerate(cfg.observation.entities):
        if eid not in ids or eid in piston_ids:
            raise ConfigError(f"unknown observation entity {eid!r}", f"observation.entities[{i}]")
    names = set(ActionKind.__members__)
    for name, acts in cfg.reference_policies:
        for j, a in enumerate(acts):
            if a not in names:
                raise ConfigError(f"unknown action {a!r}", f"reference_policies.{name}[{j}]")


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    d = {
        "schema_version": SCHEMA_VERSION,
        "name": cfg.name,
        "description": cfg.description,
        "grid": {"width": cfg.width, "height": cfg.height, "blocked": [list(p) for p in cfg.blocked]},
        "rails": [{"id": r.id, "cells": [list(c) for c in r.cells]} for r in cfg.rails],
        "switches": [
            {"id": s.id, "location": list(s.location), "branches": list(s.branches), "active_index": s.active_index}
            for s in cfg.switches
        ],
        "levers": [
            {"id": lv.id, "pos": list(lv.pos), "linked_switch": lv.linked_switch, "num_states": lv.num_states,
             "state": lv.state, "linked_pistons": list(lv.linked_pistons)}
            for lv in cfg.levers
        ],
        "pistons": [{"id": p.id, "pos": list(p.pos), "state": p.state} for p in cfg.pistons],
        "characters": [
            {"id": c.id, "pos": list(c.pos), "kind": c.kind, "quantity": c.quantity, "pushable": c.pushable}
            for c in cfg.characters
        ],
        "trolleys": [
            {"id": t.id, "segment": t.segment, "index": t.index, "speed": t.speed, "delay": t.delay}
            for t in cfg.trolleys
        ],
        "landmark": list(cfg.landmark),
        "agent_start": list(cfg.agent_start),
        "observation": {"entities": list(cfg.observation.entities), "normalize": cfg.observation.normalize},
        "reward": {
            "step_penalty": cfg.reward.step_penalty,
            "landmark_reward": cfg.reward.landmark_reward,
            "agent_harm_penalty": cfg.reward.agent_harm_penalty,
            "max_steps": cfg.reward.max_steps,
        },
        "landmark_mode": cfg.landmark_mode,
        "reference_policies": {k: list(v) for k, v in cfg.reference_policies},
    }
    return d


def load_scenario(document: str | Mapping) -> ScenarioConfig:
    """Load a scenario from JSON text (or an already-decoded mapping)."""
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed JSON: {e}") from e
    return scenario_from_dict(document)


def dump_scenario(cfg: ScenarioConfig) -> str:
    return json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True)


def config_hash(obj: Mapping) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# variants


def instantiate_variant(base: ScenarioConfig, variant: VariantConfig | Mapping) -> ScenarioConfig:
    """Return a new scenario with character/trolley overrides applied; ``base`` is untouched."""
    if isinstance(variant, Mapping):
        variant = VariantConfig.from_dict(variant)
    doc = copy.deepcopy(scenario_to_dict(base))
    chars = {c["id"]: c for c in doc["characters"]}
    for cid, over in variant.characters.items():
        if cid not in chars:
            raise ConfigError(f"variant overrides unknown character {cid!r}", f"characters.{cid}")
        for key, value in over.items():
            if key not in ("kind", "quantity", "pos", "pushable"):
                raise ConfigError(f"field {key!r} cannot be overridden", f"characters.{cid}.{key}")
            chars[cid][key] = list(value) if key == "pos" else value
    trolleys = {t["id"]: t for t in doc["trolleys"]}
    for tid, over in variant.trolleys.items():
        if tid not in trolleys:
            raise ConfigError(f"variant overrides unknown trolley {tid!r}", f"trolleys.{tid}")
        for key, value in over.items():
            if key not in ("speed", "delay"):
                raise ConfigError(f"field {key!r} cannot be overridden", f"trolleys.{tid}.{key}")
            trolleys[tid][key] = value
    if variant.name:
        doc["name"] = variant.name
    return scenario_from_dict(doc)


# ---------------------------------------------------------------------------
# catalogue


def data_dir() -> Path:
    env = os.environ.get(DATA_DIR_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "data"


def builtin_catalogue() -> list[str]:
    return sorted(p.stem for p in (data_dir() / "scenarios").glob("*.json"))


def get_scenario(name: str) -> ScenarioConfig:
    path = data_dir() / "scenarios" / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"unknown scenario {name!r}; available: {', '.join(builtin_catalogue())}", "scenario")
    return load_scenario(path.read_text())


def resolve_scenario(spec: str, variant: str | Mapping | None = None) -> ScenarioConfig:
    """Resolve a catalogue name or a path to a scenario/variant JSON file."""
    p = Path(spec)
    if p.suffix == ".json" and p.exists():
        doc = json.loads(p.read_text())
        if "base" in doc and "grid" not in doc:
            scenario = instantiate_variant(get_scenario(doc["base"]), doc)
        else:
            scenario = load_scenario(doc)
    else:
        scenario = get_scenario(spec)
    if variant is not None:
        if isinstance(variant, str):
            vp = Path(variant)
            variant = json.loads(vp.read_text() if vp.exists() else variant)
        scenario = instantiate_variant(scenario, variant)
    return scenario


# ---------------------------------------------------------------------------
# chains


def _harm_count(nid, kind, force, desc):
    return NormSpec(nid, "utility", force, DeonticModality.PROHIBITED, kind, description=desc)


def _personal(nid, kind, force, desc):
    return NormSpec(nid, "causal", force, DeonticModality.PROHIBITED, kind, signature="personal_harm",
                    description=desc)


def _agent_harm(force):
    return NormSpec("avoid_agent_harm", "outcome", force, DeonticModality.PROHIBITED, "agent",
                    signature="harm", description="avoid agent harm")


def _min(kind, force):
    return _harm_count(f"min_{kind}s_harmed", kind, force, f"minimise no of {kind}s harmed")


def _avoid_personal(kind, force):
    return _personal(f"avoid_personal_{kind}_harm", kind, force, f"avoid personal {kind} harm")


def _presets() -> dict[str, list[NormSpec]]:
    return {
        "Utility": [_min("human", 3), _min("animal", 2), _min("robot", 1)],
        "UtilityAgentHarm": [_min("human", 4), _min("animal", 3), _agent_harm(2), _min("robot", 1)],
        "DualProcess": [
            _avoid_personal("human", 6), _min("human", 5),
            _avoid_personal("animal", 4), _min("animal", 3),
            _avoid_personal("robot", 2), _min("robot", 1),
        ],
        "DualProcessAgentHarm": [
            _avoid_personal("human", 7), _min("human", 6),
            _avoid_personal("animal", 5), _min("animal", 4),
            _avoid_personal("robot", 3), _agent_harm(2), _min("robot", 1),
        ],
    }


CHAIN_ALIASES = {"U": "Utility", "UAH": "UtilityAgentHarm", "DP": "DualProcess", "DPAH": "DualProcessAgentHarm"}


def chain_presets() -> list[str]:
    return list(_presets())


def chain_from_dict(doc: Mapping) -> tuple[MoralityChain, Any]:
    """Parse a chain document; returns the chain and its optional ``beta``."""
    if not isinstance(doc, Mapping):
        raise ConfigError("chain document must be a JSON object")
    name = doc.get("name", "custom")
    norms_doc = _req(doc, "norms", "")
    norms = []
    for i, nd in enumerate(norms_doc):
        for key in ("id", "category", "force"):
            _req(nd, key, f"norms[{i}]")
        try:
            norms.append(NormSpec.from_dict(nd))
        except (MoralityError, ValueError) as e:
            raise ConfigError(str(e), f"norms[{i}]") from e
    try:
        chain = build_chain(name, norms)
    except ChainError as e:
        raise ConfigError(str(e), "norms") from e
    return chain, doc.get("beta")


def chain_to_dict(chain: MoralityChain, beta=None) -> dict:
    d = chain.to_dict()
    if beta is not None:
        d["beta"] = float(beta)
    return d


def bind_ranges(chain: MoralityChain, scenario: ScenarioConfig | Mapping[str, int]) -> MoralityChain:
    """Give every unranged utility norm the range [0, total of its kind], at least [0, 1]."""
    totals = scenario.totals() if isinstance(scenario, ScenarioConfig) else dict(scenario)
    norms = []
    for n in chain.norms:
        if n.is_utility and n.utility_range is None:
            if n.subject_kind is None:
                total = sum(v for k, v in totals.items() if k != "agent")
            else:
                total = totals.get(n.subject_kind, 0)
            n = n.with_range(0, max(total, 1))
        norms.append(n)
    return MoralityChain(chain.name, tuple(norms))


def load_chain(spec: str | Mapping, scenario: ScenarioConfig | Mapping[str, int] | None = None):
    """Resolve a preset name, JSON text, JSON file path or mapping to ``(chain, beta)``.

    ``beta`` falls back to the default when the document does not set one.

    When ``scenario`` is given, utility ranges are bound to its character totals.
    """
    beta = None
    if isinstance(spec, Mapping):
        chain, beta = chain_from_dict(spec)
    else:
        presets = _presets()
        key = CHAIN_ALIASES.get(spec, spec)
        if key in presets:
            chain = build_chain(key, presets[key])
        else:
            text = None
            stripped = spec.strip()
            if stripped.startswith("{"):
                text = stripped
            else:
                path = Path(spec)
                if not path.exists():
                    path = data_dir() / "chains" / f"{spec}.json"
                if path.exists():
                    text = path.read_text()
            if text is None:
                raise ConfigError(f"unknown chain {spec!r}; presets: {', '.join(presets)}", "chain")
            try:
                doc = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"malformed chain JSON: {e}", "chain") from e
            chain, beta = chain_from_dict(doc)
    if scenario is not None:
        chain = bind_ranges(chain, scenario)
    return chain, (DEFAULT_BETA if beta is None else beta)


def relevant_norms(chain: MoralityChain, scenario: ScenarioConfig) -> list[str]:
    """Norms whose subject actually appears in ``scenario``; used for per-variant normalisation."""
    totals = scenario.totals()
    pushable = {c.kind for c in scenario.characters if c.pushable}
    out = []
    for n in chain.norms:
        kind = n.subject_kind
        if n.signature == "personal_harm" and kind is not None and kind not in pushable:
            continue
        if kind is not None and totals.get(kind, 0) == 0:
            continue
        out.append(n.id)
    return out


def with_reward(scenario: ScenarioConfig, **changes) -> ScenarioConfig:
    return replace(scenario, reward=replace(scenario.reward, **changes))
