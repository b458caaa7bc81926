import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import build, line_scenario
from moralgrid.scenarios import ConfigError, builtin_catalogue, get_scenario, with_reward
from moralgrid.world import (
    ActionKind,
    EpisodeFinishedError,
    advance_trolleys,
    flatten_observation,
    observation_length,
    observe,
    render_ascii,
    reset,
    resolve_interact,
    step,
)

A = ActionKind
CATALOGUE = builtin_catalogue()


def open_field(width=5, height=3, **extra):
    doc = {"name": "Field", "grid": {"width": width, "height": height},
           "agent_start": [0, 0], "landmark": [width - 1, height - 1]}
    doc.update(extra)
    return build(doc)


class TestReset:
    def test_switch_standard_layout(self):
        sc = get_scenario("SwitchStandard")
        world, _ = reset(sc, 0)
        assert world.agent.pos == sc.agent_start
        assert len(world.levers) == 1 and len(world.switches) == 1
        assert sorted(g.quantity for g in world.characters) == [1, 5]
        assert {g.kind for g in world.characters} == {"human"}
        assert world.timestep == 0

    @pytest.mark.parametrize("name", CATALOGUE)
    def test_same_seed_same_digest(self, name):
        sc = get_scenario(name)
        assert reset(sc, 7)[0].digest() == reset(sc, 7)[0].digest()

    def test_agent_on_blocked_cell(self):
        with pytest.raises(ConfigError, match="agent"):
            open_field(grid={"width": 5, "height": 3, "blocked": [[0, 0]]})


class TestStep:
    def test_plain_move_costs_step_penalty(self):
        world, _ = reset(open_field())
        out = step(world, A.RIGHT)
        assert out.reward == -1 and world.agent.pos == (1, 0)
        assert not out.terminated and not out.truncated

    def test_landmark_reward(self):
        world, _ = reset(open_field(width=2, height=1))
        out = step(world, A.RIGHT)
        assert out.reward == 99 and out.terminated and out.landmark_reached

    def test_agent_struck_by_trolley(self):
        # agent stands on the track two cells ahead of the trolley
        sc = build(line_scenario(agent=(2, 1)))
        world, _ = reset(sc)
        assert step(world, A.STAY).reward == -1
        out = step(world, A.STAY)
        assert out.reward == -1 - 100
        assert out.terminated and world.agent.harmed
        assert [h.kind for h in out.harms] == ["agent"]

    def test_truncation(self):
        world, _ = reset(with_reward(open_field(), max_steps=3))
        flags = [step(world, A.STAY) for _ in range(3)]
        assert [o.truncated for o in flags] == [False, False, True]
        assert not any(o.terminated for o in flags)

    def test_step_after_end_rejected(self):
        world, _ = reset(open_field(width=2, height=1))
        step(world, A.RIGHT)
        with pytest.raises(EpisodeFinishedError):
            step(world, A.STAY)

    def test_cannot_walk_into_group_or_wall(self):
        sc = open_field(characters=[{"id": "g", "pos": [1, 0], "quantity": 2}],
                        grid={"width": 5, "height": 3, "blocked": [[0, 1]]})
        world, _ = reset(sc)
        step(world, A.RIGHT)
        step(world, A.DOWN)
        step(world, A.UP)
        assert world.agent.pos == (0, 0)

    def test_interact_landmark_mode(self):
        sc = open_field(width=2, height=1, landmark_mode="interact")
        world, _ = reset(sc)
        assert not step(world, A.STAY).terminated
        out = step(world, A.INTERACT)
        assert out.terminated and out.interact.kind == "landmark" and out.reward == 99


class TestInteract:
    def test_lever_toggle_sets_switch(self):
        world, _ = reset(get_scenario("SwitchStandard"))
        effect = resolve_interact(world)
        assert effect.kind == "lever"
        assert world.levers[0].state == 1 and world.switches[0].active_index == 1
        resolve_interact(world)
        assert world.levers[0].state == 0 and world.switches[0].active_index == 0

    def test_three_state_lever_cycles(self):
        world, _ = reset(get_scenario("Switch7"))
        states = []
        for _ in range(4):
            resolve_interact(world)
            states.append((world.levers[0].state, world.switches[0].active_index))
        assert states == [(1, 1), (2, 2), (0, 0), (1, 1)]

    def test_push_moves_group_away(self):
        sc = open_field(width=6, height=4, agent_start=[2, 2],
                        characters=[{"id": "g", "pos": [3, 2], "quantity": 1}])
        world, _ = reset(sc)
        effect = resolve_interact(world)
        g = world.characters[0]
        assert effect.kind == "push" and g.pos == (4, 2) and g.pushed_by_agent

    def test_push_into_wall_is_noop(self):
        sc = open_field(width=4, height=1, agent_start=[2, 0], landmark=[0, 0],
                        characters=[{"id": "g", "pos": [3, 0], "quantity": 1}])
        world, _ = reset(sc)
        before = world.digest()
        effect = resolve_interact(world)
        assert effect.kind == "push_blocked"
        assert world.digest() == before

    def test_nothing_adjacent(self):
        world, _ = reset(open_field())
        before = world.digest()
        assert resolve_interact(world).kind == "none"
        assert world.digest() == before

    def test_lever_beats_character(self):
        sc = open_field(
            width=3, height=3, agent_start=[1, 1], landmark=[2, 2],
            rails=[{"id": "r", "cells": [[0, 2], [1, 2]]}, {"id": "s", "cells": [[1, 2], [2, 2]]}],
            switches=[{"id": "sw", "location": [1, 2], "branches": ["r", "s"]}],
            levers=[{"id": "lv", "pos": [2, 1], "linked_switch": "sw"}],
            characters=[{"id": "g", "pos": [1, 0], "quantity": 1}],
        )
        world, _ = reset(sc)
        assert resolve_interact(world).kind == "lever"
        assert world.characters[0].pos == (1, 0)

    def test_push_into_trolley_harms_immediately(self):
        doc = {
            "name": "drop", "grid": {"width": 9, "height": 3}, "agent_start": [4, 0], "landmark": [8, 0],
            "rails": [{"id": "track", "cells": [[x, 2] for x in range(9)]}],
            "trolleys": [{"id": "trolley", "segment": "track", "index": 4}],
            "characters": [{"id": "by", "pos": [4, 1], "quantity": 1}],
        }
        world, _ = reset(build(doc))
        harms = []
        effect = resolve_interact(world, harms)
        assert effect.kind == "push"
        assert [(h.count, h.personal) for h in harms] == [(1, True)]
        assert world.characters[0].harmed and not world.trolleys[0].active


class TestTrolleys:
    def test_hits_group_of_five(self):
        world, _ = reset(build(line_scenario(five_at=1)))
        harms = advance_trolleys(world)
        assert [(h.kind, h.count) for h in harms] == [("human", 5)]
        assert not world.trolleys[0].active

    def test_switch_diverts_to_side(self):
        world, _ = reset(get_scenario("PushOrSwitch"))
        step(world, A.INTERACT)
        harms = []
        while not harms:
            harms = step(world, A.STAY).harms
        assert [(h.kind, h.count, h.via_lever) for h in harms] == [("human", 2, True)]

    def test_free_run(self):
        world, _ = reset(build(line_scenario(five_at=8)))
        assert advance_trolleys(world) == []
        assert world.trolley_pos(world.trolleys[0]) == (1, 1)

    def test_speed_checks_every_cell(self):
        doc = line_scenario(five_at=2)
        doc["trolleys"][0]["speed"] = 3
        world, _ = reset(build(doc))
        harms = advance_trolleys(world)
        assert harms[0].count == 5
        assert world.trolley_pos(world.trolleys[0]) == (2, 1)

    def test_end_of_track_deactivates(self):
        world, _ = reset(build(line_scenario(width=3, five_at=2)))
        world.characters[0].harmed = True
        advance_trolleys(world)
        advance_trolleys(world)
        assert world.trolleys[0].active
        advance_trolleys(world)
        assert not world.trolleys[0].active

    def test_delay(self):
        doc = line_scenario()
        doc["trolleys"][0]["delay"] = 2
        world, _ = reset(build(doc))
        advance_trolleys(world)
        advance_trolleys(world)
        assert world.trolley_pos(world.trolleys[0]) == (0, 1)
        advance_trolleys(world)
        assert world.trolley_pos(world.trolleys[0]) == (1, 1)


class TestObservation:
    def test_lever_one_hot(self):
        world, _ = reset(get_scenario("SwitchStandard"))
        resolve_interact(world)
        assert observe(world)["lever"]["state"] == [0, 1]

    def test_normalised_position(self):
        sc = open_field(width=9, height=5, agent_start=[4, 2], observation={"normalize": True})
        world, obs = reset(sc)
        assert obs["agent"]["position"] == pytest.approx([0.5, 0.5])

    def test_harm_component(self):
        world, _ = reset(build(line_scenario(five_at=1)))
        advance_trolleys(world)
        assert observe(world)["five"]["harmed"] == 1

    def test_unknown_entity(self):
        world, _ = reset(open_field())
        with pytest.raises(ConfigError):
            observe(world, ["ghost"])

    def test_flatten_empty(self):
        assert flatten_observation({}) == []

    @pytest.mark.parametrize("name", CATALOGUE)
    def test_flatten_length_matches_schema(self, name):
        sc = get_scenario(name)
        world, obs = reset(sc)
        # widths: agent 2+1+1, group 2+1+1+3, lever num_states, trolley 2+1+1, switch 1
        widths = {"agent": 4}
        widths.update({c.id: 7 for c in sc.characters})
        widths.update({lv.id: lv.num_states for lv in sc.levers})
        widths.update({t.id: 4 for t in sc.trolleys})
        widths.update({s.id: 1 for s in sc.switches})
        expected = sum(widths[e] for e in sc.observed_entities())
        vec = flatten_observation(obs)
        assert len(vec) == expected == observation_length(sc)
        assert flatten_observation(observe(world)) == vec

    def test_entity_order_follows_config(self):
        sc = get_scenario("SwitchStandard")
        assert list(reset(sc)[1]) == list(sc.observed_entities())


class TestRender:
    def test_bare_grid(self):
        sc = build({"name": "tiny", "grid": {"width": 2, "height": 2}, "agent_start": [0, 0], "landmark": [1, 1]})
        world, _ = reset(sc)
        assert render_ascii(world).splitlines() == ["@A..", "..GG"]

    def test_switch_standard_glyphs(self):
        text = render_ascii(reset(get_scenario("SwitchStandard"))[0])
        assert text.count("TT") == 1 and text.count("L0") == 1 and text.count("GG") == 1
        assert text.count("H5") == 1 and text.count("H1") == 1
        assert text == render_ascii(reset(get_scenario("SwitchStandard"))[0])


@st.composite
def episodes(draw):
    name = draw(st.sampled_from(CATALOGUE))
    actions = draw(st.lists(st.sampled_from(list(A)), min_size=1, max_size=45))
    return name, actions


def run(name, actions):
    sc = get_scenario(name)
    world, _ = reset(sc, 3)
    outs = []
    for a in actions:
        if world.episode_over:
            break
        outs.append((step(world, a), world.copy()))
    return sc, outs


@settings(max_examples=150, deadline=None)
@given(episodes())
def test_engine_invariants(ep):
    name, actions = ep
    sc, outs = run(name, actions)
    total = sum(c.quantity for c in sc.characters)
    harmed_before: set = set()
    blocked = set(sc.blocked)
    for out, world in outs:
        harmed = {g.id for g in world.characters if g.harmed} | ({"agent"} if world.agent.harmed else set())
        assert harmed_before <= harmed
        harmed_before = harmed
        assert sum(g.quantity for g in world.characters) == total
        for p in [world.agent.pos] + [g.pos for g in world.characters]:
            assert 0 <= p[0] < sc.width and 0 <= p[1] < sc.height and p not in blocked
        expected = sc.reward.step_penalty
        expected += sc.reward.landmark_reward if out.landmark_reached else 0
        expected += sc.reward.agent_harm_penalty if any(h.kind == "agent" for h in out.harms) else 0
        assert out.reward == expected
        assert not (out.terminated and out.truncated)
        if world.agent.harmed:
            assert world.agent.terminated


@settings(max_examples=50, deadline=None)
@given(episodes())
def test_replay_is_identical(ep):
    name, actions = ep
    _, a = run(name, actions)
    _, b = run(name, actions)
    assert [(o.reward, o.harms, o.interact, w.digest()) for o, w in a] == \
           [(o.reward, o.harms, o.interact, w.digest()) for o, w in b]
