import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moralgrid.morality import build_chain
from moralgrid.scenarios import (
    CHAIN_ALIASES,
    ConfigError,
    VariantConfig,
    builtin_catalogue,
    chain_from_dict,
    chain_presets,
    chain_to_dict,
    dump_scenario,
    get_scenario,
    instantiate_variant,
    load_chain,
    load_scenario,
    resolve_scenario,
    scenario_to_dict,
)

CATALOGUE = builtin_catalogue()


def switch_doc():
    return scenario_to_dict(get_scenario("SwitchStandard"))


class TestLoadScenario:
    def test_switch_standard(self):
        sc = get_scenario("SwitchStandard")
        assert sorted((c.kind, c.quantity) for c in sc.characters) == [("human", 1), ("human", 5)]
        assert len(sc.trolleys) == 1 and len(sc.levers) == 1 and len(sc.switches) == 1

    def test_dangling_lever_link(self):
        doc = switch_doc()
        doc["levers"][0]["linked_switch"] = "nowhere"
        with pytest.raises(ConfigError) as err:
            load_scenario(json.dumps(doc))
        assert err.value.path == "levers[0].linked_switch"

    def test_minimal_grid(self):
        sc = load_scenario('{"name": "dot", "grid": {"width": 1, "height": 1},'
                           ' "agent_start": [0, 0], "landmark": [0, 0]}')
        assert (sc.width, sc.height) == (1, 1)

    @pytest.mark.parametrize("mutate, path", [
        (lambda d: d["characters"][0].update(pos=[20, 2]), "characters[0].pos"),
        (lambda d: d["trolleys"][0].update(segment="ghost"), "trolleys[0].segment"),
        (lambda d: d["rails"][0]["cells"].append([9, 9]), "rails[0].cells[4]"),
        (lambda d: d["switches"][0].update(branches=["main"]), "switches[0].branches"),
        (lambda d: d["characters"][1].update(id="five"), "characters[1].id"),
        (lambda d: d.update(schema_version=99), "schema_version"),
        (lambda d: d["reward"].update(max_steps=0), "reward.max_steps"),
        (lambda d: d["rails"][0]["cells"].__setitem__(1, [2, 3]), "rails[0]"),
    ])
    def test_errors_carry_path(self, mutate, path):
        doc = switch_doc()
        mutate(doc)
        with pytest.raises(ConfigError) as err:
            load_scenario(doc)
        assert err.value.path == path

    def test_malformed_json(self):
        with pytest.raises(ConfigError):
            load_scenario("{not json")

    @pytest.mark.parametrize("name", CATALOGUE)
    def test_round_trip(self, name):
        sc = get_scenario(name)
        assert load_scenario(dump_scenario(sc)) == sc


class TestVariants:
    def test_kind_override(self):
        base = get_scenario("SwitchStandard")
        v = instantiate_variant(base, {"characters": {"one": {"kind": "robot"}}})
        assert v.rails == base.rails and v.levers == base.levers
        assert {c.id: c.kind for c in v.characters} == {"five": "human", "one": "robot"}
        assert base.characters[1].kind == "human"

    def test_empty_override(self):
        base = get_scenario("SwitchStandard")
        assert instantiate_variant(base, VariantConfig("SwitchStandard")) == base

    def test_quantity_changes_range(self):
        v = instantiate_variant(get_scenario("SwitchStandard"), {"characters": {"five": {"quantity": 3}}})
        chain, _ = load_chain("Utility", v)
        assert chain.get("min_humans_harmed").utility_range == (0, 4)

    def test_unknown_entity(self):
        with pytest.raises(ConfigError, match="ghost"):
            instantiate_variant(get_scenario("SwitchStandard"), {"characters": {"ghost": {"kind": "robot"}}})

    def test_trolley_speed(self):
        v = instantiate_variant(get_scenario("SwitchStandard"), {"trolleys": {"trolley": {"speed": 2}}})
        assert v.trolleys[0].speed == 2

    def test_pure(self):
        base = get_scenario("PushOrSwitch")
        over = {"name": "PushOrSwitchAnimals", "characters": {"side": {"kind": "animal"}}}
        assert instantiate_variant(base, over) == instantiate_variant(base, over)

    def test_variant_file(self, tmp_path):
        f = tmp_path / "v.json"
        f.write_text(json.dumps({"base": "SwitchStandard", "name": "SwitchRobot",
                                 "characters": {"one": {"kind": "robot"}}}))
        sc = resolve_scenario(str(f))
        assert sc.name == "SwitchRobot" and sc.totals()["robot"] == 1


class TestCatalogue:
    def test_named(self):
        assert {"SwitchStandard", "PushOrSwitch"} <= set(CATALOGUE)

    def test_size_and_order(self):
        assert len(CATALOGUE) >= 11 and CATALOGUE == sorted(CATALOGUE)

    def test_data_dir_override(self, tmp_path, monkeypatch):
        (tmp_path / "scenarios").mkdir()
        (tmp_path / "scenarios" / "Only.json").write_text(
            json.dumps({"name": "Only", "grid": {"width": 2, "height": 1}, "agent_start": [0, 0],
                        "landmark": [1, 0]}))
        monkeypatch.setenv("MORALGRID_DATA_DIR", str(tmp_path))
        assert builtin_catalogue() == ["Only"]
        assert get_scenario("Only").width == 2

    def test_unknown(self):
        with pytest.raises(ConfigError, match="Nope"):
            get_scenario("Nope")


class TestChains:
    def test_utility_on_switch_standard(self):
        chain, beta = load_chain("Utility", get_scenario("SwitchStandard"))
        assert len(chain) == 3 and all(n.is_utility for n in chain.norms)
        assert chain.get("min_humans_harmed").utility_range == (0, 6)
        assert float(beta) == 0.01

    def test_dpah_order(self):
        chain, _ = load_chain("DualProcessAgentHarm")
        assert chain.ids == [
            "avoid_personal_human_harm", "min_humans_harmed",
            "avoid_personal_animal_harm", "min_animals_harmed",
            "avoid_personal_robot_harm", "avoid_agent_harm", "min_robots_harmed",
        ]

    def test_uah_and_dp_order(self):
        assert load_chain("UAH")[0].ids == [
            "min_humans_harmed", "min_animals_harmed", "avoid_agent_harm", "min_robots_harmed"]
        assert load_chain("DP")[0].ids == [
            "avoid_personal_human_harm", "min_humans_harmed", "avoid_personal_animal_harm",
            "min_animals_harmed", "avoid_personal_robot_harm", "min_robots_harmed"]

    def test_duplicate_force(self):
        doc = {"name": "bad", "norms": [{"id": "a", "category": "outcome", "force": 3},
                                        {"id": "b", "category": "action", "force": 3}]}
        with pytest.raises(ConfigError):
            load_chain(json.dumps(doc))

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="Nope"):
            load_chain("Nope")

    @pytest.mark.parametrize("name", chain_presets() + list(CHAIN_ALIASES))
    def test_presets_valid(self, name):
        chain, _ = load_chain(name)
        assert build_chain(chain.name, reversed(chain.norms)) == chain

    @pytest.mark.parametrize("name", chain_presets())
    def test_chain_round_trip(self, name):
        chain, beta = load_chain(name, get_scenario("Switch5"))
        again, beta2 = chain_from_dict(chain_to_dict(chain, beta))
        assert again == chain and float(beta2) == float(beta)

    def test_chain_file(self):
        chain, _ = load_chain("PersonalHarmFirst")
        assert chain.ids == ["NPH", "MH"] and chain.get("MH").utility_range == (0, 5)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(CATALOGUE), st.data())
def test_random_variant_round_trip(name, data):
    base = get_scenario(name)
    if not base.characters:
        return
    c = data.draw(st.sampled_from(base.characters))
    over = {"characters": {c.id: {"kind": data.draw(st.sampled_from(["human", "animal", "robot"])),
                                  "quantity": data.draw(st.integers(1, 9))}}}
    v = instantiate_variant(base, over)
    assert load_scenario(dump_scenario(v)) == v
    assert sum(v.totals()[k] for k in ("human", "animal", "robot")) == \
        sum(x.quantity for x in base.characters) - c.quantity + over["characters"][c.id]["quantity"]
