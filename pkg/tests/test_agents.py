from collections import Counter

import numpy as np
import pytest

from moralgrid import agents
from moralgrid.agents import (
    RandomPolicy,
    ScriptedPolicy,
    SolverResourceError,
    TabularPolicy,
    TrainConfig,
    exact_solve,
    q_learn,
    random_policy,
    scripted_policy,
)
from moralgrid.env import MoralityEnv, rollout
from moralgrid.evaluation import evaluate
from moralgrid.morality import ChainWeights
from moralgrid.scenarios import get_scenario, load_chain
from moralgrid.world import ActionKind, reset

SWITCH = get_scenario("SwitchStandard")
UTILITY, BETA = load_chain("Utility", SWITCH)
# a higher learning rate suits the deterministic dynamics
FAST = dict(alpha=0.5, total_steps=20_000)


class TestRandomPolicy:
    def test_same_seed_same_stream(self):
        a, b = random_policy(4), random_policy(4)
        assert [a.act() for _ in range(200)] == [b.act() for _ in range(200)]

    def test_uniform(self):
        p = RandomPolicy(0)
        counts = Counter(p.act() for _ in range(60_000))
        assert set(counts) == set(ActionKind)
        for c in counts.values():
            assert abs(c / 60_000 - 1 / 6) < 0.01

    def test_ignores_observation(self):
        world, _ = reset(SWITCH)
        a, b = RandomPolicy(1), RandomPolicy(1)
        assert [a.act(world) for _ in range(50)] == [b.act(None) for _ in range(50)]

    def test_episode_reseeding(self):
        p = RandomPolicy(9)
        p.reset(3)
        first = [p.act() for _ in range(20)]
        p.reset(3)
        assert [p.act() for _ in range(20)] == first


class TestScriptedPolicy:
    def test_empty_is_do_nothing(self):
        world, _ = reset(SWITCH)
        p = scripted_policy([])
        assert p.act(world) is ActionKind.STAY

    def test_replay_deterministic(self):
        env = MoralityEnv(SWITCH, UTILITY, BETA)
        p = ScriptedPolicy(SWITCH.reference_policy("FlipSwitch"))
        a, b = rollout(env, p), rollout(env, p)
        assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]

    def test_flip_switch_harms_two(self):
        sc = get_scenario("PushOrSwitch")
        trace = rollout(MoralityEnv(sc, UTILITY), ScriptedPolicy(sc.reference_policy("FlipSwitch")))
        assert trace.harm_totals() == {"human": 2}

    def test_stays_after_script(self):
        world, _ = reset(SWITCH)
        world.timestep = 5
        assert ScriptedPolicy(["RIGHT"]).act(world) is ActionKind.STAY


class TestTabular:
    def test_save_load(self, tmp_path):
        table = {"abc": np.array([0, 1, 5, 2, 0, 0.5])}
        TabularPolicy(table).save(tmp_path / "t.json")
        loaded = TabularPolicy.load(tmp_path / "t.json")
        assert loaded.table.keys() == table.keys()
        assert np.array_equal(loaded.table["abc"], table["abc"])

    def test_schema_checked(self, tmp_path):
        (tmp_path / "t.json").write_text('{"schema_version": 2, "table": {}}')
        with pytest.raises(ValueError):
            TabularPolicy.load(tmp_path / "t.json")


class TestQLearning:
    def test_env_only_reaches_landmark(self):
        res = q_learn(SWITCH, UTILITY, TrainConfig(**FAST, seed=0))
        trace = rollout(MoralityEnv(SWITCH, UTILITY), res.policy)
        optimal = exact_solve(SWITCH, UTILITY).expected_return
        assert trace.terminated and any(r.landmark_reached for r in trace.records)
        assert trace.total_reward >= optimal - 15

    def test_seed_determinism(self):
        cfg = TrainConfig(total_steps=3000, seed=5)
        a, b = q_learn(SWITCH, UTILITY, cfg), q_learn(SWITCH, UTILITY, cfg)
        assert a.policy.table.keys() == b.policy.table.keys()
        assert all(np.array_equal(a.policy.table[k], b.policy.table[k]) for k in a.policy.table)

    def test_zero_weight_shaping_matches_env_only(self):
        env_only = q_learn(SWITCH, UTILITY, TrainConfig(total_steps=3000, seed=2))
        shaped = q_learn(SWITCH, UTILITY, TrainConfig(total_steps=3000, seed=2, reward_mode="shaped",
                                                      cost_weight=0.0))
        assert env_only.episode_returns == shaped.episode_returns
        assert all(np.array_equal(env_only.policy.table[k], shaped.policy.table[k])
                   for k in env_only.policy.table)

    def test_zero_steps(self):
        res = q_learn(SWITCH, UTILITY, TrainConfig(total_steps=0))
        assert res.policy.table == {}
        trace = rollout(MoralityEnv(SWITCH, UTILITY), res.policy)
        assert trace.truncated

    def test_shaped_not_worse(self):
        metrics = {}
        for mode in ("env_only", "shaped"):
            res = q_learn(SWITCH, UTILITY, TrainConfig(**FAST, reward_mode=mode, seed=1))
            metrics[mode] = evaluate(SWITCH, UTILITY, res.policy, episodes=1).metric
        assert metrics["shaped"] >= metrics["env_only"]

    @pytest.mark.parametrize("kw", [dict(gamma=0), dict(gamma=1.5), dict(eps_start=2), dict(cost_weight=-1),
                                    dict(reward_mode="other")])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_epsilon_schedule(self):
        cfg = TrainConfig(total_steps=100)
        assert cfg.epsilon(0) == 1.0 and cfg.epsilon(50) == pytest.approx(0.05)
        assert cfg.epsilon(25) == pytest.approx(0.525)


class TestExactSolve:
    def test_switch_standard(self):
        res = exact_solve(SWITCH, UTILITY)
        assert res.plan[0] is ActionKind.INTERACT
        assert res.per_norm_adherence["min_humans_harmed"] == pytest.approx(1 / 6)
        assert res.per_norm_m["min_humans_harmed"] == pytest.approx(5 / 6)

    def test_push_or_switch_personal_first(self):
        sc = get_scenario("PushOrSwitch")
        chain, beta = load_chain("PersonalHarmFirst", sc)
        res = exact_solve(sc, chain, beta=beta)
        trace = rollout(MoralityEnv(sc, chain, beta), res.policy)
        assert trace.harm_totals() == {"human": 2}
        assert res.metric == pytest.approx(200.6 / 201, abs=1e-12)

    def test_push_or_switch_harm_first(self):
        sc = get_scenario("PushOrSwitch")
        chain, beta = load_chain("HarmFirst", sc)
        res = exact_solve(sc, chain, beta=beta)
        trace = rollout(MoralityEnv(sc, chain, beta), res.policy)
        assert trace.harm_totals() == {"human": 1}
        assert any(r.interact.kind == "push" for r in trace.records)
        assert res.metric == pytest.approx(160 / 201, abs=1e-12)

    def test_policy_reproduces_plan(self):
        res = exact_solve(SWITCH, UTILITY)
        trace = rollout(MoralityEnv(SWITCH, UTILITY), res.policy)
        assert [ActionKind[r.action] for r in trace.records] == res.plan
        assert trace.total_reward == res.expected_return

    def test_state_cap(self):
        with pytest.raises(SolverResourceError, match="horizon"):
            exact_solve(get_scenario("PushOrSwitch"), UTILITY, max_states=50)

    def test_horizon_limits_search(self):
        short = exact_solve(SWITCH, UTILITY, horizon=3)
        assert len(short.plan) <= 3

    def test_weight_scaling_leaves_choice(self, monkeypatch):
        base = exact_solve(SWITCH, UTILITY)
        real = agents.compute_weights

        def scaled(chain, beta):
            w = real(chain, beta)
            return ChainWeights(w.beta, tuple(7 * x for x in w.exact))

        monkeypatch.setattr(agents, "compute_weights", scaled)
        again = exact_solve(SWITCH, UTILITY)
        assert again.plan == base.plan and again.metric_exact == base.metric_exact


SMALL = ["SwitchStandard", "PushStandard", "SwitchSelfSacrifice", "PushSelfSacrifice", "Switch5", "Switch7",
         "Switch2Trolley4Track"]


@pytest.mark.parametrize("name", SMALL)
@pytest.mark.parametrize("chain_name", ["Utility", "DualProcessAgentHarm"])
def test_oracle_beats_scripts(name, chain_name):
    sc = get_scenario(name)
    chain, beta = load_chain(chain_name, sc)
    res = exact_solve(sc, chain, beta=beta)
    for ref, actions in sc.reference_policies:
        rep = evaluate(sc, chain, ScriptedPolicy(actions), episodes=1, beta=beta)
        assert rep.metric <= res.metric + 1e-12, ref
    solved = evaluate(sc, chain, res.policy, episodes=1, beta=beta)
    assert solved.metric == pytest.approx(res.metric, abs=1e-12)
