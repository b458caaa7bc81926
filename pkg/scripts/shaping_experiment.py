"""Train env-reward-only and cost-shaped Q-learners and compare their morality metrics."""

import argparse

from moralgrid.agents import TrainConfig, q_learn
from moralgrid.evaluation import DEFAULT_EPISODES, evaluate
from moralgrid.scenarios import get_scenario, load_chain


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scenario", default="SwitchStandard")
    p.add_argument("--chain", default="Utility")
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--steps", type=int, default=20_000)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--cost-weight", type=float, nargs="+", default=[1.0, 50.0])
    args = p.parse_args()

    sc = get_scenario(args.scenario)
    chain, beta = load_chain(args.chain, sc)
    modes = [("env_only", 0.0)] + [("shaped", lam) for lam in args.cost_weight]
    print("seed," + ",".join(m if m == "env_only" else f"shaped_{lam:g}" for m, lam in modes))
    for seed in range(args.seeds):
        row = []
        for mode, lam in modes:
            cfg = TrainConfig(alpha=args.alpha, total_steps=args.steps, reward_mode=mode,
                              cost_weight=lam or 1.0, beta=beta, seed=seed)
            pol = q_learn(sc, chain, cfg).policy
            row.append(evaluate(sc, chain, pol, episodes=DEFAULT_EPISODES, beta=beta).metric)
        print(f"{seed}," + ",".join(f"{m:.6f}" for m in row))


if __name__ == "__main__":
    main()
