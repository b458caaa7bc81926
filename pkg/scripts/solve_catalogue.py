"""Run the exact solver on every built-in scenario and compare it with the reference scripts."""

import argparse
import time

from moralgrid.agents import ScriptedPolicy, exact_solve
from moralgrid.evaluation import evaluate
from moralgrid.scenarios import builtin_catalogue, get_scenario, load_chain


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--chain", nargs="+", default=["Utility", "DualProcessAgentHarm"])
    p.add_argument("--scenario", nargs="*", help="defaults to the whole catalogue")
    args = p.parse_args()

    for name in args.scenario or builtin_catalogue():
        sc = get_scenario(name)
        for chain_name in args.chain:
            chain, beta = load_chain(chain_name, sc)
            t0 = time.perf_counter()
            res = exact_solve(sc, chain, beta=beta)
            dt = time.perf_counter() - t0
            plan = "".join(a.name[0] for a in res.plan)
            print(f"{name:28s} {chain_name:22s} solver={res.metric:.6f} return={res.expected_return:6.1f} "
                  f"states={res.states_explored:7d} {dt:5.2f}s plan={plan}")
            for ref, acts in sc.reference_policies:
                m = evaluate(sc, chain, ScriptedPolicy(acts), episodes=1, beta=beta).metric
                print(f"{'':52s} {ref:20s} {m:.6f}")


if __name__ == "__main__":
    main()
