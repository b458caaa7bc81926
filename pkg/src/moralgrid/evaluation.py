"""Monte Carlo policy assessment, report ranking, and trace persistence/rescoring."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .env import MoralityEnv, rollout
from .ledger import CostTracker, EpisodeTrace, StepRecord, derive_events
from .morality import (
    DEFAULT_BETA,
    MoralityChain,
    compute_weights,
    morality_function,
    morality_metric,
)
from .scenarios import (
    ScenarioConfig,
    bind_ranges,
    chain_from_dict,
    chain_to_dict,
    config_hash,
    scenario_to_dict,
)

DEFAULT_EPISODES = 100
REPORT_SCHEMA_VERSION = 1


class ComparisonError(ValueError):
    pass


class TraceFormatError(ValueError):
    pass


@dataclass
class EvaluationReport:
    scenario: str
    chain: str
    policy: str
    episodes: int
    per_norm_m: dict[str, float]
    metric: float
    avg_return: float
    avg_cost: float
    norm_subset: list[str] | None = None
    per_norm_adherence: dict[str, float] = field(default_factory=dict)
    episode_costs: list[float] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schema_version"] = REPORT_SCHEMA_VERSION
        return d

    @classmethod
    def from_dict(cls, d) -> EvaluationReport:
        d = dict(d)
        d.pop("schema_version", None)
        return cls(**d)


def _policy_name(policy) -> str:
    return getattr(policy, "name", None) or type(policy).__name__


def evaluate(
    scenario: ScenarioConfig,
    chain: MoralityChain,
    policy,
    episodes: int = DEFAULT_EPISODES,
    subset=None,
    beta=DEFAULT_BETA,
    base_seed: int = 0,
    normalize_cost: bool = False,
) -> EvaluationReport:
    """Estimate per-norm morality functions, the metric and average return.

    Episode ``i`` runs with seed ``base_seed + i``. Adherence is the mean of
    per-episode outcomes; each norm's M is taken from that mean.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = MoralityEnv(scenario, chain, beta=beta, normalize_cost=normalize_cost)
    bound = env.chain
    seeds = [base_seed + i for i in range(episodes)]
    adh_sum = {nid: Fraction(0) for nid in bound.ids}
    returns, costs = [], []
    for seed in seeds:
        trace = rollout(env, policy, seed)
        for nid, v in env.tracker.episode_adherence(exact=True).items():
            adh_sum[nid] += v
        returns.append(trace.total_reward)
        costs.append(float(env.tracker.total))
    adherence = {nid: float(v / episodes) for nid, v in adh_sum.items()}
    per_m = {n.id: morality_function(n, adherence[n.id]) for n in bound.norms}
    weights = compute_weights(bound, beta)
    metric = morality_metric(bound, weights, [per_m[nid] for nid in bound.ids], subset=subset)
    return EvaluationReport(
        scenario=scenario.name,
        chain=bound.name,
        policy=_policy_name(policy),
        episodes=episodes,
        per_norm_m=per_m,
        metric=metric,
        avg_return=float(np.mean(returns)),
        avg_cost=float(np.mean(costs)),
        norm_subset=sorted(subset) if subset is not None else None,
        per_norm_adherence=adherence,
        episode_costs=costs,
        provenance={
            "scenario_hash": config_hash(scenario_to_dict(scenario)),
            "chain_hash": config_hash(chain_to_dict(bound, beta)),
            "beta": float(beta),
            "base_seed": base_seed,
            "seeds": seeds,
            "normalize_cost": normalize_cost,
        },
    )


def compare(reports: list[EvaluationReport]) -> list[EvaluationReport]:
    """Rank reports by metric, then average return. Ties keep input order."""
    if not reports:
        return []
    keys = {(r.scenario, r.chain, r.provenance.get("chain_hash")) for r in reports}
    if len(keys) > 1:
        raise ComparisonError(f"reports mix scenario/chain combinations: {sorted(k[:2] for k in keys)}")
    return sorted(reports, key=lambda r: (-r.metric, -r.avg_return))


def write_report(report: EvaluationReport, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")


def read_report(path) -> EvaluationReport:
    return EvaluationReport.from_dict(json.loads(Path(path).read_text()))


def write_summary_csv(reports: list[EvaluationReport], path) -> None:
    """One row per (scenario, policy) with the metric and return columns."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "chain", "policy", "episodes", "metric", "avg_return", "avg_cost"])
        for r in reports:
            w.writerow([r.scenario, r.chain, r.policy, r.episodes, f"{r.metric:.6f}",
                        f"{r.avg_return:.3f}", f"{r.avg_cost:.6f}"])


# ---------------------------------------------------------------------------
# traces


def trace_lines(trace: EpisodeTrace) -> list[str]:
    lines = [json.dumps(trace.header, sort_keys=True)]
    lines += [json.dumps({"type": "step", **r.to_dict()}, sort_keys=True) for r in trace.records]
    return lines


def write_trace(trace: EpisodeTrace, path) -> None:
    Path(path).write_text("\n".join(trace_lines(trace)) + "\n")


def parse_trace(text: str) -> EpisodeTrace:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("empty trace")
    try:
        docs = [json.loads(ln) for ln in lines]
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"trace line is not JSON: {e}") from e
    header = docs[0]
    if header.get("type") != "header":
        raise TraceFormatError("first trace line must be the header")
    records = []
    last_t = 0
    for i, d in enumerate(docs[1:], start=2):
        if d.get("type") != "step":
            raise TraceFormatError(f"line {i}: expected a step record")
        try:
            rec = StepRecord.from_dict(d)
        except (KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(f"line {i}: {e}") from e
        if rec.t <= last_t:
            raise TraceFormatError(f"line {i}: timestep {rec.t} not after {last_t}")
        last_t = rec.t
        records.append(rec)
    return EpisodeTrace(header, records)


def read_trace(path) -> EpisodeTrace:
    return parse_trace(Path(path).read_text())


def score_trace(trace: EpisodeTrace, chain: MoralityChain | None = None, beta=None,
                normalize_cost: bool = False) -> dict:
    """Recompute costs, adherence and the metric from a trace's stored facts.

    Uses only the trace: the header's chain when ``chain`` is omitted and the
    header's character totals for utility ranges. The engine is never run.
    """
    hdr_beta = None
    if chain is None:
        if not trace.header.get("chain"):
            raise TraceFormatError("trace header carries no chain; pass one explicitly")
        chain, hdr_beta = chain_from_dict(trace.header["chain"])
    beta = beta if beta is not None else (hdr_beta if hdr_beta is not None else DEFAULT_BETA)
    totals = trace.header.get("totals")
    if totals is None:
        raise TraceFormatError("trace header lacks character totals")
    chain = bind_ranges(chain, totals)
    tracker = CostTracker(chain, beta, normalize_cost)
    costs = []
    n = len(trace.records)
    for i, rec in enumerate(trace.records):
        events = derive_events(rec.harms, rec.interact, chain, rec.t, rec.landmark_reached)
        terminal = i == n - 1
        costs.append(tracker.record_step(events, rec.t, terminal=terminal))
    if not tracker.finished:
        raise TraceFormatError("trace has no step records")
    adherence = tracker.episode_adherence()
    per_m = tracker.morality_values()
    weights = compute_weights(chain, beta)
    return {
        "chain": chain.name,
        "norms": list(chain.ids),
        "weights": weights.weights,
        "step_costs": costs,
        "total_cost": float(tracker.total),
        "adherence": adherence,
        "per_norm_m": per_m,
        "metric": morality_metric(chain, weights, [per_m[i] for i in chain.ids]),
        "total_reward": trace.total_reward,
    }
