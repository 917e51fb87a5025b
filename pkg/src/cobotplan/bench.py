"""Random task generation and Monte-Carlo benchmarking.

A benchmark suite names a task, a scenario, a set of policies, and a
trial count.  Each (policy, trial) runs one seeded episode; per-trial
seeds come from a counter-based splitter, so results are independent of
execution order and worker count, and a fixed suite seed reproduces the
output byte for byte.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from .env import AssemblyEnv
from .errors import HtmError
from .htm import ActionSpec, Capability, Htm, HtmNode, NodeKind
from .policies import EpisodeRecord, evaluate
from .scenario import ScenarioConfig
from .seeding import derive_seed

GENERATED_DURATION_RANGE = (4, 16)
_TREE_KINDS = (NodeKind.SEQUENTIAL, NodeKind.INDEPENDENT, NodeKind.PARALLEL)
_MAX_TREE_DEPTH = 4


def generate_random_htm(n: int, seed: int) -> Htm:
    """Random task with ``n`` actions: n/4 joint, n/2 robot-only, n/4 either.

    One nominal duration per action, uniform over 4..16 steps; the tree is
    a recursive random partition into 2-4 groups per node with node kinds
    drawn uniformly, at most 4 levels deep.  Deterministic in ``seed``.
    """
    if n < 4 or n % 4 != 0:
        raise HtmError(f"action count must be a positive multiple of 4, got {n}")
    rng = random.Random(derive_seed(seed, "htm", n))
    caps = (
        [Capability.JOINT] * (n // 4)
        + [Capability.ROBOT_ONLY] * (n // 2)
        + [Capability.EITHER] * (n // 4)
    )
    rng.shuffle(caps)
    lo, hi = GENERATED_DURATION_RANGE
    actions = []
    for i, cap in enumerate(caps, start=1):
        d = rng.randint(lo, hi)
        actions.append(ActionSpec(id=i, name=f"step {i}", capability=cap,
                                  duration_h=d, duration_r=d))

    def build(ids: Sequence[int], depth: int) -> HtmNode:
        if len(ids) == 1:
            return HtmNode(kind=NodeKind.SEQUENTIAL, children=(), action_id=ids[0])
        kind = _TREE_KINDS[rng.randrange(len(_TREE_KINDS))]
        if depth >= _MAX_TREE_DEPTH:
            children = tuple(build([i], depth + 1) for i in ids)
            return HtmNode(kind=kind, children=children, action_id=None)
        k = rng.randint(2, min(4, len(ids)))
        cuts = sorted(rng.sample(range(1, len(ids)), k - 1))
        parts = []
        prev = 0
        for c in list(cuts) + [len(ids)]:
            parts.append(ids[prev:c])
            prev = c
        children = tuple(build(part, depth + 1) for part in parts)
        return HtmNode(kind=kind, children=children, action_id=None)

    return Htm(actions, build(list(range(1, n + 1)), 1))


@dataclass
class BenchResult:
    """Aggregated makespan statistics for one (scenario, policy) pair."""

    scenario: str
    policy: str
    trials: int
    mean: float
    std: float
    records: List[EpisodeRecord] = field(repr=False)

    @property
    def cell(self) -> str:
        return f"{self.mean:.1f} [{self.std:.1f}]"


def run_benchmark(
    htm: Htm,
    scenario: ScenarioConfig,
    policies: Dict[str, object],
    trials: int,
    seed: int = 0,
    scenario_name: str = "scenario",
    human_model: str = "uniform",
    workers: int = 1,
) -> List[BenchResult]:
    """Run ``trials`` seeded episodes per named policy.

    ``policies`` maps display names to unfitted policy estimators; each is
    fitted here against the suite's environment.  A policy that cannot
    handle the scenario (the graph planner on a stochastic one) raises its
    own diagnostic rather than being silently skipped.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    results = []
    for name, policy in policies.items():
        env = AssemblyEnv(htm, scenario, human_model=human_model)
        fitted = policy.fit(env) if hasattr(policy, "fit") else policy
        stats = evaluate(
            fitted, env, trials, seed=derive_seed(seed, scenario_name, name),
            workers=workers,
        )
        results.append(
            BenchResult(
                scenario=scenario_name,
                policy=name,
                trials=trials,
                mean=stats.mean,
                std=stats.std,
                records=stats.records,
            )
        )
    return results


def results_to_csv(results: Sequence[BenchResult]) -> str:
    """Per-trial rows, ordered by (scenario, policy, trial)."""
    lines = ["scenario,policy,trial,seed,steps,n_events,n_changes,n_failures"]
    for res in sorted(results, key=lambda r: (r.scenario, r.policy)):
        for rec in sorted(res.records, key=lambda r: r.trial):
            lines.append(
                f"{res.scenario},{res.policy},{rec.trial},{rec.seed},"
                f"{rec.steps},{rec.n_events},{rec.n_changes},{rec.n_failures}"
            )
    return "\n".join(lines) + "\n"


def summarize(results: Sequence[BenchResult]) -> str:
    """Text table: one row per policy, one column per scenario, cells
    formatted "mean [std]" with one decimal."""
    scenarios: List[str] = []
    policies: List[str] = []
    cells: Dict[tuple, str] = {}
    for res in results:
        if res.scenario not in scenarios:
            scenarios.append(res.scenario)
        if res.policy not in policies:
            policies.append(res.policy)
        cells[(res.policy, res.scenario)] = res.cell
    header = ["policy"] + scenarios
    rows = [[p] + [cells.get((p, s), "-") for s in scenarios] for p in policies]
    widths = [
        max(len(str(r[i])) for r in [header] + rows) for i in range(len(header))
    ]
    def fmt(row):
        return "  ".join(str(v).ljust(w) for v, w in zip(row, widths)).rstrip()
    lines = [fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(r) for r in rows)
    return "\n".join(lines)


def recompute_mean(result: BenchResult) -> float:
    """Mean straight from the per-trial records (consistency checks)."""
    return statistics.fmean(r.steps for r in result.records)
