"""Decision-graph planner for deterministic scenarios.

With nominal durations and no failures or changes of mind, the only
randomness left in an episode is which action the human picks when they
become free.  The reachable robot decision points then form a finite
acyclic graph: nodes are canonical decision states, edges are robot
actions, and human picks appear as chance branches inside each edge.
Backward induction over that graph yields the optimal policy and its
expected makespan.

Expansion reuses the simulator's own transition layer (driving an
environment from injected states), so the graph dynamics cannot drift
from the simulation they plan for.

A brute-force expectimax recursion over the same transition layer is
included as an independent cross-check for small tasks; it never touches
the graph machinery.
"""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple, Union

from .errors import (
    BudgetExceededError,
    NotFittedError,
    ScenarioError,
    StochasticScenarioError,
)
from .env import AssemblyEnv, pick_distribution
from .htm import Capability, Htm, IDLE
from .scenario import ScenarioConfig
from .state import WorldState

# Sentinel node key for the completed task.
TERMINAL = ("terminal",)

NodeKey = tuple
Branch = Tuple[object, int, tuple]  # (probability, elapsed steps, successor key)


def _node_key(env: AssemblyEnv) -> NodeKey:
    """Canonical key for the environment's current decision state.

    Elapsed times are folded into remaining times (equivalent under
    nominal durations), which lets states that differ only in how long
    ago something started share a node.
    """
    h = env.h_action
    if h == IDLE:
        token = ("idle", env.detected)
    elif not env.h_running:
        token = ("waiting", h, env.detected)
    else:
        token = ("solo", h, max(env.h_end - env.now, 1), env.detected)
    return (env.completed, env.failed, token)


def _policy_key_from_node(key: NodeKey) -> tuple:
    """Project a node key onto what the robot can actually observe."""
    completed, failed, token = key
    if not token[-1]:  # undetected: the pick is hidden from the robot
        return (completed, failed, "unknown")
    if token[0] == "idle":
        return (completed, failed, "idle")
    if token[0] == "waiting":
        return (completed, failed, "waiting", token[1])
    return (completed, failed, "solo", token[1], token[2])


def canonical_key_from_state(htm: Htm, state: WorldState) -> tuple:
    """Observable decision-state key, computed from a world snapshot.

    Mirrors the graph's canonicalization: under nominal durations the
    remaining human time is the nominal duration minus the elapsed time,
    clamped at one step.
    """
    completed, failed = htm.task_to_masks(state.progress)
    if not state.detected:
        return (completed, failed, "unknown")
    h = state.human_action
    if h is None or h == IDLE:
        return (completed, failed, "idle")
    if htm.actions[h].capability == Capability.JOINT and state.robot_action != h:
        return (completed, failed, "waiting", h)
    remaining = max(htm.actions[h].duration_h - state.human_elapsed, 1)
    return (completed, failed, "solo", h, remaining)


def _inject(env: AssemblyEnv, key: NodeKey) -> None:
    """Load a canonical decision state into the scratch environment."""
    completed, failed, token = key
    env.now = 0
    env.completed = completed
    env.failed = failed
    env.done = False
    env.pending_pick = False
    env.last_aborted = None
    env.c_at = None
    env.r_action = IDLE
    env.r_start = 0
    env.r_end = None
    kind = token[0]
    detected = token[-1]
    if kind == "idle":
        env.h_action = IDLE
        env.h_running = False
        env.h_start = 0
        env.h_end = None
    elif kind == "waiting":
        env.h_action = token[1]
        env.h_running = False
        env.h_start = 0
        env.h_end = None
    else:
        h, remaining = token[1], token[2]
        env.h_action = h
        env.h_running = True
        env.h_end = remaining
        env.h_start = min(remaining - env._dur_h[h], 0)
    env.detected = detected
    env.d_at = None if detected else env.scenario.detect_delay


def _inject_prestart(env: AssemblyEnv) -> None:
    """Load the reset-time state, before the human's first pick."""
    env.now = 0
    env.completed = 0
    env.failed = 0
    env.done = False
    env.h_action = None
    env.h_running = False
    env.h_start = 0
    env.h_end = None
    env.detected = False
    env.d_at = None
    env.c_at = None
    env.last_aborted = None
    env.r_action = IDLE
    env.r_start = 0
    env.r_end = None
    env.pending_pick = True


def _advance(env: AssemblyEnv, human_model: str, exact: bool) -> List[Branch]:
    """Run the scratch env forward to the next decision point (or the end),
    branching on human picks; returns (probability, cost, successor) triples.
    """
    one = Fraction(1) if exact else 1.0
    out: List[Branch] = []

    def go(prob, cost: int, progressed: bool) -> None:
        # `progressed` blocks emitting the entry state itself: an idle
        # assignment leaves the robot "free" but must still ride out one
        # event before the next decision.
        while True:
            if env.done:
                out.append((prob, cost, TERMINAL))
                return
            if env.pending_pick:
                dist = pick_distribution(human_model, env.pick_choices())
                snap = env.snapshot()
                for action, w in dist:
                    env.restore(snap)
                    env.apply_human_pick(action)
                    go(prob * (w if exact else float(w)), cost, True)
                return
            if progressed and env.r_action == IDLE:
                out.append((prob, cost, _node_key(env)))
                return
            ev = env.sample_next_event()
            env.apply_event(ev)
            cost += ev.delta
            progressed = True

    go(one, 0, False)
    return out


def _feasible_at(env: AssemblyEnv, key: NodeKey) -> List[int]:
    completed, failed, token = key
    detected = token[-1]
    if not detected:
        observed = None
    elif token[0] == "idle":
        observed = IDLE
    else:
        observed = token[1]
    return env.htm.robot_choices(completed, failed, observed, detected)


@dataclass
class GraphStats:
    n_nodes: int
    n_edges: int
    build_seconds: float


@dataclass
class DecisionGraph:
    """Reachable decision states with per-action successor distributions."""

    htm: Htm
    scenario: ScenarioConfig
    human_model: str
    exact: bool
    nodes: Dict[NodeKey, Dict[int, List[Branch]]]
    root_branches: List[Branch]
    stats: GraphStats = field(default=None)

    def __len__(self) -> int:
        return len(self.nodes)


def _require_deterministic(htm: Htm, scenario: ScenarioConfig) -> None:
    reasons = scenario.stochastic_reasons(htm)
    if reasons:
        raise StochasticScenarioError(
            "graph planning needs a deterministic scenario; offending settings: "
            + "; ".join(reasons)
            + ". Use the RL planner for stochastic scenarios."
        )
    if scenario.gamma != 1.0:
        raise ScenarioError("graph planning assumes undiscounted makespan (gamma=1)")


def build_graph(
    htm: Htm,
    scenario: ScenarioConfig,
    human_model: str = "uniform",
    node_budget: int = 200_000,
    exact: bool = False,
) -> DecisionGraph:
    """Enumerate every reachable robot decision state.

    Raises :class:`StochasticScenarioError` unless the scenario is
    deterministic, and :class:`BudgetExceededError` when the reachable set
    outgrows ``node_budget``.  With ``exact=True`` chance weights are kept
    as rationals so solved values support exact comparison.
    """
    _require_deterministic(htm, scenario)
    t0 = time.perf_counter()
    env = AssemblyEnv(htm, scenario, human_model=None)

    _inject_prestart(env)
    root_branches = _advance(env, human_model, exact)

    nodes: Dict[NodeKey, Dict[int, List[Branch]]] = {}
    queue = deque(succ for _, _, succ in root_branches if succ is not TERMINAL)
    n_edges = 0
    while queue:
        key = queue.popleft()
        if key in nodes:
            continue
        if len(nodes) >= node_budget:
            raise BudgetExceededError(
                f"decision graph exceeded the node budget of {node_budget}"
            )
        edges: Dict[int, List[Branch]] = {}
        for action in _feasible_at(env, key):
            _inject(env, key)
            env._assign_robot(action)
            branches = _advance(env, human_model, exact)
            edges[action] = branches
            n_edges += 1
            for _, _, succ in branches:
                if succ is not TERMINAL and succ not in nodes:
                    queue.append(succ)
        nodes[key] = edges
    nodes[TERMINAL] = {}
    stats = GraphStats(
        n_nodes=len(nodes), n_edges=n_edges, build_seconds=time.perf_counter() - t0
    )
    return DecisionGraph(htm, scenario, human_model, exact, nodes, root_branches, stats)


def _potential(key: NodeKey) -> tuple:
    """Well-founded progress order: completed work, then detection state.

    Every edge strictly increases it, which is what makes the graph a DAG.
    """
    if key is TERMINAL or key == TERMINAL:
        return (1 << 62, 1)
    completed, _, token = key
    return (bin(completed).count("1"), 1 if token[-1] else 0)


class TabularPolicy:
    """Lookup-table policy over canonical observable decision states."""

    def __init__(
        self,
        htm: Htm,
        table: Dict[tuple, int],
        values: Optional[Dict[tuple, float]] = None,
        root_value: Optional[float] = None,
    ):
        self.htm = htm
        self.table = dict(table)
        self.values = dict(values) if values else {}
        self.root_value = root_value

    def action_for(self, state: WorldState) -> int:
        """Robot action for an observable state; falls back to the lowest
        feasible action id when the state was never enumerated."""
        key = canonical_key_from_state(self.htm, state)
        completed, failed = self.htm.task_to_masks(state.progress)
        feasible = self.htm.robot_choices(
            completed, failed, state.human_action, state.detected
        )
        action = self.table.get(key)
        if action is not None and action in feasible:
            return action
        if not feasible:
            return IDLE
        return min(feasible)

    def value_for(self, state: WorldState) -> Optional[float]:
        return self.values.get(canonical_key_from_state(self.htm, state))

    def __len__(self) -> int:
        return len(self.table)

    def to_dict(self) -> dict:
        entries = [
            {"key": list(k), "action": a, "value": self.values.get(k)}
            for k, a in sorted(self.table.items(), key=lambda kv: repr(kv[0]))
        ]
        return {"kind": "tabular_policy", "root_value": self.root_value, "entries": entries}

    @classmethod
    def from_dict(cls, htm: Htm, d: dict) -> "TabularPolicy":
        table = {}
        values = {}
        for e in d.get("entries", []):
            key = tuple(e["key"])
            table[key] = int(e["action"])
            if e.get("value") is not None:
                values[key] = float(e["value"])
        return cls(htm, table, values, d.get("root_value"))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, htm: Htm, path: str) -> "TabularPolicy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(htm, json.load(fh))


def solve(graph: DecisionGraph, optimistic: bool = False) -> TabularPolicy:
    """Backward induction over the decision graph.

    Node value = min over feasible actions of the expected cost-to-go,
    expectation over human-pick branches; ties go to the lowest action id.
    With ``optimistic=True`` the expectation is replaced by the best-case
    branch, reproducing a plain shortest-path treatment of human choices.
    """
    zero = Fraction(0) if graph.exact else 0.0
    order = sorted(
        (k for k in graph.nodes if k != TERMINAL), key=_potential, reverse=True
    )
    values: Dict[tuple, object] = {TERMINAL: zero}
    actions: Dict[tuple, int] = {}
    own_potential = _potential
    for key in order:
        best = None
        best_action = None
        pot = own_potential(key)
        for action, branches in graph.nodes[key].items():
            if optimistic:
                q = min(cost + values[succ] for _, cost, succ in branches)
            else:
                q = zero
                for prob, cost, succ in branches:
                    if succ != TERMINAL and own_potential(succ) <= pot:
                        raise ScenarioError(
                            "cycle in decision graph: canonicalization bug"
                        )
                    q += prob * (cost + values[succ])
            if best is None or q < best or (q == best and action < best_action):
                best = q
                best_action = action
        if best is None:
            raise ScenarioError(f"decision node {key!r} has no feasible action")
        values[key] = best
        actions[key] = best_action

    root = zero
    if optimistic:
        root = min(cost + values[succ] for _, cost, succ in graph.root_branches)
    else:
        for prob, cost, succ in graph.root_branches:
            root += prob * (cost + values[succ])

    table: Dict[tuple, int] = {}
    value_table: Dict[tuple, float] = {}
    for key, action in actions.items():
        pk = _policy_key_from_node(key)
        prior = table.get(pk)
        if prior is not None and prior != action:
            raise ScenarioError(
                f"observable key {pk!r} maps to conflicting actions {prior} and {action}"
            )
        table[pk] = action
        value_table[pk] = float(values[key])
    policy = TabularPolicy(graph.htm, table, value_table, root_value=float(root))
    policy.exact_root_value = root
    return policy


def plan(
    htm: Htm,
    scenario: ScenarioConfig,
    human_model: str = "uniform",
    node_budget: int = 200_000,
    exact: bool = False,
    optimistic: bool = False,
) -> TabularPolicy:
    """Build and solve in one call."""
    return solve(build_graph(htm, scenario, human_model, node_budget, exact), optimistic)


def expectimax_oracle(
    htm: Htm,
    scenario: ScenarioConfig,
    human_model: str = "uniform",
    depth: int = 4096,
) -> Fraction:
    """Optimal expected makespan by brute-force recursion.

    Recurses directly over the simulator's transition layer (min over
    robot actions, expectation over human picks), independent of the graph
    code.  Intended for small tasks; raises once ``depth`` events are
    exceeded on any path.
    """
    _require_deterministic(htm, scenario)
    env = AssemblyEnv(htm, scenario, human_model=None)
    memo: Dict[tuple, Fraction] = {}

    def hidden_key() -> tuple:
        now = env.now
        return (
            env.completed,
            env.failed,
            env.h_action,
            env.h_running,
            (env.h_end - now) if env.h_end is not None else None,
            env.detected,
            (env.d_at - now) if env.d_at is not None else None,
            env.r_action,
            (env.r_end - now) if env.r_end is not None else None,
        )

    def cost_to_go(levels: int) -> Fraction:
        if env.done:
            return Fraction(0)
        if levels <= 0:
            raise BudgetExceededError("expectimax depth cap exceeded")
        if env.pending_pick:
            dist = pick_distribution(human_model, env.pick_choices())
            snap = env.snapshot()
            total = Fraction(0)
            for action, w in dist:
                env.restore(snap)
                env.apply_human_pick(action)
                total += w * cost_to_go(levels)
            return total
        if env.r_action == IDLE:
            key = hidden_key()
            hit = memo.get(key)
            if hit is not None:
                return hit
            snap = env.snapshot()
            best: Optional[Fraction] = None
            for action in env.feasible_robot():
                env.restore(snap)
                env._assign_robot(action)
                ev = env.sample_next_event()
                env.apply_event(ev)
                val = ev.delta + cost_to_go(levels - 1)
                if best is None or val < best:
                    best = val
            if best is None:
                raise ScenarioError("decision state with no feasible robot action")
            memo[key] = best
            return best
        ev = env.sample_next_event()
        env.apply_event(ev)
        return ev.delta + cost_to_go(levels - 1)

    _inject_prestart(env)
    return cost_to_go(depth)
