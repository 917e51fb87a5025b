"""Decision-graph construction, backward induction, and the brute-force
expectimax cross-check."""

from fractions import Fraction

import pytest

from cobotplan.env import AssemblyEnv
from cobotplan.errors import (
    BudgetExceededError,
    ScenarioError,
    StochasticScenarioError,
)
from cobotplan.graph import (
    TabularPolicy,
    build_graph,
    expectimax_oracle,
    plan,
    solve,
)
from cobotplan.htm import ActionSpec, Capability, Htm
from cobotplan.scenario import ScenarioConfig

from conftest import indep, leaf, par, seq


def tiny_mixed_htm():
    """Three actions covering solo-robot, either and joint capabilities."""
    return Htm(
        [
            ActionSpec(1, "prep", Capability.EITHER, 3, 4),
            ActionSpec(2, "mount", Capability.ROBOT_ONLY, 5, 5),
            ActionSpec(3, "carry", Capability.JOINT, 4, 4),
        ],
        seq(indep(leaf(1), leaf(2)), leaf(3)),
    )


# ---------------------------------------------------------------------------
# construction guards


def test_graph_refuses_stochastic_scenarios(chair):
    noisy = ScenarioConfig(p_change=0.2, duration_cv=0.0, p_fail=0.0, seed=0)
    with pytest.raises(StochasticScenarioError, match="p_change"):
        build_graph(chair, noisy)
    # chair actions carry their own duration noise under the default config
    with pytest.raises(StochasticScenarioError, match="duration_cv"):
        build_graph(chair, ScenarioConfig())


def test_graph_requires_undiscounted_makespan(chair, det_scenario):
    discounted = ScenarioConfig(
        p_change=0.0, duration_cv=0.0, p_fail=0.0, gamma=0.9, seed=0
    )
    with pytest.raises(ScenarioError, match="gamma"):
        build_graph(chair, discounted)


def test_node_budget_is_enforced(chair, det_scenario):
    with pytest.raises(BudgetExceededError, match="node budget"):
        build_graph(chair, det_scenario, node_budget=10)


# ---------------------------------------------------------------------------
# chair instance pins


def test_chair_graph_size_and_root_value(chair, det_scenario):
    graph = build_graph(chair, det_scenario, exact=True)
    assert len(graph) == 95
    assert graph.stats.n_nodes == 95
    assert graph.stats.n_edges > 0
    policy = solve(graph)
    assert policy.exact_root_value == Fraction(58)
    assert policy.root_value == 58.0


def test_chair_policy_always_achieves_the_root_value(chair, det_scenario):
    policy = plan(chair, det_scenario)
    env = AssemblyEnv(chair, det_scenario, human_model="uniform")
    for trial in range(100):
        env.reset(seed=trial)
        while not env.done:
            env.step(policy.action_for(env.observable()))
        assert env.now == 58


def test_plan_equals_build_then_solve(chair, det_scenario):
    assert plan(chair, det_scenario).root_value == solve(
        build_graph(chair, det_scenario)
    ).root_value


# ---------------------------------------------------------------------------
# brute-force cross-check


@pytest.mark.parametrize("human_model", ["uniform", "first"])
def test_root_value_matches_brute_force_expectimax(det_scenario, human_model):
    htm = tiny_mixed_htm()
    policy = solve(build_graph(htm, det_scenario, human_model, exact=True))
    oracle = expectimax_oracle(htm, det_scenario, human_model)
    assert policy.exact_root_value == oracle  # exact rational equality


def test_expectimax_depth_cap(det_scenario):
    with pytest.raises(BudgetExceededError, match="depth"):
        expectimax_oracle(tiny_mixed_htm(), det_scenario, depth=2)


def test_optimistic_bound_never_exceeds_the_expectation(det_scenario):
    htm = tiny_mixed_htm()
    graph = build_graph(htm, det_scenario, "uniform", exact=True)
    hopeful = solve(graph, optimistic=True)
    sober = solve(graph)
    assert hopeful.exact_root_value <= sober.exact_root_value
    # a deterministic human removes the gap entirely
    first = build_graph(htm, det_scenario, "first", exact=True)
    assert (
        solve(first, optimistic=True).exact_root_value
        == solve(first).exact_root_value
    )


# ---------------------------------------------------------------------------
# policy table


def test_tabular_policy_round_trip(tmp_path, chair, det_scenario):
    policy = plan(chair, det_scenario)
    path = tmp_path / "policy.json"
    policy.save(str(path))
    clone = TabularPolicy.load(chair, str(path))
    assert clone.table == policy.table
    assert clone.root_value == policy.root_value
    assert len(clone) == len(policy)

    env = AssemblyEnv(chair, det_scenario, human_model="uniform")
    env.reset(seed=5)
    while not env.done:
        state = env.observable()
        assert clone.action_for(state) == policy.action_for(state)
        env.step(policy.action_for(state))


def test_tabular_policy_falls_back_to_lowest_feasible(chair):
    empty = TabularPolicy(chair, table={})
    env = AssemblyEnv(chair, ScenarioConfig(duration_cv=0.0, p_fail=0.0, seed=0))
    env.reset(seed=0)
    state = env.observable()
    feasible = env.feasible_robot()
    assert empty.action_for(state) == min(feasible)
    assert empty.value_for(state) is None
