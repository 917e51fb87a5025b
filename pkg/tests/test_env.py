"""Simulator semantics: durations, events, rewards, logging and replay."""

import json
import math

import pytest

from cobotplan.env import (
    AssemblyEnv,
    duration_pmf,
    remaining_pmf,
    replay_log,
    truncated_exp_pmf,
)
from cobotplan.errors import (
    EpisodeDoneError,
    InfeasibleActionError,
    ScenarioError,
)
from cobotplan.htm import IDLE, ActionSpec, Capability, Htm
from cobotplan.policies import GreedyPolicy
from cobotplan.qlearn import encode_state
from cobotplan.scenario import ScenarioConfig
from cobotplan.state import EventKind, EventOutcome, WorldState

from conftest import indep, leaf, seq


# ---------------------------------------------------------------------------
# duration distributions


def test_duration_pmf_is_point_mass_without_noise():
    assert duration_pmf(8, 0.0) == {8: 1.0}
    with pytest.raises(ValueError, match="nominal"):
        duration_pmf(0, 0.0)


def test_duration_pmf_normalizes_and_centers():
    pmf = duration_pmf(10, 0.1)
    assert abs(sum(pmf.values()) - 1.0) < 1e-12
    assert all(k >= 1 for k in pmf)
    mean = sum(k * p for k, p in pmf.items())
    assert abs(mean - 10.0) < 0.05
    assert max(pmf, key=pmf.get) == 10


def test_duration_pmf_clamps_low_tail_at_one_step():
    pmf = duration_pmf(2, 1.0)  # sigma = 2: plenty of mass below 1
    assert abs(sum(pmf.values()) - 1.0) < 1e-12
    assert min(pmf) == 1
    assert pmf[1] > 0.3


def test_remaining_pmf_shifts_and_clamps():
    assert remaining_pmf(8, 0.0, 3) == {5: 1.0}
    # every duration the elapsed time has overtaken collapses onto one step
    pmf = remaining_pmf(10, 0.1, 12)
    assert abs(sum(pmf.values()) - 1.0) < 1e-12
    assert pmf[1] > 0.9
    with pytest.raises(ValueError, match="elapsed"):
        remaining_pmf(8, 0.1, -1)


def test_truncated_exp_pmf_matches_closed_form():
    got = truncated_exp_pmf(3, 0.5)
    weights = [math.exp(-0.5 * m) for m in (1, 2, 3)]
    total = sum(weights)
    for m, w in zip((1, 2, 3), weights):
        assert abs(got[m] - w / total) < 1e-15
    # regression pin
    assert got[1] == pytest.approx(0.5065, abs=1e-4)
    assert got[2] == pytest.approx(0.3072, abs=1e-4)
    assert got[3] == pytest.approx(0.1863, abs=1e-4)
    assert truncated_exp_pmf(0, 0.5) == {}


# ---------------------------------------------------------------------------
# episode basics


def greedy_rollout(htm, scenario, seed=0, human_model="uniform"):
    env = AssemblyEnv(htm, scenario, human_model=human_model)
    policy = GreedyPolicy().fit(env)
    env.reset(seed=seed)
    total_reward = 0.0
    transcript = []
    while not env.done:
        action = policy.action_for(env.observable())
        state, reward, done, info = env.step(action)
        total_reward += reward
        transcript.append((action, [e.to_dict() for e in info["events"]]))
    return env, total_reward, transcript


@pytest.mark.parametrize(
    "fixture_name,expected",
    [
        ("solo_robot_htm", 11),   # 3 (detect idle) + 8 (robot work)
        ("solo_human_htm", 7),    # human starts at once, finishes at 7
        ("joint_pair_htm", 15),   # 3 + 5 shared + 3 (detect idle) + 4
        ("two_lane_htm", 12),     # max(human 6, 3 + robot 9)
    ],
)
def test_pinned_makespans(request, det_scenario, fixture_name, expected):
    htm = request.getfixturevalue(fixture_name)
    env, total_reward, _ = greedy_rollout(htm, det_scenario)
    assert env.now == expected
    assert total_reward == -expected  # reward is minus elapsed time


def test_initial_observation_hides_undetected_human(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario)
    state = env.reset(seed=0)
    assert state.human_action is None
    assert not state.detected
    assert state.robot_action == IDLE
    assert env.feasible_robot() == [IDLE]  # pinned until detection


def test_detection_reveals_the_human_action(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario)
    env.reset(seed=0)
    state, reward, done, info = env.step(IDLE)
    assert [e.kind for e in info["events"]] == [EventKind.DETECTED]
    assert reward == -3.0
    assert state.detected and state.human_action == 1
    assert 2 in env.feasible_robot()


def test_step_validates_action_and_episode_state(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario)
    env.reset(seed=0)
    with pytest.raises(InfeasibleActionError, match="feasible"):
        env.step(2)  # human not detected yet: only idle is allowed
    while not env.done:
        env.step(env.feasible_robot()[-1])
    with pytest.raises(EpisodeDoneError):
        env.step(IDLE)
    assert env.feasible_robot() == []


def test_assign_robot_requires_resolved_pick(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario, human_model=None)
    env.reset(seed=0)
    assert env.pending_pick
    with pytest.raises(ScenarioError, match="pick"):
        env.assign_robot(IDLE)
    with pytest.raises(InfeasibleActionError, match="not startable"):
        env.apply_human_pick(2)  # robot-only action
    env.apply_human_pick(1)
    with pytest.raises(ScenarioError, match="no human pick"):
        env.apply_human_pick(IDLE)
    env.assign_robot(IDLE)  # legal now


# ---------------------------------------------------------------------------
# joint actions


def test_joint_action_synchronizes_both_agents(joint_pair_htm, det_scenario):
    env = AssemblyEnv(joint_pair_htm, det_scenario)
    env.reset(seed=0)
    env.step(IDLE)  # detection: human has picked the joint carry and waits
    state = env.observable()
    assert state.human_action == 1
    assert not env.h_running  # waiting for the robot to join
    assert env.feasible_robot() == [1]  # pinned to the partner action

    state, reward, done, info = env.step(1)
    kinds = [e.kind for e in info["events"]]
    # one shared completion; never a separate human-side event
    assert EventKind.ROBOT_DONE in kinds
    assert EventKind.HUMAN_DONE not in kinds
    assert state.progress[0] == 1


def test_human_repicks_after_robot_progress(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario, human_model="uniform")
    env.reset(seed=0)
    env.step(IDLE)  # detect wire
    env.step(2)     # frame outlasts wire; wire finishes inside this step
    # after the robot completes, the idle human reconsiders: nothing is
    # left, the episode is done
    assert env.done
    assert env.now == 12


# ---------------------------------------------------------------------------
# change of mind


def fickle_scenario():
    """p_change=1 always schedules an abort inside a long human action."""
    return ScenarioConfig(
        p_change=1.0, detect_delay=2, duration_cv=0.0, p_fail=0.0,
        change_rate=0.5, seed=0,
    )


def fickle_htm():
    return Htm(
        [
            ActionSpec(1, "long", Capability.HUMAN_ONLY, 12, 12),
            ActionSpec(2, "bolt", Capability.ROBOT_ONLY, 20, 20),
            ActionSpec(3, "clip", Capability.HUMAN_ONLY, 4, 4),
        ],
        indep(leaf(1), leaf(2), leaf(3)),
    )


def test_change_of_mind_aborts_both_agents():
    env = AssemblyEnv(fickle_htm(), fickle_scenario(), human_model="first")
    env.reset(seed=1)
    env.step(IDLE)  # detection of action 1
    assert env.observable().human_action == 1
    state, _, _, info = env.step(2)  # robot starts the 20-step bolt
    kinds = [e.kind for e in info["events"]]
    assert EventKind.CHANGE_OF_MIND in kinds
    assert env.n_changes >= 1
    # the abort dropped the robot's work too and reset detection
    assert state.robot_action == IDLE
    assert not state.detected
    assert state.progress == (0, 0, 0)  # no progress recorded anywhere


def test_aborted_action_excluded_from_the_next_pick():
    env = AssemblyEnv(fickle_htm(), fickle_scenario(), human_model=None)
    env.reset(seed=1)
    env.apply_human_pick(1)
    env.assign_robot(IDLE)
    env.apply_event(env.sample_next_event())  # detection at t=2
    env.assign_robot(2)
    ev = env.sample_next_event()              # abort beats both completions
    assert ev.kind is EventKind.CHANGE_OF_MIND
    env.apply_event(ev)
    assert env.last_aborted == 1
    assert env.pick_choices() == [3]  # 1 is startable but freshly aborted

    # with no alternative the exclusion is waived
    solo = Htm(
        [
            ActionSpec(1, "long", Capability.HUMAN_ONLY, 12, 12),
            ActionSpec(2, "bolt", Capability.ROBOT_ONLY, 20, 20),
        ],
        indep(leaf(1), leaf(2)),
    )
    env = AssemblyEnv(solo, fickle_scenario(), human_model=None)
    env.reset(seed=1)
    env.apply_human_pick(1)
    env.assign_robot(IDLE)
    env.apply_event(env.sample_next_event())
    env.assign_robot(2)
    ev = env.sample_next_event()
    assert ev.kind is EventKind.CHANGE_OF_MIND
    env.apply_event(ev)
    assert env.pick_choices() == [1]


# ---------------------------------------------------------------------------
# failures and recoveries


def failing_first_step_htm():
    return Htm(
        [
            ActionSpec(1, "risky", Capability.ROBOT_ONLY, 4, 4, p_fail=1.0),
            ActionSpec(2, "next", Capability.ROBOT_ONLY, 3, 3),
            ActionSpec(3, "fix risky", Capability.ROBOT_ONLY, 2, 2,
                       p_fail=0.0, recovery_of=1),
        ],
        seq(leaf(1), leaf(2)),
    )


def test_failure_marks_progress_and_opens_recovery():
    htm = failing_first_step_htm()
    scenario = ScenarioConfig(
        p_change=0.0, detect_delay=1, duration_cv=0.0, p_fail=None, seed=0
    )
    env = AssemblyEnv(htm, scenario, human_model="uniform")
    env.reset(seed=0)
    env.step(IDLE)  # detect the idling human
    state, _, _, _ = env.step(1)
    assert state.progress[0] == -1
    assert env.n_failures == 1
    feasible = env.feasible_robot()
    assert 1 not in feasible  # failed base cannot simply be retried
    assert 3 in feasible      # its recovery is open
    state, _, _, _ = env.step(3)
    assert state.progress[0] == 1  # recovery success clears the failure
    while not env.done:
        env.step(env.feasible_robot()[-1])
    assert env.observable().task_done


# ---------------------------------------------------------------------------
# determinism, logging, replay


def stochastic_scenario():
    return ScenarioConfig(
        p_change=0.25, detect_delay=2, duration_cv=0.15, p_fail=0.1,
        change_rate=0.5, seed=0,
    )


def test_fixed_seed_reproduces_the_episode(chair):
    a = greedy_rollout(chair, stochastic_scenario(), seed=7)
    b = greedy_rollout(chair, stochastic_scenario(), seed=7)
    assert a[2] == b[2]
    assert a[0].now == b[0].now
    c = greedy_rollout(chair, stochastic_scenario(), seed=8)
    assert c[2] != a[2]


def test_recorded_log_replays_to_the_same_terminal_state(chair):
    scenario = stochastic_scenario()
    env = AssemblyEnv(chair, scenario, human_model="uniform", record_log=True)
    policy = GreedyPolicy().fit(env)
    env.reset(seed=11)
    while not env.done:
        env.step(policy.action_for(env.observable()))

    # replay accepts JSON round-tripped entries (tuples become lists)
    log = json.loads(json.dumps(env.log))
    twin = replay_log(chair, scenario, log)
    assert twin.now == env.now
    assert twin.completed == env.completed
    assert twin.failed == env.failed
    assert twin.done
    assert (twin.n_events, twin.n_changes, twin.n_failures) == (
        env.n_events, env.n_changes, env.n_failures
    )
    assert twin.observable() == env.observable()


def test_replay_rejects_unknown_entries(chair, det_scenario):
    with pytest.raises(ScenarioError, match="unknown log entry"):
        replay_log(chair, det_scenario, [("teleport", 3)])


def test_event_outcome_contract():
    with pytest.raises(ValueError, match="delta"):
        EventOutcome(EventKind.DETECTED, 0)
    ev = EventOutcome(EventKind.ROBOT_DONE, 4, True)
    assert EventOutcome.from_dict(ev.to_dict()) == ev
    assert ev.to_dict() == {"kind": "robot_done", "delta": 4, "success": True}


def test_world_state_contract():
    with pytest.raises(ValueError, match="undetected"):
        WorldState((0,), 1, 0, 0, detected=False, robot_action=IDLE)
    with pytest.raises(ValueError, match="idle robot"):
        WorldState((0,), None, 0, 3, detected=False, robot_action=IDLE)
    state = WorldState((1, 0), 2, 4, 1, detected=True, robot_action=3)
    assert WorldState.from_dict(state.to_dict()) == state


def test_state_key_matches_the_learning_encoder(chair):
    env = AssemblyEnv(chair, stochastic_scenario(), human_model="uniform")
    env.reset(seed=3)
    checked = 0
    while not env.done and checked < 25:
        for bucket in (1, 2):
            assert env.state_key(bucket) == encode_state(
                chair, env.observable(), bucket
            )
        checked += 1
        env.step(env.feasible_robot()[0])


def test_snapshot_restore_round_trip(chair, det_scenario):
    env = AssemblyEnv(chair, det_scenario, human_model="uniform")
    env.reset(seed=1)
    env.step(IDLE)
    snap = env.snapshot()
    before = env.observable()
    env.step(env.feasible_robot()[-1])
    assert env.observable() != before
    env.restore(snap)
    assert env.observable() == before
    assert env.snapshot() == snap


# ---------------------------------------------------------------------------
# detection overrides


def test_detection_fn_controls_the_delay(two_lane_htm, det_scenario):
    seen = []

    def slow_detect(env, action_id):
        seen.append(action_id)
        return 5

    env = AssemblyEnv(two_lane_htm, det_scenario, detection_fn=slow_detect)
    env.reset(seed=0)
    _, reward, _, info = env.step(IDLE)
    assert info["events"][0].kind is EventKind.DETECTED
    assert reward == -5.0
    assert seen[0] == 1


def test_detection_fn_must_return_a_positive_delay(two_lane_htm, det_scenario):
    # the constructor already resolves the first pick, which begins detection
    with pytest.raises(ScenarioError, match="detection delay"):
        AssemblyEnv(two_lane_htm, det_scenario, detection_fn=lambda e, a: 0)


def test_unknown_human_model_rejected(two_lane_htm, det_scenario):
    with pytest.raises(ScenarioError, match="unknown human model"):
        AssemblyEnv(two_lane_htm, det_scenario, human_model="psychic")


# ---------------------------------------------------------------------------
# event-kind distribution at a single decision state


def test_event_probabilities_match_sampling(two_lane_htm):
    scenario = ScenarioConfig(
        p_change=0.3, detect_delay=3, duration_cv=0.0, p_fail=0.0,
        change_rate=0.5, seed=0,
    )

    def race_state():
        env = AssemblyEnv(two_lane_htm, scenario, human_model="uniform")
        return env

    env = race_state()
    env.reset(seed=0)
    env.step(IDLE)  # detection at t=3; wire has 3 steps left
    predicted = env.event_probabilities(env.observable(), 2)
    # wire (3 left) vs frame (9): the human finishes first unless a change
    # of mind fires strictly inside the remaining window
    assert predicted[EventKind.HUMAN_DONE] == pytest.approx(0.7, abs=1e-12)
    assert predicted[EventKind.CHANGE_OF_MIND] == pytest.approx(0.3, abs=1e-12)
    assert EventKind.ROBOT_DONE not in predicted

    n = 20_000
    counts = {k: 0 for k in predicted}
    for trial in range(n):
        env.reset(seed=trial)
        env.step(IDLE)
        env.assign_robot(2)
        first = env.sample_next_event()
        counts[first.kind] += 1
    for kind, p in predicted.items():
        sigma = math.sqrt(p * (1.0 - p) / n)
        assert abs(counts[kind] / n - p) < 3.0 * sigma


def test_feasible_events_views(two_lane_htm, det_scenario):
    env = AssemblyEnv(two_lane_htm, det_scenario)
    env.reset(seed=0)
    state = env.observable()
    assert env.feasible_events(state) == {EventKind.DETECTED}
    env.step(IDLE)
    state = env.observable()
    assert env.feasible_events(state) == {EventKind.HUMAN_DONE}
    done_state = WorldState((1, 1), None, 0, 0, detected=False, robot_action=IDLE)
    assert env.feasible_events(done_state) == set()
