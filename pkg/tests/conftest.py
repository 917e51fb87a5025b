"""Shared fixtures: the built-in chair task, deterministic settings, and a
couple of tiny hand-built task models with known-by-construction optima."""

import pytest

from cobotplan.htm import ActionSpec, Capability, Htm, HtmNode, NodeKind, chair_htm
from cobotplan.scenario import ScenarioConfig

_verdicts = []


def verdict(label: str, ok: bool, detail: str) -> None:
    """Record and print one acceptance verdict line, failing the test if
    the check did not hold.  The lines are echoed again in the terminal
    summary so a full run ends with the complete scorecard."""
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    _verdicts.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _verdicts:
        terminalreporter.section("acceptance verdicts")
        for line in _verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def chair():
    return chair_htm()


@pytest.fixture()
def det_scenario():
    """Every stochastic knob off; fixed three-step detection latency."""
    return ScenarioConfig(
        p_change=0.0, detect_delay=3, duration_cv=0.0, p_fail=0.0, seed=0
    )


def leaf(j):
    return HtmNode(action_id=j)


def seq(*children):
    return HtmNode(kind=NodeKind.SEQUENTIAL, children=tuple(children))


def indep(*children):
    return HtmNode(kind=NodeKind.INDEPENDENT, children=tuple(children))


def par(*children):
    return HtmNode(kind=NodeKind.PARALLEL, children=tuple(children))


@pytest.fixture()
def solo_robot_htm():
    """One robot-only action of nominal duration 8."""
    return Htm(
        [ActionSpec(1, "solo", Capability.ROBOT_ONLY, 8, 8)],
        seq(leaf(1)),
    )


@pytest.fixture()
def solo_human_htm():
    """One human-only action of nominal duration 7."""
    return Htm(
        [ActionSpec(1, "solo", Capability.HUMAN_ONLY, 7, 7)],
        seq(leaf(1)),
    )


@pytest.fixture()
def joint_pair_htm():
    """A joint action (5 steps) followed by a robot-only one (4 steps)."""
    return Htm(
        [
            ActionSpec(1, "carry", Capability.JOINT, 5, 5),
            ActionSpec(2, "bolt", Capability.ROBOT_ONLY, 4, 4),
        ],
        seq(leaf(1), leaf(2)),
    )


@pytest.fixture()
def two_lane_htm():
    """Two independent actions: one human-only (6), one robot-only (9)."""
    return Htm(
        [
            ActionSpec(1, "wire", Capability.HUMAN_ONLY, 6, 6),
            ActionSpec(2, "frame", Capability.ROBOT_ONLY, 9, 9),
        ],
        indep(leaf(1), leaf(2)),
    )
