"""Hierarchical task model: actions, tree structure, precedence, feasibility.

A task model is a tree whose leaves are the base assembly actions 1..N.
``sequential`` nodes impose left-to-right completion order between their
children's subtrees, ``independent`` children may run in any order (one at a
time per agent), and ``parallel`` children may overlap. Every base action j
has a recovery action with id j + N that becomes startable only after j
failed; completing the recovery completes j.

Feasibility is computed from bitmasks over base actions (bit j-1 for action
id j), which keeps the hot simulation path free of per-call tree walks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Iterable

from .errors import HtmError
from .state import IDLE, WorldState

HUMAN = "human"
ROBOT = "robot"


class Capability(IntEnum):
    HUMAN_ONLY = 0
    ROBOT_ONLY = 1
    EITHER = 2
    JOINT = 3


_CAP_NAMES = {c.name.lower(): c for c in Capability}

HUMAN_CAPS = (Capability.HUMAN_ONLY, Capability.EITHER, Capability.JOINT)
ROBOT_CAPS = (Capability.ROBOT_ONLY, Capability.EITHER, Capability.JOINT)


@dataclass(frozen=True)
class ActionSpec:
    """One action: id, capability, nominal durations and stochastic knobs.

    Durations are positive integer step counts. Joint actions require equal
    human and robot durations (both agents work the same interval); for
    single-agent capabilities the other agent's duration field is ignored.
    """

    id: int
    name: str
    capability: Capability
    duration_h: int
    duration_r: int
    duration_cv: float = 0.1
    p_fail: float = 0.0
    recovery_of: int | None = None

    def __post_init__(self):
        if self.duration_h < 1 or self.duration_r < 1:
            raise HtmError(f"action {self.id}: durations must be >= 1")
        if self.capability == Capability.JOINT and self.duration_h != self.duration_r:
            raise HtmError(
                f"action {self.id}: joint actions need equal agent durations "
                f"(got {self.duration_h} vs {self.duration_r})"
            )
        if not 0.0 <= self.p_fail <= 1.0:
            raise HtmError(f"action {self.id}: p_fail outside [0, 1]")
        if self.duration_cv < 0.0:
            raise HtmError(f"action {self.id}: duration_cv must be >= 0")

    @property
    def is_recovery(self) -> bool:
        return self.recovery_of is not None


class NodeKind(str, Enum):
    SEQUENTIAL = "sequential"
    INDEPENDENT = "independent"
    PARALLEL = "parallel"


@dataclass(frozen=True)
class HtmNode:
    """Tree node. Internal nodes carry a kind and children; leaves carry an
    action id."""

    kind: NodeKind | None = None
    children: tuple["HtmNode", ...] = ()
    action_id: int | None = None

    @property
    def is_leaf(self) -> bool:
        return self.action_id is not None

    def leaves(self) -> list[int]:
        if self.is_leaf:
            return [self.action_id]
        out: list[int] = []
        for c in self.children:
            out.extend(c.leaves())
        return out


class Htm:
    """Validated task model with precomputed precedence masks."""

    def __init__(self, actions: Iterable[ActionSpec], root: HtmNode):
        base = sorted((a for a in actions if not a.is_recovery), key=lambda a: a.id)
        recov = sorted((a for a in actions if a.is_recovery), key=lambda a: a.id)
        n = len(base)
        if n == 0:
            raise HtmError("task model has no base actions")
        ids = [a.id for a in base]
        if ids != list(range(1, n + 1)):
            raise HtmError(f"base action ids must be exactly 1..{n}, got {ids}")
        self.n_base = n
        self.root = root

        seen: dict[int, ActionSpec] = {}
        for a in list(base) + list(recov):
            if a.id in seen:
                raise HtmError(f"duplicate action id {a.id}")
            seen[a.id] = a

        # recovery bijection: id = base_id + n, auto-generated when absent
        by_base = {}
        for a in recov:
            if a.recovery_of not in range(1, n + 1):
                raise HtmError(f"recovery {a.id} references unknown base {a.recovery_of}")
            if a.id != a.recovery_of + n:
                raise HtmError(
                    f"recovery of action {a.recovery_of} must have id "
                    f"{a.recovery_of + n}, got {a.id}"
                )
            if a.recovery_of in by_base:
                raise HtmError(f"duplicate recovery for action {a.recovery_of}")
            by_base[a.recovery_of] = a
        for b in base:
            if b.id not in by_base:
                by_base[b.id] = ActionSpec(
                    id=b.id + n,
                    name=f"recover {b.name}",
                    capability=b.capability,
                    duration_h=b.duration_h,
                    duration_r=b.duration_r,
                    duration_cv=b.duration_cv,
                    p_fail=b.p_fail,
                    recovery_of=b.id,
                )

        self.actions: dict[int, ActionSpec] = {a.id: a for a in base}
        self.actions.update({a.id: a for a in by_base.values()})

        leaf_ids = root.leaves()
        if sorted(leaf_ids) != list(range(1, n + 1)):
            raise HtmError(
                "tree leaves must reference each base action exactly once; "
                f"got {sorted(leaf_ids)}"
            )
        for nd in self._walk(root):
            if not nd.is_leaf and nd.kind is None:
                raise HtmError("internal node without kind")

        self.full_mask = (1 << n) - 1
        self.pred_mask: dict[int, int] = {j: 0 for j in range(1, n + 1)}
        self._collect_precedence(root)

        self.human_ids = tuple(
            a.id for a in sorted(self.actions.values(), key=lambda a: a.id)
            if a.capability in HUMAN_CAPS
        )
        self.robot_ids = tuple(
            a.id for a in sorted(self.actions.values(), key=lambda a: a.id)
            if a.capability in ROBOT_CAPS
        )

    # ---- structure ------------------------------------------------------

    @staticmethod
    def _walk(node: HtmNode):
        yield node
        for c in node.children:
            yield from Htm._walk(c)

    def _collect_precedence(self, node: HtmNode) -> None:
        if node.is_leaf:
            return
        if node.kind == NodeKind.SEQUENTIAL:
            before = 0
            for child in node.children:
                child_mask = self._leaf_mask(child)
                for j in child.leaves():
                    self.pred_mask[j] |= before
                before |= child_mask
        for child in node.children:
            self._collect_precedence(child)

    def _leaf_mask(self, node: HtmNode) -> int:
        m = 0
        for j in node.leaves():
            m |= 1 << (j - 1)
        return m

    def base_of(self, action_id: int) -> int:
        """Base action id for either a base or a recovery id."""
        a = self.actions[action_id]
        return a.recovery_of if a.is_recovery else a.id

    @property
    def n_robot_actions(self) -> int:
        """Size of the robot's action alphabet including idle."""
        return len(self.robot_ids) + 1

    @property
    def n_human_actions(self) -> int:
        return len(self.human_ids) + 1

    # ---- progress helpers -----------------------------------------------

    def task_to_masks(self, progress: tuple[int, ...]) -> tuple[int, int]:
        if len(progress) != self.n_base:
            raise HtmError(f"progress vector length {len(progress)} != {self.n_base}")
        done = 0
        failed = 0
        for i, v in enumerate(progress):
            if v == 1:
                done |= 1 << i
            elif v == -1:
                failed |= 1 << i
            elif v != 0:
                raise HtmError(f"progress entries must be -1, 0 or +1; got {v}")
        return done, failed

    def masks_to_task(self, done: int, failed: int) -> tuple[int, ...]:
        out = []
        for i in range(self.n_base):
            bit = 1 << i
            out.append(1 if done & bit else (-1 if failed & bit else 0))
        return tuple(out)

    def is_complete(self, progress: tuple[int, ...]) -> bool:
        """True iff every base action is completed (+1)."""
        return all(v == 1 for v in progress)

    def precedence_satisfied(self, action_id: int, progress: tuple[int, ...]) -> bool:
        done, _ = self.task_to_masks(progress)
        return self._precedence_ok(self.base_of(action_id), done)

    def _precedence_ok(self, base_id: int, done_mask: int) -> bool:
        return self.pred_mask[base_id] & ~done_mask == 0

    # ---- feasibility cores (mask based; used by the environment) --------

    def startable(self, agent_ids: tuple[int, ...], done: int, failed: int,
                  exclude: int) -> list[int]:
        """Actions from `agent_ids` startable now: precedence satisfied,
        base not completed, recoveries only on failed bases, skipping the
        other agent's in-progress action id `exclude`."""
        out = []
        for aid in agent_ids:
            if aid == exclude:
                continue
            spec = self.actions[aid]
            base = spec.recovery_of if spec.is_recovery else aid
            bit = 1 << (base - 1)
            if done & bit:
                continue
            if spec.is_recovery:
                if not failed & bit:
                    continue
            else:
                if failed & bit:
                    continue  # failed base needs its recovery, not a retry
            if self.pred_mask[base] & ~done:
                continue
            out.append(aid)
        return out

    def robot_choices(self, done: int, failed: int, human_action: int | None,
                      detected: bool) -> list[int]:
        """Robot's feasible set at a decision point (robot free).

        Undetected human activity pins the robot to idle. A detected human
        waiting on (or running) a joint action pins the robot to exactly that
        action. Otherwise: startable robot-capable actions, excluding the
        human's in-progress action, plus idle unless the human is idle.
        """
        if done == self.full_mask:
            return []
        if not detected:
            return [IDLE]
        if human_action is not None and human_action != IDLE:
            if self.actions[human_action].capability == Capability.JOINT:
                return [human_action]
        exclude = human_action if human_action is not None else 0
        out = self.startable(self.robot_ids, done, failed, exclude)
        # joints are human-initiated: the robot never starts one unilaterally
        out = [a for a in out if self.actions[a].capability != Capability.JOINT]
        if human_action != IDLE:
            out.append(IDLE)
        return out

    def human_choices(self, done: int, failed: int, robot_action: int) -> list[int]:
        """Non-idle actions the human could start now (robot's in-progress
        action excluded). Idle availability is decided by the caller."""
        if done == self.full_mask:
            return []
        return self.startable(self.human_ids, done, failed, robot_action)

    # ---- (de)serialization ------------------------------------------------

    def to_dict(self) -> dict:
        def node_dict(nd: HtmNode):
            if nd.is_leaf:
                return {"leaf": nd.action_id}
            return {"kind": nd.kind.value, "children": [node_dict(c) for c in nd.children]}

        actions = []
        for a in sorted(self.actions.values(), key=lambda a: a.id):
            d = {
                "id": a.id,
                "name": a.name,
                "capability": a.capability.name.lower(),
                "duration_h": a.duration_h,
                "duration_r": a.duration_r,
                "duration_cv": a.duration_cv,
                "p_fail": a.p_fail,
            }
            if a.is_recovery:
                d["recovery_of"] = a.recovery_of
            actions.append(d)
        return {"actions": actions, "root": node_dict(self.root)}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def with_overrides(self, duration_cv: float | None = None,
                       p_fail: float | None = None) -> "Htm":
        """Copy with global stochastic-knob overrides applied to all actions."""
        new = []
        for a in self.actions.values():
            kw = {}
            if duration_cv is not None:
                kw["duration_cv"] = duration_cv
            if p_fail is not None:
                kw["p_fail"] = p_fail
            new.append(replace(a, **kw) if kw else a)
        return Htm(new, self.root)


def _parse_capability(v) -> Capability:
    if isinstance(v, bool):
        raise HtmError(f"bad capability {v!r}")
    if isinstance(v, int):
        try:
            return Capability(v)
        except ValueError:
            raise HtmError(f"bad capability code {v}") from None
    if isinstance(v, str) and v.lower() in _CAP_NAMES:
        return _CAP_NAMES[v.lower()]
    raise HtmError(f"bad capability {v!r}")


def _parse_node(d) -> HtmNode:
    if isinstance(d, dict) and "leaf" in d:
        return HtmNode(action_id=int(d["leaf"]))
    if not isinstance(d, dict) or "kind" not in d:
        raise HtmError(f"node must have 'kind' and 'children' or 'leaf': {d!r}")
    try:
        kind = NodeKind(d["kind"])
    except ValueError:
        raise HtmError(f"unknown node kind {d['kind']!r}") from None
    children = tuple(_parse_node(c) for c in d.get("children", ()))
    if not children:
        raise HtmError(f"{kind.value} node has no children")
    return HtmNode(kind=kind, children=children)


def htm_from_dict(doc: dict) -> Htm:
    if "actions" not in doc or "root" not in doc:
        raise HtmError("document must contain 'actions' and 'root'")
    actions = []
    for entry in doc["actions"]:
        try:
            actions.append(ActionSpec(
                id=int(entry["id"]),
                name=str(entry.get("name", f"A{entry['id']}")),
                capability=_parse_capability(entry["capability"]),
                duration_h=int(entry.get("duration_h", entry.get("duration_r", 0))),
                duration_r=int(entry.get("duration_r", entry.get("duration_h", 0))),
                duration_cv=float(entry.get("duration_cv", 0.1)),
                p_fail=float(entry.get("p_fail", 0.0)),
                recovery_of=(int(entry["recovery_of"]) if entry.get("recovery_of")
                             is not None else None),
            ))
        except KeyError as e:
            raise HtmError(f"action entry missing field {e}") from None
    return Htm(actions, _parse_node(doc["root"]))


def parse_htm(text: str) -> Htm:
    """Parse a task model document; syntax errors report line/column."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise HtmError(f"syntax error at line {e.lineno} column {e.colno}: {e.msg}") from None
    return htm_from_dict(doc)


def load_htm(path: str) -> Htm:
    with open(path, "r", encoding="utf-8") as f:
        return parse_htm(f.read())


def save_htm(htm: Htm, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(htm.dumps() + "\n")


def chair_htm() -> Htm:
    """Built-in chair assembly: four rails (either agent), a joint carry of
    the assembled side, three robot-placed screws, human screwing, and the
    human seating step."""
    acts = [
        ActionSpec(1, "rail 1", Capability.EITHER, 6, 6),
        ActionSpec(2, "rail 2", Capability.EITHER, 6, 6),
        ActionSpec(3, "rail 3", Capability.EITHER, 6, 6),
        ActionSpec(4, "rail 4", Capability.EITHER, 6, 6),
        ActionSpec(5, "carry left side", Capability.JOINT, 8, 8),
        ActionSpec(6, "place screw 1", Capability.ROBOT_ONLY, 4, 4),
        ActionSpec(7, "place screw 2", Capability.ROBOT_ONLY, 4, 4),
        ActionSpec(8, "place screw 3", Capability.ROBOT_ONLY, 4, 4),
        ActionSpec(9, "tighten screws", Capability.HUMAN_ONLY, 10, 10),
        ActionSpec(10, "place seat", Capability.HUMAN_ONLY, 6, 6),
    ]
    leaf = lambda j: HtmNode(action_id=j)  # noqa: E731
    root = HtmNode(kind=NodeKind.SEQUENTIAL, children=(
        HtmNode(kind=NodeKind.INDEPENDENT, children=tuple(leaf(j) for j in (1, 2, 3, 4))),
        leaf(5),
        HtmNode(kind=NodeKind.INDEPENDENT, children=tuple(leaf(j) for j in (6, 7, 8))),
        leaf(9),
        leaf(10),
    ))
    return Htm(acts, root)


# ---- WorldState-level API -------------------------------------------------

def feasible_actions(htm: Htm, state: WorldState, agent: str) -> list[int]:
    """Actions `agent` may start in `state` (idle included where legal).

    For the human the set lists startable non-idle actions plus idle; a human
    already engaged in an action gets an empty set (nothing new can start).
    """
    done, failed = htm.task_to_masks(state.progress)
    if agent == ROBOT:
        return htm.robot_choices(done, failed, state.human_action, state.detected)
    if agent != HUMAN:
        raise ValueError(f"unknown agent {agent!r}")
    if state.human_action not in (None, IDLE):
        return []
    out = htm.human_choices(done, failed, state.robot_action)
    out.append(IDLE)
    return out
