"""Observable world state and event records for the assembly environment.

The task progress vector uses +1 for completed, 0 for not attempted (or
aborted mid-flight), and -1 for failed. ``human_action`` is None while the
robot has not yet detected what the human started, 0 (IDLE) when the human
is observed doing nothing, and an action id otherwise. A human who selected
a joint action that has not started yet shows up as ``human_action == j``
with ``robot_action != j``: the waiting-partner condition is derivable and
needs no extra field.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

IDLE = 0


class EventKind(str, Enum):
    HUMAN_DONE = "human_done"
    ROBOT_DONE = "robot_done"
    DETECTED = "detected"
    CHANGE_OF_MIND = "change_of_mind"


@dataclass(frozen=True)
class EventOutcome:
    """One applied (or enumerated) event: its kind, the number of elapsed
    steps since the previous event, and the success flag for completion
    events (None for detection / change of mind)."""

    kind: EventKind
    delta: int
    success: bool | None = None

    def __post_init__(self):
        if self.delta < 1:
            raise ValueError(f"event delta must be >= 1, got {self.delta}")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "delta": self.delta}
        if self.success is not None:
            d["success"] = self.success
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EventOutcome":
        return cls(EventKind(d["kind"]), int(d["delta"]), d.get("success"))


@dataclass(frozen=True)
class WorldState:
    """Robot-observable snapshot of the collaboration."""

    progress: tuple[int, ...]
    human_action: int | None
    human_elapsed: int
    robot_elapsed: int
    detected: bool
    robot_action: int

    def __post_init__(self):
        if not self.detected and self.human_action is not None:
            raise ValueError("undetected state must not expose the human action")
        if self.robot_action == IDLE and self.robot_elapsed != 0:
            raise ValueError("idle robot cannot have elapsed action time")

    @property
    def task_done(self) -> bool:
        return all(v == 1 for v in self.progress)

    def to_dict(self) -> dict:
        return {
            "s_a": list(self.progress),
            "human_action": self.human_action,
            "t_h": self.human_elapsed,
            "t_r": self.robot_elapsed,
            "detected": self.detected,
            "robot_action": self.robot_action,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorldState":
        return cls(
            progress=tuple(int(v) for v in d["s_a"]),
            human_action=d["human_action"],
            human_elapsed=int(d["t_h"]),
            robot_elapsed=int(d["t_r"]),
            detected=bool(d["detected"]),
            robot_action=int(d["robot_action"]),
        )
