#!/usr/bin/env python3
"""Record the scripted chair session the UI tests replay.

Drives the sandbox service in-process through a fixed script — the human
places two rails, abandons one mid-action (change of mind), and initiates
the joint carry — then verifies the captured frame log replays through the
simulation core to the same terminal state before freezing everything to
fixtures/chair-session.json.  Rerunning the script reproduces the file
byte for byte.
"""

import json
import sys
from pathlib import Path

from starlette.testclient import TestClient

from cobotplan.htm import chair_htm
from cobotplan.scenario import ScenarioConfig
from cobotplan.service import create_app, replay_frames

SCENARIO = {
    "p_change": 0.0,
    "detect_delay": 3,
    "duration_cv": 0.0,
    "p_fail": 0.0,
    "seed": 0,
}
CREATE = {"htm": "chair", "policy": "greedy", "seed": 0, "scenario": SCENARIO}
IDLE = 0


def drive(client):
    """Scripted run; returns (created, choices) with every accepted choice."""
    created = client.post("/sessions", json=CREATE).json()
    sid = created["id"]
    frame = created["frame"]
    choices = []
    changed_mind = False

    for _ in range(500):
        if frame["done"]:
            break
        assert frame["status"] == "awaiting_human_choice", frame
        if frame["can_change_mind"] and not changed_mind:
            choice = {"type": "change_of_mind"}
            changed_mind = True
        elif frame["can_change_mind"]:
            choice = {"type": "action", "action_id": frame["human_action"]}
        else:
            feasible = frame["feasible_human"]
            real = [a for a in feasible if a != IDLE]
            choice = {"type": "action", "action_id": min(real)} if real else {
                "type": "idle"
            }
        resp = client.post(f"/sessions/{sid}/choice", json=choice)
        assert resp.status_code == 200, resp.text
        body = resp.json()
        assert body["frames"], "an accepted choice must produce frames"
        choices.append({"at_seq": frame["seq"], "choice": choice})
        frame = body["frames"][-1]
    else:
        raise AssertionError("script did not finish in 500 choices")
    return created, choices


def human_rail_completions(frames):
    """Rails (actions 1-4) whose completion event was the human's."""
    done = []
    for prev, cur in zip(frames, frames[1:]):
        if cur.get("event") != "human_done":
            continue
        flipped = [
            i + 1
            for i, (a, b) in enumerate(zip(prev["s_a"], cur["s_a"]))
            if a != b and b == 1
        ]
        done.extend(a for a in flipped if a in (1, 2, 3, 4))
    return done


def main() -> int:
    client = TestClient(create_app(ui_dir="/nonexistent"))
    created, choices = drive(client)
    sid = created["id"]

    frames = client.get(f"/sessions/{sid}/frames").json()["frames"]
    final = frames[-1]

    # the narrative the fixture must contain
    assert final["done"] and all(v == 1 for v in final["s_a"])
    rails = human_rail_completions(frames)
    assert len(rails) >= 2, f"human placed rails {rails}, need two"
    assert sum(1 for f in frames if f.get("event") == "change_of_mind") == 1
    assert any(
        f["human_action"] == 5 and f["robot_action"] == 5 for f in frames
    ), "joint carry never showed both agents engaged"

    # the frame log replays through the simulation core bit for bit
    replayed = replay_frames(chair_htm(), ScenarioConfig(**SCENARIO), frames)
    assert replayed.done and replayed.now == final["makespan"]
    replayed_s_a = list(
        replayed.htm.masks_to_task(replayed.completed, replayed.failed)
    )
    assert replayed_s_a == final["s_a"]

    fixture = {
        "comment": (
            "Scripted chair session: two rails placed by the human, one "
            "change of mind, joint carry initiated; frame log verified to "
            "replay through the simulation core to the recorded terminal "
            "state at generation time."
        ),
        "create_request": CREATE,
        "task": created["htm"],
        "choices": choices,
        "frames": frames,
        "human_rails": rails,
        "replayed_terminal": {
            "makespan": replayed.now,
            "s_a": replayed_s_a,
            "n_events": replayed.n_events,
            "n_changes": replayed.n_changes,
            "n_failures": replayed.n_failures,
        },
    }
    out = Path(__file__).resolve().parents[1] / "fixtures" / "chair-session.json"
    out.write_text(json.dumps(fixture, indent=1, sort_keys=True) + "\n")
    print(
        f"recorded {len(frames)} frames, {len(choices)} choices, "
        f"makespan {final['makespan']} -> {out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
