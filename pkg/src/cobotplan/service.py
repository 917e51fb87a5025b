"""Interactive sandbox service: play the human against a robot policy.

Each session wraps one environment whose human model is replaced by the
connected client.  The client resolves every human decision over HTTP;
the server advances the simulation through its events, pausing wherever
the client is entitled to act:

* **pick** — a human choice is pending (which action to start, or idle);
* **in-action** — the client's own action is running and detected, and
  enough simulated time remains to abort it, so the client may either
  continue or trigger a change of mind.

Every state mutation (pick, robot assignment, applied event) appends one
frame to the session's ordered frame log; replaying that log through the
transition core reproduces the final state exactly.  Frames stream over
a WebSocket with resume-from-sequence support, and the built UI bundle
(when present) is hosted at the root path.
"""

from __future__ import annotations

import asyncio
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import Body, FastAPI, HTTPException, WebSocket, WebSocketDisconnect
from fastapi.staticfiles import StaticFiles

from .bench import generate_random_htm
from .env import AssemblyEnv
from .errors import CobotplanError
from .htm import IDLE, Htm, chair_htm, htm_from_dict
from .intent import GoalSet, IntentFilter, goals_from_dict, intent_detection_fn, simulate_trajectory
from .policies import GraphPlanner, GreedyPolicy, QLearningPlanner, RandomPolicy
from .scenario import ScenarioConfig
from .state import EventKind, EventOutcome

AWAITING = "awaiting_human_choice"
ADVANCING = "advancing"
DONE = "done"

POLL_SECONDS = 0.05


@dataclass
class Session:
    id: str
    env: AssemblyEnv
    policy: object
    policy_name: str
    frames: List[dict] = field(default_factory=list)
    status: str = ADVANCING
    await_reason: Optional[str] = None  # "pick" | "in_action"
    lock: threading.Lock = field(default_factory=threading.Lock)
    goals: Optional[GoalSet] = None
    filter: Optional[IntentFilter] = None
    belief: Optional[List[float]] = None
    closed: bool = False


def _make_policy(name: str, options: dict):
    episodes = int(options.get("episodes", 20_000))
    node_budget = int(options.get("node_budget", 200_000))
    seed = int(options.get("seed", 0))
    if name == "greedy":
        return GreedyPolicy()
    if name == "random":
        return RandomPolicy(seed=seed)
    if name == "graph":
        return GraphPlanner(
            node_budget=node_budget,
            optimistic=bool(options.get("optimistic", False)),
        )
    if name == "rl":
        return QLearningPlanner(episodes=episodes, seed=seed)
    raise HTTPException(
        status_code=400,
        detail=f"unknown policy {name!r}; expected graph, rl, greedy or random",
    )


def _resolve_htm(ref) -> Htm:
    if ref is None or ref == "chair":
        return chair_htm()
    if isinstance(ref, dict) and "random" in ref:
        spec = ref["random"]
        try:
            n, seed = int(spec[0]), int(spec[1])
        except (TypeError, ValueError, IndexError):
            raise HTTPException(
                status_code=400, detail='"random" expects [n, seed]'
            ) from None
        return generate_random_htm(n, seed)
    if isinstance(ref, dict):
        return htm_from_dict(ref)
    raise HTTPException(
        status_code=400,
        detail=f'unknown task reference {ref!r}; expected "chair", '
        '{"random": [n, seed]} or an inline task document',
    )


def _can_change_mind(env: AssemblyEnv) -> bool:
    """True while the client's own action runs, is detected, and at least
    two simulated steps remain (a change of mind lands strictly before the
    action would complete)."""
    return (
        not env.done
        and env.detected
        and env.h_running
        and env.h_action not in (None, IDLE)
        and env.h_end is not None
        and env.h_end - env.now >= 2
    )


def _feasible_human(session: Session) -> List[int]:
    env = session.env
    if session.status != AWAITING:
        return []
    if session.await_reason == "in_action":
        return [env.h_action]
    options = list(env.pick_choices())
    # Idling is allowed only if the robot can still make progress alone;
    # otherwise both agents would wait forever.
    if env.htm.robot_choices(env.completed, env.failed, IDLE, True):
        options.append(IDLE)
    return options


def _emit(session: Session, type_: str, **extra) -> dict:
    env = session.env
    frame = {
        "seq": len(session.frames),
        "type": type_,
        "k": env.n_events,
        "dt": 0,
        "t": env.now,
        "s_a": env.htm.masks_to_task(env.completed, env.failed),
        "human_action": env.h_action,
        "human_waiting": bool(
            env.h_action not in (None, IDLE) and not env.h_running
        ),
        "robot_action": env.r_action,
        "detected": env.detected,
        "status": session.status,
        "feasible_human": _feasible_human(session),
        "can_change_mind": (
            session.status == AWAITING and session.await_reason == "in_action"
        ),
        "reward_so_far": -env.now,
        "belief": session.belief,
        "done": env.done,
    }
    if env.done:
        frame["makespan"] = env.now
    frame.update(extra)
    session.frames.append(frame)
    return frame


def _update_status(session: Session) -> None:
    env = session.env
    if env.done:
        session.status, session.await_reason = DONE, None
    elif env.pending_pick:
        session.status, session.await_reason = AWAITING, "pick"
    elif _can_change_mind(env):
        session.status, session.await_reason = AWAITING, "in_action"
    else:
        session.status, session.await_reason = ADVANCING, None


def _advance(session: Session) -> None:
    """Run the simulation until the client must act again (or the end).

    Mirrors the episodic ``step`` loop: the robot re-decides whenever it
    is free, every assignment is followed by at least one applied event,
    and each applied event may open an in-action pause where the client
    can change their mind.  Pauses are offered once per event, so a
    "continue" always makes progress.
    """
    env = session.env
    while True:
        if env.done or env.pending_pick:
            _update_status(session)
            return
        if env.r_action == IDLE:
            session.status, session.await_reason = ADVANCING, None
            action = session.policy.predict(env.observable())
            env.assign_robot(action)
            _emit(session, "assign")
        outcome = env.sample_next_event()
        env.apply_event(outcome)
        _update_status(session)
        _emit(
            session,
            "event",
            event=outcome.kind.value,
            dt=outcome.delta,
            **({"success": outcome.success} if outcome.success is not None else {}),
        )
        if session.status != ADVANCING:
            return


def _update_belief(session: Session, action: int) -> None:
    """Demo belief snapshot: filter a synthetic reach toward the picked
    action's goal (when the session has goals and the action has one)."""
    if session.filter is None or action == IDLE:
        return
    goal = session.goals.for_action(action)
    if goal is None:
        return
    centroid = tuple(
        sum(g.position[d] for g in session.goals.goals) / len(session.goals)
        for d in range(session.goals.dim)
    )
    track = simulate_trajectory(centroid, goal.id, session.goals, speed=0.5)
    session.filter.reset()
    for obs in track:
        session.filter.update(obs)
    session.belief = list(session.filter.belief_.probs)


def _reject(session: Session, message: str) -> HTTPException:
    return HTTPException(
        status_code=409,
        detail={
            "message": message,
            "status": session.status,
            "feasible_human": _feasible_human(session),
            "can_change_mind": (
                session.status == AWAITING and session.await_reason == "in_action"
            ),
        },
    )


def _apply_choice(session: Session, choice: dict) -> List[dict]:
    env = session.env
    ctype = choice.get("type")
    if session.status == DONE:
        raise _reject(session, "session is done")
    if session.status != AWAITING:
        raise _reject(session, "no human decision is pending")
    first_new = len(session.frames)

    if session.await_reason == "pick":
        if ctype == "idle":
            action = IDLE
        elif ctype == "action":
            action = choice.get("action_id")
            if not isinstance(action, int):
                raise _reject(session, 'choice {"type": "action"} needs an integer action_id')
        elif ctype == "change_of_mind":
            raise _reject(session, "no action is in progress to abandon")
        else:
            raise _reject(session, f"unknown choice type {ctype!r}")
        feasible = _feasible_human(session)
        if action not in feasible:
            raise _reject(session, f"action {action} is not startable now")
        env.apply_human_pick(action)
        _update_belief(session, action)
        _update_status(session)
        _emit(session, "pick")
    else:  # in-action pause
        if ctype == "change_of_mind":
            outcome = EventOutcome(EventKind.CHANGE_OF_MIND, 1)
            env.apply_event(outcome)
            _update_status(session)
            _emit(session, "event", event=outcome.kind.value, dt=outcome.delta)
        elif ctype == "action" and choice.get("action_id") == env.h_action:
            pass  # explicit continue: resume advancing
        elif ctype == "idle":
            raise _reject(session, "cannot idle while your action is in progress")
        else:
            raise _reject(
                session,
                "while your action runs you may continue it "
                '({"type": "action", "action_id": current}) or change your mind',
            )

    _advance(session)
    return session.frames[first_new:]


def create_app(ui_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="cobotplan sandbox")
    sessions: Dict[str, Session] = {}
    registry_lock = threading.Lock()

    def _get(session_id: str) -> Session:
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id!r}")
        return session

    @app.post("/sessions", status_code=201)
    def create_session(payload: dict = Body(default={})):
        try:
            htm = _resolve_htm(payload.get("htm"))
            scenario = ScenarioConfig.from_dict(payload.get("scenario", {}))
            goals = (
                goals_from_dict(payload["goals"]) if payload.get("goals") else None
            )
        except (CobotplanError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from None

        policy_name = payload.get("policy", "greedy")
        options = payload.get("policy_options", {})
        policy = _make_policy(policy_name, options)

        detection_fn = None
        if payload.get("intent_detection"):
            if goals is None:
                raise HTTPException(
                    status_code=400,
                    detail="intent_detection needs a goals document",
                )
            detection_fn = intent_detection_fn(goals)

        # Policies are fitted against a modeled human, then deployed
        # against the connected client (whose picks replace the model).
        try:
            fit_env = AssemblyEnv(
                htm, scenario, human_model=payload.get("human", "uniform")
            )
            policy.fit(fit_env)
        except CobotplanError as exc:
            raise HTTPException(
                status_code=400,
                detail=f"policy {policy_name!r} cannot handle this scenario: {exc}",
            ) from None

        env = AssemblyEnv(
            htm,
            scenario,
            human_model=None,
            detection_fn=detection_fn,
            record_log=True,
        )
        env.reset(seed=int(payload.get("seed", 0)))

        session = Session(
            id=uuid.uuid4().hex,
            env=env,
            policy=policy,
            policy_name=policy_name,
            goals=goals,
        )
        if goals is not None:
            session.filter = IntentFilter().fit(goals)
            session.belief = list(session.filter.belief_.probs)
        with session.lock:
            _update_status(session)
            _emit(session, "created")
            _advance(session)
        with registry_lock:
            sessions[session.id] = session
        return {
            "id": session.id,
            "status": session.status,
            "policy": session.policy_name,
            "htm": htm.to_dict(),
            "scenario": scenario.to_dict(),
            "last_seq": len(session.frames) - 1,
            "frame": session.frames[-1],
        }

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = _get(session_id)
        with session.lock:
            env = session.env
            info = {
                "id": session.id,
                "status": session.status,
                "policy": session.policy_name,
                "last_seq": len(session.frames) - 1,
                "done": env.done,
                "t": env.now,
                "n_events": env.n_events,
                "n_changes": env.n_changes,
                "n_failures": env.n_failures,
                "frame": session.frames[-1],
            }
            if env.done:
                info["makespan"] = env.now
            return info

    @app.get("/sessions/{session_id}/frames")
    def get_frames(session_id: str, from_seq: int = 0):
        session = _get(session_id)
        with session.lock:
            return {
                "frames": session.frames[max(from_seq, 0):],
                "last_seq": len(session.frames) - 1,
            }

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        session = _get(session_id)
        with session.lock:
            return {"log": [list(entry) for entry in session.env.log]}

    @app.post("/sessions/{session_id}/choice")
    def submit_choice(session_id: str, choice: dict = Body(...)):
        session = _get(session_id)
        with session.lock:
            new_frames = _apply_choice(session, choice)
            return {
                "status": session.status,
                "frames": new_frames,
                "last_seq": len(session.frames) - 1,
            }

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        session = _get(session_id)
        with registry_lock:
            sessions.pop(session_id, None)
        session.closed = True
        return None

    @app.websocket("/sessions/{session_id}/stream")
    async def stream(websocket: WebSocket, session_id: str, from_seq: int = 0):
        with registry_lock:
            session = sessions.get(session_id)
        if session is None:
            await websocket.close(code=4404)
            return
        await websocket.accept()
        sent = max(from_seq, 0)
        try:
            await websocket.send_json(
                {"type": "hello", "last_seq": len(session.frames) - 1}
            )
            while True:
                frames = session.frames[sent:]
                for frame in frames:
                    await websocket.send_json({"type": "frame", "frame": frame})
                sent += len(frames)
                if session.closed:
                    await websocket.send_json({"type": "closed"})
                    await websocket.close()
                    return
                await asyncio.sleep(POLL_SECONDS)
        except WebSocketDisconnect:
            return

    ui_path = Path(
        ui_dir
        or os.environ.get("COBOTPLAN_UI")
        or Path(__file__).resolve().parents[2] / "frontend" / "dist"
    )
    if ui_path.is_dir():
        app.mount("/", StaticFiles(directory=str(ui_path), html=True), name="ui")

    return app


def replay_frames(htm: Htm, scenario: ScenarioConfig, frames: List[dict]) -> AssemblyEnv:
    """Re-run a session's frame log through the transition core.

    Frames carry everything replay needs: picks, robot assignments, and
    event outcomes with realized timings.  Returns the environment at the
    replayed final state.
    """
    log = []
    for frame in frames:
        kind = frame["type"]
        if kind == "pick":
            log.append(("pick", frame["human_action"]))
        elif kind == "assign":
            log.append(("robot", frame["robot_action"]))
        elif kind == "event":
            log.append(("event", frame["event"], frame["dt"], frame.get("success")))
    from .env import replay_log

    return replay_log(htm, scenario, log)
