"""Event-driven simulation of a human-robot assembly episode.

The environment advances in whole time steps but only materialises the
steps at which something happens: an agent finishes an action, the
perception system commits to a detection, or the human abandons what they
were doing.  Between robot decision points the simulation free-runs.

Internally the episode is tracked with absolute times (start/end steps for
each running action, the pending detection step, the step at which an
armed change of mind would fire).  The observable :class:`WorldState`
exposed to policies carries only elapsed counters, mirroring what a real
executive could know.

Two layers make replay possible:

* ``sample_next_event`` consumes randomness and returns an
  :class:`EventOutcome`;
* ``apply_event`` applies an outcome deterministically.

Re-running a recorded sequence of picks, assignments and outcomes through
the apply layer with ``sample=False`` reproduces the episode bit for bit.
"""

from __future__ import annotations

import math
import random
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .errors import EpisodeDoneError, InfeasibleActionError, ScenarioError
from .htm import Capability, Htm, IDLE
from .scenario import ScenarioConfig
from .state import EventKind, EventOutcome, WorldState

# Event selection breaks time ties in favour of the robot; a change of
# mind fires only on strict inequality.
_TIE_ORDER = {
    EventKind.ROBOT_DONE: 0,
    EventKind.HUMAN_DONE: 1,
    EventKind.CHANGE_OF_MIND: 2,
}

_SQRT2 = math.sqrt(2.0)


def _norm_cdf(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / _SQRT2))


def duration_pmf(nominal: int, cv: float) -> Dict[int, float]:
    """Distribution of an action duration in whole steps.

    A normal with mean ``nominal`` and standard deviation ``cv * nominal``
    is rounded to the nearest integer and clamped below at 1.  With zero
    noise the pmf is a point mass at the nominal duration.
    """
    if nominal < 1:
        raise ValueError(f"nominal duration must be >= 1, got {nominal}")
    if cv <= 0.0:
        return {int(nominal): 1.0}
    sigma = cv * nominal
    hi = int(math.ceil(nominal + 8.0 * sigma))
    pmf: Dict[int, float] = {}
    p1 = _norm_cdf((1.5 - nominal) / sigma)
    if p1 > 0.0:
        pmf[1] = p1
    for k in range(2, hi):
        p = _norm_cdf((k + 0.5 - nominal) / sigma) - _norm_cdf((k - 0.5 - nominal) / sigma)
        if p > 0.0:
            pmf[k] = p
    tail = 1.0 - _norm_cdf((hi - 0.5 - nominal) / sigma)
    if tail > 0.0:
        pmf[hi] = pmf.get(hi, 0.0) + tail
    total = sum(pmf.values())
    return {k: p / total for k, p in sorted(pmf.items())}


def remaining_pmf(nominal: int, cv: float, elapsed: int) -> Dict[int, float]:
    """Distribution of steps still to run after ``elapsed`` steps in progress.

    The duration draw is fixed at the start of the action; conditioning on
    survival is deliberately not applied.  Mass on durations the elapsed
    time has already passed is clamped to a remaining time of one step,
    matching how the simulator resolves completions that were hidden
    behind a detection window.
    """
    if elapsed < 0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    base = duration_pmf(nominal, cv)
    out: Dict[int, float] = {}
    for k, p in base.items():
        rem = k - elapsed
        if rem < 1:
            rem = 1
        out[rem] = out.get(rem, 0.0) + p
    return dict(sorted(out.items()))


def truncated_exp_pmf(span: int, rate: float) -> Dict[int, float]:
    """Pmf proportional to exp(-rate*m) on {1, ..., span}."""
    if span < 1:
        return {}
    ws = [math.exp(-rate * m) for m in range(1, span + 1)]
    total = sum(ws)
    return {m: w / total for m, w in zip(range(1, span + 1), ws)}


def uniform_human(env: "AssemblyEnv", choices: Sequence[int]) -> int:
    """Pick uniformly among startable actions; idle only when nothing is."""
    if not choices:
        return IDLE
    return choices[env.rng.randrange(len(choices))]


def first_human(env: "AssemblyEnv", choices: Sequence[int]) -> int:
    """Always pick the lowest startable action id; idle when none."""
    return choices[0] if choices else IDLE


HUMAN_MODELS: Dict[str, Callable[["AssemblyEnv", Sequence[int]], int]] = {
    "uniform": uniform_human,
    "first": first_human,
}


def pick_distribution(model: str, choices: Sequence[int]) -> List[Tuple[int, "Fraction"]]:
    """Chance distribution a named human model induces over a pick.

    Used by planners that expand human choices as chance branches; exact
    rational weights so downstream expectations can be computed exactly.
    """
    from fractions import Fraction

    if not choices:
        return [(IDLE, Fraction(1))]
    if model == "uniform":
        w = Fraction(1, len(choices))
        return [(c, w) for c in choices]
    if model == "first":
        return [(choices[0], Fraction(1))]
    raise ScenarioError(
        f"unknown human model {model!r}; expected one of {sorted(HUMAN_MODELS)}"
    )


class AssemblyEnv:
    """Discrete event simulator for one assembly task.

    Parameters
    ----------
    htm : Htm
        Task model, including recovery actions.
    scenario : ScenarioConfig
        Stochasticity knobs and the base seed.
    human_model : str, callable or None
        Policy used to resolve human picks.  ``None`` leaves picks to the
        caller via :meth:`apply_human_pick` (used by the sandbox service
        and by log replay).
    detection_fn : callable, optional
        Override for the detection latency: called with ``(env, action_id)``
        when the human starts an action, must return the delay in steps
        (>= 1).  Defaults to the scenario's fixed ``detect_delay``.
    record_log : bool
        Keep a structured log of picks, assignments and event outcomes
        sufficient to replay the episode.
    """

    def __init__(
        self,
        htm: Htm,
        scenario: Optional[ScenarioConfig] = None,
        human_model: object = "uniform",
        detection_fn: Optional[Callable[["AssemblyEnv", int], int]] = None,
        record_log: bool = False,
    ):
        self.htm = htm
        self.scenario = scenario if scenario is not None else ScenarioConfig()
        if isinstance(human_model, str):
            try:
                human_model = HUMAN_MODELS[human_model]
            except KeyError:
                raise ScenarioError(
                    f"unknown human model {human_model!r}; "
                    f"expected one of {sorted(HUMAN_MODELS)}"
                ) from None
        self._human_model = human_model
        self._detection_fn = detection_fn
        self.record_log = record_log

        sc = self.scenario
        self._dur_h: Dict[int, int] = {}
        self._dur_r: Dict[int, int] = {}
        self._cv: Dict[int, float] = {}
        self._p_fail: Dict[int, float] = {}
        self._cap: Dict[int, Capability] = {}
        for spec in htm.actions.values():
            self._dur_h[spec.id] = spec.duration_h
            self._dur_r[spec.id] = spec.duration_r
            self._cv[spec.id] = sc.duration_cv if sc.duration_cv is not None else spec.duration_cv
            self._p_fail[spec.id] = sc.p_fail if sc.p_fail is not None else spec.p_fail
            self._cap[spec.id] = spec.capability

        self._truncexp_cache: Dict[int, List[float]] = {}
        self.rng = random.Random(sc.seed)
        self._initialised = False
        self.reset()

    # ------------------------------------------------------------------
    # episode lifecycle

    def reset(self, seed: Optional[int] = None) -> WorldState:
        """Start a fresh episode; with ``seed`` also reseed the stream."""
        if seed is not None:
            self.rng = random.Random(seed)
        self.now = 0
        self.completed = 0
        self.failed = 0
        self.done = False
        # human bookkeeping; action None means "between actions"
        self.h_action: Optional[int] = None
        self.h_running = False
        self.h_start = 0
        self.h_end: Optional[int] = None
        self.detected = False
        self.d_at: Optional[int] = None
        self.c_at: Optional[int] = None
        self.last_aborted: Optional[int] = None
        # robot bookkeeping
        self.r_action = IDLE
        self.r_start = 0
        self.r_end: Optional[int] = None
        # counters
        self.n_events = 0
        self.n_changes = 0
        self.n_failures = 0
        self.pending_pick = True
        self.log: List[tuple] = [] if self.record_log else []
        self._initialised = True
        self._resolve_pick()
        return self.observable()

    def step(self, action: int) -> Tuple[WorldState, float, bool, dict]:
        """Assign ``action`` to the robot and run until the next decision.

        Advances through events until the robot is free again (or the task
        completes); an idle assignment advances exactly one event.  Returns
        ``(state, reward, done, info)`` with reward equal to minus the
        elapsed steps.
        """
        self.assign_robot(action)
        elapsed = 0
        events: List[EventOutcome] = []
        while True:
            ev = self.sample_next_event()
            self.apply_event(ev)
            elapsed += ev.delta
            events.append(ev)
            if self.done or self.r_action == IDLE:
                break
        info = {"events": events, "t": self.now}
        return self.observable(), -float(elapsed), self.done, info

    # ------------------------------------------------------------------
    # fine-grained transition layer (used by step, the service and replay)

    def apply_human_pick(self, action: int, sample: bool = True) -> None:
        """Resolve a pending human pick.

        ``action`` may be idle; a non-idle action must be startable by the
        human.  With ``sample=False`` no randomness is consumed (durations
        and change-of-mind arming are skipped), which is what log replay
        uses: recorded outcomes carry the realised timings.
        """
        if not self.pending_pick:
            raise ScenarioError("no human pick is pending")
        if action != IDLE:
            options = self.htm.human_choices(self.completed, self.failed, self.r_action)
            if action not in options:
                raise InfeasibleActionError(
                    f"human action {action} not startable; startable: {options}"
                )
        was_idle_detected = self.h_action == IDLE and self.detected
        self.pending_pick = False
        self.last_aborted = None
        self.h_action = action
        self.h_start = self.now
        self.h_running = False
        self.h_end = None
        self.c_at = None
        if self.record_log:
            self.log.append(("pick", action))
        if action == IDLE:
            # Re-picking idle reveals nothing new, so detection carries over.
            if not was_idle_detected:
                self._begin_detection(action, sample)
            return
        self._begin_detection(action, sample)
        if self._cap[action] == Capability.JOINT:
            return  # waits for the robot to join
        self.h_running = True
        if sample:
            self.h_end = self.now + self._draw_duration(self._dur_h[action], self._cv[action])
            assert self.d_at is not None
            self._arm_change(self.d_at)

    def _begin_detection(self, action: int, sample: bool) -> None:
        self.detected = False
        if sample and self._detection_fn is not None:
            delay = int(self._detection_fn(self, action))
            if delay < 1:
                raise ScenarioError(f"detection delay must be >= 1, got {delay}")
        else:
            delay = self.scenario.detect_delay
        self.d_at = self.now + delay

    def _arm_change(self, earliest: int) -> None:
        """Maybe schedule a change of mind strictly inside (earliest, h_end)."""
        self.c_at = None
        p = self.scenario.p_change
        if p <= 0.0 or not self.h_running or self.h_end is None:
            return
        span = self.h_end - earliest - 1
        if span < 1:
            return
        if self.rng.random() >= p:
            return
        self.c_at = earliest + self._draw_truncexp(span)

    def assign_robot(self, action: int) -> None:
        """Validate and start a robot assignment without advancing time.

        The fine-grained counterpart of :meth:`step`: callers that need to
        observe every event (trace export, the sandbox service) assign the
        robot here and then alternate :meth:`sample_next_event` /
        :meth:`apply_event` themselves.
        """
        if self.done:
            raise EpisodeDoneError("episode is over; call reset() first")
        if self.pending_pick:
            raise ScenarioError("human pick is unresolved; call apply_human_pick()")
        feasible = self.feasible_robot()
        if action not in feasible:
            raise InfeasibleActionError(
                f"robot action {action} infeasible here; feasible: {feasible}"
            )
        self._assign_robot(action)

    def _assign_robot(self, action: int, sample: bool = True) -> None:
        if self.record_log:
            self.log.append(("robot", action))
        if action == IDLE:
            self.r_action = IDLE
            self.r_start = self.now
            self.r_end = None
            return
        self.r_action = action
        self.r_start = self.now
        if sample:
            self.r_end = self.now + self._draw_duration(self._dur_r[action], self._cv[action])
        else:
            self.r_end = None
        if self.h_action == action:
            # Joint action begins: one shared clock for both agents.
            self.h_running = True
            self.h_start = self.now
            self.h_end = self.r_end
            if sample:
                self._arm_change(self.now)

    def sample_next_event(self) -> EventOutcome:
        """Draw the next event under the current assignments."""
        if self.done:
            raise EpisodeDoneError("episode is over")
        if self.pending_pick:
            raise ScenarioError("human pick is unresolved")
        if not self.detected:
            assert self.d_at is not None
            delta = self.d_at - self.now
            if delta < 1:
                delta = 1
            return EventOutcome(EventKind.DETECTED, delta)
        candidates: List[Tuple[int, int, EventKind]] = []
        joint_running = self.h_running and self.h_action == self.r_action
        if self.r_action != IDLE and self.r_end is not None:
            dt = self.r_end - self.now
            candidates.append((max(dt, 1), 0, EventKind.ROBOT_DONE))
        if self.h_running and not joint_running and self.h_end is not None:
            dt = self.h_end - self.now
            candidates.append((max(dt, 1), 1, EventKind.HUMAN_DONE))
        if self.c_at is not None and self.h_running:
            dt = self.c_at - self.now
            assert dt >= 1, "armed change of mind must lie in the future"
            candidates.append((dt, 2, EventKind.CHANGE_OF_MIND))
        if not candidates:
            raise ScenarioError(
                "no event can occur: both agents are idle or waiting"
            )
        delta, _, kind = min(candidates)
        if kind is EventKind.ROBOT_DONE:
            return EventOutcome(kind, delta, self._draw_success(self.r_action))
        if kind is EventKind.HUMAN_DONE:
            assert self.h_action is not None
            return EventOutcome(kind, delta, self._draw_success(self.h_action))
        return EventOutcome(kind, delta)

    def apply_event(self, outcome: EventOutcome, sample: bool = True) -> None:
        """Apply one event outcome; deterministic given the outcome.

        ``sample`` gates only the bookkeeping draws that schedule *future*
        randomness (re-arming a change of mind); replay passes False.
        """
        if self.done:
            raise EpisodeDoneError("episode is over")
        self.now += outcome.delta
        self.n_events += 1
        if self.record_log:
            self.log.append(("event", outcome.kind.value, outcome.delta, outcome.success))
        kind = outcome.kind
        if kind is EventKind.DETECTED:
            if self.detected:
                raise ScenarioError("detection event while already detected")
            self.detected = True
            self.d_at = None
        elif kind is EventKind.ROBOT_DONE:
            if self.r_action == IDLE:
                raise ScenarioError("robot completion while robot is idle")
            acted = self.r_action
            was_joint = self.h_running and self.h_action == acted
            self._apply_completion(acted, outcome.success)
            self.r_action = IDLE
            self.r_start = self.now
            self.r_end = None
            if was_joint:
                self._release_human()
            elif self.h_action == IDLE:
                # Robot progress may unblock the human; they reconsider.
                self.pending_pick = True
            elif self.h_running and sample:
                # Fresh race between the ongoing human action and whatever
                # the robot starts next.
                self._arm_change(self.now)
        elif kind is EventKind.HUMAN_DONE:
            if not self.h_running or self.h_action in (None, IDLE):
                raise ScenarioError("human completion while human is not acting")
            self._apply_completion(self.h_action, outcome.success)
            self._release_human()
        elif kind is EventKind.CHANGE_OF_MIND:
            if not self.h_running or self.h_action in (None, IDLE):
                raise ScenarioError("change of mind while human is not acting")
            self.n_changes += 1
            aborted = self.h_action
            # Both agents drop their work; no progress is recorded.
            self.r_action = IDLE
            self.r_start = self.now
            self.r_end = None
            self._release_human()
            self.last_aborted = aborted
        else:  # pragma: no cover - EventKind is exhaustive
            raise ScenarioError(f"unknown event kind {kind!r}")
        if self.completed == self.htm.full_mask:
            self.done = True
            self.pending_pick = False
        elif self.pending_pick:
            self._resolve_pick()

    # ------------------------------------------------------------------
    # internal helpers

    def _apply_completion(self, action: int, success: Optional[bool]) -> None:
        if success is None:
            raise ScenarioError("completion outcome must record success or failure")
        base = self.htm.base_of(action)
        bit = 1 << (base - 1)
        if success:
            self.completed |= bit
            self.failed &= ~bit
        else:
            self.failed |= bit
            self.n_failures += 1

    def _release_human(self) -> None:
        self.h_action = None
        self.h_running = False
        self.h_end = None
        self.c_at = None
        self.detected = False
        self.d_at = None
        self.pending_pick = True

    def _resolve_pick(self) -> None:
        if self._human_model is None or self.done:
            return
        while self.pending_pick:
            choices = self.pick_choices()
            action = self._human_model(self, choices)
            self.apply_human_pick(action)

    def pick_choices(self) -> List[int]:
        """Actions the human would consider for a pending pick.

        Right after a change of mind the aborted action is excluded unless
        it is the only startable one.
        """
        options = self.htm.human_choices(self.completed, self.failed, self.r_action)
        if self.last_aborted is not None and self.last_aborted in options and len(options) > 1:
            options = [a for a in options if a != self.last_aborted]
        return options

    def _draw_duration(self, nominal: int, cv: float) -> int:
        if cv <= 0.0:
            return nominal
        d = int(math.floor(self.rng.gauss(nominal, cv * nominal) + 0.5))
        return d if d > 1 else 1

    def _draw_success(self, action: int) -> bool:
        p = self._p_fail[action]
        if p <= 0.0:
            return True
        return self.rng.random() >= p

    def _truncexp_weights(self, span: int) -> List[float]:
        ws = self._truncexp_cache.get(span)
        if ws is None:
            rate = self.scenario.change_rate
            ws = []
            acc = 0.0
            for m in range(1, span + 1):
                acc += math.exp(-rate * m)
                ws.append(acc)
            self._truncexp_cache[span] = ws
        return ws

    def _draw_truncexp(self, span: int) -> int:
        if span == 1:
            return 1
        cum = self._truncexp_weights(span)
        u = self.rng.random() * cum[-1]
        for m, c in enumerate(cum, start=1):
            if u <= c:
                return m
        return span

    # ------------------------------------------------------------------
    # observation and feasibility

    def observable(self) -> WorldState:
        """Project the internal state onto what the executive can see."""
        return WorldState(
            progress=self.htm.masks_to_task(self.completed, self.failed),
            human_action=self.h_action if self.detected else None,
            human_elapsed=self.now - self.h_start,
            robot_elapsed=(self.now - self.r_start) if self.r_action != IDLE else 0,
            detected=self.detected,
            robot_action=self.r_action,
        )

    def feasible_robot(self) -> List[int]:
        """Robot actions allowed at the current state."""
        if self.done:
            return []
        observed = self.h_action if self.detected else None
        return self.htm.robot_choices(self.completed, self.failed, observed, self.detected)

    def state_key(self, bucket: int = 1) -> tuple:
        """Hashable all-int key for tabular learners (fast path mirroring
        the encoder in the learning module)."""
        h = self.h_action if self.detected else -1
        if h is None:  # pragma: no cover - detected implies a known action
            h = -1
        th = (self.now - self.h_start) // bucket
        tr = ((self.now - self.r_start) // bucket) if self.r_action != IDLE else 0
        return (self.completed, self.failed, h, th, tr, 1 if self.detected else 0, self.r_action)

    def snapshot(self) -> tuple:
        """Full internal state, for search-style expansion with restore."""
        return (
            self.now, self.completed, self.failed, self.done,
            self.h_action, self.h_running, self.h_start, self.h_end,
            self.detected, self.d_at, self.c_at, self.last_aborted,
            self.r_action, self.r_start, self.r_end,
            self.n_events, self.n_changes, self.n_failures, self.pending_pick,
        )

    def restore(self, snap: tuple) -> None:
        (
            self.now, self.completed, self.failed, self.done,
            self.h_action, self.h_running, self.h_start, self.h_end,
            self.detected, self.d_at, self.c_at, self.last_aborted,
            self.r_action, self.r_start, self.r_end,
            self.n_events, self.n_changes, self.n_failures, self.pending_pick,
        ) = snap

    # ------------------------------------------------------------------
    # distributional views (analysis, planners, calibration tests)

    def feasible_events(self, state: WorldState) -> set:
        """Event kinds that can occur next from an observable state.

        At states where both agents are idle or the human is waiting for
        the robot to join, no event can occur until the robot is assigned;
        the set is empty there.
        """
        if state.task_done:
            return set()
        if not state.detected:
            return {EventKind.DETECTED}
        out = set()
        h = state.human_action
        joint_running = (
            h not in (None, IDLE)
            and state.robot_action == h
        )
        waiting = (
            h not in (None, IDLE)
            and self._cap[h] == Capability.JOINT
            and state.robot_action != h
        )
        if state.robot_action != IDLE:
            out.add(EventKind.ROBOT_DONE)
        if h not in (None, IDLE) and not waiting and not joint_running:
            out.add(EventKind.HUMAN_DONE)
        if h not in (None, IDLE) and not waiting and self.scenario.p_change > 0.0:
            out.add(EventKind.CHANGE_OF_MIND)
        return out

    def lifespan_pmf(self, state: WorldState, robot_action: int, kind: EventKind) -> Dict[int, float]:
        """Remaining-time distribution for one event kind, viewed from ``state``.

        ``robot_action`` is the robot action under consideration; for an
        in-progress action pass ``state.robot_action``.
        """
        if kind is EventKind.DETECTED:
            if state.detected:
                raise ScenarioError("already detected; no detection pending")
            delta = self.scenario.detect_delay - state.human_elapsed
            return {max(delta, 1): 1.0}
        h = state.human_action
        if kind is EventKind.HUMAN_DONE:
            if h in (None, IDLE):
                raise ScenarioError("no human action in progress")
            return remaining_pmf(self._dur_h[h], self._cv[h], state.human_elapsed)
        if kind is EventKind.ROBOT_DONE:
            if robot_action == IDLE:
                raise ScenarioError("robot is idle; no completion pending")
            elapsed = state.robot_elapsed if robot_action == state.robot_action else 0
            if h == robot_action and self._cap.get(h) == Capability.JOINT:
                # Shared clock: elapsed follows the human side of the joint work.
                elapsed = state.human_elapsed if robot_action == state.robot_action else 0
            return remaining_pmf(self._dur_r[robot_action], self._cv[robot_action], elapsed)
        if kind is EventKind.CHANGE_OF_MIND:
            if h in (None, IDLE):
                raise ScenarioError("no human action to abandon")
            if self.scenario.p_change <= 0.0:
                raise ScenarioError("changes of mind are disabled in this scenario")
            rate = self.scenario.change_rate
            if h == robot_action or self._cap[h] == Capability.JOINT:
                horizon = remaining_pmf(self._dur_r[h], self._cv[h], state.human_elapsed)
            else:
                horizon = remaining_pmf(self._dur_h[h], self._cv[h], state.human_elapsed)
            mix: Dict[int, float] = {}
            weight = 0.0
            for m, pm in horizon.items():
                inner = truncated_exp_pmf(m - 1, rate)
                if not inner:
                    continue
                weight += pm
                for c, pc in inner.items():
                    mix[c] = mix.get(c, 0.0) + pm * pc
            if weight <= 0.0:
                return {}
            return {c: p / weight for c, p in sorted(mix.items())}
        raise ScenarioError(f"unknown event kind {kind!r}")

    def event_probabilities(self, state: WorldState, robot_action: int) -> Dict[EventKind, float]:
        """Chance of each event kind winning, if the robot runs ``robot_action``.

        Exact enumeration over the joint duration distributions under the
        simulator's tie rules (robot wins ties; a change of mind needs a
        strict lead and can only fire strictly inside the human action).
        """
        if state.task_done:
            return {}
        if not state.detected:
            return {EventKind.DETECTED: 1.0}
        h = state.human_action
        p_change = self.scenario.p_change
        rate = self.scenario.change_rate

        if robot_action != IDLE and robot_action == state.robot_action:
            robot_pmf = remaining_pmf(
                self._dur_r[robot_action], self._cv[robot_action], state.robot_elapsed
            )
        elif robot_action != IDLE:
            robot_pmf = duration_pmf(self._dur_r[robot_action], self._cv[robot_action])
        else:
            robot_pmf = None

        if h in (None, IDLE):
            if robot_pmf is None:
                raise ScenarioError("no event can occur: both agents idle")
            return {EventKind.ROBOT_DONE: 1.0}

        cap = self._cap[h]
        if cap == Capability.JOINT:
            if robot_action != h:
                if robot_pmf is None:
                    raise ScenarioError("no event can occur: human waits for the robot")
                return {EventKind.ROBOT_DONE: 1.0}
            # Joint work: a single shared duration raced only by a change
            # of mind armed at its start.
            if state.robot_action == h:
                shared = remaining_pmf(self._dur_r[h], self._cv[h], state.human_elapsed)
            else:
                shared = duration_pmf(self._dur_r[h], self._cv[h])
            p_c = p_change * sum(p for m, p in shared.items() if m >= 2)
            out = {EventKind.ROBOT_DONE: 1.0 - p_c}
            if p_c > 0.0:
                out[EventKind.CHANGE_OF_MIND] = p_c
            return out

        human_pmf = remaining_pmf(self._dur_h[h], self._cv[h], state.human_elapsed)
        pH = pR = pC = 0.0
        for m, pm in human_pmf.items():
            armed = p_change > 0.0 and m >= 2
            cdf = self._truncexp_cdf(m - 1, rate) if armed else None
            if robot_pmf is None:
                u = p_change if armed else 0.0
                pC += pm * u
                pH += pm * (1.0 - u)
                continue
            for r, pr in robot_pmf.items():
                # change fires at c < r with c <= m-1
                u = p_change * cdf[min(r - 1, m - 1)] if armed else 0.0
                w = pm * pr
                pC += w * u
                if m < r:
                    pH += w * (1.0 - u)
                else:
                    pR += w * (1.0 - u)
        out: Dict[EventKind, float] = {}
        if pH > 0.0:
            out[EventKind.HUMAN_DONE] = pH
        if pR > 0.0:
            out[EventKind.ROBOT_DONE] = pR
        if pC > 0.0:
            out[EventKind.CHANGE_OF_MIND] = pC
        return out

    def _truncexp_cdf(self, span: int, rate: float) -> List[float]:
        """cdf[j] = P(value <= j) for the truncated exponential on {1..span}.

        Index 0 is 0.0 so callers can clamp with min(r-1, span) directly.
        """
        if span < 1:
            return [0.0]
        cum = self._truncexp_weights(span)
        total = cum[-1]
        return [0.0] + [c / total for c in cum]


def replay_log(htm: Htm, scenario: ScenarioConfig, log: Iterable[Sequence]) -> AssemblyEnv:
    """Re-run a recorded episode through the deterministic apply layer.

    ``log`` entries are ``("pick", action)``, ``("robot", action)`` and
    ``("event", kind, delta, success)`` tuples as recorded by an
    environment with ``record_log=True`` (or their JSON-roundtripped lists).
    Returns the environment at the final replayed state.
    """
    env = AssemblyEnv(htm, scenario, human_model=None)
    env.reset()
    for entry in log:
        tag = entry[0]
        if tag == "pick":
            env.apply_human_pick(int(entry[1]), sample=False)
        elif tag == "robot":
            env._assign_robot(int(entry[1]), sample=False)
        elif tag == "event":
            kind = EventKind(entry[1])
            success = entry[3] if len(entry) > 3 else None
            env.apply_event(EventOutcome(kind, int(entry[2]), success), sample=False)
        else:
            raise ScenarioError(f"unknown log entry {entry!r}")
    return env
