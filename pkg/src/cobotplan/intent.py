"""Bayesian goal inference from hand-motion observations.

A small recursive filter over a discrete set of candidate reach goals:
each step propagates the belief through a sticky transition model, weighs
it by how close the hand is to each goal and how well its velocity points
at it, and renormalizes.  The maximum a-posteriori goal is the inferred
human intent.  A synthetic straight-line trajectory generator stands in
for a camera-based hand tracker, and an optional hook lets the filter's
time-to-confidence replace the simulator's fixed detection latency.
"""

from __future__ import annotations

import csv
import io
import json
import math
import random
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

from .errors import NotFittedError
from .estimator import ParamsMixin

Point = Tuple[float, ...]

DEFAULT_LAM = 1.0
DEFAULT_KAPPA = 2.0
DEFAULT_RHO = 0.9
DEFAULT_EPS_V = 0.01


def _check_finite(name: str, values: Sequence[float]) -> Tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not out:
        raise ValueError(f"{name} must have at least one component")
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} must be finite, got {out}")
    return out


def _sub(a: Point, b: Point) -> Point:
    return tuple(x - y for x, y in zip(a, b))


def _norm(a: Point) -> float:
    return math.sqrt(sum(x * x for x in a))


def _dot(a: Point, b: Point) -> float:
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class Goal:
    """A candidate reach target, optionally tied to a task action."""

    id: int
    position: Point
    action_id: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "position", _check_finite("goal position", self.position))


@dataclass(frozen=True)
class GoalSet:
    """The candidate goals plus the self-transition probability ``rho``."""

    goals: Tuple[Goal, ...]
    rho: float = DEFAULT_RHO

    def __post_init__(self):
        goals = tuple(self.goals)
        object.__setattr__(self, "goals", goals)
        if not goals:
            raise ValueError("a goal set needs at least one goal")
        ids = [g.id for g in goals]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate goal ids: {ids}")
        dims = {len(g.position) for g in goals}
        if len(dims) != 1:
            raise ValueError(f"goal positions mix dimensionalities: {sorted(dims)}")
        if not (0.0 <= self.rho <= 1.0):
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")

    def __len__(self) -> int:
        return len(self.goals)

    @property
    def ids(self) -> Tuple[int, ...]:
        return tuple(g.id for g in self.goals)

    @property
    def dim(self) -> int:
        return len(self.goals[0].position)

    def by_id(self, goal_id: int) -> Goal:
        for g in self.goals:
            if g.id == goal_id:
                return g
        raise KeyError(f"no goal with id {goal_id}")

    def for_action(self, action_id: int) -> Optional[Goal]:
        """The goal linked to a task action, if any."""
        for g in self.goals:
            if g.action_id == action_id:
                return g
        return None


@dataclass(frozen=True)
class Observation:
    """One tracked hand sample: position, optional velocity, step index."""

    position: Point
    velocity: Optional[Point] = None
    t: int = 0

    def __post_init__(self):
        object.__setattr__(self, "position", _check_finite("hand position", self.position))
        if self.velocity is not None:
            vel = _check_finite("hand velocity", self.velocity)
            if len(vel) != len(self.position):
                raise ValueError("velocity and position dimensionalities differ")
            object.__setattr__(self, "velocity", vel)


@dataclass(frozen=True)
class Belief:
    """A normalized probability vector over the goals."""

    probs: Tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise ValueError("a belief needs at least one entry")
        if any(p < 0.0 for p in probs):
            raise ValueError(f"belief entries must be >= 0, got {probs}")
        total = math.fsum(probs)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"belief must sum to 1 within 1e-9, got {total!r}")

    @staticmethod
    def uniform(n: int) -> "Belief":
        if n < 1:
            raise ValueError("n must be >= 1")
        return Belief((1.0 / n,) * n)

    def __len__(self) -> int:
        return len(self.probs)


def likelihoods(
    obs: Observation,
    goals: GoalSet,
    *,
    lam: float = DEFAULT_LAM,
    kappa: float = DEFAULT_KAPPA,
    eps_v: float = DEFAULT_EPS_V,
) -> Tuple[float, ...]:
    """Per-goal observation likelihood: proximity times alignment.

    Proximity is ``exp(-lam * distance)``; alignment is
    ``exp(kappa * (cos(phi) - 1))`` with ``phi`` the angle between the hand
    velocity and the hand-to-goal direction, and is neutral (1) when the
    hand is slower than ``eps_v`` or already at the goal.  Both factors,
    and hence the product, lie in (0, 1].
    """
    if len(obs.position) != goals.dim:
        raise ValueError(
            f"observation is {len(obs.position)}-D but goals are {goals.dim}-D"
        )
    vel = obs.velocity
    speed = _norm(vel) if vel is not None else 0.0
    moving = vel is not None and speed >= eps_v
    out = []
    for g in goals.goals:
        offset = _sub(g.position, obs.position)
        dist = _norm(offset)
        proximity = math.exp(-lam * dist)
        alignment = 1.0
        if moving and dist > 0.0:
            cos_phi = _dot(vel, offset) / (speed * dist)
            cos_phi = max(-1.0, min(1.0, cos_phi))
            alignment = math.exp(kappa * (cos_phi - 1.0))
        out.append(proximity * alignment)
    return tuple(out)


def predict_step(belief: Belief, rho: float) -> Tuple[float, ...]:
    """Propagate a belief one step through the sticky transition model.

    The transition matrix has ``rho`` on the diagonal and
    ``(1 - rho) / (n - 1)`` everywhere else (identity for a single goal),
    so each entry becomes ``rho * b_i + (1 - rho) / (n - 1) * (1 - b_i)``.
    """
    n = len(belief)
    if n == 1:
        return belief.probs
    off = (1.0 - rho) / (n - 1)
    return tuple(rho * b + off * (1.0 - b) for b in belief.probs)


def posterior_from_likelihoods(
    belief: Belief, liks: Sequence[float], rho: float
) -> Belief:
    """One Bayes step with explicit likelihood values.

    Predict through the transition model, multiply elementwise, and
    normalize.  A degenerate all-zero product falls back to the uniform
    belief with a warning.
    """
    if len(liks) != len(belief):
        raise ValueError("likelihood vector length does not match belief")
    if any(l < 0.0 for l in liks):
        raise ValueError(f"likelihoods must be >= 0, got {tuple(liks)}")
    predicted = predict_step(belief, rho)
    unnorm = [p * l for p, l in zip(predicted, liks)]
    total = math.fsum(unnorm)
    if total <= 0.0:
        warnings.warn(
            "all goal likelihoods vanished; falling back to a uniform belief",
            RuntimeWarning,
            stacklevel=2,
        )
        return Belief.uniform(len(belief))
    return Belief(tuple(u / total for u in unnorm))


def belief_update(
    belief: Belief,
    obs: Observation,
    goals: GoalSet,
    *,
    lam: float = DEFAULT_LAM,
    kappa: float = DEFAULT_KAPPA,
    eps_v: float = DEFAULT_EPS_V,
) -> Belief:
    """One full recursive-filter step from a raw observation."""
    if len(belief) != len(goals):
        raise ValueError("belief length does not match the goal set")
    liks = likelihoods(obs, goals, lam=lam, kappa=kappa, eps_v=eps_v)
    return posterior_from_likelihoods(belief, liks, goals.rho)


def map_goal(belief: Belief, goals: Optional[GoalSet] = None) -> int:
    """Maximum a-posteriori goal id; ties go to the lowest id.

    Without a goal set, entries are numbered 1..n in order.
    """
    ids = goals.ids if goals is not None else tuple(range(1, len(belief) + 1))
    if len(ids) != len(belief):
        raise ValueError("belief length does not match the goal set")
    best = max(belief.probs)
    return min(i for i, p in zip(ids, belief.probs) if p == best)


def simulate_trajectory(
    start: Point,
    goal_id: int,
    goals: GoalSet,
    *,
    speed: float = 0.1,
    noise_std: float = 0.0,
    switch_at: Optional[int] = None,
    switch_to: Optional[int] = None,
    rng: Optional[random.Random] = None,
) -> List[Observation]:
    """Synthetic hand track: straight toward a goal at constant speed.

    Each step advances ``speed`` meters along the line to the current
    target and adds isotropic Gaussian noise; the sequence starts at
    ``start`` (t=0) and ends when the underlying point reaches the goal.
    ``switch_at``/``switch_to`` retarget mid-flight, modeling a change of
    mind.  Velocities are the finite differences of the emitted (noisy)
    positions, with a zero vector at t=0.
    """
    start = _check_finite("start", start)
    if len(start) != goals.dim:
        raise ValueError(f"start is {len(start)}-D but goals are {goals.dim}-D")
    if speed <= 0.0:
        raise ValueError(f"speed must be > 0, got {speed}")
    if noise_std < 0.0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if (switch_at is None) != (switch_to is None):
        raise ValueError("switch_at and switch_to must be given together")
    if rng is None:
        rng = random.Random(0)

    target = goals.by_id(goal_id).position

    def observe(base: Point, t: int, prev: Optional[Point]) -> Observation:
        pos = tuple(
            c + (rng.gauss(0.0, noise_std) if noise_std > 0.0 else 0.0)
            for c in base
        )
        vel = _sub(pos, prev) if prev is not None else (0.0,) * len(pos)
        return Observation(position=pos, velocity=vel, t=t)

    out = [observe(start, 0, None)]
    point = start
    t = 0
    while point != target:
        t += 1
        if switch_at is not None and t == switch_at:
            target = goals.by_id(switch_to).position
        gap = _sub(target, point)
        dist = _norm(gap)
        if dist <= speed:
            point = target
        else:
            scale = speed / dist
            point = tuple(p + scale * d for p, d in zip(point, gap))
        out.append(observe(point, t, out[-1].position))
    return out


class IntentFilter(ParamsMixin):
    """Streaming goal-inference filter behind the estimator interface.

    ``fit`` binds a goal set and resets the belief to the uniform prior;
    ``update`` consumes one observation and advances the stored belief
    (finite-differencing the velocity when the observation carries none);
    ``predict`` is pure — it runs a fresh filter pass over a sequence and
    returns the MAP goal id per step.
    """

    def __init__(
        self,
        lam: float = DEFAULT_LAM,
        kappa: float = DEFAULT_KAPPA,
        eps_v: float = DEFAULT_EPS_V,
    ):
        self.lam = lam
        self.kappa = kappa
        self.eps_v = eps_v
        self.goals_: Optional[GoalSet] = None
        self.belief_: Optional[Belief] = None
        self._prev_position: Optional[Point] = None

    def fit(self, goals: GoalSet) -> "IntentFilter":
        if not isinstance(goals, GoalSet):
            raise TypeError(f"fit expects a GoalSet, got {type(goals).__name__}")
        self.goals_ = goals
        self.reset()
        return self

    def _check_fitted(self) -> None:
        if self.goals_ is None:
            raise NotFittedError(
                f"{type(self).__name__} is not fitted; call fit(goals) first"
            )

    def reset(self) -> "IntentFilter":
        """Return the belief to the uniform prior and forget history."""
        self._check_fitted()
        self.belief_ = Belief.uniform(len(self.goals_))
        self._prev_position = None
        return self

    def _with_velocity(self, obs: Observation) -> Observation:
        if obs.velocity is not None:
            return obs
        prev = self._prev_position
        vel = _sub(obs.position, prev) if prev is not None else (0.0,) * len(obs.position)
        return Observation(position=obs.position, velocity=vel, t=obs.t)

    def update(self, obs: Observation) -> Belief:
        """Advance the stored belief by one observation."""
        self._check_fitted()
        obs = self._with_velocity(obs)
        self.belief_ = belief_update(
            self.belief_, obs, self.goals_,
            lam=self.lam, kappa=self.kappa, eps_v=self.eps_v,
        )
        self._prev_position = obs.position
        return self.belief_

    def posteriors(self, observations: Sequence[Observation]) -> List[Belief]:
        """Fresh filter pass over a sequence; does not touch stored state."""
        self._check_fitted()
        clone = IntentFilter(lam=self.lam, kappa=self.kappa, eps_v=self.eps_v)
        clone.fit(self.goals_)
        return [clone.update(obs) for obs in observations]

    def predict(
        self, X: Union[Observation, Sequence[Observation]]
    ) -> Union[int, List[int]]:
        """MAP goal id per step of a fresh filter pass over ``X``."""
        self._check_fitted()
        if isinstance(X, Observation):
            return map_goal(self.posteriors([X])[-1], self.goals_)
        return [map_goal(b, self.goals_) for b in self.posteriors(X)]

    def map_goal(self) -> int:
        """MAP goal id of the current stored belief."""
        self._check_fitted()
        return map_goal(self.belief_, self.goals_)


def intent_detection_fn(
    goals: GoalSet,
    *,
    threshold: float = 0.8,
    speed: float = 0.1,
    noise_std: float = 0.0,
    start: Optional[Point] = None,
    lam: float = DEFAULT_LAM,
    kappa: float = DEFAULT_KAPPA,
    eps_v: float = DEFAULT_EPS_V,
    seed: int = 0,
) -> Callable:
    """Detection-latency hook driven by the filter's time to confidence.

    Returns a callable suitable for ``AssemblyEnv(detection_fn=...)``: when
    the human starts an action with a linked goal, a synthetic reach toward
    that goal is filtered and the latency is the first step at which the
    MAP goal is correct with posterior above ``threshold`` (the trajectory
    length if confidence is never reached).  Actions without a linked goal
    fall back to the scenario's fixed delay.  Off by default — pass the
    result explicitly to enable the coupling.
    """
    if not (0.0 < threshold < 1.0):
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if start is None:
        dim = goals.dim
        n = len(goals)
        start = tuple(
            math.fsum(g.position[d] for g in goals.goals) / n for d in range(dim)
        )
    rng = random.Random(seed)
    filt = IntentFilter(lam=lam, kappa=kappa, eps_v=eps_v).fit(goals)

    def delay_for(env, action_id: int) -> int:
        goal = goals.for_action(action_id)
        if goal is None:
            return env.scenario.detect_delay
        track = simulate_trajectory(
            start, goal.id, goals, speed=speed, noise_std=noise_std, rng=rng,
        )
        filt.reset()
        for k, obs in enumerate(track):
            belief = filt.update(obs)
            if (
                map_goal(belief, goals) == goal.id
                and max(belief.probs) > threshold
            ):
                return max(1, k)
        return max(1, len(track) - 1)

    return delay_for


# -- files ------------------------------------------------------------------


def goals_to_dict(goals: GoalSet) -> dict:
    return {
        "rho": goals.rho,
        "goals": [
            {
                "id": g.id,
                "position": list(g.position),
                **({"action_id": g.action_id} if g.action_id is not None else {}),
            }
            for g in goals.goals
        ],
    }


def goals_from_dict(doc: dict) -> GoalSet:
    try:
        entries = doc["goals"]
        goals = tuple(
            Goal(
                id=int(e["id"]),
                position=tuple(float(c) for c in e["position"]),
                action_id=(int(e["action_id"]) if e.get("action_id") is not None else None),
            )
            for e in entries
        )
        rho = float(doc.get("rho", DEFAULT_RHO))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed goal document: {exc}") from exc
    return GoalSet(goals=goals, rho=rho)


def save_goals(goals: GoalSet, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(goals_to_dict(goals), indent=2) + "\n")


def load_goals(path: Union[str, Path]) -> GoalSet:
    return goals_from_dict(json.loads(Path(path).read_text()))


def trajectory_to_csv(observations: Sequence[Observation]) -> str:
    """Serialize a track as ``t,x,y[,z]`` rows (velocities are re-derived)."""
    if not observations:
        raise ValueError("empty trajectory")
    dim = len(observations[0].position)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t"] + ["x", "y", "z"][:dim])
    for obs in observations:
        writer.writerow([obs.t] + [f"{c:.6f}" for c in obs.position])
    return buf.getvalue()


def trajectory_from_csv(text: str) -> List[Observation]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[0] != "t":
        raise ValueError("trajectory CSV must start with a 't,x,y[,z]' header")
    out = []
    for row in reader:
        if not row:
            continue
        out.append(
            Observation(
                position=tuple(float(c) for c in row[1:]),
                velocity=None,
                t=int(row[0]),
            )
        )
    if not out:
        raise ValueError("trajectory CSV has no rows")
    return out


def save_trajectory(observations: Sequence[Observation], path: Union[str, Path]) -> None:
    Path(path).write_text(trajectory_to_csv(observations))


def load_trajectory(path: Union[str, Path]) -> List[Observation]:
    return trajectory_from_csv(Path(path).read_text())


def filter_trace_csv(
    goals: GoalSet,
    observations: Sequence[Observation],
    *,
    lam: float = DEFAULT_LAM,
    kappa: float = DEFAULT_KAPPA,
    eps_v: float = DEFAULT_EPS_V,
) -> str:
    """Per-step posterior trace: ``t,p_<id>...,map_goal`` rows."""
    filt = IntentFilter(lam=lam, kappa=kappa, eps_v=eps_v).fit(goals)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["t"] + [f"p_{gid}" for gid in goals.ids] + ["map_goal"])
    for obs in observations:
        belief = filt.update(obs)
        writer.writerow(
            [obs.t] + [f"{p:.6f}" for p in belief.probs] + [map_goal(belief, goals)]
        )
    return buf.getvalue()
