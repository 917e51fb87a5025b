"""Masked tabular Q-learning over the assembly environment.

The observable decision states of a desk-scale task form a modest finite
set, so a lookup table with feasible-action masking learns the stochastic
dynamics directly: exploration and updates never touch actions the task
model forbids.  Values are expected negative makespans; with the default
undiscounted setting the greedy policy minimizes expected completion time.
"""

from __future__ import annotations

import json
import math
import random
import statistics
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from .env import AssemblyEnv
from .errors import DivergenceError, ScenarioError
from .htm import Htm, IDLE
from .seeding import derive_seed
from .state import WorldState


def encode_state(htm: Htm, state: WorldState, bucket: int = 1) -> tuple:
    """Injective all-int key for an observable state.

    Components: progress masks, detected human action (-1 while unknown),
    bucketed elapsed times, detection flag, robot action.  Matches
    ``AssemblyEnv.state_key`` so tables trained in simulation can be
    queried from serialized snapshots.
    """
    if bucket < 1:
        raise ValueError(f"bucket width must be >= 1, got {bucket}")
    completed, failed = htm.task_to_masks(state.progress)
    h = -1 if state.human_action is None else state.human_action
    tr = (state.robot_elapsed // bucket) if state.robot_action != IDLE else 0
    return (
        completed,
        failed,
        h,
        state.human_elapsed // bucket,
        tr,
        1 if state.detected else 0,
        state.robot_action,
    )


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one Q-learning run."""

    episodes: int = 200_000
    learning_rate: float = 0.1
    epsilon_start: float = 0.3
    epsilon_end: float = 0.01
    epsilon_fraction: float = 0.8  # part of training over which epsilon decays
    gamma: Optional[float] = None  # None: take the scenario's gamma
    bucket: int = 1
    eval_interval: int = 0  # episodes between curve points; 0 disables
    eval_episodes: int = 200
    divergence_cap: float = 1e9
    seed: int = 0

    def __post_init__(self):
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        for name in ("epsilon_start", "epsilon_end"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start")
        if not 0.0 < self.epsilon_fraction <= 1.0:
            raise ValueError("epsilon_fraction must be in (0, 1]")
        if self.bucket < 1:
            raise ValueError("bucket must be >= 1")

    def epsilon_at(self, episode: int) -> float:
        horizon = self.epsilon_fraction * self.episodes
        if horizon <= 1 or episode >= horizon:
            return self.epsilon_end
        span = self.epsilon_start - self.epsilon_end
        return self.epsilon_start - span * (episode / horizon)


class QTable:
    """Action values and visit counts over encoded decision states.

    Columns cover idle plus every robot-capable action; rows are created
    lazily.  Only feasible actions are ever selected or updated, and the
    update path asserts it.
    """

    def __init__(self, htm: Htm, bucket: int = 1):
        self.htm = htm
        self.bucket = bucket
        self.columns: Tuple[int, ...] = (IDLE, *sorted(htm.robot_ids))
        self._col: Dict[int, int] = {a: i for i, a in enumerate(self.columns)}
        self.q: Dict[tuple, List[float]] = {}
        self.visits: Dict[tuple, List[int]] = {}
        self.episodes_trained = 0
        self.updates = 0
        self.curve: List[Tuple[int, float, float]] = []
        self.config: Optional[TrainConfig] = None

    def _row(self, key: tuple) -> List[float]:
        row = self.q.get(key)
        if row is None:
            row = [0.0] * len(self.columns)
            self.q[key] = row
            self.visits[key] = [0] * len(self.columns)
        return row

    def best(self, key: tuple, feasible: Sequence[int]) -> Tuple[int, float]:
        """Greedy feasible action and its value; ties to the lowest id."""
        row = self.q.get(key)
        if row is None:
            row = [0.0] * len(self.columns)
        best_a = None
        best_v = -math.inf
        for a in sorted(feasible):
            v = row[self._col[a]]
            if v > best_v:
                best_a, best_v = a, v
        if best_a is None:
            raise ScenarioError("no feasible action to select")
        return best_a, best_v

    def update(
        self,
        key: tuple,
        action: int,
        target: float,
        lr: float,
        feasible: Sequence[int],
        cap: float = 1e9,
    ) -> float:
        assert action in feasible, f"update for infeasible action {action}"
        row = self._row(key)
        i = self._col[action]
        row[i] += lr * (target - row[i])
        self.visits[key][i] += 1
        self.updates += 1
        if abs(row[i]) > cap:
            raise DivergenceError(
                f"action value diverged (|Q| > {cap:g}) at state {key} "
                f"action {action} after {self.updates} updates"
            )
        return row[i]

    # -- policy interface -------------------------------------------------

    def action_for(self, state: WorldState) -> int:
        """Greedy feasible action for an observable state.

        States never visited in training fall back to the greedy-duration
        rule so rollouts always produce a feasible choice.
        """
        completed, failed = self.htm.task_to_masks(state.progress)
        feasible = self.htm.robot_choices(
            completed, failed, state.human_action, state.detected
        )
        if not feasible:
            return IDLE
        key = encode_state(self.htm, state, self.bucket)
        if key in self.q:
            return self.best(key, feasible)[0]
        real = [a for a in feasible if a != IDLE]
        if not real:
            return IDLE
        return min(real, key=lambda a: (self.htm.actions[a].duration_r, a))

    def __len__(self) -> int:
        return len(self.q)

    # -- checkpointing ----------------------------------------------------

    def to_dict(self) -> dict:
        entries = [
            {"key": list(k), "q": row, "visits": self.visits[k]}
            for k, row in sorted(self.q.items())
        ]
        return {
            "kind": "q_table",
            "columns": list(self.columns),
            "bucket": self.bucket,
            "episodes_trained": self.episodes_trained,
            "curve": [list(p) for p in self.curve],
            "entries": entries,
        }

    @classmethod
    def from_dict(cls, htm: Htm, d: dict) -> "QTable":
        table = cls(htm, bucket=int(d.get("bucket", 1)))
        if tuple(d["columns"]) != table.columns:
            raise ScenarioError(
                "checkpoint column layout does not match the task model"
            )
        for e in d["entries"]:
            key = tuple(e["key"])
            table.q[key] = [float(v) for v in e["q"]]
            table.visits[key] = [int(v) for v in e["visits"]]
        table.episodes_trained = int(d.get("episodes_trained", 0))
        table.curve = [tuple(p) for p in d.get("curve", [])]
        return table

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, htm: Htm, path: str) -> "QTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(htm, json.load(fh))


def _rollout_makespan(env: AssemblyEnv, table: QTable, seed: int) -> int:
    env.reset(seed=seed)
    while not env.done:
        env.step(table.action_for(env.observable()))
    return env.now


def train(env: AssemblyEnv, cfg: TrainConfig) -> QTable:
    """Episodic TD control with epsilon-greedy over the masked feasible set.

    Fully reproducible in ``cfg.seed``: the environment stream is reseeded
    at the start and exploration uses its own derived stream.  Returns the
    trained table; when ``eval_interval`` is set, greedy-policy checkpoints
    are recorded on ``table.curve`` as (episode, eval_mean, eval_std).
    """
    table = QTable(env.htm, cfg.bucket)
    table.config = cfg
    gamma = env.scenario.gamma if cfg.gamma is None else cfg.gamma
    lr = cfg.learning_rate
    cap = cfg.divergence_cap
    explore = random.Random(derive_seed(cfg.seed, "explore"))
    env.reset(seed=derive_seed(cfg.seed, "train-stream"))
    eval_env: Optional[AssemblyEnv] = None
    if cfg.eval_interval > 0:
        eval_env = AssemblyEnv(env.htm, env.scenario, human_model=env._human_model)

    for episode in range(cfg.episodes):
        eps = cfg.epsilon_at(episode)
        env.reset()
        key = env.state_key(cfg.bucket)
        while not env.done:
            feasible = env.feasible_robot()
            if len(feasible) > 1 and explore.random() < eps:
                action = feasible[explore.randrange(len(feasible))]
            else:
                action = table.best(key, feasible)[0]
            _, reward, done, _ = env.step(action)
            if done:
                target = reward
            else:
                next_key = env.state_key(cfg.bucket)
                next_best = table.best(next_key, env.feasible_robot())[1]
                if gamma == 1.0:
                    target = reward + next_best
                else:
                    # reward covers -dt elapsed steps; discount per step
                    target = reward + (gamma ** int(-reward)) * next_best
            table.update(key, action, target, lr, feasible, cap)
            if done:
                break
            key = next_key
        table.episodes_trained += 1
        if eval_env is not None and (episode + 1) % cfg.eval_interval == 0:
            spans = [
                _rollout_makespan(
                    eval_env, table, derive_seed(cfg.seed, "eval", episode, i)
                )
                for i in range(cfg.eval_episodes)
            ]
            mean = statistics.fmean(spans)
            std = statistics.pstdev(spans) if len(spans) > 1 else 0.0
            table.curve.append((episode + 1, mean, std))
    return table


def save_curve(table: QTable, path: str) -> None:
    """Training curve as CSV: episode, eval_mean, eval_std."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("episode,eval_mean,eval_std\n")
        for episode, mean, std in table.curve:
            fh.write(f"{episode},{mean:.6g},{std:.6g}\n")
