"""Robot policies behind one estimator-style interface.

Every planner and baseline is configured through constructor parameters,
bound to a task by ``fit(env)``, and queried with ``predict`` /
``action_for``.  ``get_params``/``set_params`` follow the scikit-learn
convention so policies can be cloned, grid-swept, and logged uniformly.
"""

from __future__ import annotations

import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .env import AssemblyEnv
from .errors import NotFittedError
from .estimator import ParamsMixin
from .graph import TabularPolicy, build_graph, solve
from .htm import Htm, IDLE
from .qlearn import QTable, TrainConfig, train
from .seeding import derive_seed
from .state import WorldState


def feasible_robot_actions(htm: Htm, state: WorldState) -> List[int]:
    """Feasible robot set for an observable state (validates the state)."""
    completed, failed = htm.task_to_masks(state.progress)
    return htm.robot_choices(completed, failed, state.human_action, state.detected)


def greedy_action(htm: Htm, state: WorldState) -> int:
    """Shortest nominal robot duration among feasible actions.

    Idles only when idle is the sole feasible choice; ties go to the
    lowest action id.
    """
    feasible = feasible_robot_actions(htm, state)
    real = [a for a in feasible if a != IDLE]
    if not real:
        return IDLE
    return min(real, key=lambda a: (htm.actions[a].duration_r, a))


def random_action(htm: Htm, state: WorldState, rng: random.Random) -> int:
    """Uniform draw over the feasible robot set (idle included)."""
    feasible = feasible_robot_actions(htm, state)
    if not feasible:
        return IDLE
    return feasible[rng.randrange(len(feasible))]


class BaseRobotPolicy(ParamsMixin):
    """Parameter handling and the fit/predict contract."""

    def fit(self, env: AssemblyEnv) -> "BaseRobotPolicy":
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if getattr(self, "htm_", None) is None:
            raise NotFittedError(
                f"{type(self).__name__} is not fitted; call fit(env) first"
            )

    def action_for(self, state: WorldState) -> int:
        raise NotImplementedError

    def reseed(self, seed: int) -> None:
        """Reset any per-rollout randomness; no-op for deterministic policies."""

    def predict(
        self, X: Union[WorldState, Sequence[WorldState]]
    ) -> Union[int, List[int]]:
        """Robot action for one observable state, or one per state in a sequence."""
        self._check_fitted()
        if isinstance(X, WorldState):
            return self.action_for(X)
        return [self.action_for(s) for s in X]


class GreedyPolicy(BaseRobotPolicy):
    """Always starts the feasible action with the shortest nominal duration."""

    def __init__(self):
        self.htm_: Optional[Htm] = None

    def fit(self, env: AssemblyEnv) -> "GreedyPolicy":
        self.htm_ = env.htm
        return self

    def action_for(self, state: WorldState) -> int:
        self._check_fitted()
        return greedy_action(self.htm_, state)


class RandomPolicy(BaseRobotPolicy):
    """Uniform choice over the feasible set; reproducible via ``seed``."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.htm_: Optional[Htm] = None
        self.rng_: Optional[random.Random] = None

    def fit(self, env: AssemblyEnv) -> "RandomPolicy":
        self.htm_ = env.htm
        self.rng_ = random.Random(self.seed)
        return self

    def reseed(self, seed: int) -> None:
        self.rng_ = random.Random(seed)

    def action_for(self, state: WorldState) -> int:
        self._check_fitted()
        return random_action(self.htm_, state, self.rng_)


class GraphPlanner(BaseRobotPolicy):
    """Optimal deterministic-scenario policy via the decision graph."""

    def __init__(
        self,
        human_model: str = "uniform",
        node_budget: int = 200_000,
        exact: bool = False,
        optimistic: bool = False,
    ):
        self.human_model = human_model
        self.node_budget = node_budget
        self.exact = exact
        self.optimistic = optimistic
        self.htm_: Optional[Htm] = None
        self.policy_: Optional[TabularPolicy] = None

    def fit(self, env: AssemblyEnv) -> "GraphPlanner":
        graph = build_graph(
            env.htm,
            env.scenario,
            human_model=self.human_model,
            node_budget=self.node_budget,
            exact=self.exact,
        )
        self.policy_ = solve(graph, optimistic=self.optimistic)
        self.graph_stats_ = graph.stats
        self.root_value_ = self.policy_.root_value
        self.htm_ = env.htm
        return self

    def action_for(self, state: WorldState) -> int:
        self._check_fitted()
        return self.policy_.action_for(state)


class QLearningPlanner(BaseRobotPolicy):
    """Masked tabular Q-learning, greedy at prediction time."""

    def __init__(
        self,
        episodes: int = 200_000,
        learning_rate: float = 0.1,
        epsilon_start: float = 0.3,
        epsilon_end: float = 0.01,
        epsilon_fraction: float = 0.8,
        gamma: Optional[float] = None,
        bucket: int = 1,
        eval_interval: int = 0,
        eval_episodes: int = 200,
        seed: int = 0,
    ):
        self.episodes = episodes
        self.learning_rate = learning_rate
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_fraction = epsilon_fraction
        self.gamma = gamma
        self.bucket = bucket
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes
        self.seed = seed
        self.htm_: Optional[Htm] = None
        self.qtable_: Optional[QTable] = None

    def _config(self) -> TrainConfig:
        return TrainConfig(
            episodes=self.episodes,
            learning_rate=self.learning_rate,
            epsilon_start=self.epsilon_start,
            epsilon_end=self.epsilon_end,
            epsilon_fraction=self.epsilon_fraction,
            gamma=self.gamma,
            bucket=self.bucket,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
            seed=self.seed,
        )

    def fit(self, env: AssemblyEnv) -> "QLearningPlanner":
        self.qtable_ = train(env, self._config())
        self.htm_ = env.htm
        return self

    def action_for(self, state: WorldState) -> int:
        self._check_fitted()
        return self.qtable_.action_for(state)


@dataclass
class EpisodeRecord:
    trial: int
    seed: int
    steps: int
    n_events: int
    n_changes: int
    n_failures: int


@dataclass
class EvalStats:
    """Makespan statistics over independent seeded rollouts."""

    mean: float
    std: float
    makespans: List[int]
    records: List[EpisodeRecord]

    def __str__(self) -> str:
        return f"{self.mean:.1f} [{self.std:.1f}]"


def _run_trials(
    env: AssemblyEnv, policy, trials: Sequence[Tuple[int, int]]
) -> List[EpisodeRecord]:
    out = []
    reseed = getattr(policy, "reseed", None)
    for trial, seed in trials:
        if reseed is not None:
            reseed(derive_seed(seed, "policy"))
        env.reset(seed=seed)
        while not env.done:
            env.step(policy.action_for(env.observable()))
        out.append(
            EpisodeRecord(
                trial, seed, env.now, env.n_events, env.n_changes, env.n_failures
            )
        )
    return out


def _worker(payload) -> List[EpisodeRecord]:
    env, policy, chunk = payload
    return _run_trials(env, policy, chunk)


def evaluate(
    policy,
    env: AssemblyEnv,
    n_episodes: int,
    seed: int = 0,
    workers: int = 1,
) -> EvalStats:
    """Mean and spread of the policy's makespan over seeded episodes.

    Per-trial seeds are derived from ``seed`` by trial index, and results
    are reduced in trial order, so the outcome is identical for any
    ``workers`` count (workers > 1 fans episodes out to processes; the
    policy is used read-only).
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    trials = [(t, derive_seed(seed, "trial", t)) for t in range(n_episodes)]
    if workers <= 1:
        records = _run_trials(env, policy, trials)
    else:
        chunks = [trials[i::workers] for i in range(workers)]
        records = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(
                _worker, [(env, policy, c) for c in chunks if c]
            ):
                records.extend(part)
        records.sort(key=lambda r: r.trial)
    spans = [r.steps for r in records]
    mean = statistics.fmean(spans)
    std = statistics.pstdev(spans) if len(spans) > 1 else 0.0
    return EvalStats(mean, std, spans, records)
