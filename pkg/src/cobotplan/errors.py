"""Exception types shared across the toolkit."""


class CobotplanError(Exception):
    """Base class for all toolkit errors."""


class HtmError(CobotplanError):
    """Invalid task model document or structure."""


class ScenarioError(CobotplanError):
    """Invalid scenario configuration."""


class InfeasibleActionError(CobotplanError):
    """An agent was asked to start an action outside its feasible set."""


class EpisodeDoneError(CobotplanError):
    """step() was called after the episode terminated."""


class StochasticScenarioError(CobotplanError):
    """Graph planning requested for a scenario with stochastic dynamics.

    The decision-graph planner enumerates nominal-duration trajectories and
    is only sound when durations are deterministic and failures and changes
    of mind are disabled.
    """


class BudgetExceededError(CobotplanError):
    """A state-count or compute budget was exceeded during graph expansion."""


class NotFittedError(CobotplanError):
    """predict() was called on a planner before fit()."""


class DivergenceError(CobotplanError):
    """Action values diverged during training."""
