"""Scenario configuration: stochastic knobs shared by an experiment."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

from .errors import ScenarioError


@dataclass(frozen=True)
class ScenarioConfig:
    """Environment-level parameters.

    duration_cv and p_fail, when set, globally override the per-action values
    from the task model (useful for deterministic baselines and sweep grids).
    base_step is metadata only: all dynamics run on integer steps.
    """

    p_change: float = 0.0
    detect_delay: int = 3
    change_rate: float = 0.5
    gamma: float = 1.0
    duration_cv: float | None = None
    p_fail: float | None = None
    seed: int = 0
    base_step: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.p_change <= 1.0:
            raise ScenarioError("p_change outside [0, 1]")
        if self.detect_delay < 1:
            raise ScenarioError("detect_delay must be >= 1")
        if self.change_rate <= 0.0:
            raise ScenarioError("change_rate must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ScenarioError("gamma outside (0, 1]")
        if self.duration_cv is not None and self.duration_cv < 0.0:
            raise ScenarioError("duration_cv must be >= 0")
        if self.p_fail is not None and not 0.0 <= self.p_fail <= 1.0:
            raise ScenarioError("p_fail outside [0, 1]")

    def is_deterministic(self, htm=None) -> bool:
        """True when graph planning is sound: no changes of mind, no failures,
        no duration noise (checking per-action values unless overridden)."""
        if self.p_change > 0.0:
            return False
        if self.p_fail is not None and self.p_fail > 0.0:
            return False
        if self.duration_cv is not None and self.duration_cv > 0.0:
            return False
        if htm is not None:
            for a in htm.actions.values():
                if self.p_fail is None and a.p_fail > 0.0:
                    return False
                if self.duration_cv is None and a.duration_cv > 0.0:
                    return False
        return True

    def stochastic_reasons(self, htm=None) -> list[str]:
        out = []
        if self.p_change > 0.0:
            out.append(f"p_change={self.p_change}")
        eff_fail = self.p_fail
        eff_cv = self.duration_cv
        if htm is not None:
            if eff_fail is None and any(a.p_fail > 0 for a in htm.actions.values()):
                out.append("per-action p_fail > 0")
            if eff_cv is None and any(a.duration_cv > 0 for a in htm.actions.values()):
                out.append("per-action duration_cv > 0")
        if eff_fail is not None and eff_fail > 0:
            out.append(f"p_fail={eff_fail}")
        if eff_cv is not None and eff_cv > 0:
            out.append(f"duration_cv={eff_cv}")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.duration_cv is None:
            del d["duration_cv"]
        if self.p_fail is None:
            del d["p_fail"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {
            "p_change", "detect_delay", "change_rate", "gamma",
            "duration_cv", "p_fail", "seed", "base_step",
        }
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)

    def deterministic_variant(self) -> "ScenarioConfig":
        return replace(self, p_change=0.0, duration_cv=0.0, p_fail=0.0)


def load_scenario(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ScenarioError(
                f"syntax error at line {e.lineno} column {e.colno}: {e.msg}"
            ) from None
    return ScenarioConfig.from_dict(doc)


def save_scenario(cfg: ScenarioConfig, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cfg.to_dict(), f, indent=2)
        f.write("\n")
