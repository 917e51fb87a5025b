"""Shared estimator plumbing: constructor-parameter introspection.

Estimators in this package (robot policies, the intent filter) follow the
scikit-learn convention: every knob is a constructor argument stored under
the same name, ``get_params``/``set_params`` read and write them, and state
learned by ``fit`` lives in attributes with a trailing underscore.
"""

from __future__ import annotations

import inspect
from typing import Dict, List


class ParamsMixin:
    """get/set constructor parameters by introspecting ``__init__``."""

    @classmethod
    def _param_names(cls) -> List[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self"
            and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> Dict[str, object]:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "ParamsMixin":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"unknown parameter {name!r} for {type(self).__name__}; "
                    f"valid: {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"
