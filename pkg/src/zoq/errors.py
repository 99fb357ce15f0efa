"""Exception types shared across the library."""

from __future__ import annotations

import numpy as np


class ConfigurationError(ValueError):
    """A run or experiment configuration violates a precondition."""


class EvaluationError(RuntimeError):
    """A function query returned a non-finite value.

    Carries the offending point in ``x`` so the caller can diagnose where
    the objective blew up.
    """

    def __init__(self, message: str, x=None):
        super().__init__(message)
        self.x = None if x is None else np.asarray(x, dtype=float)


class DegenerateBlockError(RuntimeError):
    """A direction block stayed numerically rank-deficient after one resample."""


class DivergenceError(RuntimeError):
    """An optimization run left the finite regime.

    ``x_last`` holds the last finite iterate and ``t`` the iteration at
    which the run was aborted.
    """

    def __init__(self, message: str, x_last=None, t: int | None = None):
        super().__init__(message)
        self.x_last = None if x_last is None else np.asarray(x_last, dtype=float)
        self.t = t


class NumericalError(RuntimeError):
    """A dense linear-algebra routine failed (eigensolver, linear solve)."""


class FitError(RuntimeError):
    """Rate fitting failed, e.g. nonpositive gaps inside the fit window."""
