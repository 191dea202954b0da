"""Named problem constructors used by the CLI and the tests."""
from __future__ import annotations

import numpy as np

from .core import ProblemSpec, ProcessModel
from .dust import ColumnDustParams, ScalarDustParams, make_column_dust_problem, make_scalar_dust_problem

__all__ = ["linear_pair", "constant_pair", "quadratic_pair", "PROBLEMS", "build_problem"]


def linear_pair(alpha: float = -1.0, beta: float = -2.0, q0: float = 1.0) -> ProblemSpec:
    """``A(q) = alpha*q``, ``B(q) = beta*q``: commuting, closed-form exponentials."""
    return ProblemSpec(
        [
            ProcessModel("A", lambda q: alpha * q, lambda q: np.full((1, 1), alpha)),
            ProcessModel("B", lambda q: beta * q, lambda q: np.full((1, 1), beta)),
        ],
        dim=1,
        q_ic=[q0],
    )


def constant_pair(a: float = 2.0, b: float = -3.0, q0: float = 1.0) -> ProblemSpec:
    return ProblemSpec(
        [
            ProcessModel("A", lambda q: np.full_like(q, a), lambda q: np.zeros((1, 1))),
            ProcessModel("B", lambda q: np.full_like(q, b), lambda q: np.zeros((1, 1))),
        ],
        dim=1,
        q_ic=[q0],
    )


def quadratic_pair(a: float = 1.0, b: float = -1.0, q0: float = 1.0) -> ProblemSpec:
    """``A(q) = a*q^2``, ``B(q) = b*q``: non-commuting; blows up at finite time when ``a*q0 > 0`` dominates."""
    return ProblemSpec(
        [
            ProcessModel("A", lambda q: a * q * q, lambda q: np.diag(2.0 * a * q)),
            ProcessModel("B", lambda q: b * q, lambda q: np.full((1, 1), b)),
        ],
        dim=1,
        q_ic=[q0],
    )


PROBLEMS = {
    "linear_pair": linear_pair,
    "constant_pair": constant_pair,
    "quadratic_pair": quadratic_pair,
    "dust_scalar": lambda **kw: make_scalar_dust_problem(ScalarDustParams(**kw)),
    "dust_column": lambda **kw: make_column_dust_problem(ColumnDustParams(**kw)),
}


def build_problem(name: str, params: dict | None = None) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ValueError(f"bad parameters for problem {name!r}: {exc}") from None
