"""Processes, problems, and the high-accuracy reference integration.

A multi-process ODE ``dq/dt = sum_i X_i(q)`` is described by a
:class:`ProblemSpec` holding an ordered list of :class:`ProcessModel`.
:func:`reference_solve` stands in for the exact solution and also returns
the per-process integrals ``int X_i(q(eta)) d eta`` along the exact
trajectory, obtained by augmenting the state with quadrature variables.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ._dopri import SolverFailure, integrate

__all__ = [
    "ProcessModel",
    "ProblemSpec",
    "SolveResult",
    "SolverFailure",
    "Tolerance",
    "DEFAULT_TOL",
    "as_state",
    "eval_total_rhs",
    "fd_jacobian",
    "reference_solve",
    "process_solve",
]

EPS = np.finfo(float).eps

Rhs = Callable[[np.ndarray], np.ndarray]
Jac = Callable[[np.ndarray], np.ndarray]


def as_state(q, dim: Optional[int] = None) -> np.ndarray:
    """Coerce ``q`` to a 1-D float64 vector, optionally checking its length."""
    arr = np.atleast_1d(np.asarray(q, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"state must be a vector, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"state has dimension {arr.shape[0]}, expected {dim}")
    return arr


@dataclass(frozen=True)
class Tolerance:
    rel: float = 1e-12
    abs: float = 1e-14

    def __post_init__(self):
        if not self.rel >= 10 * EPS:
            raise ValueError(f"tol.rel={self.rel!r} is below 10*machine epsilon")
        if not self.abs >= 0:
            raise ValueError(f"tol.abs={self.abs!r} must be non-negative")

    def scale(self, q) -> float:
        """Absolute error level the oracle guarantees around state ``q``."""
        return self.abs + self.rel * max(float(np.max(np.abs(q), initial=0.0)), 1.0)


DEFAULT_TOL = Tolerance()


def fd_jacobian(f: Rhs, q: np.ndarray) -> np.ndarray:
    """Central-difference Jacobian with per-component step max(|q_k|,1)*eps^(1/3)."""
    q = as_state(q)
    n = q.shape[0]
    cols = []
    for k in range(n):
        h = max(abs(q[k]), 1.0) * EPS ** (1.0 / 3.0)
        qp = q.copy()
        qm = q.copy()
        qp[k] += h
        qm[k] -= h
        # use the representable step actually taken
        cols.append((np.asarray(f(qp), dtype=float) - np.asarray(f(qm), dtype=float)) / (qp[k] - qm[k]))
    return np.column_stack(cols).reshape(n, n)


@dataclass(frozen=True)
class ProcessModel:
    """One right-hand-side term ``X_i(q)``.

    ``rhs`` maps a state vector to a tendency vector of the same length.
    ``jacobian`` is optional; :meth:`jac` falls back to central differences.
    """

    name: str
    rhs: Rhs
    jacobian: Optional[Jac] = None

    def __call__(self, q) -> np.ndarray:
        q = as_state(q)
        out = np.atleast_1d(np.asarray(self.rhs(q), dtype=float))
        if out.shape != q.shape:
            raise ValueError(
                f"process {self.name!r} returned shape {out.shape} for state of shape {q.shape}"
            )
        return out

    def jac(self, q) -> np.ndarray:
        q = as_state(q)
        if self.jacobian is None:
            return fd_jacobian(self, q)
        n = q.shape[0]
        return np.asarray(self.jacobian(q), dtype=float).reshape(n, n)


@dataclass(frozen=True)
class ProblemSpec:
    processes: tuple
    dim: int
    q_ic: np.ndarray = field(repr=False)

    def __init__(self, processes: Sequence[ProcessModel], dim: int, q_ic):
        processes = tuple(processes)
        if len(processes) < 2:
            raise ValueError("a multi-process problem needs at least 2 processes")
        names = [p.name for p in processes]
        if len(set(names)) != len(names):
            raise ValueError(f"process names must be unique, got {names}")
        if int(dim) < 1:
            raise ValueError("dim must be a positive integer")
        q_ic = as_state(q_ic, int(dim)).copy()
        q_ic.setflags(write=False)
        for p in processes:
            # catches rhs dimension mismatches at construction time
            p(q_ic)
        object.__setattr__(self, "processes", processes)
        object.__setattr__(self, "dim", int(dim))
        object.__setattr__(self, "q_ic", q_ic)

    @property
    def names(self) -> list:
        return [p.name for p in self.processes]

    def process(self, name: str) -> ProcessModel:
        for p in self.processes:
            if p.name == name:
                return p
        raise KeyError(f"unknown process {name!r}; problem has {self.names}")


@dataclass(frozen=True)
class SolveResult:
    q_end: np.ndarray
    process_integrals: dict
    n_steps: int
    n_rejected: int


def eval_total_rhs(problem: ProblemSpec, q) -> np.ndarray:
    q = as_state(q, problem.dim)
    total = np.zeros(problem.dim)
    for p in problem.processes:
        total = total + p(q)
    return total


def reference_solve(problem: ProblemSpec, q0, horizon: float, tol: Tolerance = DEFAULT_TOL) -> SolveResult:
    """Integrate the full problem over ``[0, horizon]`` starting from ``q0``.

    The state is augmented with one quadrature vector per process so the
    returned ``process_integrals`` inherit the solver's error control, and
    ``q_end - q0`` equals their sum up to rounding.
    """
    q0 = as_state(q0, problem.dim)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    n = problem.dim
    m = len(problem.processes)

    def f(y):
        q = y[:n]
        parts = [p(q) for p in problem.processes]
        out = np.empty_like(y)
        out[:n] = np.sum(parts, axis=0)
        for i, part in enumerate(parts):
            out[n * (i + 1) : n * (i + 2)] = part
        return out

    y0 = np.concatenate([q0, np.zeros(n * m)])
    y, n_steps, n_rej = integrate(f, y0, float(horizon), tol.rel, tol.abs)
    integrals = {p.name: y[n * (i + 1) : n * (i + 2)].copy() for i, p in enumerate(problem.processes)}
    return SolveResult(q_end=y[:n].copy(), process_integrals=integrals, n_steps=n_steps, n_rejected=n_rej)


def process_solve(process: ProcessModel, q_in, dt: float, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Solve the one-process ODE ``dq/dt = X(q)`` for a duration ``dt``."""
    q_in = as_state(q_in)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    y, _, _ = integrate(process, q_in, float(dt), tol.rel, tol.abs)
    return y
