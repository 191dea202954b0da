"""Coupling schemes as staged single-process integrations.

Every stage integrates one process for a full step ``dt`` starting from
``q_n`` plus a rational combination of earlier stage increments; the step
result is ``q_n`` plus the weighted sum of all increments.  This covers
parallel and sequential splitting, the original and revised EAMv1 aerosol
coupling, and fractional-weight variants.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .core import DEFAULT_TOL, ProblemSpec, ProcessModel, Tolerance, as_state, eval_total_rhs, process_solve

__all__ = [
    "InputExpr",
    "Stage",
    "SchemeSpec",
    "Integrator",
    "ValidationReport",
    "BUILTIN_KINDS",
    "builtin_scheme",
    "validate_consistency",
    "step",
    "unsplit_step",
    "backward_euler_solve",
]


@dataclass(frozen=True)
class InputExpr:
    """``q_n + sum(coef * increment[stage])``; the base weight is always 1."""

    terms: tuple = ()

    def __init__(self, terms: Iterable = ()):
        norm = []
        seen = set()
        for sid, coef in terms:
            if sid in seen:
                raise ValueError(f"stage {sid!r} referenced twice in one input expression")
            seen.add(sid)
            norm.append((sid, Fraction(coef)))
        object.__setattr__(self, "terms", tuple(norm))

    def coefficient(self, stage_id: str) -> Fraction:
        for sid, coef in self.terms:
            if sid == stage_id:
                return coef
        return Fraction(0)

    @property
    def stage_ids(self) -> list:
        return [sid for sid, _ in self.terms]


@dataclass(frozen=True)
class Stage:
    id: str
    process: str
    input: InputExpr = field(default_factory=InputExpr)


@dataclass(frozen=True)
class SchemeSpec:
    name: str
    stages: tuple
    output_weights: Mapping = field(default_factory=dict)

    def __init__(self, name: str, stages: Sequence[Stage], output_weights: Optional[Mapping] = None):
        stages = tuple(stages)
        ids = [s.id for s in stages]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ValueError(f"duplicate stage id(s): {', '.join(dup)}")
        for pos, s in enumerate(stages):
            earlier = set(ids[:pos])
            for ref in s.input.stage_ids:
                if ref not in earlier:
                    kind = "forward reference to" if ref in ids else "unknown stage"
                    raise ValueError(f"stage {s.id!r}: {kind} {ref!r}")
        weights = {sid: Fraction(1) for sid in ids}
        if output_weights is not None:
            weights = {sid: Fraction(0) for sid in ids}
            for sid, w in output_weights.items():
                if sid not in weights:
                    raise ValueError(f"output weight for unknown stage {sid!r}")
                weights[sid] = Fraction(w)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "stages", stages)
        object.__setattr__(self, "output_weights", weights)

    def stage(self, stage_id: str) -> Stage:
        for s in self.stages:
            if s.id == stage_id:
                return s
        raise KeyError(stage_id)

    @property
    def process_names(self) -> list:
        return [s.process for s in self.stages]

    def stage_for_process(self, process: str) -> Stage:
        for s in self.stages:
            if s.process == process:
                return s
        raise KeyError(f"no stage integrates process {process!r}")


@dataclass(frozen=True)
class Integrator:
    """How each stage integrates its process: ``exact`` (oracle) or a one-step Euler rule."""

    kind: str = "exact"
    tol: Optional[Tolerance] = None

    KINDS = ("exact", "forward-euler", "backward-euler")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown integrator {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "exact" and self.tol is None:
            object.__setattr__(self, "tol", DEFAULT_TOL)
        if self.kind != "exact" and self.tol is not None:
            raise ValueError(f"{self.kind} takes no tolerance")

    @classmethod
    def exact(cls, tol: Tolerance = DEFAULT_TOL) -> "Integrator":
        return cls("exact", tol)


FORWARD_EULER = Integrator("forward-euler")
BACKWARD_EULER = Integrator("backward-euler")

BUILTIN_KINDS = ("parallel", "sequential", "eam_original", "eam_revised")


def _stage_id(name: str) -> str:
    return name.lower()


def builtin_scheme(kind: str, process_names: Sequence[str]) -> SchemeSpec:
    """Construct one of the four reference schemes.

    ``parallel`` starts every process from ``q_n``; ``sequential`` chains
    them in the given order.  Both accept two or more processes.  The EAMv1
    variants need exactly three names ordered (emission, removal, mixing):
    ``eam_original`` is the three-way chain and ``eam_revised`` runs the first
    two in parallel and feeds both increments to the third.
    """
    names = list(process_names)
    ids = [_stage_id(n) for n in names]
    if len(set(ids)) != len(ids):
        raise ValueError(f"process names must be distinct (case-insensitive): {names}")
    if kind == "parallel":
        if len(names) < 2:
            raise ValueError("parallel splitting needs at least 2 processes")
        stages = [Stage(i, n) for i, n in zip(ids, names)]
    elif kind in ("sequential", "eam_original"):
        if kind == "sequential" and len(names) < 2:
            raise ValueError("sequential splitting needs at least 2 processes")
        if kind == "eam_original" and len(names) != 3:
            raise ValueError(f"eam_original needs exactly 3 processes, got {len(names)}")
        stages = [Stage(i, n, InputExpr((prev, 1) for prev in ids[:k])) for k, (i, n) in enumerate(zip(ids, names))]
    elif kind == "eam_revised":
        if len(names) != 3:
            raise ValueError(f"eam_revised needs exactly 3 processes, got {len(names)}")
        a, b, c = ids
        stages = [
            Stage(a, names[0]),
            Stage(b, names[1]),
            Stage(c, names[2], InputExpr([(a, 1), (b, 1)])),
        ]
    else:
        raise ValueError(f"unknown builtin scheme {kind!r}; expected one of {BUILTIN_KINDS}")
    return SchemeSpec(kind, stages)


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "consistent" if self.ok else "; ".join(self.violations)


def validate_consistency(scheme: SchemeSpec, problem=None) -> ValidationReport:
    """List the reasons ``scheme`` is not a first-order consistent splitting.

    ``problem`` may be a :class:`ProblemSpec`, a sequence of process names,
    or ``None`` (then only the processes the scheme mentions are checked).
    """
    if problem is None:
        known = list(dict.fromkeys(scheme.process_names))
    elif isinstance(problem, ProblemSpec):
        known = problem.names
    else:
        known = list(problem)
    out = []
    for s in scheme.stages:
        if s.process not in known:
            out.append(f"stage {s.id}: unknown process {s.process}")
    for name in known:
        count = scheme.process_names.count(name)
        if count == 0:
            out.append(f"process {name} never integrated")
        elif count > 1:
            out.append(f"process {name} integrated {count} times (substepping is not supported)")
    referenced = {sid for s in scheme.stages for sid in s.input.stage_ids}
    for s in scheme.stages:
        w = scheme.output_weights[s.id]
        if w != 1:
            out.append(f"stage {s.id}: output weight {w} (output weight ≠ 1 breaks first-order consistency)")
        if w == 0 and s.id not in referenced:
            out.append(f"stage {s.id}: unused stage")
    return ValidationReport(out)


def backward_euler_solve(process: ProcessModel, q_in: np.ndarray, dt: float, tol: float = 1e-12, max_iter: int = 50):
    """Solve ``y = q_in + dt*X(y)`` by damped Newton; returns ``y``."""

    def resid(y):
        return y - q_in - dt * process(y)

    y = q_in + dt * process(q_in)
    r = resid(y)
    eye = np.eye(q_in.shape[0])
    for _ in range(max_iter):
        scale = tol * (1.0 + np.max(np.abs(y)))
        if np.max(np.abs(r)) <= scale:
            return y
        delta = np.linalg.solve(eye - dt * process.jac(y), -r)
        lam = 1.0
        rnorm = np.max(np.abs(r))
        while True:
            y_try = y + lam * delta
            r_try = resid(y_try)
            if np.all(np.isfinite(r_try)) and np.max(np.abs(r_try)) < rnorm or lam < 1e-4:
                break
            lam *= 0.5
        y, r = y_try, r_try
    if np.max(np.abs(r)) <= tol * (1.0 + np.max(np.abs(y))) * 10:
        return y
    raise RuntimeError(f"backward Euler Newton iteration for {process.name!r} did not converge")


def _increment(process: ProcessModel, q_in: np.ndarray, dt: float, integ: Integrator) -> np.ndarray:
    if dt == 0.0:
        return np.zeros_like(q_in)
    if integ.kind == "forward-euler":
        return dt * process(q_in)
    if integ.kind == "backward-euler":
        return backward_euler_solve(process, q_in, dt) - q_in
    return process_solve(process, q_in, dt, integ.tol) - q_in


def step(scheme: SchemeSpec, problem: ProblemSpec, q_n, dt: float, integ: Integrator = Integrator()):
    """Advance one coupled step.

    Returns ``(q_next, increments)`` where ``increments`` maps stage id to
    ``Phi(process, input, dt) - input``.
    """
    q_n = as_state(q_n, problem.dim)
    if dt < 0:
        raise ValueError("dt must be non-negative")
    increments = {}
    for s in scheme.stages:
        q_in = q_n
        for sid, coef in s.input.terms:
            if sid not in increments:
                raise RuntimeError(f"internal error: stage {s.id!r} references unresolved stage {sid!r}")
            q_in = q_in + float(coef) * increments[sid]
        increments[s.id] = _increment(problem.process(s.process), q_in, dt, integ)
    q_next = q_n.copy()
    for s in scheme.stages:
        w = scheme.output_weights[s.id]
        if w == 1:
            q_next = q_next + increments[s.id]
        elif w != 0:
            q_next = q_next + float(w) * increments[s.id]
    return q_next, increments


def unsplit_step(problem: ProblemSpec, q_n, dt: float, integ: Integrator = Integrator()) -> np.ndarray:
    """One step of the unsplit problem with the same per-process integrator."""
    total = ProcessModel(
        "total",
        lambda q: eval_total_rhs(problem, q),
        lambda q: sum(p.jac(q) for p in problem.processes),
    )
    q_n = as_state(q_n, problem.dim)
    return q_n + _increment(total, q_n, dt, integ)
