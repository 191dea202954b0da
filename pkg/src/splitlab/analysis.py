"""Local truncation error: measurement, per-stage attribution, and prediction.

The measured LTE of a scheme is ``step(q(t_n)) - q(t_n + dt)`` with both
sides computed by the tight-tolerance oracle.  The attribution of a stage
integrating process ``X_i`` is its increment minus ``int_0^dt X_i(q(eta))``
along the exact trajectory, so the weighted attributions sum to the total.

The leading-order prediction follows a sign rule: a stage for ``X_i`` whose
input contains ``c`` times the increment of the stage for ``X_j`` carries the
term ``(dt^2/2) (2c - 1) (dX_i/dq) X_j``.  ``c = 0`` (isolation only) gives
``-1``; ``c = 1`` (a full step of ``X_j`` already applied) gives ``+1``.
Values of ``c`` outside {0, 1} extrapolate the rule and are flagged.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import DEFAULT_TOL, ProblemSpec, SolverFailure, Tolerance, as_state, reference_solve
from .schemes import Integrator, SchemeSpec, step, validate_consistency

__all__ = [
    "CoefficientMatrix",
    "LteSample",
    "OrderFit",
    "LteReport",
    "NOISE_FACTOR",
    "state_at",
    "noise_floor",
    "measure_lte",
    "attribute_lte",
    "predict_leading_coefficients",
    "predict_leading_lte",
    "fit_order",
    "lte_sweep",
    "global_error",
    "max_norm",
]

# samples whose measured LTE is below NOISE_FACTOR * oracle tolerance are not fitted
NOISE_FACTOR = 100.0


def max_norm(v) -> float:
    return float(np.max(np.abs(v), initial=0.0))


def _require_consistent(scheme: SchemeSpec, problem=None):
    report = validate_consistency(scheme, problem)
    if not report.ok:
        raise ValueError(f"scheme {scheme.name!r} is not consistent: {report}")


def state_at(problem: ProblemSpec, t_n: float, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Oracle solution ``q(t_n)`` from the problem's initial condition."""
    if t_n == 0:
        return np.array(problem.q_ic, dtype=float)
    return reference_solve(problem, problem.q_ic, t_n, tol).q_end


def noise_floor(q, tol: Tolerance = DEFAULT_TOL) -> float:
    return NOISE_FACTOR * tol.scale(q)


def _measure(scheme, problem, q_n, dt, tol, integ):
    q_next, incr = step(scheme, problem, q_n, dt, integ)
    ref = reference_solve(problem, q_n, dt, tol)
    total = q_next - ref.q_end
    per_stage = {s.id: incr[s.id] - ref.process_integrals[s.process] for s in scheme.stages}
    return total, per_stage


def measure_lte(scheme: SchemeSpec, problem: ProblemSpec, t_n: float, dt: float,
                tol: Tolerance = DEFAULT_TOL, integ: Optional[Integrator] = None) -> np.ndarray:
    _require_consistent(scheme, problem)
    q_n = state_at(problem, t_n, tol)
    q_next, _ = step(scheme, problem, q_n, dt, integ or Integrator.exact(tol))
    return q_next - reference_solve(problem, q_n, dt, tol).q_end


def attribute_lte(scheme: SchemeSpec, problem: ProblemSpec, t_n: float, dt: float,
                  tol: Tolerance = DEFAULT_TOL, integ: Optional[Integrator] = None) -> dict:
    """Per-stage share of the LTE: increment minus the exact-trajectory process integral."""
    _require_consistent(scheme, problem)
    q_n = state_at(problem, t_n, tol)
    _, per_stage = _measure(scheme, problem, q_n, dt, tol, integ or Integrator.exact(tol))
    return per_stage


@dataclass(frozen=True)
class CoefficientMatrix:
    """Signed weights ``s[(i, j)]`` of ``(dt^2/2) (dX_i/dq) X_j`` in the LTE, ``i != j``."""

    processes: tuple
    s: dict
    extrapolated: bool = False

    def __getitem__(self, key) -> Fraction:
        return self.s[key]

    def row(self, consumer: str) -> dict:
        return {j: self.s[(consumer, j)] for j in self.processes if j != consumer}

    def format_table(self) -> str:
        names = list(self.processes)
        width = max(6, max(len(n) for n in names) + 2)
        lines = ["consumer".ljust(10) + "".join(n.rjust(width) for n in names)]
        for i in names:
            cells = []
            for j in names:
                if i == j:
                    cells.append(".".rjust(width))
                else:
                    v = self.s[(i, j)]
                    txt = ("+" if v > 0 else "") + str(v)
                    cells.append(txt.rjust(width))
            lines.append(i.ljust(10) + "".join(cells))
        return "\n".join(lines)


def predict_leading_coefficients(scheme: SchemeSpec, processes: Optional[Sequence[str]] = None) -> CoefficientMatrix:
    if isinstance(processes, ProblemSpec):
        processes = processes.names
    _require_consistent(scheme, processes)
    names = tuple(processes) if processes is not None else tuple(scheme.process_names)
    s = {}
    extrapolated = False
    for st in scheme.stages:
        for other in scheme.stages:
            if other.id == st.id:
                continue
            c = st.input.coefficient(other.id)
            if c not in (0, 1):
                extrapolated = True
            s[(st.process, other.process)] = 2 * c - 1
    return CoefficientMatrix(names, s, extrapolated)


def predict_leading_lte(scheme: SchemeSpec, problem: ProblemSpec, q, dt: float):
    """Leading ``O(dt^2)`` LTE: ``(total, per_process)``; vectors use ``J_i(q) @ X_j(q)``."""
    q = as_state(q, problem.dim)
    coeffs = predict_leading_coefficients(scheme, problem)
    tend = {p.name: p(q) for p in problem.processes}
    per_process = {}
    for p in problem.processes:
        jac = p.jac(q)
        acc = np.zeros(problem.dim)
        for (i, j), c in coeffs.s.items():
            if i == p.name and c != 0:
                acc = acc + float(c) * (jac @ tend[j])
        per_process[p.name] = 0.5 * dt * dt * acc
    total = np.sum(list(per_process.values()), axis=0)
    return total, per_process


@dataclass(frozen=True)
class OrderFit:
    slope: float
    intercept: float
    r_squared: float
    dts: tuple
    errors: tuple


def fit_order(dts: Sequence[float], errors: Sequence[float]) -> OrderFit:
    """Least-squares line through ``(log dt, log error)``; the slope estimates the order."""
    dts = [float(d) for d in dts]
    errors = [float(e) for e in errors]
    if len(dts) != len(errors):
        raise ValueError("dts and errors must have the same length")
    if len(dts) < 3:
        raise ValueError("fit_order needs at least 3 samples")
    if any(e <= 0 for e in errors):
        raise ValueError("errors must be strictly positive (drop noise-dominated samples)")
    if any(d <= 0 for d in dts):
        raise ValueError("dts must be strictly positive")
    x = np.log(dts)
    y = np.log(errors)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return OrderFit(float(slope), float(intercept), r2, tuple(dts), tuple(errors))


@dataclass
class LteSample:
    dt: float
    measured_total: np.ndarray
    measured_per_stage: dict
    predicted_total: np.ndarray
    predicted_per_stage: dict
    below_noise_floor: bool = False
    stage_below_noise_floor: dict = field(default_factory=dict)
    residual_below_noise_floor: dict = field(default_factory=dict)


@dataclass
class LteReport:
    scheme: SchemeSpec
    t_n: float
    q_n: np.ndarray
    noise_floor: float
    samples: list
    total_fit: Optional[OrderFit]
    stage_fits: dict
    residual_fit: Optional[OrderFit]
    stage_residual_fits: dict
    flags: list = field(default_factory=list)

    def sample(self, dt: float) -> LteSample:
        for s in self.samples:
            if s.dt == dt:
                return s
        raise KeyError(dt)


def _fit_above_floor(dts, values, floor):
    keep = [(d, v) for d, v in zip(dts, values) if v > floor]
    if len(keep) < 3:
        return None
    return fit_order([d for d, _ in keep], [v for _, v in keep])


def lte_sweep(scheme: SchemeSpec, problem: ProblemSpec, t_n: float, dts: Sequence[float],
              tol: Tolerance = DEFAULT_TOL, integ: Optional[Integrator] = None) -> LteReport:
    """Measure, attribute and predict the LTE over a decreasing list of ``dts``.

    Norms are max-norms.  Samples under the noise floor are flagged and left
    out of the order fits; a fit with fewer than 3 usable samples is ``None``.
    """
    dts = [float(d) for d in dts]
    if any(b >= a for a, b in zip(dts, dts[1:])):
        raise ValueError("dts must be strictly decreasing")
    _require_consistent(scheme, problem)
    integ = integ or Integrator.exact(tol)
    q_n = state_at(problem, t_n, tol)
    floor = noise_floor(q_n, tol)
    coeffs = predict_leading_coefficients(scheme, problem)
    samples = []
    for dt in dts:
        try:
            total, per_stage = _measure(scheme, problem, q_n, dt, tol, integ)
        except SolverFailure as exc:
            exc.dt = dt
            raise
        p_total, p_proc = predict_leading_lte(scheme, problem, q_n, dt)
        p_stage = {s.id: p_proc[s.process] for s in scheme.stages}
        samples.append(
            LteSample(
                dt=dt,
                measured_total=total,
                measured_per_stage=per_stage,
                predicted_total=p_total,
                predicted_per_stage=p_stage,
                below_noise_floor=max_norm(total) <= floor,
                stage_below_noise_floor={k: max_norm(v) <= floor for k, v in per_stage.items()},
                residual_below_noise_floor={
                    "TOTAL": max_norm(total - p_total) <= floor,
                    **{k: max_norm(per_stage[k] - p_stage[k]) <= floor for k in per_stage},
                },
            )
        )

    flags = []
    total_fit = _fit_above_floor(dts, [max_norm(s.measured_total) for s in samples], floor)
    if total_fit is None:
        flags.append("total LTE below noise floor")
    residual_fit = _fit_above_floor(dts, [max_norm(s.measured_total - s.predicted_total) for s in samples], floor)
    stage_fits, stage_res = {}, {}
    for st in scheme.stages:
        k = st.id
        stage_fits[k] = _fit_above_floor(dts, [max_norm(s.measured_per_stage[k]) for s in samples], floor)
        stage_res[k] = _fit_above_floor(
            dts, [max_norm(s.measured_per_stage[k] - s.predicted_per_stage[k]) for s in samples], floor
        )
    if coeffs.extrapolated:
        flags.append("extrapolated rule: fractional input coefficients")
    if integ.kind != "exact":
        flags.append(f"prediction assumes exact sub-integration; measured with {integ.kind}")
    return LteReport(scheme, t_n, q_n, floor, samples, total_fit, stage_fits, residual_fit, stage_res, flags)


def global_error(scheme: SchemeSpec, problem: ProblemSpec, T: float, dt: float,
                 tol: Tolerance = DEFAULT_TOL, integ: Optional[Integrator] = None) -> float:
    """``max|q^N - q(T)|`` after ``N = T/dt`` coupled steps from the initial condition."""
    n_steps = round(T / dt)
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * max(abs(T), 1.0):
        raise ValueError(f"T={T} is not a positive integer multiple of dt={dt}")
    _require_consistent(scheme, problem)
    integ = integ or Integrator.exact(tol)
    q = np.array(problem.q_ic, dtype=float)
    for _ in range(n_steps):
        q, _ = step(scheme, problem, q, dt, integ)
    exact = reference_solve(problem, problem.q_ic, T, tol).q_end
    return max_norm(q - exact)
