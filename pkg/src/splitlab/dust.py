"""Three-process dust life-cycle toy problems: emission, dry removal, mixing.

Process order is always (A, B, C) = (emission, dry removal, turbulent mixing),
which is the order the EAMv1 built-in schemes expect.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .analysis import attribute_lte, predict_leading_lte, state_at
from .core import DEFAULT_TOL, ProblemSpec, ProcessModel, Tolerance
from .schemes import builtin_scheme

__all__ = [
    "ScalarDustParams",
    "ColumnDustParams",
    "make_scalar_dust_problem",
    "make_column_dust_problem",
    "diffusion_matrix",
    "ComparisonRow",
    "ComparisonReport",
    "compare_schemes_report",
]


@dataclass(frozen=True)
class ScalarDustParams:
    E: float = 2.0
    k_d: float = 1.0
    k_m: float = 0.5
    q_bg: float = 0.0
    q_ic: float = 1.0

    def __post_init__(self):
        if not self.E > 0:
            raise ValueError("emission E must be positive")
        if not self.k_d > 0:
            raise ValueError("removal rate k_d must be positive")
        # k_m = 0 is the no-mixing limit, still a valid three-process problem
        if not self.k_m >= 0:
            raise ValueError("mixing rate k_m must be non-negative")
        if not self.q_bg >= 0:
            raise ValueError("background q_bg must be non-negative")


def make_scalar_dust_problem(p: ScalarDustParams = ScalarDustParams()) -> ProblemSpec:
    E, k_d, k_m, q_bg = p.E, p.k_d, p.k_m, p.q_bg
    return ProblemSpec(
        [
            ProcessModel("A", lambda q: np.full_like(q, E), lambda q: np.zeros((1, 1))),
            ProcessModel("B", lambda q: -k_d * q, lambda q: np.full((1, 1), -k_d)),
            ProcessModel("C", lambda q: -k_m * (q - q_bg), lambda q: np.full((1, 1), -k_m)),
        ],
        dim=1,
        q_ic=[p.q_ic],
    )


@dataclass(frozen=True)
class ColumnDustParams:
    """Vertical column of ``n`` layers, layer 1 (index 0) at the surface.

    The initial profile is ``q_surface * exp(-z / scale_height)`` at layer
    midpoints, so columns of equal depth start from the same physical state.
    """

    n: int = 10
    dz: float = 0.1
    E: float = 1.0
    v_d: float = 0.01
    K: float = 0.01
    q_surface: float = 1.0
    scale_height: float = 0.25

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("a column needs n >= 2 layers")
        for name in ("dz", "E", "v_d", "K", "q_surface", "scale_height"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def depth(self) -> float:
        return self.n * self.dz


def diffusion_matrix(n: int, dz: float, K: float) -> np.ndarray:
    """``K/dz^2`` times the second difference with no-flux ends; rows sum to zero."""
    m = np.zeros((n, n))
    for i in range(n):
        if i > 0:
            m[i, i - 1] += 1.0
            m[i, i] -= 1.0
        if i < n - 1:
            m[i, i + 1] += 1.0
            m[i, i] -= 1.0
    return K / dz**2 * m


def make_column_dust_problem(p: ColumnDustParams = ColumnDustParams(), q_ic: Optional[Sequence[float]] = None) -> ProblemSpec:
    n, dz = int(p.n), p.dz
    emission = np.zeros(n)
    emission[0] = p.E / dz
    removal = np.zeros((n, n))
    removal[0, 0] = -p.v_d / dz
    mixing = diffusion_matrix(n, dz, p.K)
    coef = p.K / dz**2

    def mix(q):
        # interface fluxes; no-flux at both ends
        flux = coef * np.diff(q)
        out = np.zeros_like(q)
        out[:-1] += flux
        out[1:] -= flux
        return out
    if q_ic is None:
        z = (np.arange(n) + 0.5) * dz
        q_ic = p.q_surface * np.exp(-z / p.scale_height)
    return ProblemSpec(
        [
            ProcessModel("A", lambda q: emission.copy(), lambda q: np.zeros((n, n))),
            ProcessModel("B", lambda q: removal @ q, lambda q: removal),
            ProcessModel("C", mix, lambda q: mixing),
        ],
        dim=n,
        q_ic=q_ic,
    )


@dataclass(frozen=True)
class ComparisonRow:
    dt: float
    lte_b_ori: float
    lte_b_rev: float
    predicted_b_ori: float
    predicted_b_rev: float

    @property
    def ratio(self) -> float:
        return abs(self.lte_b_rev) / abs(self.lte_b_ori)

    @property
    def ori_negative(self) -> bool:
        return self.lte_b_ori < 0

    @property
    def rev_not_larger(self) -> bool:
        return abs(self.lte_b_rev) <= abs(self.lte_b_ori)


@dataclass
class ComparisonReport:
    t_n: float
    component: int
    schemes: tuple
    q_n: float
    A: float
    B: float
    C: float
    dB_dq: float
    rows: list

    @property
    def factor_ori(self) -> float:
        """``|A - C|``, the removal-error factor of the original coupling."""
        return abs(self.A - self.C)

    @property
    def factor_rev(self) -> float:
        return abs(-self.A - self.C)

    @property
    def regime(self) -> bool:
        """Whether this point is in the analysed regime A > 0, B < 0, C < 0, dB/dq < 0."""
        return self.A > 0 and self.B < 0 and self.C < 0 and self.dB_dq < 0

    def summary(self) -> str:
        row = self.rows[-1]
        sign = "negative" if row.ori_negative else "non-negative"
        return f"lte_B sign: {sign} (original); |Rev|/|Ori| = {row.ratio:.2f}"


def compare_schemes_report(problem: ProblemSpec, t_n: float, dts: Sequence[float],
                           tol: Tolerance = DEFAULT_TOL, component: int = 0,
                           schemes: Optional[tuple] = None) -> ComparisonReport:
    """Dry-removal LTE under the original and revised EAMv1 couplings.

    ``component`` selects the layer for column problems (0 is the surface).
    ``schemes`` overrides the (original, revised) pair.  The summary line
    reports the smallest ``dt``.
    """
    if len(problem.processes) != 3:
        raise ValueError("the comparison needs a three-process (A, B, C) problem")
    names = problem.names
    if schemes is None:
        ori = builtin_scheme("eam_original", names)
        rev = builtin_scheme("eam_revised", names)
    else:
        ori, rev = schemes
    b_ori = ori.stage_for_process(names[1]).id
    b_rev = rev.stage_for_process(names[1]).id
    q_n = state_at(problem, t_n, tol)
    rows = []
    for dt in dts:
        att_o = attribute_lte(ori, problem, t_n, dt, tol)
        att_r = attribute_lte(rev, problem, t_n, dt, tol)
        _, pred_o = predict_leading_lte(ori, problem, q_n, dt)
        _, pred_r = predict_leading_lte(rev, problem, q_n, dt)
        rows.append(
            ComparisonRow(
                dt=float(dt),
                lte_b_ori=float(att_o[b_ori][component]),
                lte_b_rev=float(att_r[b_rev][component]),
                predicted_b_ori=float(pred_o[names[1]][component]),
                predicted_b_rev=float(pred_r[names[1]][component]),
            )
        )
    a, b, c = (p(q_n)[component] for p in problem.processes)
    db = problem.processes[1].jac(q_n)[component, component]
    return ComparisonReport(float(t_n), component, (ori.name, rev.name), float(q_n[component]), float(a), float(b), float(c), float(db), rows)
