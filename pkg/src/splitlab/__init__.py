"""Operator-splitting error laboratory.

Measure the local truncation error of process-coupling schemes against a
tight-tolerance oracle, attribute it to individual stages, and predict its
leading-order terms from the structure of the scheme alone.
"""
from .analysis import (
    CoefficientMatrix,
    LteReport,
    LteSample,
    OrderFit,
    attribute_lte,
    fit_order,
    global_error,
    lte_sweep,
    measure_lte,
    predict_leading_coefficients,
    predict_leading_lte,
)
from .core import (
    DEFAULT_TOL,
    ProblemSpec,
    ProcessModel,
    SolveResult,
    SolverFailure,
    Tolerance,
    eval_total_rhs,
    process_solve,
    reference_solve,
)
from .dsl import SchemeSyntaxError, format_scheme, parse_scheme
from .dust import (
    ColumnDustParams,
    ScalarDustParams,
    compare_schemes_report,
    make_column_dust_problem,
    make_scalar_dust_problem,
)
from .schemes import (
    BACKWARD_EULER,
    FORWARD_EULER,
    InputExpr,
    Integrator,
    SchemeSpec,
    Stage,
    builtin_scheme,
    step,
    unsplit_step,
    validate_consistency,
)

__version__ = "0.1.0"
