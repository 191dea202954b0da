"""Command-line front end.

    splitlab predict <scheme-file|builtin> [--processes A,B,C]
    splitlab sweep --config run.json [--out lte.csv] [--format csv|json]
    splitlab compare --config run.json [--out cmp.csv]

Exit codes: 0 success, 1 runtime or solver failure, 2 input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import LteReport, fit_order, lte_sweep, predict_leading_coefficients
from .core import ProblemSpec, SolverFailure, Tolerance
from .dsl import parse_scheme
from .dust import ComparisonReport, compare_schemes_report
from .problems import build_problem
from .schemes import BUILTIN_KINDS, Integrator, SchemeSpec, builtin_scheme, validate_consistency

__all__ = [
    "SWEEP_HEADER",
    "COMPARE_HEADER",
    "RunConfig",
    "load_config",
    "resolve_scheme",
    "sweep_rows",
    "write_sweep_csv",
    "read_sweep_csv",
    "fits_from_rows",
    "main",
]

SWEEP_HEADER = ["scheme", "process", "dt", "measured", "predicted_leading", "residual", "below_noise_floor"]
COMPARE_HEADER = [
    "problem", "layer", "dt", "scheme_ori", "scheme_rev", "lte_b_ori", "lte_b_rev",
    "predicted_b_ori", "predicted_b_rev", "ratio", "ori_negative", "rev_not_larger",
    "factor_ori", "factor_rev",
]
DEFAULT_DTS = [0.04, 0.02, 0.01, 0.005]


class InputError(Exception):
    """Bad command-line or configuration input (exit code 2)."""


@dataclass
class RunConfig:
    problems: list  # [(label, name, params)]
    schemes: list  # builtin names or DSL paths
    t_n: float = 0.0
    dts: list = field(default_factory=lambda: list(DEFAULT_DTS))
    tol: Tolerance = field(default_factory=Tolerance)
    integrator: str = "exact"
    out: Optional[str] = None
    format: str = "csv"
    processes: Optional[list] = None
    layer: int = 0
    base_dir: Path = Path(".")


def _num(x) -> str:
    # shortest round-trip decimal
    return repr(float(x))


def _problem_entries(raw) -> list:
    entries = raw if isinstance(raw, list) else [raw]
    out = []
    for k, e in enumerate(entries):
        if isinstance(e, str):
            e = {"name": e}
        if not isinstance(e, dict) or "name" not in e:
            raise InputError("each problem entry needs a 'name'")
        params = e.get("params", {})
        if not isinstance(params, dict):
            raise InputError("problem 'params' must be an object")
        label = e.get("label") or (e["name"] if len(entries) == 1 else f"{e['name']}[{k}]")
        out.append((label, e["name"], params))
    return out


def load_config(path, kind: str) -> RunConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "problem" not in doc:
        raise InputError("config needs top-level key 'problem'")
    unknown = set(doc) - {"problem", "scheme", "sweep", "output"}
    if unknown:
        raise InputError(f"unknown config keys: {sorted(unknown)}")
    scheme = doc.get("scheme", ["eam_original", "eam_revised"] if kind == "compare" else None)
    if scheme is None:
        raise InputError("config needs top-level key 'scheme'")
    schemes = scheme if isinstance(scheme, list) else [scheme]
    if kind == "compare" and len(schemes) != 2:
        raise InputError("compare needs exactly two schemes")
    sweep = doc.get("sweep", {})
    output = doc.get("output", {})
    try:
        cfg = RunConfig(
            problems=_problem_entries(doc["problem"]),
            schemes=list(schemes),
            t_n=float(sweep.get("t_n", 0.0)),
            dts=[float(d) for d in sweep.get("dts", DEFAULT_DTS)],
            tol=Tolerance(float(sweep.get("tol_rel", 1e-12)), float(sweep.get("tol_abs", 1e-14))),
            integrator=sweep.get("integrator", "exact"),
            out=output.get("path"),
            format=output.get("format", "csv"),
            processes=sweep.get("processes"),
            layer=int(sweep.get("layer", 0)),
            base_dir=path.parent,
        )
    except (TypeError, ValueError, AttributeError) as exc:
        raise InputError(f"bad config: {exc}") from None
    if any(b >= a for a, b in zip(cfg.dts, cfg.dts[1:])) or not cfg.dts:
        raise InputError("sweep.dts must be a non-empty strictly decreasing list")
    return cfg


def resolve_scheme(source: str, process_names, base_dir: Path = Path(".")) -> SchemeSpec:
    if source in BUILTIN_KINDS:
        return builtin_scheme(source, process_names)
    path = Path(source)
    if not path.is_absolute() and not path.exists():
        path = base_dir / path
    if not path.exists():
        raise InputError(f"scheme {source!r} is neither a builtin {BUILTIN_KINDS} nor an existing file")
    return parse_scheme(path.read_text(encoding="utf-8"))


def _signed_peak(v: np.ndarray) -> int:
    return int(np.argmax(np.abs(v)))


def sweep_rows(report: LteReport) -> list:
    """CSV rows, one per (stage, dt) plus TOTAL, sorted (scheme, process, dt descending).

    Vector states report the component where ``|measured|`` peaks.
    """
    name = report.scheme.name
    rows = []
    for s in report.samples:
        series = [("TOTAL", s.measured_total, s.predicted_total, s.below_noise_floor)]
        for st in report.scheme.stages:
            series.append((st.process, s.measured_per_stage[st.id], s.predicted_per_stage[st.id],
                           s.stage_below_noise_floor[st.id]))
        for process, meas, pred, below in series:
            k = _signed_peak(meas)
            rows.append({
                "scheme": name,
                "process": process,
                "dt": s.dt,
                "measured": float(meas[k]),
                "predicted_leading": float(pred[k]),
                "residual": float(meas[k] - pred[k]),
                "below_noise_floor": bool(below),
            })
    rows.sort(key=lambda r: (r["scheme"], r["process"], -r["dt"]))
    return rows


def write_sweep_csv(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([
            r["scheme"], r["process"], _num(r["dt"]), _num(r["measured"]),
            _num(r["predicted_leading"]), _num(r["residual"]),
            "true" if r["below_noise_floor"] else "false",
        ])


def read_sweep_csv(fh) -> list:
    reader = csv.DictReader(fh)
    if reader.fieldnames != SWEEP_HEADER:
        raise ValueError(f"unexpected header {reader.fieldnames}")
    rows = []
    for r in reader:
        rows.append({
            "scheme": r["scheme"],
            "process": r["process"],
            "dt": float(r["dt"]),
            "measured": float(r["measured"]),
            "predicted_leading": float(r["predicted_leading"]),
            "residual": float(r["residual"]),
            "below_noise_floor": r["below_noise_floor"] == "true",
        })
    return rows


def fits_from_rows(rows) -> dict:
    """Order fits of ``|measured|`` per (scheme, process), skipping flagged rows."""
    groups = {}
    for r in rows:
        if not r["below_noise_floor"]:
            groups.setdefault((r["scheme"], r["process"]), []).append((r["dt"], abs(r["measured"])))
    fits = {}
    for key, pts in groups.items():
        if len(pts) >= 3:
            pts.sort(reverse=True)
            fits[key] = fit_order([d for d, _ in pts], [e for _, e in pts])
    return fits


def _report_json(report: LteReport) -> dict:
    def fit(f):
        return None if f is None else {"slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared}

    return {
        "scheme": report.scheme.name,
        "t_n": report.t_n,
        "q_n": report.q_n.tolist(),
        "noise_floor": report.noise_floor,
        "flags": report.flags,
        "total_fit": fit(report.total_fit),
        "residual_fit": fit(report.residual_fit),
        "stage_fits": {k: fit(v) for k, v in report.stage_fits.items()},
        "stage_residual_fits": {k: fit(v) for k, v in report.stage_residual_fits.items()},
        "samples": [
            {
                "dt": s.dt,
                "measured_total": s.measured_total.tolist(),
                "predicted_total": s.predicted_total.tolist(),
                "measured_per_stage": {k: v.tolist() for k, v in s.measured_per_stage.items()},
                "predicted_per_stage": {k: v.tolist() for k, v in s.predicted_per_stage.items()},
                "below_noise_floor": s.below_noise_floor,
            }
            for s in report.samples
        ],
    }


def _fmt_slope(f) -> str:
    return "below noise floor" if f is None else f"{f.slope:.4f}"


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.tol_rel is not None or args.tol_abs is not None:
        cfg.tol = Tolerance(args.tol_rel if args.tol_rel is not None else cfg.tol.rel,
                            args.tol_abs if args.tol_abs is not None else cfg.tol.abs)
    if args.integrator is not None:
        cfg.integrator = args.integrator
    if args.out is not None:
        cfg.out = args.out
    if args.format is not None:
        cfg.format = args.format
    if cfg.format not in ("csv", "json"):
        raise InputError(f"unknown output format {cfg.format!r}")
    if cfg.integrator not in Integrator.KINDS:
        raise InputError(f"unknown integrator {cfg.integrator!r}")
    return cfg


def _integrator(cfg: RunConfig) -> Integrator:
    return Integrator.exact(cfg.tol) if cfg.integrator == "exact" else Integrator(cfg.integrator)


def _build(name, params) -> ProblemSpec:
    try:
        return build_problem(name, params)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def _checked_scheme(source, problem: ProblemSpec, cfg: RunConfig) -> SchemeSpec:
    scheme = resolve_scheme(source, problem.names, cfg.base_dir)
    report = validate_consistency(scheme, problem)
    if not report.ok:
        raise InputError(f"scheme {scheme.name!r}: {report}")
    return scheme


def cmd_predict(args) -> int:
    processes = args.processes.split(",") if args.processes else None
    if args.scheme in BUILTIN_KINDS:
        default = ["A", "B"] if args.scheme in ("parallel", "sequential") else ["A", "B", "C"]
        scheme = builtin_scheme(args.scheme, processes or default)
    else:
        scheme = resolve_scheme(args.scheme, processes)
    report = validate_consistency(scheme, processes)
    if not report.ok:
        raise InputError("\n".join(report.violations))
    coeffs = predict_leading_coefficients(scheme, processes)
    print(f"scheme {scheme.name}: lte ~ dt^2/2 * sum_j s[i<-j] (dX_i/dq) X_j")
    print(coeffs.format_table())
    if coeffs.extrapolated:
        print("note: extrapolated rule (fractional input coefficients)")
    return 0


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config, "sweep"), args)
    integ = _integrator(cfg)
    reports = []
    for label, name, params in cfg.problems:
        problem = _build(name, params)
        for source in cfg.schemes:
            scheme = _checked_scheme(source, problem, cfg)
            try:
                report = lte_sweep(scheme, problem, cfg.t_n, cfg.dts, cfg.tol, integ)
            except SolverFailure as exc:
                print(f"error: solver failure at dt={getattr(exc, 'dt', '?')}: {exc}", file=sys.stderr)
                return 1
            reports.append((label, report))

    if cfg.format == "json":
        text = json.dumps([{"problem": lbl, **_report_json(r)} for lbl, r in reports], indent=2) + "\n"
    else:
        rows = [row for _, r in reports for row in sweep_rows(r)]
        rows.sort(key=lambda r: (r["scheme"], r["process"], -r["dt"]))
        buf = io.StringIO()
        write_sweep_csv(rows, buf)
        text = buf.getvalue()
    if cfg.out is None:
        sys.stdout.write(text)
        summary = sys.stderr
    else:
        Path(cfg.out).write_text(text)
        summary = sys.stdout
    for label, r in reports:
        print(f"[{label}] scheme {r.scheme.name}: total slope {_fmt_slope(r.total_fit)}, "
              f"residual slope {_fmt_slope(r.residual_fit)}", file=summary)
        for st in r.scheme.stages:
            print(f"  stage {st.id} ({st.process}): slope {_fmt_slope(r.stage_fits[st.id])}, "
                  f"residual slope {_fmt_slope(r.stage_residual_fits[st.id])}", file=summary)
        for flag in r.flags:
            print(f"  flag: {flag}", file=summary)
    return 0


def _compare_rows(label, rep: ComparisonReport) -> list:
    return [
        {
            "problem": label, "layer": rep.component, "dt": row.dt,
            "scheme_ori": rep.schemes[0], "scheme_rev": rep.schemes[1],
            "lte_b_ori": row.lte_b_ori, "lte_b_rev": row.lte_b_rev,
            "predicted_b_ori": row.predicted_b_ori, "predicted_b_rev": row.predicted_b_rev,
            "ratio": row.ratio, "ori_negative": row.ori_negative, "rev_not_larger": row.rev_not_larger,
            "factor_ori": rep.factor_ori, "factor_rev": rep.factor_rev,
        }
        for row in rep.rows
    ]


def cmd_compare(args) -> int:
    cfg = _apply_overrides(load_config(args.config, "compare"), args)
    blocks = []
    for label, name, params in cfg.problems:
        problem = _build(name, params)
        pair = tuple(_checked_scheme(src, problem, cfg) for src in cfg.schemes)
        try:
            rep = compare_schemes_report(problem, cfg.t_n, cfg.dts, cfg.tol, cfg.layer, pair)
        except SolverFailure as exc:
            print(f"error: solver failure: {exc}", file=sys.stderr)
            return 1
        blocks.append((label, rep))

    rows = [r for label, rep in blocks for r in _compare_rows(label, rep)]
    if cfg.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARE_HEADER)
        for r in rows:
            w.writerow([
                _num(r[k]) if isinstance(r[k], float) else ("true" if r[k] is True else "false" if r[k] is False else r[k])
                for k in COMPARE_HEADER
            ])
        text = buf.getvalue()
    if cfg.out is None:
        sys.stdout.write(text)
        summary = sys.stderr
    else:
        Path(cfg.out).write_text(text)
        summary = sys.stdout
    for label, rep in blocks:
        print(f"[{label}] layer {rep.component}: {rep.summary()}", file=summary)
        print(f"  |A-C| = {rep.factor_ori:.6g}, |-A-C| = {rep.factor_rev:.6g}, "
              f"regime A>0,B<0,C<0: {'yes' if rep.regime else 'no'}", file=summary)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splitlab", description="Splitting-error laboratory for multi-process ODEs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="print the leading-order coefficient table of a scheme")
    p.add_argument("scheme", help="builtin name or path to a scheme file")
    p.add_argument("--processes", help="comma-separated process names the scheme must cover")
    p.set_defaults(func=cmd_predict)

    for name, func, helptext in (
        ("sweep", cmd_sweep, "measure LTE over a dt sweep and fit orders"),
        ("compare", cmd_compare, "compare dry-removal LTE of two schemes"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--tol-rel", type=float)
        p.add_argument("--tol-abs", type=float)
        p.add_argument("--integrator", choices=Integrator.KINDS)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"))
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2
    except (SolverFailure, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
