"""``cv-kit`` command line: eval, verify, cv, estimate, panel.

Exit codes: 0 success, 1 numerical failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from cvkit.core import Family, PriceIncome, PublicBundle, UtilitySpec
from cvkit.duality import (
    example1_closed_forms,
    example2_closed_forms,
    example3_expenditure,
    solve_emp,
    solve_ump,
)
from cvkit.errors import (
    CardinalityError,
    ConvergenceError,
    CvKitError,
    DimensionError,
    DomainError,
    SpecificationError,
    UnattainableTargetError,
)
from cvkit.estimate import format_number, generate_panel, fit_panel, panel_to_csv
from cvkit.homogeneity import (
    DEFAULT_T_GRID,
    DEFAULT_TOL,
    PropertyReport,
    check_expenditure_scaling,
    check_hicksian_scaling,
    check_indirect_utility_scaling,
    check_marshallian_invariance,
    check_mrs_ray_invariance,
)
from cvkit.welfare import CvQuery, compute_cv, cv_from_phi

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
PHI_WARN_TOL = 1e-3


class UsageError(Exception):
    pass


# -- parsing helpers ---------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def load_spec(path: str) -> UtilitySpec:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"spec file not found: {path}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"spec file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise UsageError("spec file must hold a JSON object")
    return UtilitySpec.from_dict(data)


def _economy(args: argparse.Namespace) -> tuple[PriceIncome, PublicBundle]:
    if args.p is None or args.m is None or args.z1 is None:
        raise UsageError("--p, --m and --z1 are required")
    pi = PriceIncome(args.p, args.m)
    z = PublicBundle(args.z1, args.z2 or [])
    return pi, z


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy to Python, non-finite floats to ``null``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    target = Path(out)
    fd, tmp = tempfile.mkstemp(dir=target.parent or Path("."), prefix=f".{target.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json(obj: Any) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(["" if v is None or (isinstance(v, float) and math.isnan(v)) else format_number(v) for v in row])
    return buf.getvalue()


# -- eval --------------------------------------------------------------------


def _closed_form_block(spec: UtilitySpec, pi: PriceIncome, z: PublicBundle, u: float) -> dict[str, Any] | None:
    if spec.family is Family.POWER_WEIGHTED and spec.transform.is_identity and pi.prices.size == 2:
        cf = example1_closed_forms(spec.alpha, pi.prices, pi.income, z.z1)
        return {
            "k": cf.k,
            "demand": cf.demand.tolist(),
            "indirect_utility": cf.indirect_utility,
            "expenditure": cf.expenditure_at(u),
        }
    if spec.family is Family.LOG_POWER_WEIGHTED and pi.prices.size == 2:
        cf = example2_closed_forms(spec.alpha, pi.prices, z.z1, u, spec.transform.offset)
        return {"k": cf.k, "expenditure": cf.expenditure, "hicksian_demand": cf.hicksian_demand.tolist()}
    if spec.family is Family.ADDITIVE_SEPARABLE and spec.alpha == spec.beta:
        return {"expenditure": example3_expenditure(spec.alpha, pi.prices, z.z1, u)}
    return None


def cmd_eval(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    pi, z = _economy(args)
    ump = solve_ump(spec, pi, z, tol=args.tol)
    target = ump.indirect_utility if args.u is None else args.u
    emp = solve_emp(spec, target, pi.prices, z, tol=args.tol)
    report: dict[str, Any] = {
        "spec": spec.to_dict(),
        "ump": {"demand": ump.demand, "indirect_utility": ump.indirect_utility, "budget_residual": ump.residual},
        "emp": {"target_utility": target, "expenditure": emp.expenditure, "demand": emp.demand},
    }
    closed = _closed_form_block(spec, pi, z, target)
    if closed is not None:
        report["closed_form"] = closed
    if args.format == "csv":
        header = ["quantity", "numerical", "closed_form"]
        closed = closed or {}
        rows = [["indirect_utility", ump.indirect_utility, closed.get("indirect_utility")],
                ["expenditure", emp.expenditure, closed.get("expenditure")]]
        cf_demand = closed.get("demand")
        for n, x in enumerate(ump.demand, start=1):
            rows.append([f"x{n}", x, None if cf_demand is None else cf_demand[n - 1]])
        _emit(_labelled_csv(header, rows), args.out)
    else:
        _emit(_json(report), args.out)
    return EXIT_OK


def _labelled_csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for label, *values in rows:
        writer.writerow([label, *("" if v is None else format_number(v) for v in values)])
    return buf.getvalue()


# -- verify ------------------------------------------------------------------

CheckFn = Callable[[UtilitySpec, PriceIncome, PublicBundle, float], PropertyReport]


def _utility_levels(spec: UtilitySpec, pi: PriceIncome, z: PublicBundle) -> list[float]:
    # Two distinct utility levels: the baseline and the one reached at double income.
    return [
        solve_ump(spec, pi, z).indirect_utility,
        solve_ump(spec, pi.with_income(2 * pi.income), z).indirect_utility,
    ]


def _check_table() -> dict[str, CheckFn]:
    def indirect(mode: str) -> CheckFn:
        return lambda s, pi, z, tol: check_indirect_utility_scaling(s, pi, z, mode, tol=tol)

    def expenditure(mode: str) -> CheckFn:
        def run(s: UtilitySpec, pi: PriceIncome, z: PublicBundle, tol: float) -> PropertyReport:
            levels = _utility_levels(s, pi, z)
            return check_expenditure_scaling(s, levels if mode == "homothetic" else levels[0], pi.prices, z, mode, tol=tol)

        return run

    def hicksian(s: UtilitySpec, pi: PriceIncome, z: PublicBundle, tol: float) -> PropertyReport:
        return check_hicksian_scaling(s, solve_ump(s, pi, z).indirect_utility, pi.prices, z, tol=tol)

    def mrs(s: UtilitySpec, pi: PriceIncome, z: PublicBundle, tol: float) -> PropertyReport:
        return check_mrs_ray_invariance(s, solve_ump(s, pi, z).demand, z, tol=tol)

    return {
        "indirect_joint": indirect("joint"),
        "indirect_independent": indirect("independent"),
        "indirect_private": indirect("private"),
        "indirect_public": indirect("public"),
        "marshallian_invariance": lambda s, pi, z, tol: check_marshallian_invariance(s, pi, z, tol=tol),
        "expenditure_joint": expenditure("joint"),
        "expenditure_degree_one": expenditure("degree1"),
        "expenditure_public": expenditure("homothetic"),
        "hicksian_public": hicksian,
        "mrs_ray": mrs,
    }


CHECKS = _check_table()


def applicable_checks(spec: UtilitySpec) -> dict[str, bool]:
    """Check name -> whether it is expected to pass for this specification."""
    ordinal = {"marshallian_invariance": True, "mrs_ray": True}
    if spec.degrees is None:
        # Separable: public goods shift utility additively, so public scaling fails.
        expected = {**ordinal, "expenditure_public": False, "hicksian_public": False}
        if spec.joint_degree is not None:
            expected["expenditure_joint"] = True
        return expected
    expected = {**ordinal, "expenditure_public": True, "hicksian_public": True}
    if spec.transform.is_identity:
        expected.update(
            indirect_joint=True, indirect_independent=True, indirect_private=True, indirect_public=True, expenditure_joint=True
        )
    return expected


def cmd_verify(args: argparse.Namespace) -> int:
    spec = load_spec(args.spec)
    pi, z = _economy(args)
    expected = applicable_checks(spec)
    if args.checks is None:
        names = list(expected)
    else:
        names = [c.strip() for c in args.checks.split(",") if c.strip()]
        if not names:
            raise UsageError("--checks lists no checks")
        unknown = [c for c in names if c not in CHECKS]
        if unknown:
            raise UsageError(f"unknown checks: {', '.join(unknown)}; available: {', '.join(CHECKS)}")
        inapplicable = [c for c in names if c not in expected]
        if inapplicable:
            raise UsageError(f"checks not applicable to {spec.family.value}: {', '.join(inapplicable)}")
    reports = []
    ok = True
    for name in names:
        report = CHECKS[name](spec, pi, z, args.tol)
        ok &= report.passed == expected[name]
        reports.append((report, expected[name]))
    if args.format == "csv":
        rows = [[r.property_id.value, r.passed, exp, r.worst_violation] for r, exp in reports]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["property_id", "passed", "expected_to_pass", "worst_violation"])
        for pid, passed, exp, worst in rows:
            writer.writerow([pid, str(passed).lower(), str(exp).lower(), format_number(worst)])
        _emit(buf.getvalue(), args.out)
    else:
        payload = [{**r.to_dict(), "expected_to_pass": exp} for r, exp in reports]
        _emit(_json({"spec": spec.to_dict(), "all_expectations_met": ok, "reports": payload}), args.out)
    for report, exp in reports:
        status = "ok" if report.passed == exp else "UNEXPECTED"
        verdict = "pass" if report.passed else "fail"
        print(f"{report.property_id.value}: {verdict} (expected {'pass' if exp else 'fail'}) {status}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_NUMERIC


# -- cv ----------------------------------------------------------------------


def _cv_rows_from_phi(args: argparse.Namespace) -> list[dict[str, Any]]:
    if args.m is None:
        raise UsageError("--m is required with --phi")
    return [
        {
            "t": t,
            "cv_closed_form": cv_from_phi(args.phi, t, args.m),
            "cv_brute_force": math.nan,
            "per_good": [],
            "phi_used": args.phi,
            "baseline_utility": math.nan,
        }
        for t in args.t
    ]


def _warn_on_phi_mismatch(spec: UtilitySpec, pi: PriceIncome, z: PublicBundle) -> None:
    if spec.phi is None:
        print("warning: specification has no declared phi; closed-form CV not available", file=sys.stderr)
        return
    u0 = solve_ump(spec, pi, z).indirect_utility
    report = check_expenditure_scaling(spec, u0, pi.prices, z, "homothetic")
    phi_hat = report.measured["phi_hat"]
    if abs(phi_hat - spec.phi) > PHI_WARN_TOL:
        print(f"warning: measured phi {phi_hat:.6g} differs from declared {spec.phi:.6g}", file=sys.stderr)


def cmd_cv(args: argparse.Namespace) -> int:
    if not args.t:
        raise UsageError("--t is required")
    if any(not t > 0 for t in args.t):
        raise UsageError("--t values must be positive")
    if args.phi is not None and args.spec is None:
        rows = _cv_rows_from_phi(args)
    elif args.spec is not None:
        spec = load_spec(args.spec)
        pi, z = _economy(args)
        _warn_on_phi_mismatch(spec, pi, z)
        rows = [compute_cv(CvQuery(spec, pi, z, t), tol=args.tol).to_dict() for t in args.t]
    else:
        raise UsageError("give either --phi with --m, or --spec with --p/--m/--z1")
    if args.format == "csv":
        n_goods = max(len(r["per_good"]) for r in rows)
        header = ["t", "cv_closed", "cv_brute"] + [f"cv_{i}" for i in range(1, n_goods + 1)]
        body = [[r["t"], r["cv_closed_form"], r["cv_brute_force"], *r["per_good"]] for r in rows]
        _emit(_csv(header, body), args.out)
    else:
        _emit(_json(rows[0] if len(rows) == 1 else rows), args.out)
    return EXIT_OK


# -- estimate / panel --------------------------------------------------------


def _t_values(args: argparse.Namespace) -> list[float]:
    grid = args.t_grid or list(DEFAULT_T_GRID)
    if any(not t > 0 for t in grid):
        raise UsageError("--t-grid values must be positive")
    if len(set(grid)) < 2:
        raise UsageError("--t-grid needs at least two distinct values; a single t does not identify the slope")
    n = args.n if args.n is not None else len(grid)
    if n < 3:
        raise UsageError("--n must be at least 3")
    return [grid[i % len(grid)] for i in range(n)]


def _panel(args: argparse.Namespace):
    if args.noise < 0:
        raise UsageError("--noise must be non-negative")
    spec = load_spec(args.spec)
    pi, z = _economy(args)
    return spec, generate_panel(spec, pi, z, _t_values(args), args.noise, args.seed)


def cmd_estimate(args: argparse.Namespace) -> int:
    spec, panel = _panel(args)
    goods = [None, *range(1, panel[0].n_goods + 1)]
    noiseless = args.noise == 0
    recoveries = [fit_panel(panel, spec.phi, noiseless, g) for g in goods]
    if args.format == "csv":
        header = ["mode", "beta0", "beta1", "stderr_beta1", "r_squared", "agreement"]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for r in recoveries:
            f = r.fit
            writer.writerow([f.mode, *(format_number(v) for v in (f.beta0, f.beta1, f.stderr_beta1, f.r_squared)),
                             str(r.agreement).lower()])
        _emit(buf.getvalue(), args.out)
    else:
        payload = {
            "phi_declared": spec.phi,
            "n_observations": len(panel),
            "noise_sd": args.noise,
            "seed": args.seed,
            "regressions": [r.to_dict() for r in recoveries],
        }
        _emit(_json(payload), args.out)
    return EXIT_OK


def cmd_panel(args: argparse.Namespace) -> int:
    _, panel = _panel(args)
    if args.format == "json":
        rows = [
            {"t": o.t, "m_before": o.m_before, "m_after": o.m_after, "x_before": o.x_before,
             "x_after": o.x_after, "noise": o.noise_applied}
            for o in panel
        ]
        _emit(_json(rows), args.out)
    else:
        _emit(panel_to_csv(panel), args.out)
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cv-kit", description="Welfare and demand computations under public-good provision.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, spec_required: bool = True, fmt: str = "json") -> None:
        p.add_argument("--spec", required=spec_required, help="utility specification JSON file")
        p.add_argument("--p", type=_floats, help="prices, comma separated")
        p.add_argument("--m", type=float, help="income")
        p.add_argument("--z1", type=_floats, help="scalable public goods, comma separated")
        p.add_argument("--z2", type=_floats, help="auxiliary public goods, comma separated")
        p.add_argument("--tol", type=_positive, default=None, help="tolerance")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--format", choices=("json", "csv"), default=fmt)

    p_eval = sub.add_parser("eval", help="solve UMP and EMP, compare with closed forms")
    common(p_eval)
    p_eval.add_argument("--u", type=float, help="EMP target utility (default: indirect utility at --m)")
    p_eval.set_defaults(func=cmd_eval, default_tol=1e-10)

    p_verify = sub.add_parser("verify", help="run scaling property checks")
    common(p_verify)
    p_verify.add_argument("--checks", help="comma-separated check names (default: all applicable)")
    p_verify.set_defaults(func=cmd_verify, default_tol=DEFAULT_TOL)

    p_cv = sub.add_parser("cv", help="compensating variation for provision scalings")
    common(p_cv, spec_required=False)
    p_cv.add_argument("--t", type=_floats, required=True, help="provision scaling(s), comma separated")
    p_cv.add_argument("--phi", type=float, help="use this phi directly (closed form only)")
    p_cv.set_defaults(func=cmd_cv, default_tol=1e-10)

    for name, func, fmt, help_text in (
        ("estimate", cmd_estimate, "json", "recover phi by OLS on a synthetic panel"),
        ("panel", cmd_panel, "csv", "write a synthetic provision-change panel"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p, fmt=fmt)
        p.add_argument("--t-grid", type=_floats, help="provision scalings cycled over the rows")
        p.add_argument("--n", type=int, help="number of rows (default: length of the grid)")
        p.add_argument("--noise", type=float, default=0.0, help="log-normal noise standard deviation")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func, default_tol=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if args.tol is None:
        args.tol = args.default_tol
    if getattr(args, "m", None) is not None and not args.m > 0:
        print("error: --m must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConvergenceError, UnattainableTargetError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, SpecificationError, DomainError, DimensionError, CardinalityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CvKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
