"""Numerical homogeneity degrees and scaling-property checks.

Each ``check_*`` function returns a :class:`PropertyReport` comparing a
measured quantity against what the corresponding scaling statement predicts,
one witness per probed point.  A report passes iff its worst violation is
below the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from numpy.typing import ArrayLike

from cvkit.core import (
    FloatArray,
    PriceIncome,
    PublicBundle,
    UtilitySpec,
    finite_difference_gradient,
)
from cvkit.duality import solve_emp, solve_ump
from cvkit.errors import CardinalityError, DomainError, SpecificationError

DEFAULT_T_GRID = (0.25, 0.5, 2.0, 4.0)
DEFAULT_TOL = 1e-4


class PropertyId(str, Enum):
    INDIRECT_JOINT = "indirect_joint"
    INDIRECT_INDEPENDENT = "indirect_independent"
    INDIRECT_PRIVATE = "indirect_private"
    INDIRECT_PUBLIC = "indirect_public"
    MARSHALLIAN_INVARIANCE = "marshallian_invariance"
    EXPENDITURE_JOINT = "expenditure_joint"
    EXPENDITURE_DEGREE_ONE = "expenditure_degree_one"
    EXPENDITURE_PUBLIC = "expenditure_public"
    HICKSIAN_PUBLIC = "hicksian_public"
    MRS_RAY = "mrs_ray"


@dataclass(frozen=True)
class DegreeEstimate:
    degree: float
    max_log_residual: float
    grid: tuple[float, ...]

    def passes(self, tol: float) -> bool:
        return self.max_log_residual < tol


@dataclass(frozen=True)
class Witness:
    point: dict[str, Any]
    measured: float
    expected: float


@dataclass(frozen=True)
class PropertyReport:
    property_id: PropertyId
    passed: bool
    worst_violation: float
    tolerance: float
    witnesses: tuple[Witness, ...]
    measured: dict[str, float] = field(default_factory=dict)
    degenerate: int = 0

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["property_id"] = self.property_id.value
        data["witnesses"] = [
            {"point": _jsonable(w.point), "measured": w.measured, "expected": w.expected} for w in self.witnesses
        ]
        return data


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _relative_gap(measured: float, expected: float) -> float:
    scale = abs(expected)
    return abs(measured - expected) / scale if scale > 0 else abs(measured)


def _make_report(
    pid: PropertyId,
    witnesses: list[Witness],
    violations: Iterable[float],
    tol: float,
    measured: dict[str, float] | None = None,
    degenerate: int = 0,
) -> PropertyReport:
    worst = max(violations, default=0.0)
    return PropertyReport(pid, bool(worst < tol), float(worst), tol, tuple(witnesses), measured or {}, degenerate)


def _check_grid(t_grid: Sequence[float]) -> tuple[float, ...]:
    grid = tuple(float(t) for t in t_grid)
    if not grid or any(not t > 0 for t in grid):
        raise ValueError("t_grid must be non-empty and strictly positive")
    return grid


def _require_cardinal(spec: UtilitySpec) -> None:
    if not spec.transform.is_identity:
        raise CardinalityError("cardinal scaling checks need the identity transform")


def _require_degrees(spec: UtilitySpec):
    if spec.degrees is None:
        raise SpecificationError(f"{spec.family.value} has no independent homogeneity degrees")
    return spec.degrees


def _slope_through_origin(log_t: FloatArray, log_ratio: FloatArray) -> float:
    return float(log_t @ log_ratio / (log_t @ log_t)) if np.any(log_t != 0) else 0.0


# ---------------------------------------------------------------------------
# Degree estimation
# ---------------------------------------------------------------------------


def estimate_degree(
    f: Callable[[FloatArray], float],
    base_point: ArrayLike,
    indices: Sequence[int] | None = None,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
) -> DegreeEstimate:
    """Least-squares degree of ``f`` along the ray that scales ``indices``
    (all coordinates when None): slope of ``ln f(t.) - ln f(.)`` on ``ln t``.
    """
    grid = _check_grid(t_grid)
    distinct = sorted(set(grid))
    if len(distinct) < 3 or distinct[-1] / distinct[0] < 4:
        raise ValueError("t_grid needs at least 3 distinct values spanning a factor of 4")
    x0 = np.asarray(base_point, dtype=float)
    mask = np.zeros(x0.size, dtype=bool)
    mask[list(range(x0.size)) if indices is None else list(indices)] = True
    f0 = float(f(x0))
    if not f0 > 0:
        raise DomainError(f"f must be positive at the base point, got {f0}")
    log_t = np.log(grid)
    log_ratio = np.empty(len(grid))
    for i, t in enumerate(grid):
        ft = float(f(np.where(mask, t * x0, x0)))
        if not ft > 0:
            raise DomainError(f"f must be positive on the probe grid, got {ft} at t={t}")
        log_ratio[i] = math.log(ft) - math.log(f0)
    degree = _slope_through_origin(log_t, log_ratio)
    residual = float(np.max(np.abs(log_ratio - degree * log_t)))
    return DegreeEstimate(degree, residual, grid)


def measure_degrees(
    spec: UtilitySpec, x: ArrayLike, z: PublicBundle, t_grid: Sequence[float] = DEFAULT_T_GRID
) -> tuple[DegreeEstimate, DegreeEstimate]:
    """Estimate (eta, theta) of the underlying function at ``(x, z)``."""
    xq = np.asarray(x, dtype=float)
    n = xq.size
    spec.check_dimensions(n, z)
    point = np.concatenate([xq, z.z1])

    def u(v: FloatArray) -> float:
        return spec.underlying_fn(PublicBundle(v[n:], z.z2))(v[:n])

    eta = estimate_degree(u, point, range(n), t_grid)
    theta = estimate_degree(u, point, range(n, point.size), t_grid)
    return eta, theta


# ---------------------------------------------------------------------------
# Indirect utility (cardinal)
# ---------------------------------------------------------------------------

_INDIRECT_MODES = {
    "joint": (PropertyId.INDIRECT_JOINT, True, True),
    "independent": (PropertyId.INDIRECT_INDEPENDENT, True, True),
    "private": (PropertyId.INDIRECT_PRIVATE, True, False),
    "public": (PropertyId.INDIRECT_PUBLIC, False, True),
}


def check_indirect_utility_scaling(
    spec: UtilitySpec,
    pi: PriceIncome,
    z: PublicBundle,
    mode: str,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    tol: float = DEFAULT_TOL,
) -> PropertyReport:
    """Check ``t**d v(m, p; z1) = v(s_m m, p; s_z z1)`` for the chosen mode."""
    if mode not in _INDIRECT_MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {sorted(_INDIRECT_MODES)}")
    _require_cardinal(spec)
    pid, scale_income, scale_public = _INDIRECT_MODES[mode]
    if mode == "joint":
        degree = spec.joint_degree
        if degree is None:
            raise SpecificationError("specification is not jointly homogeneous")
    else:
        d = _require_degrees(spec)
        degree = {"independent": d.eta + d.theta, "private": d.eta, "public": d.theta}[mode]

    v0 = solve_ump(spec, pi, z).indirect_utility
    witnesses, violations = [], []
    for t in _check_grid(t_grid):
        m = pi.income * t if scale_income else pi.income
        zt = z.scaled(t) if scale_public else z
        vt = solve_ump(spec, pi.with_income(m), zt).indirect_utility
        expected = t**degree * v0
        witnesses.append(Witness({"t": t, "income": m, "z1": zt.z1.tolist()}, vt, expected))
        violations.append(_relative_gap(vt, expected))
    return _make_report(pid, witnesses, violations, tol, {"degree": float(degree)})


def check_marshallian_invariance(
    spec: UtilitySpec,
    pi: PriceIncome,
    z: PublicBundle,
    t_grid: Sequence[float] = (0.1, 2.0, 7.0),
    tol: float = DEFAULT_TOL,
) -> PropertyReport:
    """Marshallian demand does not move when ``z1`` is scaled."""
    x0 = solve_ump(spec, pi, z).demand
    witnesses, violations = [], []
    for t in _check_grid(t_grid):
        xt = solve_ump(spec, pi, z.scaled(t)).demand
        for n, (a, b) in enumerate(zip(xt, x0), start=1):
            witnesses.append(Witness({"t": t, "good": n}, float(a), float(b)))
            violations.append(_relative_gap(a, b))
    return _make_report(PropertyId.MARSHALLIAN_INVARIANCE, witnesses, violations, tol)


# ---------------------------------------------------------------------------
# Expenditure and Hicksian demand
# ---------------------------------------------------------------------------


def check_expenditure_scaling(
    spec: UtilitySpec,
    u: float | Sequence[float],
    prices: ArrayLike,
    z: PublicBundle,
    mode: str,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    tol: float = DEFAULT_TOL,
) -> PropertyReport:
    """Expenditure scaling statements.

    ``joint``: ``t e(u; z1) = e(t**gamma u; t z1)`` (identity transform).
    ``degree1``: the same with gamma = 1, plus ``x^h(t u; t z1) = x^h(u; z1)``.
    ``homothetic``: ``e(u; t z1) = t**phi e(u; z1)`` for any monotone
    transform.  ``u`` may list several utility levels; the fitted slope of
    ``ln e`` on ``ln t`` must then be common to all of them and affine.
    """
    grid = _check_grid(t_grid)
    levels = [float(u)] if np.ndim(u) == 0 else [float(v) for v in u]
    p = np.asarray(prices, dtype=float)
    if mode == "homothetic":
        return _check_public_scaling(spec, levels, p, z, grid, tol)
    if mode not in ("joint", "degree1"):
        raise ValueError(f"unknown mode {mode!r}")
    _require_cardinal(spec)
    gamma = spec.joint_degree
    if gamma is None:
        raise SpecificationError("specification is not jointly homogeneous")
    if mode == "degree1" and not math.isclose(gamma, 1.0, rel_tol=1e-12):
        raise SpecificationError(f"degree-1 check needs joint degree 1, got {gamma}")
    pid = PropertyId.EXPENDITURE_JOINT if mode == "joint" else PropertyId.EXPENDITURE_DEGREE_ONE
    witnesses, violations = [], []
    expenditure_gap = 0.0
    demand_degrees = []
    for level in levels:
        base = solve_emp(spec, level, p, z)
        for t in grid:
            scaled = solve_emp(spec, t**gamma * level, p, z.scaled(t))
            expected = t * base.expenditure
            witnesses.append(Witness({"u": level, "t": t, "quantity": "expenditure"}, scaled.expenditure, expected))
            violations.append(_relative_gap(scaled.expenditure, expected))
            expenditure_gap = max(expenditure_gap, violations[-1])
            if pid is PropertyId.EXPENDITURE_DEGREE_ONE:
                # Hicksian demand at (t u, t z1) is tested for invariance.
                for n, (a, b) in enumerate(zip(scaled.demand, base.demand), start=1):
                    witnesses.append(Witness({"u": level, "t": t, "quantity": f"x{n}"}, float(a), float(b)))
                    violations.append(_relative_gap(a, b))
                    demand_degrees.append(math.log(a / b) / math.log(t))
    measured = {"gamma": float(gamma), "expenditure_worst_violation": expenditure_gap}
    if demand_degrees:
        measured["hicksian_degree"] = float(np.mean(demand_degrees))
    return _make_report(pid, witnesses, violations, tol, measured)


def _check_public_scaling(
    spec: UtilitySpec, levels: list[float], p: FloatArray, z: PublicBundle, grid: tuple[float, ...], tol: float
) -> PropertyReport:
    phi = spec.phi
    log_t = np.log(grid)
    witnesses, violations = [], []
    measured: dict[str, float] = {}
    slopes = []
    for level in levels:
        e0 = solve_emp(spec, level, p, z).expenditure
        et = np.array([solve_emp(spec, level, p, z.scaled(t)).expenditure for t in grid])
        log_ratio = np.log(et / e0)
        slope = _slope_through_origin(log_t, log_ratio)
        slopes.append(slope)
        measured[f"phi_hat[u={level:g}]"] = slope
        # affine-in-ln-t requirement, independent of any declared degree
        violations.extend(np.abs(log_ratio - slope * log_t).tolist())
        reference = phi if phi is not None else slope
        for t, e in zip(grid, et):
            expected = t**reference * e0
            witnesses.append(Witness({"u": level, "t": t}, float(e), float(expected)))
            violations.append(_relative_gap(e, expected))
    phi_hat = float(np.mean(slopes))
    measured["phi_hat"] = phi_hat
    if phi is not None:
        measured["phi_declared"] = phi
    spread = max(slopes) - min(slopes)
    measured["phi_hat_spread"] = spread
    violations.append(spread)
    return _make_report(PropertyId.EXPENDITURE_PUBLIC, witnesses, violations, tol, measured)


def check_hicksian_scaling(
    spec: UtilitySpec,
    u: float,
    prices: ArrayLike,
    z: PublicBundle,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    tol: float = DEFAULT_TOL,
) -> PropertyReport:
    """``x^h_n(u; t z1) = t**phi x^h_n(u; z1)`` for every good, with demand ratios fixed.

    Without declared degrees, ``phi`` is fitted from the first good so that
    non-homogeneous specifications fail on the residual.
    """
    grid = _check_grid(t_grid)
    p = np.asarray(prices, dtype=float)
    x0 = solve_emp(spec, u, p, z).demand
    xt = np.array([solve_emp(spec, u, p, z.scaled(t)).demand for t in grid])
    phi = spec.phi
    measured: dict[str, float] = {}
    if phi is None:
        phi = _slope_through_origin(np.log(grid), np.log(xt[:, 0] / x0[0]))
        measured["phi_hat"] = phi
    witnesses, violations = [], []
    for t, row in zip(grid, xt):
        for n, (a, b) in enumerate(zip(row, x0), start=1):
            expected = t**phi * b
            witnesses.append(Witness({"t": t, "quantity": f"x{n}"}, float(a), float(expected)))
            violations.append(_relative_gap(a, expected))
        for n in range(len(row) - 1):
            ratio, ratio0 = row[n] / row[-1], x0[n] / x0[-1]
            witnesses.append(Witness({"t": t, "quantity": f"x{n + 1}/x{len(row)}"}, float(ratio), float(ratio0)))
            violations.append(_relative_gap(ratio, ratio0))
    return _make_report(PropertyId.HICKSIAN_PUBLIC, witnesses, violations, tol, measured)


# ---------------------------------------------------------------------------
# Marginal rates of substitution
# ---------------------------------------------------------------------------


def marginal_rates(spec: UtilitySpec, x: ArrayLike, z: PublicBundle) -> tuple[FloatArray, FloatArray]:
    """Finite-difference gradient of ``h`` in ``x`` and the MRS matrix ``g_i / g_j``."""
    xq = np.asarray(x, dtype=float)
    spec.check_dimensions(xq.size, z)
    grad = finite_difference_gradient(spec.utility_fn(z), xq)
    with np.errstate(divide="ignore", invalid="ignore"):
        mrs = grad[:, None] / grad[None, :]
    return grad, mrs


def check_mrs_ray_invariance(
    spec: UtilitySpec,
    x: ArrayLike,
    z: PublicBundle,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
    ttilde_grid: Sequence[float] = DEFAULT_T_GRID,
    tol: float = DEFAULT_TOL,
) -> PropertyReport:
    """MRS between private goods is unchanged at ``(t x; t~ z1)`` for all grid pairs.

    Pairs whose denominator partial vanishes are skipped and counted as degenerate.
    """
    xq = np.asarray(x, dtype=float)
    grad0, mrs0 = marginal_rates(spec, xq, z)
    scale0 = np.max(np.abs(grad0))
    n = xq.size
    witnesses, violations = [], []
    degenerate = 0
    for t in _check_grid(t_grid):
        for tt in _check_grid(ttilde_grid):
            grad, mrs = marginal_rates(spec, t * xq, z.scaled(tt))
            scale = np.max(np.abs(grad))
            for i in range(n):
                for j in range(n):
                    if i == j:
                        continue
                    if abs(grad[j]) <= 1e-12 * scale or abs(grad0[j]) <= 1e-12 * scale0:
                        degenerate += 1
                        continue
                    witnesses.append(Witness({"t": t, "t_tilde": tt, "pair": [i + 1, j + 1]}, mrs[i, j], mrs0[i, j]))
                    violations.append(_relative_gap(mrs[i, j], mrs0[i, j]))
    return _make_report(PropertyId.MRS_RAY, witnesses, violations, tol, degenerate=degenerate)
