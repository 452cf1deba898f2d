"""Utility maximization, expenditure minimization and closed-form oracles.

The UMP is solved on the budget hyperplane by writing the bundle in terms of
expenditure shares, ``x_n = s_n m / p_n`` with ``s = softmax(y, 0)``, so every
trial point is interior and feasible.  A Nelder-Mead search from equal shares
is followed by a polish: Brent's method drives each central-difference
partial to zero in turn, and with three or more goods Newton steps on a
finite-difference Hessian finish the job.

The EMP uses the monotone identity ``u = v(e(u, p; z), p; z)``: income is
bracketed by doubling from 1 and the root of ``v(m) - u`` is located in
``ln m``; the Hicksian bundle is the Marshallian bundle at that income.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq, minimize

from cvkit.core import FloatArray, PriceIncome, PublicBundle, UtilitySpec
from cvkit.errors import ConvergenceError, DomainError, UnattainableTargetError

SHARE_TOL = 1e-10
INCOME_XTOL = 1e-13
BRACKET_CAP = 2.0**60
_FD_STEP = 1e-5
_MAX_SWEEPS = 60


@dataclass(frozen=True)
class UmpResult:
    """Marshallian demand and indirect utility at one (m, p, z)."""

    demand: FloatArray
    indirect_utility: float
    iterations: int
    residual: float
    shares: FloatArray


@dataclass(frozen=True)
class EmpResult:
    """Hicksian demand and expenditure for one utility target."""

    demand: FloatArray
    expenditure: float
    target_utility: float
    iterations: int
    residual: float


def _shares(y: FloatArray) -> FloatArray:
    full = np.append(y, 0.0)
    full = np.exp(full - full.max())
    return full / full.sum()


def _logits(shares: ArrayLike) -> FloatArray:
    s = np.asarray(shares, dtype=float)
    return np.log(s[:-1] / s[-1])


def maximize_on_budget(
    objective: Callable[[FloatArray], float],
    prices: ArrayLike,
    income: float,
    *,
    tol: float = SHARE_TOL,
    start_shares: ArrayLike | None = None,
) -> UmpResult:
    """Maximize ``objective(x)`` over the budget hyperplane ``p . x = m``.

    Works for any objective that is strictly quasiconcave on the interior;
    ``start_shares`` warm-starts the search (otherwise equal shares).
    """
    p = np.asarray(prices, dtype=float)
    m = float(income)
    n = p.size
    scale = m / p

    def bundle(y: FloatArray) -> FloatArray:
        return _shares(y) * scale

    if n == 1:
        x = scale.copy()
        return UmpResult(x, float(objective(x)), 0, 0.0, np.ones(1))

    def value(y: FloatArray) -> float:
        try:
            with np.errstate(all="ignore"):
                v = objective(bundle(y))
        except (ValueError, ZeroDivisionError, OverflowError, DomainError):
            return -math.inf
        return v if math.isfinite(v) else -math.inf

    if start_shares is None:
        y0 = np.zeros(n - 1)
        simplex_step = 0.5
    else:
        y0 = _logits(start_shares)
        simplex_step = 1e-3
    f0 = value(y0)
    if not math.isfinite(f0):
        raise DomainError("objective undefined at the starting bundle")
    norm = abs(f0) if f0 != 0 else 1.0

    simplex = np.vstack([y0] + [y0 + simplex_step * e for e in np.eye(n - 1)])
    res = minimize(
        lambda y: -value(y) / norm,
        y0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": max(tol, 1e-9),
            "fatol": 1e-15,
            "maxiter": 4000 * n,
            "maxfev": 8000 * n,
        },
    )
    iterations = int(res.nit)
    if not res.success:
        raise ConvergenceError(f"simplex search did not converge: {res.message}", bundle(res.x), iterations)

    y, polish_steps = _polish(value, np.asarray(res.x, dtype=float), tol)
    x = bundle(y)
    best = value(y)
    residual = abs(float(p @ x) - m) / m
    return UmpResult(x, best, iterations + polish_steps, residual, _shares(y))


def _polish(value: Callable[[FloatArray], float], y: FloatArray, tol: float) -> tuple[FloatArray, int]:
    """Coordinate-wise root finding on central-difference partials, then Newton
    steps with a finite-difference Hessian when more than one coordinate is free.

    Convergence is declared when every coordinate moves less than ``tol`` or
    less than the resolution that rounding in ``value`` allows along it.
    """
    y = y.copy()
    steps = 0
    for _ in range(_MAX_SWEEPS):
        y, settled, used = _coordinate_sweep(value, y, tol)
        steps += used
        if settled:
            return y, steps
        if y.size > 1:
            y, converged, used = _newton(value, y, tol)
            steps += used
            if converged:
                return y, steps
    raise ConvergenceError("coordinate polish did not settle", y, steps)


def _coordinate_sweep(value: Callable[[FloatArray], float], y: FloatArray, tol: float) -> tuple[FloatArray, bool, int]:
    y = y.copy()
    settled = True
    used = 0
    for i in range(y.size):
        # Differences of ``value`` below this are rounding, not signal.
        noise = 64 * np.finfo(float).eps * max(1.0, abs(value(y)))

        def slope(tau: float, i: int = i) -> float:
            up = y.copy()
            down = y.copy()
            up[i] += tau + _FD_STEP
            down[i] += tau - _FD_STEP
            return value(up) - value(down)

        width = 1e-4
        lo_val, hi_val = slope(-width), slope(width)
        while not (lo_val > noise and hi_val < -noise) and width < 64:
            width *= 4
            lo_val, hi_val = slope(-width), slope(width)
        if abs(lo_val) <= noise and abs(hi_val) <= noise:
            # Flat to rounding (e.g. income too small to move utility): any point is optimal.
            continue
        if not (lo_val >= 0 >= hi_val):
            raise ConvergenceError("could not bracket a stationary point", y, used)
        tau, info = brentq(slope, -width, width, xtol=1e-14, full_output=True)
        used += info.iterations
        y[i] += tau
        # Width of the band around the root where the partial is lost in rounding.
        resolution = noise * 2 * width / (lo_val - hi_val)
        if abs(tau) >= max(tol, 4 * resolution):
            settled = False
    return y, settled, used


def _newton(value: Callable[[FloatArray], float], y: FloatArray, tol: float) -> tuple[FloatArray, bool, int]:
    h = 1e-4
    eye = np.eye(y.size)
    for used in range(1, 31):
        f0 = value(y)
        grad = np.array([(value(y + _FD_STEP * e) - value(y - _FD_STEP * e)) / (2 * _FD_STEP) for e in eye])
        hess = np.empty((y.size, y.size))
        for i, ei in enumerate(eye):
            hess[i, i] = (value(y + h * ei) - 2 * f0 + value(y - h * ei)) / h**2
            for j in range(i):
                ej = eye[j]
                hess[i, j] = hess[j, i] = (
                    value(y + h * (ei + ej)) - value(y + h * (ei - ej)) - value(y - h * (ei - ej)) + value(y - h * (ei + ej))
                ) / (4 * h**2)
        if not np.all(np.isfinite(hess)) or np.any(np.linalg.eigvalsh(hess) >= 0):
            return y, False, used
        step = -np.linalg.solve(hess, grad)
        if np.max(np.abs(step)) > 1.0:
            return y, False, used
        y = y + step
        if np.max(np.abs(step)) < tol:
            return y, True, used
    return y, False, 30


def minimize_expenditure(
    objective: Callable[[FloatArray], float],
    target: float,
    prices: ArrayLike,
    *,
    tol: float = SHARE_TOL,
) -> EmpResult:
    """Cheapest bundle reaching ``objective(x) >= target``, via income root finding."""
    p = np.asarray(prices, dtype=float)
    state: dict[str, object] = {"shares": None, "solves": 0}

    def ump(m: float) -> UmpResult:
        res = maximize_on_budget(objective, p, m, tol=tol, start_shares=state["shares"])
        state["shares"] = res.shares
        state["solves"] = int(state["solves"]) + 1
        return res

    gaps: dict[float, float] = {}

    def gap(log_m: float) -> float:
        # Memoised so the root finder sees the same bracket values as the bracketing loop.
        if log_m not in gaps:
            gaps[log_m] = ump(math.exp(log_m)).indirect_utility - target
        return gaps[log_m]

    lo = hi = 0.0
    g = gap(0.0)
    if g < 0:
        g_hi = g
        while g_hi < 0:
            lo, hi = hi, hi + math.log(2.0)
            if hi > math.log(BRACKET_CAP):
                raise UnattainableTargetError(f"utility {target} not reached below income 2**60")
            g_hi = gap(hi)
    elif g > 0:
        g_lo = g
        while g_lo > 0:
            hi, lo = lo, lo - math.log(2.0)
            if lo < -math.log(BRACKET_CAP):
                raise UnattainableTargetError(f"utility {target} lies below the floor reachable at income 2**-60")
            g_lo = gap(lo)
    if lo == hi:
        log_m = lo
    else:
        log_m = brentq(gap, lo, hi, xtol=INCOME_XTOL, rtol=4 * np.finfo(float).eps)
    final = ump(math.exp(log_m))
    x = final.demand
    achieved = final.indirect_utility
    residual = abs(achieved - target) / max(1.0, abs(target))
    return EmpResult(x, float(p @ x), float(target), int(state["solves"]), residual)


def solve_ump(spec: UtilitySpec, pi: PriceIncome, z: PublicBundle, tol: float = SHARE_TOL) -> UmpResult:
    """Utility maximization for ``spec`` at prices/income ``pi`` and public goods ``z``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    spec.check_dimensions(pi.prices.size, z)
    return maximize_on_budget(spec.utility_fn(z), pi.prices, pi.income, tol=tol)


def solve_emp(
    spec: UtilitySpec, target_utility: float, prices: ArrayLike, z: PublicBundle, tol: float = SHARE_TOL
) -> EmpResult:
    """Expenditure minimization for ``spec`` at utility ``target_utility``."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    p = np.asarray(prices, dtype=float)
    if np.any(p <= 0):
        raise DomainError("prices must be strictly positive")
    spec.check_dimensions(p.size, z)
    return minimize_expenditure(spec.utility_fn(z), float(target_utility), p, tol=tol)


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


def _check_alpha(alpha: float) -> None:
    if alpha in (0.0, 1.0) or not math.isfinite(alpha):
        raise ValueError("alpha must be finite and differ from 0 and 1")


def _pair(values: Sequence[float] | ArrayLike, name: str) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size != 2 or np.any(arr <= 0):
        raise ValueError(f"{name} must hold two positive numbers")
    return float(arr[0]), float(arr[1])


@dataclass(frozen=True)
class Example1ClosedForm:
    """Closed forms for ``u = x1**a z11 + x2**a z12`` at fixed (p, m, z1)."""

    alpha: float
    prices: tuple[float, float]
    z1: tuple[float, float]
    income: float
    k: float
    demand: FloatArray
    indirect_utility: float

    def expenditure_at(self, u: float) -> float:
        a, (p1, p2), (z11, z12), k = self.alpha, self.prices, self.z1, self.k
        return (k * p1 + p2) * (u / (k**a * z11 + z12)) ** (1.0 / a)


def example1_closed_forms(alpha: float, prices: ArrayLike, income: float, z1: ArrayLike) -> Example1ClosedForm:
    """Ratio ``k = x1/x2``, Marshallian demands, indirect utility and expenditure."""
    _check_alpha(alpha)
    p1, p2 = _pair(prices, "prices")
    z11, z12 = _pair(z1, "z1")
    if not income > 0:
        raise ValueError("income must be positive")
    k = (p1 * z12 / (p2 * z11)) ** (1.0 / (alpha - 1.0))
    x2 = income / (p1 * k + p2)
    demand = np.array([k * x2, x2])
    v = (k**alpha * z11 + z12) * x2**alpha
    return Example1ClosedForm(alpha, (p1, p2), (z11, z12), float(income), k, demand, v)


@dataclass(frozen=True)
class Example2ClosedForm:
    k: float
    expenditure: float
    hicksian_demand: FloatArray


def example2_closed_forms(
    alpha: float, prices: ArrayLike, z1: ArrayLike, u: float, offset: float = 5.0
) -> Example2ClosedForm:
    """Expenditure and Hicksian demands for ``h = ln(x1**a z11 + x2**a z12) + offset``."""
    _check_alpha(alpha)
    p1, p2 = _pair(prices, "prices")
    z11, z12 = _pair(z1, "z1")
    k = (p1 * z12 / (p2 * z11)) ** (1.0 / (alpha - 1.0))
    base = (math.exp(u - offset) / (k**alpha * z11 + z12)) ** (1.0 / alpha)
    demand = np.array([k * base, base])
    return Example2ClosedForm(k, (p1 * k + p2) * base, demand)


def example3_expenditure(delta: float, prices: ArrayLike, z1: ArrayLike, u: float) -> float:
    """Expenditure for ``(x1 x2)**(1/d) + (z11 z12)**(1/d)``."""
    if delta == 0:
        raise ValueError("delta must be non-zero")
    p1, p2 = _pair(prices, "prices")
    z11, z12 = _pair(z1, "z1")
    floor = (z11 * z12) ** (1.0 / delta)
    if u < floor:
        raise DomainError(f"utility {u} is below the public-good floor {floor}")
    return 2.0 * (u - floor) ** (delta / 2.0) * math.sqrt(p1 * p2)
