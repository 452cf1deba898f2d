"""Compensating variation for a proportional change in public-good provision.

Three routes are available and cross-checked:

* ``cv_closed_form``: ``(t**phi - 1) m`` from the declared degrees, no solver;
* ``cv_brute_force``: ``e(u, p; t z1) - e(u, p; z1)`` from two expenditure
  solves at the baseline utility ``u = v(m, p; z)``;
* ``cv_decomposition``: per-good terms ``p_n (x'_n - x*_n)`` from the two
  Hicksian bundles.

The brute-force route makes no homogeneity assumption and therefore serves as
the oracle for the other two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from cvkit.core import FloatArray, PriceIncome, PublicBundle, UtilitySpec
from cvkit.duality import SHARE_TOL, solve_emp, solve_ump
from cvkit.errors import DomainError, SpecificationError


@dataclass(frozen=True)
class CvQuery:
    spec: UtilitySpec
    pi: PriceIncome
    z: PublicBundle
    t: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t > 0):
            raise DomainError(f"provision scaling t must be positive, got {self.t}")


@dataclass(frozen=True)
class CvResult:
    t: float
    cv_closed_form: float
    cv_brute_force: float
    per_good: FloatArray
    phi_used: float
    baseline_utility: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "cv_closed_form": self.cv_closed_form,
            "cv_brute_force": self.cv_brute_force,
            "per_good": [float(v) for v in self.per_good],
            "phi_used": self.phi_used,
            "baseline_utility": self.baseline_utility,
        }


def cv_tolerance(income: float) -> float:
    """Agreement tolerance between CV routes: ``max(1e-3, 1e-4 m)``."""
    return max(1e-3, 1e-4 * income)


def cv_from_phi(phi: float, t: float, income: float) -> float:
    """``(t**phi - 1) m``."""
    if not t > 0:
        raise DomainError(f"provision scaling t must be positive, got {t}")
    if not income > 0:
        raise DomainError(f"income must be positive, got {income}")
    return (t**phi - 1.0) * income


def cv_closed_form(q: CvQuery) -> float:
    """Closed-form CV using the specification's declared ``phi = -theta/eta``."""
    degrees = q.spec.degrees
    if degrees is None:
        raise SpecificationError(f"{q.spec.family.value} is not independently homogeneous; no closed-form CV")
    if degrees.eta == 0:
        raise SpecificationError("closed-form CV needs eta != 0")
    return cv_from_phi(degrees.phi, q.t, q.pi.income)


def _hicksian_pair(q: CvQuery, tol: float):
    u0 = solve_ump(q.spec, q.pi, q.z, tol=tol).indirect_utility
    before = solve_emp(q.spec, u0, q.pi.prices, q.z, tol=tol)
    after = solve_emp(q.spec, u0, q.pi.prices, q.z.scaled(q.t), tol=tol)
    return u0, before, after


def cv_brute_force(q: CvQuery, tol: float = SHARE_TOL) -> float:
    """Expenditure difference at the baseline utility; valid for any specification."""
    _, before, after = _hicksian_pair(q, tol)
    return after.expenditure - before.expenditure


def cv_decomposition(q: CvQuery, tol: float = SHARE_TOL) -> FloatArray:
    """Per-good terms ``p_n (x'_n - x*_n)`` whose sum is the CV."""
    _, before, after = _hicksian_pair(q, tol)
    return q.pi.prices * (after.demand - before.demand)


def compute_cv(q: CvQuery, tol: float = SHARE_TOL) -> CvResult:
    """All three CV routes from a single pair of expenditure solves.

    Specifications without independent degrees get ``nan`` closed form and phi.
    """
    u0, before, after = _hicksian_pair(q, tol)
    phi = q.spec.phi
    closed = cv_closed_form(q) if phi is not None else math.nan
    return CvResult(
        t=float(q.t),
        cv_closed_form=closed,
        cv_brute_force=after.expenditure - before.expenditure,
        per_good=q.pi.prices * (after.demand - before.demand),
        phi_used=math.nan if phi is None else phi,
        baseline_utility=u0,
    )


def implied_scaling(cv: float, expenditure: float) -> float:
    """Recover ``t**phi`` from a CV and the baseline expenditure: ``CV/e + 1``."""
    return cv / expenditure + 1.0


@dataclass(frozen=True)
class LimitDiagnostics:
    phi: float
    income: float
    t_values: tuple[float, ...]
    cv_values: tuple[float, ...]
    direction: str
    lower_bound: float


def cv_limit_diagnostics(
    q: CvQuery | float, income: float | None = None, t_values: Sequence[float] = (1e-1, 1e-3, 1e-6)
) -> LimitDiagnostics:
    """Behaviour of ``(t**phi - 1) m`` as provision vanishes.

    Accepts a :class:`CvQuery` (phi and income taken from it) or a bare
    ``phi`` with ``income``.  ``direction`` is ``"+inf"`` or ``"-inf"`` when
    the values grow without bound along the decreasing ``t_values``, else
    ``"finite"``.  For ``phi < 0`` the formula diverges to ``+inf``: the
    compensation needed when provision vanishes is unbounded, so a ``-inf``
    limit is never reported for the closed form.  ``lower_bound`` is the
    ``t -> inf`` limit, ``-m`` when ``phi < 0``.
    """
    if isinstance(q, CvQuery):
        if q.spec.phi is None:
            raise SpecificationError(f"{q.spec.family.value} has no phi")
        phi, income = q.spec.phi, q.pi.income
    else:
        phi = float(q)
        if income is None:
            raise ValueError("income is required when passing phi directly")
    values = tuple(cv_from_phi(phi, t, income) for t in t_values)
    diffs = np.diff(values)
    growing = bool(np.all(diffs > 0)) and values[-1] > 1e3 * income
    shrinking = bool(np.all(diffs < 0)) and values[-1] < -1e3 * income
    direction = "+inf" if growing else "-inf" if shrinking else "finite"
    lower = -income if phi < 0 else math.nan
    return LimitDiagnostics(phi, income, tuple(t_values), values, direction, lower)
