"""Additively separable utility ``u(x; z) = u1(x) + u2(z)``.

Public goods only shift the utility level, so expenditure is the private-only
expenditure at the shifted target ``u - u2(z)``.  With ``u1`` homogeneous of
degree ``gamma`` that becomes ``[(u - u2(z)) / v1(1, p)]**(1/gamma)``.
Neither form is a power law in the scaling of ``z``.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike

from cvkit.core import FloatArray, PublicBundle, probe_points
from cvkit.duality import maximize_on_budget, minimize_expenditure
from cvkit.errors import SpecificationError, UnattainableTargetError
from cvkit.homogeneity import DEFAULT_T_GRID, estimate_degree

GAMMA_TOL = 1e-8


@dataclass(frozen=True)
class SeparableSpec:
    """Private sub-utility ``u1`` (degree ``gamma``) plus public sub-utility ``u2``.

    ``gamma`` is verified against ``u1`` at construction.  ``u1_infimum`` is
    the greatest lower bound of ``u1`` over bundles (0 for power forms).
    """

    u1: Callable[[FloatArray], float]
    u2: Callable[[FloatArray], float]
    gamma: float
    n_private: int
    u1_infimum: float = 0.0
    _v1_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.gamma == 0 or not math.isfinite(self.gamma):
            raise SpecificationError("gamma must be finite and non-zero")
        for point in probe_points(4, self.n_private):
            est = estimate_degree(self.u1, point, None, DEFAULT_T_GRID)
            if abs(est.degree - self.gamma) >= GAMMA_TOL or not est.passes(GAMMA_TOL):
                raise SpecificationError(
                    f"u1 is not homogeneous of degree {self.gamma} (estimated {est.degree:.6g})"
                )

    def utility(self, x: ArrayLike, z: PublicBundle) -> float:
        return self.u1(np.asarray(x, dtype=float)) + self.u2(z.z1)

    def v1_at_unit_income(self, prices: ArrayLike) -> float:
        """Indirect private utility at income 1, solved once per price vector."""
        key = tuple(float(p) for p in np.asarray(prices, dtype=float))
        cached = self._v1_cache.get(key)
        if cached is not None:
            return cached
        value = maximize_on_budget(self.u1, np.array(key), 1.0).indirect_utility
        with self._lock:
            return self._v1_cache.setdefault(key, value)

    @classmethod
    def from_power(cls, alpha: float, beta: float | None = None) -> SeparableSpec:
        """``(x1 x2)**(1/alpha) + (z11 z12)**(1/beta)``."""
        beta = alpha if beta is None else beta
        if alpha == 0 or beta == 0:
            raise SpecificationError("alpha and beta must be non-zero")
        inv_a, inv_b = 1.0 / alpha, 1.0 / beta
        return cls(
            u1=lambda x: float(x[0] * x[1]) ** inv_a,
            u2=lambda z1: float(z1[0] * z1[1]) ** inv_b,
            gamma=2.0 / alpha,
            n_private=2,
        )


def _shifted_target(s: SeparableSpec, u: float, z: PublicBundle) -> float:
    shifted = u - s.u2(z.z1)
    if shifted < s.u1_infimum:
        raise UnattainableTargetError(
            f"target {u} lies below the public-good floor {s.u2(z.z1) + s.u1_infimum}"
        )
    return shifted


def separable_expenditure(s: SeparableSpec, u: float, prices: ArrayLike, z: PublicBundle) -> float:
    """Private-only expenditure minimization at target ``u - u2(z)``."""
    shifted = _shifted_target(s, u, z)
    if shifted == s.u1_infimum:
        return 0.0
    return minimize_expenditure(s.u1, shifted, prices).expenditure


def separable_expenditure_closed(
    s: SeparableSpec, u: float, prices: ArrayLike, z: PublicBundle, gamma: float | None = None
) -> float:
    """``[(u - u2(z)) / v1(1, p)]**(1/gamma)``."""
    gamma = s.gamma if gamma is None else gamma
    if gamma == 0:
        raise SpecificationError("gamma must be non-zero")
    shifted = _shifted_target(s, u, z)
    if shifted == 0 and gamma > 0:
        return 0.0
    return (shifted / s.v1_at_unit_income(prices)) ** (1.0 / gamma)


@dataclass(frozen=True)
class ProvisionSlopes:
    """Log-log slopes of expenditure against the provision scaling, per utility level."""

    slopes: dict[float, float]
    max_fit_residual: float

    @property
    def spread(self) -> float:
        values = list(self.slopes.values())
        return max(values) - min(values)


def provision_slopes(
    s: SeparableSpec,
    u_levels: Sequence[float],
    prices: ArrayLike,
    z: PublicBundle,
    t_grid: Sequence[float] = DEFAULT_T_GRID,
) -> ProvisionSlopes:
    """Fit ``ln e(u; t z) - ln e(u; z) = slope * ln t`` separately for each ``u``.

    A homogeneous expenditure function would give one slope for every level
    and zero residual; separable forms give neither.
    """
    log_t = np.log(np.asarray(t_grid, dtype=float))
    slopes: dict[float, float] = {}
    worst = 0.0
    for u in u_levels:
        e0 = separable_expenditure_closed(s, u, prices, z)
        ratios = np.log([separable_expenditure_closed(s, u, prices, z.scaled(t)) / e0 for t in t_grid])
        slope = float(log_t @ ratios / (log_t @ log_t))
        slopes[float(u)] = slope
        worst = max(worst, float(np.max(np.abs(ratios - slope * log_t))))
    return ProvisionSlopes(slopes, worst)
