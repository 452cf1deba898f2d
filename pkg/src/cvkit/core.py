"""Domain types, the utility-function registry and small numerical helpers.

A homothetic utility is represented as ``h(x; z1, z2) = g(u(x; z1, z2))`` where
``u`` is the underlying (homogeneous) function and ``g`` a strictly increasing
transform.  Three built-in families are provided plus a generic family backed
by a caller-supplied evaluator whose declared degrees are verified numerically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import qmc

from cvkit.errors import DimensionError, DomainError, SpecificationError

FloatArray = NDArray[np.float64]

# Relative tolerance used when verifying declared homogeneity degrees.
DEGREE_CHECK_TOL = 1e-8
DEGREE_CHECK_T = (0.5, 2.0, 10.0)


def _vector(values: ArrayLike, name: str) -> FloatArray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Bundles and prices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrivateBundle:
    """Quantities of the N purchased goods."""

    quantities: FloatArray

    def __post_init__(self) -> None:
        q = _vector(self.quantities, "quantities")
        if q.size < 1:
            raise DimensionError("a private bundle needs at least one good")
        if np.any(q < 0):
            raise DomainError("private quantities must be non-negative")
        object.__setattr__(self, "quantities", q)

    def __len__(self) -> int:
        return self.quantities.size


@dataclass(frozen=True)
class PublicBundle:
    """Public goods split into the homogeneity-bearing block ``z1`` and the
    auxiliary block ``z2`` that is never scaled."""

    z1: FloatArray
    z2: FloatArray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        z1 = _vector(self.z1, "z1")
        z2 = np.asarray(self.z2, dtype=float).reshape(-1)
        z2 = _vector(z2, "z2") if z2.size else np.zeros(0)
        if z1.size < 1:
            raise DimensionError("z1 needs at least one public good")
        if np.any(z1 <= 0):
            raise DomainError("z1 components must be strictly positive")
        if np.any(z2 < 0):
            raise DomainError("z2 components must be non-negative")
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)

    def scaled(self, t: float) -> PublicBundle:
        """Return the bundle with ``z1`` multiplied by ``t`` (``z2`` untouched)."""
        if not t > 0:
            raise DomainError(f"scaling factor must be positive, got {t}")
        return PublicBundle(self.z1 * t, self.z2)


@dataclass(frozen=True)
class PriceIncome:
    prices: FloatArray
    income: float

    def __post_init__(self) -> None:
        p = _vector(self.prices, "prices")
        if p.size < 1:
            raise DimensionError("at least one price is required")
        if np.any(p <= 0):
            raise DomainError("prices must be strictly positive")
        m = float(self.income)
        if not (math.isfinite(m) and m > 0):
            raise DomainError(f"income must be strictly positive, got {self.income}")
        object.__setattr__(self, "prices", p)
        object.__setattr__(self, "income", m)

    def with_income(self, income: float) -> PriceIncome:
        return PriceIncome(self.prices, income)


@dataclass(frozen=True)
class HomogeneityDegrees:
    """Private degree ``eta``, public degree ``theta`` and the derived joint
    degree ``gamma = eta + theta`` and sufficient statistic ``phi = -theta/eta``."""

    eta: float
    theta: float
    gamma: float = field(init=False)
    phi: float = field(init=False)

    def __post_init__(self) -> None:
        if self.eta == 0:
            raise SpecificationError("private degree eta must be non-zero")
        object.__setattr__(self, "gamma", self.eta + self.theta)
        object.__setattr__(self, "phi", -self.theta / self.eta)


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Transform:
    """Monotone transform ``g``: either the identity or ``ln(u) + offset``."""

    kind: str = "identity"
    offset: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "log_plus"):
            raise SpecificationError(f"unknown transform kind {self.kind!r}")
        if self.kind == "identity" and self.offset != 0.0:
            raise SpecificationError("the identity transform takes no offset")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def __call__(self, u: float) -> float:
        if self.kind == "identity":
            return u
        if not u > 0:
            raise DomainError(f"log transform undefined at u={u}")
        return math.log(u) + self.offset

    def inverse(self, h: float) -> float:
        if self.kind == "identity":
            return h
        return math.exp(h - self.offset)

    def derivative(self, u: float) -> float:
        if self.kind == "identity":
            return 1.0
        if not u > 0:
            raise DomainError(f"log transform undefined at u={u}")
        return 1.0 / u

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "offset": self.offset}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Transform:
        return cls(kind=data.get("kind", "identity"), offset=float(data.get("offset", 0.0)))


IDENTITY = Transform()


def log_plus(offset: float = 5.0) -> Transform:
    return Transform("log_plus", float(offset))


@dataclass(frozen=True)
class CallableTransform:
    """User-supplied strictly increasing transform (programmatic use only)."""

    forward: Callable[[float], float]
    backward: Callable[[float], float]
    name: str = "custom"

    is_identity = False

    def __call__(self, u: float) -> float:
        return float(self.forward(u))

    def inverse(self, h: float) -> float:
        return float(self.backward(h))

    def to_dict(self) -> dict[str, Any]:
        raise SpecificationError("callable transforms are not serializable")


# ---------------------------------------------------------------------------
# Utility specifications
# ---------------------------------------------------------------------------


class Family(str, Enum):
    POWER_WEIGHTED = "PowerWeighted"
    LOG_POWER_WEIGHTED = "LogTransformedPowerWeighted"
    ADDITIVE_SEPARABLE = "AdditiveSeparablePower"
    GENERIC = "GenericHomothetic"


_POWER_FAMILIES = (Family.POWER_WEIGHTED, Family.LOG_POWER_WEIGHTED)

Underlying = Callable[[FloatArray, FloatArray, FloatArray], float]


@dataclass(frozen=True)
class UtilitySpec:
    """A homothetic utility ``g(u(x; z1, z2))``.

    Prefer the constructors :func:`power_weighted`, :func:`log_power_weighted`,
    :func:`additive_separable_power` and :func:`generic_homothetic` over
    building this directly.
    """

    family: Family
    alpha: float | None = None
    beta: float | None = None
    declared_eta: float | None = None
    declared_theta: float | None = None
    transform: Transform | CallableTransform = IDENTITY
    underlying: Underlying | None = field(default=None, compare=False, repr=False)
    n_private: int | None = None
    n_public: int | None = None
    n_aux: int = 0
    allow_any_alpha: bool = False

    def __post_init__(self) -> None:
        family = Family(self.family)
        object.__setattr__(self, "family", family)
        if family in _POWER_FAMILIES:
            self._init_power()
        elif family is Family.ADDITIVE_SEPARABLE:
            self._init_separable()
        else:
            self._init_generic()

    def _init_power(self) -> None:
        a = self.alpha
        if a is None or not math.isfinite(a):
            raise SpecificationError("power families need a finite alpha")
        if a in (0.0, 1.0):
            raise SpecificationError("alpha must differ from 0 and 1")
        if not self.allow_any_alpha and not 0.0 < a < 1.0:
            raise SpecificationError(
                f"alpha={a} outside (0, 1); pass allow_any_alpha=True to override"
            )
        for name, implied in (("declared_eta", a), ("declared_theta", 1.0)):
            given = getattr(self, name)
            if given is not None and not math.isclose(given, implied, rel_tol=1e-12):
                raise SpecificationError(f"{name}={given} contradicts the family value {implied}")
            object.__setattr__(self, name, float(implied))
        if self.n_private is not None and self.n_public is not None and self.n_private != self.n_public:
            raise SpecificationError("power families need as many private as public goods")

    def _init_separable(self) -> None:
        if self.alpha is None or self.beta is None or self.alpha == 0 or self.beta == 0:
            raise SpecificationError("the additive separable family needs non-zero alpha and beta")
        if self.declared_eta is not None or self.declared_theta is not None:
            raise SpecificationError("the additive separable family is not independently homogeneous")
        object.__setattr__(self, "n_private", 2)
        object.__setattr__(self, "n_public", 2)

    def _init_generic(self) -> None:
        if self.underlying is None:
            raise SpecificationError("the generic family needs an underlying evaluator")
        if self.declared_eta is None or self.declared_theta is None:
            raise SpecificationError("the generic family needs declared eta and theta")
        if self.declared_eta == 0:
            raise SpecificationError("declared eta must be non-zero")
        if not self.n_private or not self.n_public:
            raise SpecificationError("the generic family needs n_private >= 1 and n_public >= 1")
        verify_declared_degrees(self)

    # -- degrees ---------------------------------------------------------

    @property
    def degrees(self) -> HomogeneityDegrees | None:
        """Independent homogeneity degrees, or None when ``u`` has none."""
        if self.declared_eta is None or self.declared_theta is None:
            return None
        return HomogeneityDegrees(self.declared_eta, self.declared_theta)

    @property
    def joint_degree(self) -> float | None:
        if self.family is Family.ADDITIVE_SEPARABLE:
            if self.alpha == self.beta:
                return 2.0 / self.alpha
            return None
        return self.degrees.gamma

    @property
    def phi(self) -> float | None:
        d = self.degrees
        return None if d is None else d.phi

    # -- dimensions ------------------------------------------------------

    def check_dimensions(self, n_x: int, z: PublicBundle) -> None:
        k1, k2 = z.z1.size, z.z2.size
        if self.family in _POWER_FAMILIES:
            if n_x != k1:
                raise DimensionError(f"power family needs len(x) == len(z1), got {n_x} and {k1}")
            return
        if self.n_private is not None and n_x != self.n_private:
            raise DimensionError(f"expected {self.n_private} private goods, got {n_x}")
        if self.n_public is not None and k1 != self.n_public:
            raise DimensionError(f"expected {self.n_public} goods in z1, got {k1}")
        if self.family is Family.GENERIC and k2 != self.n_aux:
            raise DimensionError(f"expected {self.n_aux} goods in z2, got {k2}")

    def private_count(self, z: PublicBundle) -> int:
        if self.family in _POWER_FAMILIES:
            return z.z1.size
        return int(self.n_private)

    # -- evaluation closures (no validation; used inside solvers) --------

    def underlying_fn(self, z: PublicBundle) -> Callable[[FloatArray], float]:
        z1, z2 = z.z1, z.z2
        if self.family in _POWER_FAMILIES:
            a = self.alpha
            return lambda x: float(np.dot(np.power(x, a), z1))
        if self.family is Family.ADDITIVE_SEPARABLE:
            inv_a = 1.0 / self.alpha
            public_part = float(z1[0] * z1[1]) ** (1.0 / self.beta)
            return lambda x: float(x[0] * x[1]) ** inv_a + public_part
        fn = self.underlying
        return lambda x: float(fn(x, z1, z2))

    def utility_fn(self, z: PublicBundle) -> Callable[[FloatArray], float]:
        u = self.underlying_fn(z)
        g = self.transform
        if g.is_identity:
            return u
        return lambda x: g(u(x))

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        if self.family is Family.GENERIC:
            raise SpecificationError("generic specifications are programmatic only")
        data: dict[str, Any] = {"family": self.family.value, "alpha": self.alpha}
        if self.family is Family.ADDITIVE_SEPARABLE:
            data["beta"] = self.beta
        else:
            data["eta"] = self.declared_eta
            data["theta"] = self.declared_theta
            if self.allow_any_alpha:
                data["allow_any_alpha"] = True
        data["transform"] = self.transform.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> UtilitySpec:
        try:
            family = Family(data["family"])
        except (KeyError, ValueError) as exc:
            raise SpecificationError(f"unknown or missing family: {data.get('family')!r}") from exc
        if family is Family.GENERIC:
            raise SpecificationError("generic specifications cannot be loaded from JSON")
        if "transform" in data:
            transform = Transform.from_dict(data["transform"])
        elif family is Family.LOG_POWER_WEIGHTED:
            transform = log_plus(5.0)
        else:
            transform = IDENTITY
        if family is Family.LOG_POWER_WEIGHTED and transform.is_identity:
            raise SpecificationError("LogTransformedPowerWeighted needs a log_plus transform")

        def opt(key: str) -> float | None:
            return None if data.get(key) is None else float(data[key])

        return cls(
            family=family,
            alpha=opt("alpha"),
            beta=opt("beta"),
            declared_eta=opt("eta"),
            declared_theta=opt("theta"),
            transform=transform,
            allow_any_alpha=bool(data.get("allow_any_alpha", False)),
        )


def power_weighted(alpha: float, *, transform: Transform = IDENTITY, allow_any_alpha: bool = False) -> UtilitySpec:
    """``u(x; z1) = sum_n x_n**alpha * z1_n`` (degrees eta = alpha, theta = 1)."""
    return UtilitySpec(Family.POWER_WEIGHTED, alpha=alpha, transform=transform, allow_any_alpha=allow_any_alpha)


def log_power_weighted(alpha: float, offset: float = 5.0, *, allow_any_alpha: bool = False) -> UtilitySpec:
    """The power-weighted family seen through ``g(u) = ln(u) + offset``."""
    return UtilitySpec(
        Family.LOG_POWER_WEIGHTED, alpha=alpha, transform=log_plus(offset), allow_any_alpha=allow_any_alpha
    )


def additive_separable_power(alpha: float, beta: float | None = None) -> UtilitySpec:
    """``u(x; z1) = (x1 x2)**(1/alpha) + (z11 z12)**(1/beta)``; ``beta`` defaults to ``alpha``."""
    return UtilitySpec(Family.ADDITIVE_SEPARABLE, alpha=alpha, beta=alpha if beta is None else beta)


def generic_homothetic(
    underlying: Underlying,
    eta: float,
    theta: float,
    *,
    n_private: int,
    n_public: int,
    n_aux: int = 0,
    transform: Transform | CallableTransform = IDENTITY,
) -> UtilitySpec:
    """Wrap ``underlying(x, z1, z2)`` with declared degrees.

    The declaration is checked by the scaling test of :func:`verify_declared_degrees`;
    a failing declaration raises :class:`SpecificationError`.
    """
    return UtilitySpec(
        Family.GENERIC,
        declared_eta=float(eta),
        declared_theta=float(theta),
        transform=transform,
        underlying=underlying,
        n_private=n_private,
        n_public=n_public,
        n_aux=n_aux,
    )


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _coerce(spec: UtilitySpec, x: PrivateBundle | ArrayLike, z: PublicBundle) -> FloatArray:
    q = x.quantities if isinstance(x, PrivateBundle) else PrivateBundle(x).quantities
    spec.check_dimensions(q.size, z)
    return q


def evaluate_underlying(spec: UtilitySpec, x: PrivateBundle | ArrayLike, z: PublicBundle) -> float:
    """Value of the underlying function ``u(x; z1, z2)``."""
    q = _coerce(spec, x, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = spec.underlying_fn(z)(q)
    if not math.isfinite(value):
        raise DomainError(f"underlying function undefined at x={q.tolist()}")
    return value


def evaluate_utility(spec: UtilitySpec, x: PrivateBundle | ArrayLike, z: PublicBundle) -> float:
    """Value of ``h = g(u(x; z1, z2))``."""
    u = evaluate_underlying(spec, x, z)
    try:
        return float(spec.transform(u))
    except (ValueError, OverflowError) as exc:
        raise DomainError(str(exc)) from exc


def finite_difference_gradient(
    f: Callable[[FloatArray], float], point: ArrayLike, step: float | Sequence[float] | None = None
) -> FloatArray:
    """Central-difference gradient of ``f`` at ``point``.

    The default step for coordinate i is ``1e-6 * max(1, |point_i|)``.
    """
    x = np.asarray(point, dtype=float)
    if step is None:
        h = 1e-6 * np.maximum(1.0, np.abs(x))
    else:
        h = np.broadcast_to(np.asarray(step, dtype=float), x.shape).copy()
        if np.any(h <= 0):
            raise ValueError("finite-difference step must be positive")
    grad = np.empty_like(x)
    for i in range(x.size):
        up = x.copy()
        down = x.copy()
        up[i] += h[i]
        down[i] -= h[i]
        try:
            with np.errstate(all="ignore"):
                f_up, f_down = f(up), f(down)
        except (ValueError, ZeroDivisionError) as exc:
            raise DomainError(f"stencil leaves the domain at coordinate {i}") from exc
        if not (math.isfinite(f_up) and math.isfinite(f_down)):
            raise DomainError(f"stencil leaves the domain at coordinate {i}")
        grad[i] = (f_up - f_down) / (up[i] - down[i])
    return grad


def probe_points(n: int, dim: int, low: float = 0.5, high: float = 2.0) -> FloatArray:
    """Deterministic low-discrepancy points in ``[low, high]**dim`` (unscrambled Halton, origin skipped)."""
    sampler = qmc.Halton(d=dim, scramble=False)
    sampler.fast_forward(1)
    return low + (high - low) * sampler.random(n)


def verify_declared_degrees(spec: UtilitySpec, n_points: int = 8, tol: float = DEGREE_CHECK_TOL) -> None:
    """Reject a generic spec whose declared (eta, theta) fail the scaling test.

    Checks ``|ln u(t x; z) - ln u(x; z) - eta ln t| < tol`` and the analogous
    statement in ``z1`` for t in {0.5, 2, 10} at deterministic positive points.
    Also samples the transform for strict monotonicity on the values reached.
    """
    n, k1, k2 = spec.n_private, spec.n_public, spec.n_aux
    pts = probe_points(n_points, n + k1 + k2)
    fn = spec.underlying
    eta, theta = spec.declared_eta, spec.declared_theta
    reached = []
    for row in pts:
        x, z1, z2 = row[:n], row[n : n + k1], row[n + k1 :]
        base = float(fn(x, z1, z2))
        if not math.isfinite(base) or base == 0:
            raise SpecificationError(f"underlying function not usable at probe point {row.tolist()}")
        reached.append(base)
        for t in DEGREE_CHECK_T:
            for label, degree, scaled in (
                ("eta", eta, float(fn(t * x, z1, z2))),
                ("theta", theta, float(fn(x, t * z1, z2))),
            ):
                if not math.isfinite(scaled) or np.sign(scaled) != np.sign(base):
                    raise SpecificationError(f"declared {label}={degree} fails at t={t}")
                gap = math.log(abs(scaled)) - math.log(abs(base)) - degree * math.log(t)
                if abs(gap) >= tol:
                    raise SpecificationError(
                        f"declared {label}={degree} fails the scaling test at t={t} (log gap {gap:.3e})"
                    )
    if not spec.transform.is_identity:
        values = sorted(reached)
        lo, hi = values[0], values[-1]
        grid = np.linspace(lo, hi, 64) if hi > lo else np.array([lo])
        try:
            mapped = np.array([spec.transform(v) for v in grid])
        except (ValueError, OverflowError) as exc:
            raise SpecificationError("transform undefined on the reachable range of u") from exc
        if grid.size > 1 and not np.all(np.diff(mapped) > 0):
            raise SpecificationError("transform is not strictly increasing on the reachable range of u")
