"""Recover phi from synthetic provision-change data by least squares.

A panel row records a proportional provision change ``z1 -> t z1`` and the
compensated income ``e(u0, p; t z1)`` that keeps the consumer at the baseline
utility ``u0 = v(m, p; z)``, together with the Hicksian bundles before and
after.  Under independent homogeneity ``ln(m_after / m_before) = phi ln t``
and the same holds good by good, so the OLS slope of either on ``ln t``
estimates ``phi``.

Compensated incomes come from the expenditure solver, never from the closed
form, so the estimator is tested against data that does not assume its answer.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np
from numpy.typing import ArrayLike

from cvkit.core import FloatArray, PriceIncome, PublicBundle, UtilitySpec
from cvkit.duality import solve_emp, solve_ump
from cvkit.errors import DimensionError, DomainError

NOISELESS_AGREEMENT = 1e-5
CSV_DIGITS = 12


@dataclass(frozen=True)
class ProvisionObservation:
    t: float
    m_before: float
    m_after: float
    x_before: FloatArray
    x_after: FloatArray
    noise_applied: float = 0.0

    def __post_init__(self) -> None:
        values = [self.t, self.m_before, self.m_after, *self.x_before, *self.x_after]
        if not all(math.isfinite(v) and v > 0 for v in values):
            raise DomainError("observation quantities must be finite and positive")
        if len(self.x_before) != len(self.x_after):
            raise DimensionError("x_before and x_after differ in length")

    @property
    def n_goods(self) -> int:
        return len(self.x_before)


def provision_change(z_before: ArrayLike, z_after: ArrayLike) -> float:
    """Euclidean norm ratio ``||z_after|| / ||z_before||``; equals ``t`` for ``z_after = t z_before``."""
    return float(np.linalg.norm(np.asarray(z_after, dtype=float)) / np.linalg.norm(np.asarray(z_before, dtype=float)))


def _noise_stream(seed: int, row: int) -> np.random.Generator:
    # Keyed by (seed, row): each row's draws are independent of generation order.
    return np.random.default_rng([int(seed), int(row)])


def generate_panel(
    spec: UtilitySpec,
    base: PriceIncome,
    z: PublicBundle,
    t_values: Sequence[float],
    noise_sd: float = 0.0,
    seed: int = 0,
) -> list[ProvisionObservation]:
    """One observation per entry of ``t_values`` (repeats allowed).

    ``m_after`` and every ``x_after`` are multiplied by independent
    ``exp(N(0, noise_sd**2))`` draws; the income draw's log is recorded as
    ``noise_applied``.  Solver work is shared between rows with equal ``t``.
    """
    ts = [float(t) for t in t_values]
    if not ts:
        raise DomainError("t_values is empty")
    if any(not (math.isfinite(t) and t > 0) for t in ts):
        raise DomainError("every t must be positive")
    if not (math.isfinite(noise_sd) and noise_sd >= 0):
        raise DomainError(f"noise_sd must be non-negative, got {noise_sd}")

    baseline = solve_ump(spec, base, z)
    u0 = baseline.indirect_utility
    x0 = baseline.demand
    solved: dict[float, tuple[float, FloatArray]] = {}
    for t in dict.fromkeys(ts):
        if t == 1.0:
            solved[t] = (base.income, x0)
        else:
            emp = solve_emp(spec, u0, base.prices, z.scaled(t))
            solved[t] = (emp.expenditure, emp.demand)

    panel = []
    for row, t in enumerate(ts):
        m_after, x_after = solved[t]
        log_noise = 0.0
        if noise_sd > 0:
            draws = _noise_stream(seed, row).normal(0.0, noise_sd, size=1 + x_after.size)
            log_noise = float(draws[0])
            m_after = m_after * math.exp(log_noise)
            x_after = x_after * np.exp(draws[1:])
        panel.append(ProvisionObservation(t, base.income, float(m_after), x0.copy(), np.array(x_after), log_noise))
    return panel


@dataclass(frozen=True)
class RegressionSample:
    Y: FloatArray
    X1: FloatArray
    mode: str

    def __post_init__(self) -> None:
        if self.Y.shape != self.X1.shape:
            raise DimensionError("Y and X1 differ in length")
        if self.Y.size < 3:
            raise DimensionError(f"need at least 3 observations, got {self.Y.size}")
        if np.ptp(self.X1) == 0:
            raise DomainError("X1 has no variation; the slope is not identified")


def _mode_name(good: int | None) -> str:
    return "income" if good is None else f"good({good})"


def build_sample(panel: Sequence[ProvisionObservation], good: int | None = None) -> RegressionSample:
    """Log changes: ``Y = ln(m_after/m_before)`` or, for ``good=n`` (1-based),
    ``Y = ln(x_after_n / x_before_n)``; ``X1 = ln t`` in both cases."""
    if good is not None and panel and not 1 <= good <= panel[0].n_goods:
        raise DimensionError(f"good index {good} outside 1..{panel[0].n_goods}")
    X1 = np.log([obs.t for obs in panel])
    if good is None:
        Y = np.log([obs.m_after / obs.m_before for obs in panel])
    else:
        Y = np.log([obs.x_after[good - 1] / obs.x_before[good - 1] for obs in panel])
    return RegressionSample(np.asarray(Y, dtype=float), np.asarray(X1, dtype=float), _mode_name(good))


@dataclass(frozen=True)
class EstimationResult:
    beta0: float
    beta1: float
    stderr_beta1: float
    residuals: FloatArray
    r_squared: float
    mode: str = "income"

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "beta0": self.beta0,
            "beta1": self.beta1,
            "stderr_beta1": self.stderr_beta1,
            "r_squared": self.r_squared,
            "n": int(self.residuals.size),
            "max_abs_residual": float(np.max(np.abs(self.residuals))),
        }


def ols_fit(sample: RegressionSample) -> EstimationResult:
    """Two-variable OLS with intercept; classical homoskedastic slope error."""
    x, y = sample.X1, sample.Y
    n = x.size
    x_bar, y_bar = x.mean(), y.mean()
    dx = x - x_bar
    sxx = float(dx @ dx)
    beta1 = float(dx @ (y - y_bar)) / sxx
    beta0 = float(y_bar - beta1 * x_bar)
    residuals = y - beta0 - beta1 * x
    ssr = float(residuals @ residuals)
    dy = y - y_bar
    sst = float(dy @ dy)
    r_squared = 1.0 if sst == 0 else min(1.0, max(0.0, 1.0 - ssr / sst))
    stderr = math.sqrt(ssr / (n - 2) / sxx)
    return EstimationResult(beta0, beta1, stderr, residuals, r_squared, sample.mode)


@dataclass(frozen=True)
class PhiRecovery:
    phi_hat: float
    fit: EstimationResult
    phi_declared: float | None
    agreement: bool

    def to_dict(self) -> dict:
        return {
            "phi_hat": self.phi_hat,
            "phi_declared": self.phi_declared,
            "agreement": self.agreement,
            "fit": self.fit.to_dict(),
        }


def agreement_flag(phi_hat: float, stderr: float, phi_declared: float | None, noiseless: bool) -> bool:
    if phi_declared is None:
        return False
    bound = NOISELESS_AGREEMENT if noiseless else 3.0 * stderr
    return abs(phi_hat - phi_declared) < bound


def fit_panel(
    panel: Sequence[ProvisionObservation], phi_declared: float | None, noiseless: bool, good: int | None = None
) -> PhiRecovery:
    fit = ols_fit(build_sample(panel, good))
    return PhiRecovery(fit.beta1, fit, phi_declared, agreement_flag(fit.beta1, fit.stderr_beta1, phi_declared, noiseless))


def recover_phi(
    spec: UtilitySpec,
    base: PriceIncome,
    z: PublicBundle,
    t_values: Sequence[float],
    noise_sd: float = 0.0,
    seed: int = 0,
    good: int | None = None,
) -> PhiRecovery:
    """Generate a panel, fit it, and compare the slope with the declared phi."""
    panel = generate_panel(spec, base, z, t_values, noise_sd, seed)
    return fit_panel(panel, spec.phi, noise_sd == 0, good)


def recover_phi_all_modes(
    spec: UtilitySpec,
    base: PriceIncome,
    z: PublicBundle,
    t_values: Sequence[float],
    noise_sd: float = 0.0,
    seed: int = 0,
) -> list[PhiRecovery]:
    """Income regression followed by one separate regression per good, all on one panel."""
    panel = generate_panel(spec, base, z, t_values, noise_sd, seed)
    goods: list[int | None] = [None, *range(1, panel[0].n_goods + 1)]
    return [fit_panel(panel, spec.phi, noise_sd == 0, g) for g in goods]


# CSV round trip ------------------------------------------------------------


def panel_header(n_goods: int) -> list[str]:
    return (
        ["t", "m_before", "m_after"]
        + [f"x_before_{i}" for i in range(1, n_goods + 1)]
        + [f"x_after_{i}" for i in range(1, n_goods + 1)]
        + ["noise"]
    )


def format_number(value: float) -> str:
    return format(float(value), f".{CSV_DIGITS}g")


def write_panel_csv(panel: Sequence[ProvisionObservation], out: TextIO) -> None:
    if not panel:
        raise DomainError("panel is empty")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(panel_header(panel[0].n_goods))
    for obs in panel:
        values = [obs.t, obs.m_before, obs.m_after, *obs.x_before, *obs.x_after, obs.noise_applied]
        writer.writerow([format_number(v) for v in values])


def panel_to_csv(panel: Sequence[ProvisionObservation]) -> str:
    buf = io.StringIO()
    write_panel_csv(panel, buf)
    return buf.getvalue()


def read_panel_csv(lines: Iterable[str]) -> list[ProvisionObservation]:
    reader = csv.reader(lines)
    header = next(reader)
    n_goods = (len(header) - 4) // 2
    if n_goods < 1 or header != panel_header(n_goods):
        raise DimensionError(f"unexpected panel header: {header}")
    panel = []
    for row in reader:
        if not row:
            continue
        v = [float(c) for c in row]
        panel.append(
            ProvisionObservation(
                t=v[0],
                m_before=v[1],
                m_after=v[2],
                x_before=np.array(v[3 : 3 + n_goods]),
                x_after=np.array(v[3 + n_goods : 3 + 2 * n_goods]),
                noise_applied=v[-1],
            )
        )
    return panel
