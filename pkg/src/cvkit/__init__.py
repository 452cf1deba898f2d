"""Compensating variation for public-good provision under homothetic preferences."""

from cvkit.core import (
    Family,
    HomogeneityDegrees,
    PriceIncome,
    PrivateBundle,
    PublicBundle,
    Transform,
    UtilitySpec,
    additive_separable_power,
    evaluate_underlying,
    evaluate_utility,
    generic_homothetic,
    log_plus,
    log_power_weighted,
    power_weighted,
)
from cvkit.duality import solve_emp, solve_ump
from cvkit.errors import (
    CardinalityError,
    ConvergenceError,
    CvKitError,
    DimensionError,
    DomainError,
    SpecificationError,
    UnattainableTargetError,
)
from cvkit.estimate import generate_panel, ols_fit, recover_phi
from cvkit.welfare import CvQuery, CvResult, compute_cv, cv_brute_force, cv_closed_form

__all__ = [
    "CardinalityError",
    "ConvergenceError",
    "CvKitError",
    "CvQuery",
    "CvResult",
    "DimensionError",
    "DomainError",
    "Family",
    "HomogeneityDegrees",
    "PriceIncome",
    "PrivateBundle",
    "PublicBundle",
    "SpecificationError",
    "Transform",
    "UnattainableTargetError",
    "UtilitySpec",
    "additive_separable_power",
    "compute_cv",
    "cv_brute_force",
    "cv_closed_form",
    "evaluate_underlying",
    "evaluate_utility",
    "generate_panel",
    "generic_homothetic",
    "log_plus",
    "log_power_weighted",
    "ols_fit",
    "power_weighted",
    "recover_phi",
    "solve_emp",
    "solve_ump",
]
