"""Exception types shared across the toolkit."""

from __future__ import annotations

from typing import Any


class CvKitError(Exception):
    """Base class for every error raised by cvkit."""


class DomainError(CvKitError, ValueError):
    """An input lies outside the domain of a utility or transform."""


class DimensionError(CvKitError, ValueError):
    """Bundle lengths do not match what the utility specification expects."""


class SpecificationError(CvKitError, ValueError):
    """A utility specification is internally inconsistent or fails verification."""


class CardinalityError(CvKitError, TypeError):
    """A cardinal scaling check was requested for a non-identity transform."""


class ConvergenceError(CvKitError, RuntimeError):
    """A numerical solver failed to converge.

    ``best`` carries the best iterate reached before giving up, when one exists.
    """

    def __init__(self, message: str, best: Any = None, iterations: int = 0):
        super().__init__(message)
        self.best = best
        self.iterations = iterations


class UnattainableTargetError(CvKitError, RuntimeError):
    """An expenditure problem could not bracket its utility target."""
