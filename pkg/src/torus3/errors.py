"""Exception types shared across the package."""

from __future__ import annotations


class Torus3Error(Exception):
    """Base class for all package-specific errors."""


class NonZeroMean(Torus3Error):
    """Antiderivative requested for a function whose mean is not numerically zero."""

    def __init__(self, mean: float, tol: float):
        super().__init__(
            f"antiderivative needs a mean-zero input: |average| = {abs(mean):.3e} "
            f"exceeds tolerance {tol:.1e}"
        )
        self.mean = mean
        self.tol = tol


class DomainError(Torus3Error):
    """Pointwise evaluation left the domain of a scalar operation (division by ~0,
    log or real power of a nonpositive value).  Carries the offending grid location."""

    def __init__(self, message: str, x: float | None = None, index: int | None = None):
        loc = "" if x is None else f" at x = {x:.6f} (grid index {index})"
        super().__init__(message + loc)
        self.x = x
        self.index = index


class DegenerateDispersion(Torus3Error):
    """The leading linearization coefficient vanishes somewhere on the grid, so a
    quantity that divides by it (or an infimum-positivity precondition) is undefined."""


class ClassificationMismatch(Torus3Error):
    """Sampled resonance classification contradicts an equation's known label."""


class StepUnstable(Torus3Error):
    """Time step rejected: either the step-size guard failed up front or the state
    became NaN/inf while stepping."""


class ConfigError(Torus3Error):
    """A run configuration file is malformed or inconsistent."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"[{field}] {message}")
        self.field = field
