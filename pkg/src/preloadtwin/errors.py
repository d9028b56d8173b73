"""Exception hierarchy shared across the engine.

Exit-code mapping used by the CLI: ScenarioError -> 2, NumericError -> 3,
ServiceError -> 4.
"""

from __future__ import annotations


class PreloadTwinError(Exception):
    """Base class for all engine errors."""


class ScenarioError(PreloadTwinError):
    """Invalid configuration: schema violations, bad units, inconsistent blocks.

    Carries the dotted path of the offending field when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NumericError(PreloadTwinError):
    """Base class for failures of the numerical contracts."""


class InsufficientDataError(NumericError):
    """Fewer samples than the estimator requires."""


class DegenerateDataError(NumericError):
    """Sample set carries no spread (all values identical)."""


class NonPositiveSampleError(NumericError):
    """A lognormal sample set contains a non-positive value."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"sample[{index}] = {value!r} is not > 0")


class InconsistentPriorsError(NumericError):
    """Joint rejection sampling from the priors almost never succeeds."""


class InvalidGeometryError(NumericError):
    """Drain/embankment geometry outside the model's validity range."""


class StressRangeExceededError(NumericError):
    """Final effective stress beyond the limit pressure of the modulus model."""

    def __init__(self, sigma_final: float, sigma_limit: float, layer: int | None = None):
        self.sigma_final = sigma_final
        self.sigma_limit = sigma_limit
        self.layer = layer
        where = f" in layer {layer}" if layer is not None else ""
        super().__init__(
            f"final effective stress {sigma_final:.3f} kPa exceeds the limit "
            f"pressure {sigma_limit:.3f} kPa{where}; the modulus model is "
            "undefined beyond the limit pressure"
        )


class ContinuityUnsolvableError(NumericError):
    """No clock shift can make the settlement curve continuous at the increment."""


class DegenerateUpdateError(NumericError):
    """Every particle received zero likelihood; the update is undefined."""

    def __init__(self, max_log_likelihood: float):
        self.max_log_likelihood = max_log_likelihood
        super().__init__(
            "all particle likelihoods underflowed to zero "
            f"(max log-likelihood {max_log_likelihood:.6g})"
        )


class UndefinedCovError(NumericError):
    """Coefficient of variation requested for a near-zero mean."""


class UnsupportedActionError(NumericError):
    """A second surcharge increment was requested (single-increment model)."""


class RolloutError(NumericError):
    """A Monte Carlo rollout failed; carries the rollout index."""

    def __init__(self, k: int, cause: Exception):
        self.k = k
        self.cause = cause
        super().__init__(f"rollout {k} failed: {cause}")


class OptimizationFailedError(NumericError):
    """Cross-entropy search could not produce a usable iterate."""

    def __init__(self, message: str, trace: list | None = None):
        self.trace = trace if trace is not None else []
        super().__init__(message)


class SessionLogError(ScenarioError):
    """Session log violates the append-only / hash-consistency contract."""


class ServiceError(PreloadTwinError):
    """Service-level failure (exit code 4)."""
