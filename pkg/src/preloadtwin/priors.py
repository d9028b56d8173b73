"""Lognormal soil-parameter priors and joint sampling.

Each of the nine soil parameters is a depth-constant lognormal random
variable. Priors are fitted either from sparse lab/field sample sets
(log-space MLE) or specified directly by (mean, cov). Joint draws enforce
the physical ordering sigma_c <= sigma_L by rejection.

Units follow the scenario convention: stresses and moduli in kPa, unit
weights in kN/m3, consolidation coefficients in m2/year, water content as
a fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import (
    DegenerateDataError,
    InconsistentPriorsError,
    InsufficientDataError,
    NonPositiveSampleError,
    ScenarioError,
)

# Parameter order is load-bearing: it defines the column layout of packed
# particle arrays used by the kernels (cv/ch converted to m2/week there).
PARAM_NAMES = (
    "sigma_L",   # limit pressure of the modulus model [kPa]
    "sigma_c",   # preconsolidation pressure [kPa]
    "gamma_cl",  # unit weight of clay [kN/m3]
    "gamma_emb", # unit weight of embankment fill [kN/m3]
    "M0",        # modulus below sigma_c [kPa]
    "ML",        # modulus between sigma_c and sigma_L [kPa]
    "wN",        # natural water content [-] (carried, unused by the model)
    "cv",        # vertical consolidation coefficient [m2/year]
    "ch",        # horizontal consolidation coefficient [m2/year]
)


@dataclass(frozen=True)
class LognormalDist:
    """Lognormal distribution parameterized in log space."""

    log_mean: float
    log_std: float
    unit: str = ""

    def __post_init__(self):
        if not (self.log_std > 0.0) or not math.isfinite(self.log_std):
            raise DegenerateDataError(
                f"log_std must be > 0, got {self.log_std!r} (degenerate data?)"
            )
        if not math.isfinite(self.log_mean):
            raise ScenarioError(f"log_mean must be finite, got {self.log_mean!r}")

    def mean(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    def std(self) -> float:
        s2 = self.log_std**2
        return self.mean() * math.sqrt(math.expm1(s2))

    def cov(self) -> float:
        return math.sqrt(math.expm1(self.log_std**2))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        pos = x > 0.0
        z = (np.log(x[pos]) - self.log_mean) / self.log_std
        out[pos] = np.exp(-0.5 * z * z) / (x[pos] * self.log_std * math.sqrt(2.0 * math.pi))
        return out

    def quantile(self, p: float) -> float:
        from statistics import NormalDist

        return math.exp(self.log_mean + self.log_std * NormalDist().inv_cdf(p))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.exp(self.log_mean + self.log_std * rng.standard_normal(n))


def fit_lognormal(samples, unit: str = "", predictive_inflation: bool = False) -> LognormalDist:
    """Fit a lognormal by MLE on log-transformed samples.

    log_mean is the arithmetic mean of log(samples); log_std the sample
    standard deviation (n-1 denominator). Plug-in estimates by default;
    with predictive_inflation the spread is widened to match the variance
    of the posterior-predictive t distribution (normal model, flat prior),
    which needs at least 4 samples.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise InsufficientDataError(
            f"need at least 2 samples to fit a lognormal, got {len(samples)}"
        )
    for i, s in enumerate(samples):
        if not (s > 0.0) or not math.isfinite(s):
            raise NonPositiveSampleError(i, s)
    logs = np.log(np.asarray(samples, dtype=float))
    n = len(samples)
    log_mean = float(np.mean(logs))
    log_std = float(np.std(logs, ddof=1))
    if log_std <= 0.0:
        raise DegenerateDataError(
            "all samples identical; the fitted spread would be zero"
        )
    if predictive_inflation:
        if n < 4:
            raise InsufficientDataError(
                f"predictive inflation needs at least 4 samples (t variance), got {n}"
            )
        # scale of the predictive t is s*sqrt(1+1/n) with n-1 dof; its
        # variance exceeds the scale^2 by (n-1)/(n-3)
        log_std *= math.sqrt((1.0 + 1.0 / n) * (n - 1.0) / (n - 3.0))
    return LognormalDist(log_mean=log_mean, log_std=log_std, unit=unit)


def from_moments(mean: float, cov: float, unit: str = "") -> LognormalDist:
    """Lognormal from real-space mean and coefficient of variation."""
    if not (mean > 0.0) or not math.isfinite(mean):
        raise ScenarioError(f"mean must be > 0, got {mean!r}")
    if not (cov > 0.0) or not math.isfinite(cov):
        raise ScenarioError(f"cov must be > 0, got {cov!r}")
    log_std = math.sqrt(math.log1p(cov * cov))
    log_mean = math.log(mean) - 0.5 * log_std**2
    return LognormalDist(log_mean=log_mean, log_std=log_std, unit=unit)


def from_variance_fraction(mean: float, fraction: float, unit: str = "") -> LognormalDist:
    """Alternative reading of "sigma^2 = f*mu": variance equals fraction*mean.

    Dimensionally odd (variance in squared units set from a first moment)
    but implemented so the interpretation stays a config switch.
    """
    if not (mean > 0.0 and fraction > 0.0):
        raise ScenarioError("mean and fraction must be > 0")
    variance = fraction * mean
    return from_moments(mean, math.sqrt(variance) / mean, unit=unit)


@dataclass(frozen=True)
class SoilPriorSet:
    """One marginal prior per soil parameter; all nine must be present."""

    sigma_L: LognormalDist
    sigma_c: LognormalDist
    gamma_cl: LognormalDist
    gamma_emb: LognormalDist
    M0: LognormalDist
    ML: LognormalDist
    wN: LognormalDist
    cv: LognormalDist
    ch: LognormalDist

    def as_tuple(self) -> tuple[LognormalDist, ...]:
        return tuple(getattr(self, name) for name in PARAM_NAMES)


@dataclass(frozen=True)
class SoilSample:
    """One joint realization of the soil parameters."""

    sigma_L: float
    sigma_c: float
    gamma_cl: float
    gamma_emb: float
    M0: float
    ML: float
    wN: float
    cv: float
    ch: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0.0) or not math.isfinite(v):
                raise ScenarioError(f"{f.name} must be > 0, got {v!r}")
        if self.sigma_c > self.sigma_L:
            raise ScenarioError(
                f"sigma_c ({self.sigma_c}) must not exceed sigma_L ({self.sigma_L})"
            )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "SoilSample":
        return cls(**{n: float(v) for n, v in zip(PARAM_NAMES, arr)})


# Rejection sampling gives up after this many total proposals per requested
# draw; a consistent prior pair rejects far less than 99% of proposals.
_MAX_ATTEMPT_FACTOR = 1_000_000


def sample_soil_array(priors: SoilPriorSet, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw n joint realizations as an (n, 9) array in PARAM_NAMES order.

    Marginals are independent; the pair (sigma_c, sigma_L) is redrawn jointly
    until sigma_c <= sigma_L. Draws are filled in blocks so the stream
    consumption is reproducible for a given (priors, rng state, n).
    """
    if n < 1:
        raise ScenarioError(f"n must be >= 1, got {n}")
    dists = priors.as_tuple()
    out = np.empty((n, len(PARAM_NAMES)), dtype=float)
    for j, d in enumerate(dists):
        out[:, j] = d.sample(rng, n)

    bad = out[:, 1] > out[:, 0]  # sigma_c > sigma_L
    attempts = n
    while np.any(bad):
        m = int(np.count_nonzero(bad))
        attempts += m
        if attempts > _MAX_ATTEMPT_FACTOR:
            rate = 1.0 - n / attempts
            raise InconsistentPriorsError(
                f"rejection rate {rate:.4f} over {attempts} proposals; "
                "sigma_c and sigma_L priors are mutually inconsistent"
            )
        out[bad, 0] = dists[0].sample(rng, m)
        out[bad, 1] = dists[1].sample(rng, m)
        bad = out[:, 1] > out[:, 0]
    return out


def sample_soil(priors: SoilPriorSet, rng_seed: int, n: int) -> list[SoilSample]:
    """Seeded convenience wrapper returning SoilSample objects."""
    from .rngstream import stream

    arr = sample_soil_array(priors, stream(rng_seed, "prior-sample"), n)
    return [SoilSample.from_array(row) for row in arr]
