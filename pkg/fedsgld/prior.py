# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""The prior distribution over the parameters, and its fit from posterior samples."""

import dataclasses
import logging

import numpy as np

from fedsgld.common import InsufficientSamplesError, ShapeError, as_vector, check_lengths


logger = logging.getLogger(__name__)

# no variance goes below this, so the prior gradient of the next day stays finite
VARIANCE_FLOOR = 1e-6

_LOG_2PI = np.log(2 * np.pi)


@dataclasses.dataclass(frozen=True)
class GaussianDiagPrior:
    """Independent Gaussian per parameter; variances are floored at VARIANCE_FLOOR."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        mean = as_vector(self.mean, "prior mean")
        variance = as_vector(self.variance, "prior variance")
        check_lengths("mean", mean, "variance", variance)
        if np.any(variance < 0):
            raise ValueError("Prior variances must not be negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", np.maximum(variance, VARIANCE_FLOOR))

    def __len__(self):
        return len(self.mean)

    def sample(self, rng):
        """Draw one parameter vector from the prior."""
        return self.mean + np.sqrt(self.variance) * rng.standard_normal(len(self))


@dataclasses.dataclass(frozen=True)
class PosteriorSamples:
    """Retained (post burn-in) parameter vectors of one day, one per row."""

    samples: np.ndarray
    day: int
    total_iters: int
    burn_in: int
    seed: int
    strategy: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2:
            raise ShapeError(f"Samples must be a matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Posterior samples have non-finite entries")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return len(self.samples)

    @property
    def n_params(self):
        """Return the length of each parameter vector."""
        return self.samples.shape[1]


def standard_prior(n_params):
    """Return the N(0, I) prior."""
    if n_params < 1:
        raise ValueError(f"Need at least one parameter, got {n_params}")
    return GaussianDiagPrior(np.zeros(n_params), np.ones(n_params))


def log_prior(prior, params):
    """Return the full (normalized) log-density of the parameters under the prior."""
    check_lengths("prior", prior.mean, "params", params)
    diff = np.asarray(params, dtype=np.float64) - prior.mean
    quadratic = -diff ** 2 / (2 * prior.variance)
    normalization = -0.5 * (_LOG_2PI + np.log(prior.variance))
    return float(np.sum(quadratic + normalization))


def log_prior_grad(prior, params):
    """Return the gradient of log_prior with respect to the parameters."""
    check_lengths("prior", prior.mean, "params", params)
    return -(np.asarray(params, dtype=np.float64) - prior.mean) / prior.variance


def fit_from_samples(samples):
    """Fit a diagonal Gaussian from the posterior samples (mean and unbiased variance)."""
    if len(samples) < 2:
        raise InsufficientSamplesError(
            f"Need at least 2 posterior samples to fit a prior, got {len(samples)}")
    # rounding may put the mean of equal values a hair outside them
    mean = np.clip(
        samples.samples.mean(axis=0), samples.samples.min(axis=0), samples.samples.max(axis=0))
    variance = samples.samples.var(axis=0, ddof=1)
    n_floored = int(np.sum(variance < VARIANCE_FLOOR))
    if n_floored:
        logger.debug("Flooring the variance of %d parameters", n_floored)
    logger.debug(
        "Fitted prior from %d samples of day %d (median variance %.3g)",
        len(samples), samples.day, float(np.median(variance)))
    return GaussianDiagPrior(mean, variance)
