# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Stochastic Gradient Langevin Dynamics: the transition kernel and the chain."""

import logging

import numpy as np

from fedsgld.common import DataError, DivergenceError, check_lengths
from fedsgld.model import nll_grad
from fedsgld.prior import PosteriorSamples, log_prior_grad


logger = logging.getLogger(__name__)


def sgld_step(params, grad, eta, noise, iteration=None):
    """Do one Langevin step: a gradient descent step plus sqrt(2 eta) scaled noise."""
    check_lengths("params", params, "gradient", grad)
    check_lengths("params", params, "noise", noise)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError(iteration)
    new_params = params - eta * grad + np.sqrt(2 * eta) * noise
    if not np.all(np.isfinite(new_params)):
        raise DivergenceError(iteration, detail="non-finite parameters")
    return new_params


def draw_noise(rng, n_params, config):
    """Draw the standard normal noise of a step (all zeros if noise is turned off)."""
    if not config.inject_noise:
        return np.zeros(n_params)
    return rng.standard_normal(n_params)


def local_gradient(spec, params, shard, prior, config, rng, *, likelihood_grad=nll_grad):
    """Estimate the gradient of the node loss from M random batches of its shard.

    The likelihood part is the mean over the batches of each batch's summed gradient (no
    rescaling by the shard size); the prior part is scaled by 1/N.
    """
    shard_size = len(shard)
    if shard_size == 0:
        raise DataError("Cannot compute a gradient on an empty shard")
    batch_size = config.effective_batch_size(shard_size)
    if batch_size > shard_size:
        raise DataError(f"Batch size {batch_size} is bigger than the shard ({shard_size})")

    total = np.zeros(len(params))
    for _ in range(config.num_batches):
        indices = rng.choice(shard_size, size=batch_size, replace=False)
        total += likelihood_grad(spec, params, shard.subset(indices))
    return total / config.num_batches - log_prior_grad(prior, params) / config.num_nodes


def run_chain(
    spec, init, dataset, prior, config, rng, *, day=1, seed=0, likelihood_grad=nll_grad
):
    """Run a single (non federated) chain, returning the samples after the burn-in."""
    params = np.array(init, dtype=np.float64)
    retained = []
    for iteration in range(1, config.total_iters + 1):
        grad = local_gradient(
            spec, params, dataset, prior, config, rng, likelihood_grad=likelihood_grad)
        noise = draw_noise(rng, len(params), config)
        params = sgld_step(params, grad, config.eta, noise, iteration=iteration)
        if iteration > config.burn_in:
            retained.append(params)
    logger.debug("Chain finished, retained %d of %d iterations", len(retained), config.total_iters)
    return PosteriorSamples(
        np.array(retained), day=day, total_iters=config.total_iters,
        burn_in=config.burn_in, seed=seed)
