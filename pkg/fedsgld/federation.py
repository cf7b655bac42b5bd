# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Simulation of the parameter server protocol and of the continual strategies."""

import concurrent.futures
import contextlib
import dataclasses
import logging
from typing import List, Optional

import numpy as np

from fedsgld import rng as rng_module
from fedsgld.common import DivergenceError, NodeError, ShapeError
from fedsgld.config_manager import (
    AggregationWeights,
    InitMode,
    MetricsConfig,
    Strategy,
)
from fedsgld.metrics import (
    CalibrationBins,
    PredictionSet,
    accuracy,
    calibration_bins,
    ece,
    iterations_to_threshold,
    mean_confidence,
    predictive,
    predictive_probs,
)
from fedsgld.model import LabeledBatch, init_params, nll_loss, param_count
from fedsgld.prior import PosteriorSamples, fit_from_samples, standard_prior
from fedsgld.sgld import draw_noise, local_gradient, sgld_step


logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class RoundRecord:
    """What happened in one round of a day."""

    day: int
    iteration: int
    global_params: np.ndarray
    train_loss: float
    val_accuracy: float


@dataclasses.dataclass(frozen=True)
class DayResult:
    """Outcome of one (strategy, day) cell of an experiment."""

    strategy: Strategy
    day: int
    accuracy: float
    ece: float
    mean_confidence: float
    bins: CalibrationBins
    samples: PosteriorSamples
    curve: List[RoundRecord]
    iterations_to_threshold: Optional[int]

    @property
    def trained(self):
        """Tell if the model was trained this day (frozen transfer days were not)."""
        return bool(self.curve)

    @property
    def final_round_accuracy(self):
        """Return the accuracy of the last global parameters of the day, if trained."""
        if not self.curve:
            return None
        return self.curve[-1].val_accuracy


@dataclasses.dataclass(frozen=True)
class ExperimentReport:
    """All the cells of an experiment, with what is needed to reproduce it."""

    cells: List[DayResult]
    seed: int
    config: dict = dataclasses.field(default_factory=dict)

    def cell(self, strategy, day):
        """Return the result for the strategy and day, None if not present."""
        for result in self.cells:
            if result.strategy == strategy and result.day == day:
                return result
        return None

    def merged(self, other):
        """Return a new report with the cells of both reports."""
        return dataclasses.replace(self, cells=self.cells + other.cells)


def aggregate(node_params, weights):
    """Return the weighted average of the node parameter vectors."""
    if len(node_params) == 0:
        raise ValueError("Nothing to aggregate")
    if len(node_params) != len(weights):
        raise ShapeError(f"Got {len(node_params)} parameter vectors but {len(weights)} weights")
    weights = np.asarray(weights, dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("Aggregation weights must not be negative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("Aggregation weights must not sum zero")
    lengths = {len(params) for params in node_params}
    if len(lengths) != 1:
        raise ShapeError(f"All parameter vectors must have the same length, got {sorted(lengths)}")

    stacked = np.stack(node_params)
    averaged = (weights / total) @ stacked
    # the result is a convex combination, don't let rounding put it outside the hull
    return np.clip(averaged, stacked.min(axis=0), stacked.max(axis=0))


def node_weights(config, node_shards):
    """Return the aggregation weight of each node."""
    if config.aggregation_weights == AggregationWeights.data_proportional:
        return [float(len(node_shard)) for node_shard in node_shards]
    return [1.0] * len(node_shards)


def _node_update(spec, global_params, node_shard, prior, config, rng, node_id, iteration):
    """Do the Langevin step of one node starting from the global parameters."""
    try:
        grad = local_gradient(spec, global_params, node_shard, prior, config.sgld, rng)
        noise = draw_noise(rng, len(global_params), config.sgld)
        return sgld_step(global_params, grad, config.sgld.eta, noise, iteration=iteration)
    except DivergenceError as err:
        raise err.with_context(node=node_id)
    except Exception as err:
        raise NodeError(node_id, err) from err


def _evaluate_params(spec, params, batch):
    """Accuracy of a single parameter vector on a batch."""
    probs = predictive_probs(spec, params, batch.features)
    return accuracy(PredictionSet(probs, batch.labels))


def federated_round(
    spec, global_params, node_shards, prior, config, rng_streams,
    *, day=1, iteration=1, validation=None, executor=None,
):
    """Run one round: every node does a step from the global parameters, then average.

    Nodes may run in the executor; the result does not depend on their order. The
    accuracy of the record is measured on the validation batch (all the shards if None).
    """
    if len(node_shards) != len(rng_streams):
        raise ShapeError(
            f"Got {len(node_shards)} shards but {len(rng_streams)} random streams")

    def update(node_id):
        """Update the indicated node."""
        return _node_update(
            spec, global_params, node_shards[node_id], prior, config,
            rng_streams[node_id], node_id, iteration)

    node_ids = range(len(node_shards))
    if executor is None:
        node_params = [update(node_id) for node_id in node_ids]
    else:
        node_params = list(executor.map(update, node_ids))

    new_params = aggregate(node_params, node_weights(config, node_shards))

    all_train = LabeledBatch.concatenate(node_shards)
    train_loss = nll_loss(spec, new_params, all_train) / len(all_train)
    if validation is None:
        validation = all_train
    record = RoundRecord(
        day=day,
        iteration=iteration,
        global_params=new_params,
        train_loss=train_loss,
        val_accuracy=_evaluate_params(spec, new_params, validation),
    )
    return new_params, record


def run_day(spec, day_data, prior, config, *, init_mode=InitMode.prior_sample, executor=None):
    """Train a whole day from parameters drawn from the prior.

    Return the posterior samples (the aggregated parameters after the burn-in) and the
    record of every round.
    """
    day = day_data.day
    sgld = config.sgld
    if day_data.num_nodes != config.num_nodes:
        raise ShapeError(
            f"Day {day} has {day_data.num_nodes} shards but the federation "
            f"has {config.num_nodes} nodes")

    if init_mode == InitMode.prior_mean:
        params = prior.mean.copy()
    else:
        params = init_params(spec, prior, rng_module.derive(config.seed, rng_module.INIT, day))
    streams = rng_module.node_streams(config.seed, day, config.num_nodes)
    logger.info(
        "Day %d: training %d node(s) for %d rounds", day, config.num_nodes, sgld.total_iters)

    records = []
    retained = []
    for iteration in range(1, sgld.total_iters + 1):
        try:
            params, record = federated_round(
                spec, params, day_data.train_shards, prior, config, streams,
                day=day, iteration=iteration, validation=day_data.validation, executor=executor)
        except DivergenceError as err:
            raise err.with_context(day=day)
        logger.debug(
            "Day %d round %d: loss=%.4f accuracy=%.4f",
            day, iteration, record.train_loss, record.val_accuracy)
        records.append(record)
        if iteration > sgld.burn_in:
            retained.append(params)

    samples = PosteriorSamples(
        np.array(retained), day=day, total_iters=sgld.total_iters, burn_in=sgld.burn_in,
        seed=config.seed, strategy=config.strategy.value)
    return samples, records


def evaluate(spec, samples, validation, metrics_config):
    """Measure the posterior predictive on the validation data."""
    probs = predictive(spec, samples, validation.features, metrics_config.num_avg)
    pred = PredictionSet(probs, validation.labels)
    bins = calibration_bins(pred, metrics_config.num_bins)
    return accuracy(pred), ece(bins, len(pred)), mean_confidence(pred), bins


def _build_result(spec, strategy, day_data, samples, curve, metrics_config):
    """Evaluate the day and pack everything in a result."""
    acc, calibration, confidence, bins = evaluate(
        spec, samples, day_data.validation, metrics_config)
    reached = None
    if curve:
        reached = iterations_to_threshold(
            [record.val_accuracy for record in curve], metrics_config.threshold)
        if reached is None:
            logger.warning(
                "Strategy %s did not reach accuracy %.2f in day %d",
                strategy.value, metrics_config.threshold, day_data.day)
    logger.info(
        "Strategy %s, day %d: accuracy=%.4f ECE=%.4f iterations=%s",
        strategy.value, day_data.day, acc, calibration,
        "not reached" if reached is None else reached)
    return DayResult(
        strategy=strategy,
        day=day_data.day,
        accuracy=acc,
        ece=calibration,
        mean_confidence=confidence,
        bins=bins,
        samples=samples,
        curve=curve,
        iterations_to_threshold=reached,
    )


def _executor_for(config):
    """Return a thread pool for the node updates, or a null context if not parallel."""
    if config.max_workers > 1:
        return concurrent.futures.ThreadPoolExecutor(max_workers=config.max_workers)
    return contextlib.nullcontext()


def run_continual(spec, all_days, config, metrics_config=None, *, initial_prior=None):
    """Run the configured strategy through all the days.

    - transfer learning: train the first day and evaluate that posterior on every day
    - retrain: train every day from scratch with the standard prior
    - posterior continual: like retrain for the first day; later days use the Gaussian
      fitted on the previous day samples as prior (and to draw the initial parameters)

    The initial_prior, if given, replaces the standard prior in the first day of the
    posterior continual strategy.
    """
    if not all_days:
        raise ValueError("Need at least one day of data")
    if metrics_config is None:
        metrics_config = MetricsConfig()
    strategy = config.strategy
    base_prior = standard_prior(param_count(spec))
    logger.info("Running strategy %s over %d day(s)", strategy.value, len(all_days))

    cells = []
    with _executor_for(config) as executor:
        if strategy == Strategy.transfer_learning:
            first_day = all_days[0]
            samples, curve = run_day(spec, first_day, base_prior, config, executor=executor)
            for day_data in all_days:
                day_curve = curve if day_data is first_day else []
                cells.append(_build_result(
                    spec, strategy, day_data, samples, day_curve, metrics_config))

        elif strategy == Strategy.retrain:
            for day_data in all_days:
                samples, curve = run_day(spec, day_data, base_prior, config, executor=executor)
                cells.append(_build_result(
                    spec, strategy, day_data, samples, curve, metrics_config))

        else:
            prior = base_prior if initial_prior is None else initial_prior
            init_mode = InitMode.prior_sample
            samples = None
            for day_data in all_days:
                if samples is not None:
                    prior = fit_from_samples(samples)
                    init_mode = config.init_mode
                samples, curve = run_day(
                    spec, day_data, prior, config, init_mode=init_mode, executor=executor)
                cells.append(_build_result(
                    spec, strategy, day_data, samples, curve, metrics_config))

    return ExperimentReport(cells=cells, seed=config.seed)
