# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Statistical trends of the strategies over drifting days.

These need some minutes, so they only run if FEDSGLD_TREND_TESTS is set in the environment.
"""

import os
import statistics

import numpy as np
import pytest

from fedsgld.config_manager import ExperimentConfig, Strategy
from fedsgld.main import run_experiment
from fedsgld.metrics import iterations_to_threshold

pytestmark = pytest.mark.skipif(
    not os.environ.get("FEDSGLD_TREND_TESTS"), reason="FEDSGLD_TREND_TESTS not set")

SEEDS = [1, 2, 3, 4, 5]

# the reference setup, with a step size that learns in a hundred rounds
TOTAL_ITERS = 100
TREND_CONFIG = {
    "federation": {
        "sgld": {"eta": 1e-3, "total-iters": TOTAL_ITERS, "burn-in": 50, "batch-size": 32},
    },
}


@pytest.fixture(scope="module")
def reports():
    """Run the three strategies once per seed."""
    results = {}
    for seed in SEEDS:
        config = ExperimentConfig.model_validate(dict(TREND_CONFIG, seed=seed))
        results[seed] = run_experiment(config)
    return results


def _iterations(report, strategy, day, threshold):
    """Return the rounds to reach the threshold; never reaching it counts as all plus one."""
    curve = [record.val_accuracy for record in report.cell(strategy, day).curve]
    reached = iterations_to_threshold(curve, threshold)
    return TOTAL_ITERS + 1 if reached is None else reached


def _threshold(report):
    """Return the 90th percentile of the retrain first day accuracy curve."""
    curve = [record.val_accuracy for record in report.cell(Strategy.retrain, 1).curve]
    return float(np.percentile(curve, 90))


def test_transfer_learning_degrades(reports):
    """The frozen model gets worse as the data drifts away."""
    by_day = [
        statistics.median(report.cell(Strategy.transfer_learning, day).accuracy
                          for report in reports.values())
        for day in (1, 2, 3)]
    assert by_day[0] >= by_day[1] >= by_day[2]
    assert by_day[0] - by_day[2] >= 0.10


@pytest.mark.parametrize("day", [2, 3])
def test_posterior_continual_converges_faster(reports, day):
    """Starting from the previous posterior reaches the accuracy sooner than retraining."""
    continual = []
    retrain = []
    for report in reports.values():
        threshold = _threshold(report)
        continual.append(_iterations(report, Strategy.posterior_continual, day, threshold))
        retrain.append(_iterations(report, Strategy.retrain, day, threshold))
    assert statistics.median(continual) <= 0.8 * statistics.median(retrain)


def test_posterior_continual_better_calibrated(reports):
    """On the last day the continual posterior is usually not worse calibrated."""
    wins = sum(
        report.cell(Strategy.posterior_continual, 3).ece <= report.cell(Strategy.retrain, 3).ece
        for report in reports.values())
    assert wins >= 3
