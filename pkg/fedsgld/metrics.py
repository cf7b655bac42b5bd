# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Predictive averaging, accuracy, calibration and convergence measures."""

import dataclasses

import numpy as np

from fedsgld.common import InsufficientSamplesError
from fedsgld.model import forward


@dataclasses.dataclass(frozen=True)
class PredictionSet:
    """Predicted class probabilities together with the true labels."""

    probs: np.ndarray
    true_label: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        true_label = np.asarray(self.true_label, dtype=np.int64).reshape(-1)
        if probs.ndim != 2 or len(probs) != len(true_label):
            raise ValueError(
                f"Probabilities shape {probs.shape} does not match {len(true_label)} labels")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "true_label", true_label)

    def __len__(self):
        return len(self.true_label)

    @property
    def predicted_label(self):
        """Return the most probable class per row (the lowest index on ties)."""
        return np.argmax(self.probs, axis=1)

    @property
    def confidence(self):
        """Return the probability of the predicted class per row."""
        return np.max(self.probs, axis=1)

    @property
    def correct(self):
        """Return which rows were predicted right."""
        return self.predicted_label == self.true_label


@dataclasses.dataclass(frozen=True)
class CalibrationBins:
    """Per confidence bin: how many samples, their accuracy and their mean confidence."""

    counts: np.ndarray
    accuracy: np.ndarray
    confidence: np.ndarray

    @property
    def num_bins(self):
        """Return the number of bins."""
        return len(self.counts)

    @property
    def total(self):
        """Return the number of samples in all the bins."""
        return int(self.counts.sum())

    def rows(self):
        """Return a record per bin, with everything needed to draw a reliability diagram."""
        records = []
        for idx in range(self.num_bins):
            records.append({
                "bin": idx + 1,
                "lower": idx / self.num_bins,
                "upper": (idx + 1) / self.num_bins,
                "count": int(self.counts[idx]),
                "accuracy": float(self.accuracy[idx]),
                "confidence": float(self.confidence[idx]),
                "gap": float(self.accuracy[idx] - self.confidence[idx]),
            })
        return records


def predictive_probs(spec, param_rows, features):
    """Average the class probabilities given by each of the parameter vectors."""
    param_rows = np.atleast_2d(param_rows)
    total = None
    for params in param_rows:
        probs = forward(spec, params, features)
        total = probs if total is None else total + probs
    return total / len(param_rows)


def predictive(spec, samples, features, num_avg=None):
    """Return the Bayesian model average over the last num_avg samples (all if None)."""
    if num_avg is None:
        num_avg = len(samples)
    if not 1 <= num_avg <= len(samples):
        raise InsufficientSamplesError(
            f"Cannot average {num_avg} samples out of {len(samples)} available")
    return predictive_probs(spec, samples.samples[-num_avg:], features)


def accuracy(pred):
    """Return the fraction of correctly predicted rows."""
    if len(pred) == 0:
        raise ValueError("Cannot compute accuracy of an empty prediction set")
    return float(np.mean(pred.correct))


def mean_confidence(pred):
    """Return the average confidence of the predictions."""
    if len(pred) == 0:
        raise ValueError("Cannot compute confidence of an empty prediction set")
    return float(np.mean(pred.confidence))


def calibration_bins(pred, num_bins):
    """Group the predictions in equal width confidence bins.

    A confidence p goes to bin ceil(p * J), clamped to [1, J].
    """
    if num_bins < 1:
        raise ValueError(f"Need at least one bin, got {num_bins}")
    if len(pred) == 0:
        raise ValueError("Cannot bin an empty prediction set")

    confidence = pred.confidence
    positions = np.clip(np.ceil(confidence * num_bins).astype(np.int64), 1, num_bins) - 1
    counts = np.bincount(positions, minlength=num_bins)
    hits = np.bincount(positions, weights=pred.correct.astype(np.float64), minlength=num_bins)
    conf_sums = np.bincount(positions, weights=confidence, minlength=num_bins)

    nonempty = counts > 0
    acc = np.zeros(num_bins)
    conf = np.zeros(num_bins)
    acc[nonempty] = hits[nonempty] / counts[nonempty]
    conf[nonempty] = conf_sums[nonempty] / counts[nonempty]
    return CalibrationBins(counts=counts, accuracy=acc, confidence=conf)


def ece(bins, total=None):
    """Return the expected calibration error: count weighted mean of |accuracy - confidence|."""
    if total is None:
        total = bins.total
    if total <= 0:
        raise ValueError("Cannot compute the calibration error without samples")
    return float(np.sum(bins.counts / total * np.abs(bins.accuracy - bins.confidence)))


def iterations_to_threshold(acc_curve, threshold):
    """Return the 1-based iteration where the accuracy first reaches the threshold.

    None means that it was never reached.
    """
    if not 0 < threshold <= 1:
        raise ValueError(f"Threshold must be in (0, 1], got {threshold}")
    if len(acc_curve) == 0:
        raise ValueError("Cannot search the threshold in an empty curve")
    for iteration, value in enumerate(acc_curve, start=1):
        if value >= threshold:
            return iteration
    return None
