# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Per-day data: synthetic drifting classes, tabular files, and the split across nodes."""

import csv
import dataclasses
import logging
import math
from typing import List

import numpy as np

from fedsgld import rng as rng_module
from fedsgld.common import DataError
from fedsgld.config_manager import validation_size
from fedsgld.model import LabeledBatch


logger = logging.getLogger(__name__)

# part of each tabular day which is held out for validation
TABULAR_VALIDATION_FRACTION = 0.2


@dataclasses.dataclass(frozen=True)
class DayDataset:
    """The data of one day: a disjoint shard per node plus the validation set."""

    day: int
    train_shards: List[LabeledBatch]
    validation: LabeledBatch

    @property
    def num_nodes(self):
        """Return the number of shards."""
        return len(self.train_shards)

    def all_train(self):
        """Return all the shards joined in a single batch."""
        return LabeledBatch.concatenate(self.train_shards)


def day1_centers(shift):
    """Return the class centers of the first day, one row per class."""
    if shift.class_centers_day1 is not None:
        return np.array(shift.class_centers_day1, dtype=np.float64)

    num_classes = shift.num_classes
    radius = shift.center_radius
    centers = np.zeros((num_classes, shift.input_dim))
    if shift.input_dim == 1:
        centers[:, 0] = np.linspace(-radius, radius, num_classes)
    else:
        angles = 2 * np.pi * np.arange(num_classes) / num_classes
        centers[:, 0] = radius * np.cos(angles)
        centers[:, 1] = radius * np.sin(angles)
    return centers


def apply_drift(centers, shift):
    """Move the centers one day: rotate around their centroid, then translate."""
    centers = np.array(centers, dtype=np.float64)
    if shift.rotation != 0:
        # only the plane of the first two coordinates is rotated
        centroid = centers[:, :2].mean(axis=0)
        cos, sin = np.cos(shift.rotation), np.sin(shift.rotation)
        rotation = np.array([[cos, -sin], [sin, cos]])
        centers[:, :2] = (centers[:, :2] - centroid) @ rotation.T + centroid
    if shift.translation is not None:
        centers = centers + np.array(shift.translation, dtype=np.float64)
    return centers


def centers_for_day(shift, day):
    """Return the class centers after the drift of (day - 1) days."""
    if day < 1:
        raise ValueError(f"Days start at 1, got {day}")
    centers = day1_centers(shift)
    for _ in range(day - 1):
        centers = apply_drift(centers, shift)
    return centers


def gen_day(shift, day, seed):
    """Generate the whole (not yet split) pool of labeled samples for a day.

    Classes are balanced; each sample is its class center plus isotropic Gaussian noise.
    """
    centers = centers_for_day(shift, day)
    rng = rng_module.derive(seed, rng_module.DATA, day)
    labels = np.arange(shift.samples_per_day) % shift.num_classes
    noise = rng.standard_normal((shift.samples_per_day, shift.input_dim))
    features = centers[labels] + shift.class_noise_std * noise
    return LabeledBatch(features, labels)


def split_validation(pool, n_validation, rng):
    """Hold out a random part of the pool for validation; return (train, validation)."""
    if not 0 < n_validation < len(pool):
        raise DataError(f"Cannot hold out {n_validation} samples from a pool of {len(pool)}")
    perm = np.random.default_rng(rng).permutation(len(pool))
    return pool.subset(perm[n_validation:]), pool.subset(perm[:n_validation])


def shard(pool, num_nodes, per_node, rng):
    """Assign disjoint random subsets of per_node samples to each node.

    The rng may be a generator or a seed. Return the list of shards and the leftover.
    """
    needed = num_nodes * per_node
    if len(pool) < needed:
        raise DataError(
            f"Pool of {len(pool)} samples is not enough for {num_nodes} nodes "
            f"with {per_node} samples each")
    perm = np.random.default_rng(rng).permutation(len(pool))
    shards = [
        pool.subset(perm[node * per_node:(node + 1) * per_node]) for node in range(num_nodes)]
    leftover = pool.subset(perm[needed:])
    return shards, leftover


def build_day(pool, day, federation, n_validation, seed):
    """Split a day's pool into validation and node shards."""
    rng = rng_module.derive(seed, rng_module.SPLIT, day)
    train, validation = split_validation(pool, n_validation, rng)
    shards, leftover = shard(train, federation.num_nodes, federation.per_node_samples, rng)
    logger.debug(
        "Day %d: %d validation samples, %d shards of %d, %d unused",
        day, len(validation), len(shards), federation.per_node_samples, len(leftover))
    return DayDataset(day=day, train_shards=shards, validation=validation)


def synthetic_days(shift, federation, seed):
    """Generate and split the data of all the days."""
    n_validation = validation_size(shift)
    return [
        build_day(gen_day(shift, day, seed), day, federation, n_validation, seed)
        for day in range(1, federation.num_days + 1)]


def tabular_days(paths, num_classes, federation, seed, *, input_dim=None):
    """Load and split the data of all the days, one file per day."""
    days = []
    for day, path in enumerate(paths, start=1):
        pool = load_tabular(path, num_classes, input_dim=input_dim)
        n_validation = int(round(len(pool) * TABULAR_VALIDATION_FRACTION))
        days.append(build_day(pool, day, federation, n_validation, seed))
    return days


def _read_rows(path):
    """Yield the line number and fields of each non-empty line of the file."""
    with open(path, "rt", encoding="utf8", newline="") as fh:
        try:
            for line_number, row in enumerate(csv.reader(fh), start=1):
                if row:
                    yield line_number, row
        except UnicodeDecodeError as err:
            raise DataError(f"{path}: not a valid UTF-8 text file ({err.reason})")


def load_tabular(path, num_classes, *, input_dim=None):
    """Load a pool from a comma separated file: features and then an integer label per line.

    If input_dim is given, every line must have exactly that many features.
    """
    features = []
    labels = []
    for line_number, row in _read_rows(path):
        if len(row) < 2:
            raise DataError(f"{path}:{line_number}: need at least one feature and a label")
        try:
            values = [float(value) for value in row[:-1]]
            label = int(row[-1])
        except ValueError as err:
            raise DataError(f"{path}:{line_number}: cannot parse line ({err})")
        expected = len(features[0]) if features else input_dim
        if expected is not None and len(values) != expected:
            raise DataError(
                f"{path}:{line_number}: expected {expected} features, got {len(values)}")
        if not all(math.isfinite(value) for value in values):
            raise DataError(f"{path}:{line_number}: features must be finite numbers")
        if not 0 <= label < num_classes:
            raise DataError(
                f"{path}:{line_number}: label {label} out of range [0, {num_classes})")
        features.append(values)
        labels.append(label)

    if not labels:
        raise DataError(f"{path}: no samples found")
    return LabeledBatch(np.array(features), np.array(labels))


def export_tabular(pool, path):
    """Write a pool in the same format load_tabular reads."""
    with open(path, "wt", encoding="utf8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row, label in zip(pool.features, pool.labels):
            writer.writerow([repr(float(value)) for value in row] + [int(label)])
