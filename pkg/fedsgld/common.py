# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Common functionality for the simulation modules."""

import numpy as np


class ShapeError(ValueError):
    """Dimensions of the involved vectors or matrices do not match."""


class DataError(Exception):
    """The data is invalid or not enough for what was requested."""


class InsufficientSamplesError(Exception):
    """Not enough posterior samples for the requested operation."""


class ArtifactError(Exception):
    """A persisted run artifact is missing or corrupt."""


class DivergenceError(Exception):
    """The chain produced non-finite values."""

    def __init__(self, iteration, *, day=None, node=None, detail="non-finite gradient"):
        self.iteration = iteration
        self.day = day
        self.node = node
        self.detail = detail
        super().__init__(self._build_message())

    def _build_message(self):
        """Build the message including all the known context."""
        context = [f"iteration {self.iteration}"]
        if self.day is not None:
            context.insert(0, f"day {self.day}")
        if self.node is not None:
            context.append(f"node {self.node}")
        return f"Divergence ({self.detail}) at {', '.join(context)}"

    def with_context(self, *, day=None, node=None):
        """Return a new error with the extra context filled in."""
        return DivergenceError(
            self.iteration,
            day=self.day if day is None else day,
            node=self.node if node is None else node,
            detail=self.detail,
        )


class NodeError(Exception):
    """An error happened inside the update of a specific node."""

    def __init__(self, node_id, original):
        self.node_id = node_id
        self.original = original
        super().__init__(f"Node {node_id} failed: {original}")


def check_lengths(name_a, vec_a, name_b, vec_b):
    """Ensure both vectors have the same length, raise ShapeError if not."""
    if len(vec_a) != len(vec_b):
        raise ShapeError(
            f"Length mismatch: {name_a} has {len(vec_a)} entries, {name_b} has {len(vec_b)}")


def as_vector(values, name="vector"):
    """Return the values as a flat float64 array, validating all entries are finite."""
    vector = np.asarray(values, dtype=np.float64)
    if vector.ndim != 1:
        raise ShapeError(f"The {name} must be one-dimensional, got shape {vector.shape}")
    if not np.all(np.isfinite(vector)):
        raise ValueError(f"The {name} has non-finite entries")
    return vector
