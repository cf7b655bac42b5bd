# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""The classifier: a small multilayer perceptron over a flat parameter vector.

Parameters are laid out layer after layer; inside a layer first all the weights
(row-major, shape out x in) and then all the biases.
"""

import dataclasses

import numpy as np

from fedsgld.common import ShapeError
from fedsgld.config_manager import Activation

# predicted probabilities are floored to this before taking the log
PROB_FLOOR = 1e-12

_MAX_NLL = -np.log(PROB_FLOOR)


@dataclasses.dataclass(frozen=True)
class LabeledBatch:
    """Features (one row per sample) and their integer labels."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise ShapeError(f"Features must be a matrix, got shape {features.shape}")
        if len(features) != len(labels):
            raise ShapeError(
                f"Got {len(features)} feature rows but {len(labels)} labels")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        """Return a new batch with only the indicated samples (in that order)."""
        return LabeledBatch(self.features[indices], self.labels[indices])

    @classmethod
    def concatenate(cls, batches):
        """Join several batches into one."""
        return cls(
            np.concatenate([batch.features for batch in batches]),
            np.concatenate([batch.labels for batch in batches]),
        )


def layer_shapes(spec):
    """Return the (out, in) shape of each layer's weights."""
    sizes = spec.layer_sizes
    return [(n_out, n_in) for n_in, n_out in zip(sizes[:-1], sizes[1:])]


def param_count(spec):
    """Return the total number of parameters of the model."""
    return sum(n_out * n_in + n_out for n_out, n_in in layer_shapes(spec))


def unflatten(spec, params):
    """Split the flat vector into a list of (weights, biases) per layer.

    The returned arrays are views on the received vector.
    """
    params = np.asarray(params, dtype=np.float64)
    expected = param_count(spec)
    if params.shape != (expected,):
        raise ShapeError(
            f"Parameter vector must have {expected} entries for layers {spec.layer_sizes}, "
            f"got shape {params.shape}")

    layers = []
    offset = 0
    for n_out, n_in in layer_shapes(spec):
        weights = params[offset:offset + n_out * n_in].reshape(n_out, n_in)
        offset += n_out * n_in
        biases = params[offset:offset + n_out]
        offset += n_out
        layers.append((weights, biases))
    return layers


def flatten(layers):
    """Join the (weights, biases) of all layers into a flat vector."""
    parts = []
    for weights, biases in layers:
        parts.append(np.ravel(weights))
        parts.append(np.ravel(biases))
    return np.concatenate(parts).astype(np.float64)


def _activate(activation, values):
    """Apply the hidden activation function."""
    if activation == Activation.tanh:
        return np.tanh(values)
    return np.maximum(values, 0.0)


def _activation_derivative(activation, pre, post):
    """Return the derivative of the activation, given its input and output."""
    if activation == Activation.tanh:
        return 1.0 - post ** 2
    return (pre > 0).astype(np.float64)


def _softmax(logits):
    """Numerically stable softmax per row."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=1, keepdims=True)


def _check_features(spec, features):
    """Validate the features shape against the input layer."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ShapeError(f"Features must be a matrix, got shape {features.shape}")
    if features.shape[1] != spec.layer_sizes[0]:
        raise ShapeError(
            f"Layer 1 expects input dimension {spec.layer_sizes[0]}, "
            f"got {features.shape[1]}")
    return features


def _check_batch(spec, batch):
    """Validate a labeled batch against the model."""
    if len(batch) < 1:
        raise ShapeError("The batch is empty")
    num_classes = spec.layer_sizes[-1]
    if np.any(batch.labels < 0) or np.any(batch.labels >= num_classes):
        raise ShapeError(f"Labels must be in [0, {num_classes})")
    return _check_features(spec, batch.features)


def _propagate(spec, params, features):
    """Run the layers keeping every pre-activation and activation; return them and the logits."""
    layers = unflatten(spec, params)
    activations = [features]
    pre_activations = []
    current = features
    for idx, (weights, biases) in enumerate(layers, start=1):
        if current.shape[1] != weights.shape[1]:
            raise ShapeError(
                f"Layer {idx} expects input dimension {weights.shape[1]}, "
                f"got {current.shape[1]}")
        pre = current @ weights.T + biases
        if idx == len(layers):
            return layers, pre_activations, activations, pre
        current = _activate(spec.activation, pre)
        pre_activations.append(pre)
        activations.append(current)


def forward(spec, params, features):
    """Return the class probabilities for each row of features."""
    features = _check_features(spec, features)
    _, _, _, logits = _propagate(spec, params, features)
    return _softmax(logits)


def _per_sample_nll(logits, labels):
    """Return -log p(true class) per sample, with the probability floor applied."""
    top = logits.max(axis=1, keepdims=True)
    log_norm = (top + np.log(np.exp(logits - top).sum(axis=1, keepdims=True))).ravel()
    nll = log_norm - logits[np.arange(len(labels)), labels]
    return np.minimum(nll, _MAX_NLL)


def nll_loss(spec, params, batch):
    """Return the negative log-likelihood of the batch, summed over its samples."""
    features = _check_batch(spec, batch)
    _, _, _, logits = _propagate(spec, params, features)
    return float(_per_sample_nll(logits, batch.labels).sum())


def nll_grad(spec, params, batch):
    """Return the gradient of the negative log-likelihood with respect to all the parameters.

    Computed by backpropagation, with p - onehot at the output. The probability floor of
    nll_loss is not applied here, so past the floor this still points to the true class.
    """
    features = _check_batch(spec, batch)
    layers, pre_activations, activations, logits = _propagate(spec, params, features)

    delta = _softmax(logits)
    delta[np.arange(len(batch)), batch.labels] -= 1.0

    grads = [None] * len(layers)
    for idx in range(len(layers) - 1, -1, -1):
        weights, _ = layers[idx]
        grads[idx] = (delta.T @ activations[idx], delta.sum(axis=0))
        if idx > 0:
            back = delta @ weights
            delta = back * _activation_derivative(
                spec.activation, pre_activations[idx - 1], activations[idx])
    return flatten(grads)


def init_params(spec, prior, rng):
    """Draw the initial parameters from the prior."""
    n_params = param_count(spec)
    if len(prior) != n_params:
        raise ShapeError(
            f"Prior has {len(prior)} entries but the model has {n_params} parameters")
    return prior.sample(rng)
