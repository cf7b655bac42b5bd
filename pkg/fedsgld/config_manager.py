# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""The configuration manager."""

import enum
import pathlib
from typing import Annotated, List, Optional

import pydantic
import yaml


# directory where the config is taken from, to which the different paths may be relative
_CONFIGDIR = None

# the name of the config file when a directory is indicated
DEFAULT_CONFIG_NAME = "fedsgld.yaml"


class ConfigError(Exception):
    """Specific errors found in the config."""

    def __init__(self, msg=None, errors=None):
        if msg is None:
            msg = "Problem(s) found in configuration file:"
        super().__init__(msg)
        if errors is None:
            errors = []
        self.errors = errors


def _resolve_path(value):
    """Absolutize a path, taking it as relative to the config directory."""
    value = pathlib.Path(value).expanduser()
    if not value.is_absolute():
        basedir = pathlib.Path.cwd() if _CONFIGDIR is None else _CONFIGDIR
        value = basedir / value
    return value


def _existing_file_validator(value):
    """Constrained path which must be an existing file."""
    value = _resolve_path(value)
    if not value.exists():
        raise AssertionError(f"path {str(value)!r} not found")
    if not value.is_file():
        raise AssertionError(f"path {str(value)!r} must be a file")
    return value


DataFile = Annotated[pathlib.Path, pydantic.AfterValidator(_existing_file_validator)]


def _get(values, name, default=None):
    """Get a raw value from the dict by its field name or by its alias."""
    alias = name.replace("_", "-")
    if alias in values:
        return values[alias]
    return values.get(name, default)


class ModelConfigDefaults(pydantic.BaseModel):
    """Define defaults for the BaseModel configuration."""

    model_config = dict(
        extra="forbid",
        frozen=True,
        alias_generator=lambda s: s.replace("_", "-"),
        populate_by_name=True,
    )


class Activation(str, enum.Enum):
    """Activation function of the hidden layers."""

    relu = "relu"
    tanh = "tanh"


class Strategy(str, enum.Enum):
    """The continual learning strategies."""

    transfer_learning = "transfer-learning"
    retrain = "retrain"
    posterior_continual = "posterior-continual"


class AggregationWeights(str, enum.Enum):
    """How the parameter server weights the nodes when averaging."""

    uniform = "uniform"
    data_proportional = "data-proportional"


class InitMode(str, enum.Enum):
    """How the starting parameters of a posterior-continual day are chosen."""

    prior_sample = "prior-sample"
    prior_mean = "prior-mean"


ALL_STRATEGIES = [Strategy.transfer_learning, Strategy.retrain, Strategy.posterior_continual]

# strategy names as used in tables
STRATEGY_LABELS = {
    Strategy.transfer_learning: "TL",
    Strategy.retrain: "Retr.",
    Strategy.posterior_continual: "P-CL",
}


class ModelSpec(ModelConfigDefaults):
    """The classifier: layer sizes from input dimension to number of classes."""

    layer_sizes: List[pydantic.PositiveInt] = [2, 64, 64, 10]
    activation: Activation = Activation.relu

    @pydantic.field_validator("layer_sizes")
    def validate_layer_sizes(cls, value):
        """Need at least the input and output layers."""
        if len(value) < 2:
            raise AssertionError("need at least two layer sizes (input and output)")
        return value

    @property
    def input_dim(self):
        """Return the size of the input layer."""
        return self.layer_sizes[0]

    @property
    def num_classes(self):
        """Return the size of the output layer."""
        return self.layer_sizes[-1]


class SgldConfig(ModelConfigDefaults):
    """Parameters of the Langevin chain."""

    eta: pydantic.PositiveFloat = 1e-4
    total_iters: pydantic.PositiveInt = 100
    burn_in: pydantic.NonNegativeInt = 50
    num_batches: pydantic.PositiveInt = 1
    batch_size: Optional[pydantic.PositiveInt] = None  # None means min(32, shard size)
    num_nodes: pydantic.PositiveInt = 1
    inject_noise: bool = True

    @pydantic.model_validator(mode="after")
    def validate_burn_in(self):
        """Check that there will be enough retained samples."""
        if self.burn_in >= self.total_iters:
            raise AssertionError("burn-in must be smaller than total-iters")
        if self.total_iters - self.burn_in < 2:
            raise AssertionError("total-iters minus burn-in must be at least 2")
        return self

    @property
    def retained(self):
        """Return how many iterations are kept after the burn-in."""
        return self.total_iters - self.burn_in

    def effective_batch_size(self, shard_size):
        """Return the batch size to use for a shard of the given size."""
        if self.batch_size is None:
            return min(32, shard_size)
        return self.batch_size


class FederationConfig(ModelConfigDefaults):
    """The simulated federation of nodes and the continual strategy."""

    num_nodes: pydantic.PositiveInt = 10
    per_node_samples: pydantic.PositiveInt = 50
    sgld: SgldConfig = SgldConfig(num_nodes=10)
    num_days: pydantic.PositiveInt = 3
    strategy: Strategy = Strategy.posterior_continual
    aggregation_weights: AggregationWeights = AggregationWeights.uniform
    init_mode: InitMode = InitMode.prior_sample
    seed: pydantic.conint(ge=0, lt=2 ** 64) = 0
    max_workers: pydantic.PositiveInt = 1

    @pydantic.model_validator(mode="before")
    @classmethod
    def fill_sgld_nodes(cls, values):
        """Let the chain know the number of nodes, unless explicitly indicated."""
        if not isinstance(values, dict):
            return values
        num_nodes = _get(values, "num_nodes", 10)
        sgld = _get(values, "sgld")
        if sgld is None:
            sgld = {}
        if isinstance(sgld, dict) and _get(sgld, "num_nodes") is None:
            values = {key: value for key, value in values.items() if key != "sgld"}
            values["sgld"] = {**sgld, "num-nodes": num_nodes}
        return values

    @pydantic.model_validator(mode="after")
    def validate_consistency(self):
        """Check the chain and the shards are coherent with the federation."""
        if self.sgld.num_nodes != self.num_nodes:
            raise AssertionError(
                f"sgld num-nodes ({self.sgld.num_nodes}) must match "
                f"federation num-nodes ({self.num_nodes})")
        batch_size = self.sgld.effective_batch_size(self.per_node_samples)
        if batch_size > self.per_node_samples:
            raise AssertionError(
                f"per-node-samples ({self.per_node_samples}) must be at least "
                f"the batch size ({batch_size})")
        return self


class ShiftSpec(ModelConfigDefaults):
    """Synthetic multi-day data with class centers drifting between days."""

    num_classes: pydantic.conint(ge=2) = 10
    input_dim: pydantic.PositiveInt = 2
    class_centers_day1: Optional[List[List[float]]] = None  # default: equally spaced on circle
    center_radius: pydantic.PositiveFloat = 3.0
    rotation: float = 0.1  # radians per day, about the centroid
    translation: Optional[List[float]] = None  # per day
    class_noise_std: pydantic.PositiveFloat = 0.6
    samples_per_day: pydantic.PositiveInt = 625
    validation_fraction: pydantic.confloat(gt=0, lt=1) = 0.2

    @pydantic.model_validator(mode="after")
    def validate_geometry(self):
        """Check centers and drift against the dimensions."""
        if self.class_centers_day1 is not None:
            if len(self.class_centers_day1) != self.num_classes:
                raise AssertionError(
                    f"need {self.num_classes} class centers, got {len(self.class_centers_day1)}")
            if any(len(center) != self.input_dim for center in self.class_centers_day1):
                raise AssertionError(f"all class centers must have {self.input_dim} coordinates")
            as_tuples = [tuple(center) for center in self.class_centers_day1]
            if len(set(as_tuples)) != len(as_tuples):
                raise AssertionError("class centers must be pairwise distinct")
        if self.translation is not None and len(self.translation) != self.input_dim:
            raise AssertionError(f"translation must have {self.input_dim} coordinates")
        if self.rotation != 0 and self.input_dim < 2:
            raise AssertionError("rotation needs an input dimension of at least 2")
        return self


class DataConfig(ModelConfigDefaults):
    """Where the per-day data comes from."""

    synthetic: Optional[ShiftSpec] = None
    tabular: Optional[List[DataFile]] = None

    @pydantic.model_validator(mode="before")
    @classmethod
    def validate_subkeys(cls, values):
        """Check the data subkeys."""
        if not isinstance(values, dict):
            return values
        # it must be one, and only one, of these...
        subkeys = ["synthetic", "tabular"]
        count = sum(values.get(key) is not None for key in subkeys)
        if count != 1:
            subkeys_str = ', '.join(repr(x) for x in subkeys)
            raise AssertionError(f"need exactly one of these subkeys: {subkeys_str}")
        return values


class MetricsConfig(ModelConfigDefaults):
    """Evaluation parameters."""

    num_bins: pydantic.PositiveInt = 10
    threshold: pydantic.confloat(gt=0, le=1) = 0.85
    num_avg: Optional[pydantic.PositiveInt] = None  # None means all retained samples


class ExperimentConfig(ModelConfigDefaults):
    """Definition of a whole experiment."""

    seed: pydantic.conint(ge=0, lt=2 ** 64) = 0
    output_dir: pathlib.Path = pathlib.Path("runs") / "default"
    strategies: List[Strategy] = ALL_STRATEGIES
    model: ModelSpec = ModelSpec()
    federation: FederationConfig = FederationConfig()
    data: DataConfig = DataConfig(synthetic=ShiftSpec())
    metrics: MetricsConfig = MetricsConfig()

    @pydantic.model_validator(mode="before")
    @classmethod
    def fill_federation_seed(cls, values):
        """Use the experiment seed for the federation, unless explicitly indicated."""
        if not isinstance(values, dict):
            return values
        federation = _get(values, "federation")
        if federation is None:
            federation = {}
        if isinstance(federation, dict) and _get(federation, "seed") is None:
            values = {key: value for key, value in values.items() if key != "federation"}
            values["federation"] = {**federation, "seed": _get(values, "seed", 0)}
        return values

    @pydantic.field_validator("output_dir")
    def absolutize_output_dir(cls, value):
        """Take the output directory relative to the config file."""
        return _resolve_path(value)

    @pydantic.field_validator("strategies")
    def validate_strategies(cls, value):
        """Need at least one strategy, without repetitions."""
        if not value:
            raise AssertionError("need at least one strategy")
        if len(set(value)) != len(value):
            raise AssertionError("strategies must not be repeated")
        return value

    @pydantic.model_validator(mode="after")
    def validate_consistency(self):
        """Check the different sections against each other."""
        if self.federation.seed != self.seed:
            raise AssertionError("federation seed must match the experiment seed")

        shift = self.data.synthetic
        if shift is not None:
            if shift.input_dim != self.model.input_dim:
                raise AssertionError(
                    f"model input size ({self.model.input_dim}) must match "
                    f"data input-dim ({shift.input_dim})")
            if shift.num_classes != self.model.num_classes:
                raise AssertionError(
                    f"model output size ({self.model.num_classes}) must match "
                    f"data num-classes ({shift.num_classes})")
            n_train = shift.samples_per_day - validation_size(shift)
            needed = self.federation.num_nodes * self.federation.per_node_samples
            if n_train < needed:
                raise AssertionError(
                    f"samples-per-day leaves {n_train} training samples but the "
                    f"federation needs {needed}")
        else:
            if len(self.data.tabular) != self.federation.num_days:
                raise AssertionError(
                    f"need one tabular file per day ({self.federation.num_days}), "
                    f"got {len(self.data.tabular)}")

        num_avg = self.metrics.num_avg
        if num_avg is not None and num_avg > self.federation.sgld.retained:
            raise AssertionError(
                f"metrics num-avg ({num_avg}) cannot exceed the retained "
                f"samples ({self.federation.sgld.retained})")
        return self

    def echo(self):
        """Return the configuration as plain JSON-able data."""
        return self.model_dump(mode="json", by_alias=True, exclude={"output_dir"})

    def with_seed(self, seed):
        """Return a copy of the configuration using a different seed."""
        federation = self.federation.model_copy(update={"seed": seed})
        return self.model_copy(update={"seed": seed, "federation": federation})

    def with_strategies(self, strategies):
        """Return a copy of the configuration running only the given strategies."""
        strategies = list(strategies)
        if not strategies or len(set(strategies)) != len(strategies):
            raise ConfigError(
                f"Strategies must be a non-empty list without repetitions, got {strategies}")
        return self.model_copy(update={"strategies": strategies})


def validation_size(shift):
    """Return how many samples of each generated day are held out for validation."""
    return int(round(shift.samples_per_day * shift.validation_fraction))


def _format_pydantic_errors(errors):
    """Format pydantic errors for a simpler presentation."""
    formatted_errors = []
    for error in errors:
        # format location
        loc_parts = []
        for part in error['loc']:
            if isinstance(part, int):
                # an index, fix previous part
                loc_parts[-1] = f"{loc_parts[-1]}[{part}]"
            else:
                loc_parts.append(str(part))
        location = ".".join(loc_parts) or "config"

        message = error['msg'].strip()
        for prefix in ("Assertion failed, ", "Value error, "):
            message = message.removeprefix(prefix)
        formatted_errors.append(f"- {location!r}: {message}")

    return formatted_errors


def load_config(path):
    """Load the config from the indicated file, or from fedsgld.yaml in the indicated directory."""
    global _CONFIGDIR

    path = pathlib.Path(path).expanduser().absolute()
    if path.is_dir():
        _CONFIGDIR = path
        configpath = path / DEFAULT_CONFIG_NAME
    else:
        _CONFIGDIR = path.parent
        configpath = path

    if not configpath.exists():
        raise ConfigError(f"Configuration file not found: {str(configpath)!r}")

    try:
        content = yaml.safe_load(configpath.read_text())
    except Exception:
        raise ConfigError(f"Cannot open and parse YAML configuration file {str(configpath)!r}")
    if content is None:
        content = {}
    if not isinstance(content, dict):
        raise ConfigError(f"The configuration in {str(configpath)!r} must be a mapping")

    # the output directory defaults to be besides the configuration
    if "output-dir" not in content:
        content["output-dir"] = configpath.parent / "runs" / configpath.stem

    try:
        parsed = ExperimentConfig.model_validate(content)
    except pydantic.ValidationError as error:
        raise ConfigError(errors=_format_pydantic_errors(error.errors()))

    return parsed
