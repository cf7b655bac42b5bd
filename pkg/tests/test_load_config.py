# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Tests for the configuration processing."""

import pathlib

import pytest

from fedsgld.config_manager import (
    ALL_STRATEGIES,
    Activation,
    AggregationWeights,
    ConfigError,
    InitMode,
    Strategy,
    _format_pydantic_errors,
    load_config,
)

# the configurations shipped with the project
CONFIGS_DIR = pathlib.Path(__file__).parent.parent / "configs"


def _load_errors(tmp_path, content):
    """Write the config, load it, and return the errors found."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text(content)
    with pytest.raises(ConfigError) as cm:
        load_config(config_file)
    return cm.value.errors


# -- basic problems

def test_missing_source_file(tmp_path):
    """The indicated source file does not exist."""
    config_file = tmp_path / "config.yaml"
    with pytest.raises(ConfigError) as cm:
        load_config(config_file)
    assert str(cm.value) == f"Configuration file not found: {str(config_file)!r}"


def test_missing_source_in_dir(tmp_path):
    """The indicated directory does not have an useful file."""
    with pytest.raises(ConfigError) as cm:
        load_config(tmp_path)
    assert str(cm.value) == f"Configuration file not found: {str(tmp_path / 'fedsgld.yaml')!r}"


def test_bad_source(tmp_path):
    """Cannot parse the indicated source file."""
    config_file = tmp_path / "fedsgld.yaml"
    config_file.write_text("x: [a, ")
    with pytest.raises(ConfigError) as cm:
        load_config(tmp_path)
    assert str(cm.value) == f"Cannot open and parse YAML configuration file {str(config_file)!r}"


def test_source_not_a_mapping(tmp_path):
    """The content must be a mapping."""
    config_file = tmp_path / "fedsgld.yaml"
    config_file.write_text("- foo\n- bar\n")
    with pytest.raises(ConfigError) as cm:
        load_config(config_file)
    assert str(cm.value) == f"The configuration in {str(config_file)!r} must be a mapping"


# -- general sanity cases

def test_all_defaults(tmp_path):
    """An empty file gets the reference setup."""
    config_file = tmp_path / "experiment.yaml"
    config_file.write_text("")
    config = load_config(config_file)

    assert config.seed == 0
    assert config.output_dir == tmp_path / "runs" / "experiment"
    assert config.strategies == ALL_STRATEGIES
    assert config.model.layer_sizes == [2, 64, 64, 10]
    assert config.model.activation == Activation.relu

    federation = config.federation
    assert federation.num_nodes == 10
    assert federation.per_node_samples == 50
    assert federation.num_days == 3
    assert federation.strategy == Strategy.posterior_continual
    assert federation.aggregation_weights == AggregationWeights.uniform
    assert federation.init_mode == InitMode.prior_sample
    assert federation.seed == 0
    assert federation.max_workers == 1

    sgld = federation.sgld
    assert sgld.eta == 1e-4
    assert sgld.total_iters == 100
    assert sgld.burn_in == 50
    assert sgld.num_batches == 1
    assert sgld.batch_size is None
    assert sgld.effective_batch_size(50) == 32
    assert sgld.num_nodes == 10
    assert sgld.inject_noise is True
    assert sgld.retained == 50

    shift = config.data.synthetic
    assert config.data.tabular is None
    assert shift.num_classes == 10
    assert shift.input_dim == 2
    assert shift.samples_per_day == 625
    assert shift.validation_fraction == 0.2

    assert config.metrics.num_bins == 10
    assert config.metrics.threshold == 0.85
    assert config.metrics.num_avg is None


def test_complete(tmp_path):
    """All the sections indicated."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("""
        seed: 42
        output-dir: results
        strategies: [retrain, posterior-continual]
        model:
            layer-sizes: [2, 16, 4]
            activation: tanh
        federation:
            num-nodes: 3
            per-node-samples: 20
            num-days: 4
            aggregation-weights: data-proportional
            init-mode: prior-mean
            max-workers: 2
            sgld:
                eta: 0.01
                total-iters: 30
                burn-in: 10
                num-batches: 2
                batch-size: 8
                inject-noise: false
        data:
            synthetic:
                num-classes: 4
                rotation: 0.3
                translation: [0.1, 0.0]
                samples-per-day: 100
        metrics:
            num-bins: 15
            threshold: 0.9
            num-avg: 5
    """)
    config = load_config(config_file)

    assert config.seed == 42
    assert config.output_dir == tmp_path / "results"
    assert config.strategies == [Strategy.retrain, Strategy.posterior_continual]
    assert config.model.activation == Activation.tanh
    assert config.model.num_classes == 4
    assert config.federation.seed == 42
    assert config.federation.aggregation_weights == AggregationWeights.data_proportional
    assert config.federation.init_mode == InitMode.prior_mean
    assert config.federation.sgld.num_nodes == 3
    assert config.federation.sgld.inject_noise is False
    assert config.federation.sgld.effective_batch_size(20) == 8
    assert config.data.synthetic.translation == [0.1, 0.0]
    assert config.metrics.num_avg == 5


@pytest.mark.parametrize("name", ["fedsgld.yaml", "minimal.yaml"])
def test_shipped_configs(name):
    """The configurations in the project are valid."""
    config = load_config(CONFIGS_DIR / name)
    assert config.output_dir == CONFIGS_DIR / "runs" / pathlib.Path(name).stem


def test_reference_config_values():
    """The shipped reference configuration."""
    config = load_config(CONFIGS_DIR)
    assert config.seed == 7
    assert config.federation.seed == 7
    assert config.federation.sgld.batch_size == 32


def test_echo(tmp_path):
    """Plain data with the same keys as the file, without the output directory."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("seed: 3\n")
    echoed = load_config(config_file).echo()
    assert "output-dir" not in echoed
    assert echoed["seed"] == 3
    assert echoed["federation"]["num-days"] == 3
    assert echoed["federation"]["sgld"]["total-iters"] == 100
    assert echoed["strategies"] == ["transfer-learning", "retrain", "posterior-continual"]


def test_with_seed(tmp_path):
    """The seed is changed everywhere."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("seed: 3\n")
    config = load_config(config_file).with_seed(99)
    assert config.seed == 99
    assert config.federation.seed == 99


def test_with_strategies(tmp_path):
    """Only some strategies."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("")
    config = load_config(config_file).with_strategies([Strategy.retrain])
    assert config.strategies == [Strategy.retrain]


@pytest.mark.parametrize("strategies", [[], [Strategy.retrain, Strategy.retrain]])
def test_with_strategies_bad(tmp_path, strategies):
    """The override is checked like the configuration file."""
    config_file = tmp_path / "config.yaml"
    config_file.write_text("")
    config = load_config(config_file)
    with pytest.raises(ConfigError) as cm:
        config.with_strategies(strategies)
    assert "without repetitions" in str(cm.value)
    assert config.strategies == ALL_STRATEGIES


# -- tests for the data section

def test_tabular_ok_relative(tmp_path):
    """Data files are relative to the configuration."""
    datadir = tmp_path / "data"
    datadir.mkdir()
    for day in (1, 2):
        (datadir / f"day_{day}.csv").write_text("1.0,2.0,0\n")
    config_file = tmp_path / "config.yaml"
    config_file.write_text("""
        federation:
            num-days: 2
        data:
            tabular: [data/day_1.csv, data/day_2.csv]
    """)
    config = load_config(config_file)
    assert config.data.synthetic is None
    assert config.data.tabular == [datadir / "day_1.csv", datadir / "day_2.csv"]


def test_tabular_missing(tmp_path):
    """The data files must exist."""
    errors = _load_errors(tmp_path, """
        federation:
            num-days: 1
        data:
            tabular: [day_1.csv]
    """)
    assert errors == [f"- 'data.tabular[0]': path {str(tmp_path / 'day_1.csv')!r} not found"]


def test_tabular_not_a_file(tmp_path):
    """The data files must be files."""
    (tmp_path / "somedir").mkdir()
    errors = _load_errors(tmp_path, """
        federation:
            num-days: 1
        data:
            tabular: [somedir]
    """)
    assert errors == [
        f"- 'data.tabular[0]': path {str(tmp_path / 'somedir')!r} must be a file"]


def test_tabular_one_per_day(tmp_path):
    """A file is needed for every day."""
    (tmp_path / "day_1.csv").write_text("1.0,2.0,0\n")
    errors = _load_errors(tmp_path, """
        data:
            tabular: [day_1.csv]
    """)
    assert errors == ["- 'config': need one tabular file per day (3), got 1"]


@pytest.mark.parametrize("content", [
    "data: {}",
    "data:\n  synthetic: {}\n  tabular: [foo.csv]",
])
def test_data_xor(tmp_path, content):
    """One and only one source of data."""
    (tmp_path / "foo.csv").write_text("1.0,2.0,0\n")
    errors = _load_errors(tmp_path, content)
    assert errors == ["- 'data': need exactly one of these subkeys: 'synthetic', 'tabular'"]


def test_synthetic_centers_count(tmp_path):
    """A center per class."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [2, 3]
        data:
            synthetic:
                num-classes: 3
                class-centers-day1: [[0, 0], [1, 1]]
    """)
    assert errors == ["- 'data.synthetic': need 3 class centers, got 2"]


def test_synthetic_centers_repeated(tmp_path):
    """Centers must be different."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [2, 2]
        data:
            synthetic:
                num-classes: 2
                class-centers-day1: [[1, 1], [1, 1]]
    """)
    assert errors == ["- 'data.synthetic': class centers must be pairwise distinct"]


def test_synthetic_rotation_one_dimension(tmp_path):
    """Can not rotate a line."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [1, 2]
        data:
            synthetic:
                num-classes: 2
                input-dim: 1
    """)
    assert errors == ["- 'data.synthetic': rotation needs an input dimension of at least 2"]


def test_synthetic_validation_fraction(tmp_path):
    """The validation part can not be the whole day."""
    errors = _load_errors(tmp_path, """
        data:
            synthetic:
                validation-fraction: 1.0
    """)
    assert errors == ["- 'data.synthetic.validation-fraction': Input should be less than 1"]


# -- tests for the consistency between sections

def test_model_input_mismatch(tmp_path):
    """The model must read the data."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [3, 10]
    """)
    assert errors == ["- 'config': model input size (3) must match data input-dim (2)"]


def test_model_classes_mismatch(tmp_path):
    """The model must predict all the classes."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [2, 5]
    """)
    assert errors == ["- 'config': model output size (5) must match data num-classes (10)"]


def test_model_too_short(tmp_path):
    """At least input and output."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [2]
    """)
    assert errors == [
        "- 'model.layer-sizes': need at least two layer sizes (input and output)"]


def test_not_enough_samples(tmp_path):
    """The days must have data for all the nodes."""
    errors = _load_errors(tmp_path, """
        federation:
            num-nodes: 20
    """)
    assert errors == [
        "- 'config': samples-per-day leaves 500 training samples but the federation needs 1000"]


def test_burn_in_too_long(tmp_path):
    """Some samples must be retained."""
    errors = _load_errors(tmp_path, """
        federation:
            sgld:
                total-iters: 10
                burn-in: 10
    """)
    assert errors == ["- 'federation.sgld': burn-in must be smaller than total-iters"]


def test_burn_in_leaves_one(tmp_path):
    """At least two samples to fit a prior."""
    errors = _load_errors(tmp_path, """
        federation:
            sgld:
                total-iters: 10
                burn-in: 9
    """)
    assert errors == ["- 'federation.sgld': total-iters minus burn-in must be at least 2"]


def test_sgld_nodes_mismatch(tmp_path):
    """The chain scaling must match the federation."""
    errors = _load_errors(tmp_path, """
        federation:
            num-nodes: 2
            sgld:
                num-nodes: 3
    """)
    assert errors == [
        "- 'federation': sgld num-nodes (3) must match federation num-nodes (2)"]


def test_batch_bigger_than_shard(tmp_path):
    """A batch can not be bigger than the node data."""
    errors = _load_errors(tmp_path, """
        federation:
            per-node-samples: 5
            sgld:
                batch-size: 8
    """)
    assert errors == [
        "- 'federation': per-node-samples (5) must be at least the batch size (8)"]


def test_num_avg_too_big(tmp_path):
    """Can not average more samples than retained."""
    errors = _load_errors(tmp_path, """
        metrics:
            num-avg: 60
    """)
    assert errors == ["- 'config': metrics num-avg (60) cannot exceed the retained samples (50)"]


def test_threshold_range(tmp_path):
    """The threshold is an accuracy."""
    errors = _load_errors(tmp_path, """
        metrics:
            threshold: 1.5
    """)
    assert errors == ["- 'metrics.threshold': Input should be less than or equal to 1"]


def test_eta_positive(tmp_path):
    """The step size must be positive."""
    errors = _load_errors(tmp_path, """
        federation:
            sgld:
                eta: -0.1
    """)
    assert errors == ["- 'federation.sgld.eta': Input should be greater than 0"]


def test_seed_negative(tmp_path):
    """Seeds are non negative."""
    errors = _load_errors(tmp_path, "seed: -1\n")
    assert "- 'seed': Input should be greater than or equal to 0" in errors


def test_strategies_invalid(tmp_path):
    """Only the known strategies."""
    errors = _load_errors(tmp_path, "strategies: [retrain, foo]\n")
    assert errors == [
        "- 'strategies[1]': Input should be 'transfer-learning', 'retrain' "
        "or 'posterior-continual'"]


def test_strategies_repeated(tmp_path):
    """Each strategy once."""
    errors = _load_errors(tmp_path, "strategies: [retrain, retrain]\n")
    assert errors == ["- 'strategies': strategies must not be repeated"]


def test_strategies_empty(tmp_path):
    """Something must be run."""
    errors = _load_errors(tmp_path, "strategies: []\n")
    assert errors == ["- 'strategies': need at least one strategy"]


def test_extra_fields(tmp_path):
    """Unknown keys are rejected."""
    errors = _load_errors(tmp_path, """
        model:
            layer-sizes: [2, 64, 64, 10]
            whatever: 42
    """)
    assert errors == ["- 'model.whatever': Extra inputs are not permitted"]


# -- tests for the error formatter

def test_error_formatter_simple_field():
    """The location is simple."""
    pydantic_errors = [
        {'loc': ('seed',), 'msg': 'field required', 'type': 'value_error.missing'},
    ]
    errors = _format_pydantic_errors(pydantic_errors)
    assert errors == [
        "- 'seed': field required",
    ]


def test_error_formatter_deep_field():
    """The location is nested."""
    pydantic_errors = [
        {'loc': ('federation', 'sgld'), 'msg': 'Assertion failed, bad', 'type': 'assertion'},
    ]
    errors = _format_pydantic_errors(pydantic_errors)
    assert errors == [
        "- 'federation.sgld': bad",
    ]


def test_error_formatter_index():
    """The location has an index."""
    pydantic_errors = [
        {'loc': ('data', 'tabular', 3, 'stuff'), 'msg': 'file must exist', 'type': 'value_error'},
    ]
    errors = _format_pydantic_errors(pydantic_errors)
    assert errors == [
        "- 'data.tabular[3].stuff': file must exist",
    ]


def test_error_formatter_whole_config():
    """Errors about the relation between sections."""
    pydantic_errors = [
        {'loc': (), 'msg': 'Value error, sections mismatch', 'type': 'value_error'},
    ]
    errors = _format_pydantic_errors(pydantic_errors)
    assert errors == [
        "- 'config': sections mismatch",
    ]


def test_error_formatter_multiple_results():
    """The formatting handle multiple results."""
    pydantic_errors = [
        {'loc': ('seed',), 'msg': 'field required', 'type': 'value_error.missing'},
        {'loc': ('data', 'tabular'), 'msg': 'file must exist', 'type': 'value_error'},
    ]
    errors = _format_pydantic_errors(pydantic_errors)
    assert errors == [
        "- 'seed': field required",
        "- 'data.tabular': file must exist",
    ]
