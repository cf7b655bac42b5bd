# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Main experiment runner module."""

import argparse
import enum
import logging
import pathlib
import time

from fedsgld import __version__
from fedsgld.artifacts import (
    METADATA_NAME,
    REPORT_NAME,
    load_samples,
    read_report,
    save_run,
    write_metadata,
)
from fedsgld.common import ArtifactError, DataError, DivergenceError
from fedsgld.config_manager import (
    STRATEGY_LABELS,
    ConfigError,
    Strategy,
    load_config,
)
from fedsgld.datagen import export_tabular, gen_day, synthetic_days, tabular_days
from fedsgld.federation import ExperimentReport, run_continual
from fedsgld.model import param_count
from fedsgld.prior import fit_from_samples


# setup logging
logging.basicConfig(
    format='%(asctime)s.%(msecs)03d %(levelname)-5s %(message)s', datefmt='%H:%M:%S')
logger = logging.getLogger(__name__)

# how missing cells are shown in the summary table
MISSING = "—"


class ReturnCode(enum.IntEnum):
    """Codes that the runner may return."""

    ok = 0
    internal_error = 1
    config_error = 2
    divergence = 3
    io_error = 4
    artifacts_error = 5


def load_days(config):
    """Build the data of all the days, as configured."""
    federation = config.federation
    if config.data.synthetic is not None:
        return synthetic_days(config.data.synthetic, federation, config.seed)
    return tabular_days(
        config.data.tabular, config.model.num_classes, federation, config.seed,
        input_dim=config.model.layer_sizes[0])


def run_experiment(config, *, initial_prior=None):
    """Run all the configured strategies over the same days."""
    days = load_days(config)
    report = ExperimentReport(cells=[], seed=config.seed, config=config.echo())
    for strategy in config.strategies:
        federation = config.federation.model_copy(update={"strategy": strategy})
        strategy_prior = initial_prior if strategy == Strategy.posterior_continual else None
        partial = run_continual(
            config.model, days, federation, config.metrics, initial_prior=strategy_prior)
        report = report.merged(partial)
    return report


def cmd_run(config, *, initial_prior_path=None):
    """Run the experiment and persist all its artifacts."""
    started = time.time()

    initial_prior = None
    if initial_prior_path is not None:
        try:
            previous = load_samples(initial_prior_path)
        except ArtifactError as err:
            logger.error("Cannot use the initial prior: %s", err)
            return ReturnCode.artifacts_error
        n_params = param_count(config.model)
        if previous.n_params != n_params:
            logger.error(
                "The initial prior has %d parameters but the model has %d",
                previous.n_params, n_params)
            return ReturnCode.config_error
        initial_prior = fit_from_samples(previous)
        logger.info("Using as initial prior the posterior in %r", str(initial_prior_path))

    try:
        report = run_experiment(config, initial_prior=initial_prior)
    except DivergenceError as err:
        logger.error("Runtime error: %s", err)
        return ReturnCode.divergence
    except DataError as err:
        logger.error("Data error: %s", err)
        return ReturnCode.config_error

    try:
        save_run(report, config.output_dir)
        write_metadata(config.output_dir / METADATA_NAME, started, time.time())
    except OSError as err:
        logger.error("Cannot write the run artifacts: %s", err)
        return ReturnCode.io_error
    return ReturnCode.ok


def cmd_gen_data(config, out_dir):
    """Write the synthetic pool of each day as a tabular file."""
    shift = config.data.synthetic
    if shift is None:
        logger.error("Generating data needs a 'data.synthetic' section in the configuration")
        return ReturnCode.config_error

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for day in range(1, config.federation.num_days + 1):
            path = out_dir / f"day_{day}.csv"
            export_tabular(gen_day(shift, day, config.seed), path)
            logger.info("Day %d data written in %r", day, str(path))
    except OSError as err:
        logger.error("Cannot write the data files: %s", err)
        return ReturnCode.io_error
    return ReturnCode.ok


def _iterations_text(cell, retrain_cell):
    """Render the iterations of a cell, with the reduction against retraining if any."""
    if cell is None:
        return MISSING
    if not cell.get("trained", True):
        return "n/a"
    iterations = cell["iterations_to_threshold"]
    if iterations is None:
        return "not reached"
    text = str(iterations)
    if cell["strategy"] == Strategy.posterior_continual.value and retrain_cell is not None:
        reference = retrain_cell["iterations_to_threshold"]
        if reference:
            delta = round(100 * (reference - iterations) / reference)
            text += f" ({-delta:+d}%)"
    return text


def _cell_value(cell, key, template, scale=1):
    """Render a numeric value of a cell, or the missing mark."""
    if cell is None:
        return MISSING
    return template.format(scale * cell[key])


def _total_iterations(cells):
    """Sum the iterations of all days, None if any is missing or not reached."""
    if any(cell is None or cell["iterations_to_threshold"] is None for cell in cells):
        return None
    return sum(cell["iterations_to_threshold"] for cell in cells)


def render_table(report_data):
    """Build the summary table from the report data; return its lines and the missing count."""
    config = report_data.get("config") or {}
    cells = {(cell["strategy"], cell["day"]): cell for cell in report_data["cells"]}
    num_days = (config.get("federation") or {}).get("num-days")
    if num_days is None:
        num_days = max((cell["day"] for cell in report_data["cells"]), default=0)
    strategies = config.get("strategies") or sorted({strategy for strategy, _ in cells})
    threshold = (config.get("metrics") or {}).get("threshold", 0.85)
    days = range(1, num_days + 1)

    missing = 0

    def get_cell(strategy, day):
        """Get the cell, counting it if missing."""
        nonlocal missing
        cell = cells.get((strategy, day))
        if cell is None:
            missing += 1
        return cell

    def row(label, values):
        """Format a line of the table."""
        return f"{label:<8}" + "".join(f"{value:>16}" for value in values)

    grid = {(strategy, day): get_cell(strategy, day) for strategy in strategies for day in days}

    def label_of(strategy):
        """Return the short name of the strategy."""
        return STRATEGY_LABELS.get(Strategy(strategy), strategy)

    lines = [row("", [f"Day {day}" for day in days] + ["Total"])]

    lines.append("Acc., %")
    for strategy in strategies:
        values = [_cell_value(grid[strategy, day], "accuracy", "{:.1f}", 100) for day in days]
        lines.append(row(label_of(strategy), values + [""]))

    lines.append("ECE")
    for strategy in strategies:
        values = [_cell_value(grid[strategy, day], "ece", "{:.4f}") for day in days]
        lines.append(row(label_of(strategy), values + [""]))

    lines.append(f"Num. Iter. (Acc.={100 * threshold:g}%)")
    retrain = Strategy.retrain.value
    retrain_total = _total_iterations([grid.get((retrain, day)) for day in days])
    for strategy in strategies:
        values = [
            _iterations_text(grid[strategy, day], grid.get((retrain, day))) for day in days]
        total = None
        if strategy != Strategy.transfer_learning.value:
            total = _total_iterations([grid[strategy, day] for day in days])
        total_text = "" if total is None else str(total)
        if total is not None and strategy == Strategy.posterior_continual.value and retrain_total:
            delta = round(100 * (retrain_total - total) / retrain_total)
            total_text += f" ({-delta:+d}%)"
        lines.append(row(label_of(strategy), values + [total_text]))

    return lines, missing


def cmd_report(run_dir):
    """Print the summary table of a completed run."""
    try:
        report_data = read_report(run_dir / REPORT_NAME)
        lines, missing = render_table(report_data)
    except ArtifactError as err:
        logger.error("Cannot build the report: %s", err)
        return ReturnCode.artifacts_error
    except (KeyError, TypeError, ValueError) as err:
        logger.error("Cannot build the report, corrupt content: %r", err)
        return ReturnCode.artifacts_error

    for line in lines:
        print(line)
    if missing:
        logger.warning("The run has %d missing cell(s)", missing)
    return ReturnCode.ok


def _parse_strategies(text):
    """Parse a comma separated list of strategy names."""
    try:
        strategies = [Strategy(name.strip()) for name in text.split(",") if name.strip()]
    except ValueError:
        strategies = []
    if not strategies:
        valid = ", ".join(strategy.value for strategy in Strategy)
        raise ConfigError(f"Bad strategies {text!r}; valid options: {valid}")
    if len(set(strategies)) != len(strategies):
        raise ConfigError(f"Bad strategies {text!r}; they must not be repeated")
    return strategies


def _build_parser():
    """Build the command line parser."""
    parser = argparse.ArgumentParser(prog="fedsgld")
    parser.add_argument(
        '-v', '--verbose',
        help="Show detailed information, typically of interest only when diagnosing problems.",
        action="store_const", dest="loglevel", const=logging.DEBUG)
    parser.add_argument(
        '-q', '--quiet',
        help="Only events of WARNING level and above will be tracked.",
        action="store_const", dest="loglevel", const=logging.WARNING)
    parser.add_argument(
        '-V', '--version',
        help="Print the version and exit.",
        action="version", version=__version__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Run the configured experiment.")
    run_parser.add_argument(
        "config", type=pathlib.Path,
        help="The configuration file (fedsgld.yaml) or the directory where to find it.")
    run_parser.add_argument(
        "--seed", type=int, help="Use this master seed instead of the configured one.")
    run_parser.add_argument(
        "--strategies", type=str,
        help="Comma separated strategies to run, instead of the configured ones.")
    run_parser.add_argument(
        "--initial-prior", type=pathlib.Path,
        help="A posterior samples file whose fitted Gaussian is the first day prior "
             "of the posterior continual strategy.")

    gen_parser = subparsers.add_parser("gen-data", help="Write the synthetic days as files.")
    gen_parser.add_argument(
        "config", type=pathlib.Path,
        help="The configuration file (fedsgld.yaml) or the directory where to find it.")
    gen_parser.add_argument("out_dir", type=pathlib.Path, help="Where to write the files.")
    gen_parser.add_argument(
        "--seed", type=int, help="Use this master seed instead of the configured one.")

    report_parser = subparsers.add_parser("report", help="Summarize a completed run.")
    report_parser.add_argument("run_dir", type=pathlib.Path, help="The run output directory.")
    return parser


def main(argv=None):
    """Manage CLI interaction and call the indicated command."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.getLogger().setLevel(logging.INFO if args.loglevel is None else args.loglevel)

    if args.command == "report":
        return cmd_report(args.run_dir)

    try:
        logger.info("Parsing configuration in %r", str(args.config))
        config = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError(f"Seed must be a non-negative 64 bits integer, got {args.seed}")
            config = config.with_seed(args.seed)
        if getattr(args, "strategies", None):
            config = config.with_strategies(_parse_strategies(args.strategies))
    except ConfigError as err:
        logger.error(err)
        for error in err.errors:
            logger.error(error)
        return ReturnCode.config_error

    try:
        if args.command == "run":
            return cmd_run(config, initial_prior_path=args.initial_prior)
        return cmd_gen_data(config, args.out_dir)
    except Exception as exc:
        logger.error("Unknown internal error: %r", exc)
        return ReturnCode.internal_error
