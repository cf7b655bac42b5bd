# Copyright 2026 Facundo Batista
# Licensed under the GPL v3 License

"""Persistence of a run: posterior samples, curves, reliability bins and the report.

Everything except the metadata file is deterministic given the configuration and seed.
"""

import csv
import json
import logging
import struct
import time

import numpy as np

from fedsgld import __version__
from fedsgld.common import ArtifactError
from fedsgld.prior import PosteriorSamples


logger = logging.getLogger(__name__)

# posterior samples file: magic, header, strategy name, then row-major little endian doubles
SAMPLES_MAGIC = b"FSGLDPS1"
SAMPLES_VERSION = 1
_HEADER = struct.Struct("<HIIIIIQH")

REPORT_NAME = "report.json"
CURVES_NAME = "curves.csv"
RELIABILITY_NAME = "reliability.csv"
METADATA_NAME = "metadata.json"
POSTERIORS_DIR = "posteriors"

CURVES_FIELDS = ["day", "strategy", "iteration", "train_loss", "val_accuracy"]
RELIABILITY_FIELDS = [
    "strategy", "day", "bin", "lower", "upper", "count", "accuracy", "confidence", "gap"]


def _text(value):
    """Render a value for the text artifacts so floats round-trip exactly."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def save_samples(samples, path):
    """Write the posterior samples to a binary file."""
    strategy = samples.strategy.encode("utf8")
    header = _HEADER.pack(
        SAMPLES_VERSION, samples.n_params, len(samples), samples.day,
        samples.total_iters, samples.burn_in, samples.seed, len(strategy))
    with open(path, "wb") as fh:
        fh.write(SAMPLES_MAGIC)
        fh.write(header)
        fh.write(strategy)
        fh.write(samples.samples.astype("<f8").tobytes(order="C"))


def load_samples(path):
    """Read the posterior samples from a binary file."""
    try:
        content = path.read_bytes()
    except OSError as err:
        raise ArtifactError(f"Cannot read posterior samples file {str(path)!r}: {err}")

    if not content.startswith(SAMPLES_MAGIC):
        raise ArtifactError(f"File {str(path)!r} is not a posterior samples file")
    offset = len(SAMPLES_MAGIC)
    try:
        (version, n_params, n_samples, day, total_iters, burn_in, seed,
         strategy_len) = _HEADER.unpack_from(content, offset)
    except struct.error:
        raise ArtifactError(f"Truncated header in posterior samples file {str(path)!r}")
    if version != SAMPLES_VERSION:
        raise ArtifactError(f"Unsupported posterior samples version {version} in {str(path)!r}")
    offset += _HEADER.size
    strategy = content[offset:offset + strategy_len].decode("utf8")
    offset += strategy_len

    data = content[offset:]
    if len(data) != n_params * n_samples * 8:
        raise ArtifactError(
            f"Posterior samples file {str(path)!r} should hold {n_samples}x{n_params} "
            f"values, found {len(data)} bytes")
    matrix = np.frombuffer(data, dtype="<f8").reshape(n_samples, n_params).astype(np.float64)
    return PosteriorSamples(
        matrix, day=day, total_iters=total_iters, burn_in=burn_in, seed=seed, strategy=strategy)


def samples_filename(strategy, day):
    """Return the name of the file for the (strategy, day) posterior."""
    return f"{strategy.value}_day{day}.samples"


def _cell_to_dict(cell):
    """Summarize a result cell for the report."""
    return {
        "strategy": cell.strategy.value,
        "day": cell.day,
        "trained": cell.trained,
        "accuracy": cell.accuracy,
        "ece": cell.ece,
        "mean_confidence": cell.mean_confidence,
        "final_round_accuracy": cell.final_round_accuracy,
        "iterations_to_threshold": cell.iterations_to_threshold,
        "rounds": len(cell.curve),
        "posterior_day": cell.samples.day,
        "posterior_file": f"{POSTERIORS_DIR}/{samples_filename(cell.strategy, cell.day)}",
    }


def report_to_dict(report):
    """Convert the experiment report to plain data."""
    return {
        "version": __version__,
        "seed": report.seed,
        "config": report.config,
        "cells": [_cell_to_dict(cell) for cell in report.cells],
    }


def write_report(report, path):
    """Write the report as JSON."""
    with open(path, "wt", encoding="utf8") as fh:
        json.dump(report_to_dict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path):
    """Read the report as plain data, validating its structure."""
    try:
        content = json.loads(path.read_text(encoding="utf8"))
    except FileNotFoundError:
        raise ArtifactError(f"Report not found: {str(path)!r}")
    except (OSError, ValueError) as err:
        raise ArtifactError(f"Cannot read report {str(path)!r}: {err}")

    if not isinstance(content, dict) or not isinstance(content.get("cells"), list):
        raise ArtifactError(f"Report {str(path)!r} has no cells")
    for cell in content["cells"]:
        missing = {"strategy", "day", "accuracy", "ece", "iterations_to_threshold"} - set(cell)
        if missing:
            raise ArtifactError(f"Report {str(path)!r} has a cell without {sorted(missing)}")
    return content


def write_curves(report, path):
    """Write one CSV row per round of every trained cell."""
    with open(path, "wt", encoding="utf8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVES_FIELDS)
        for cell in report.cells:
            for record in cell.curve:
                writer.writerow([_text(value) for value in (
                    record.day, cell.strategy.value, record.iteration,
                    record.train_loss, record.val_accuracy)])


def write_reliability(report, path):
    """Write the calibration bins of every cell, ready to draw reliability diagrams."""
    with open(path, "wt", encoding="utf8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RELIABILITY_FIELDS)
        for cell in report.cells:
            for row in cell.bins.rows():
                row = dict(row, strategy=cell.strategy.value, day=cell.day)
                writer.writerow([_text(row[field]) for field in RELIABILITY_FIELDS])


def write_metadata(path, started, finished):
    """Write the non reproducible information of the run."""
    metadata = {
        "version": __version__,
        "started": started,
        "finished": finished,
        "started_iso": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
    }
    with open(path, "wt", encoding="utf8") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def save_run(report, run_dir):
    """Write all the artifacts of the run in the directory (but the metadata)."""
    posteriors_dir = run_dir / POSTERIORS_DIR
    posteriors_dir.mkdir(parents=True, exist_ok=True)
    for cell in report.cells:
        save_samples(cell.samples, posteriors_dir / samples_filename(cell.strategy, cell.day))
    write_curves(report, run_dir / CURVES_NAME)
    write_reliability(report, run_dir / RELIABILITY_NAME)
    write_report(report, run_dir / REPORT_NAME)
    logger.info("Run artifacts written in %r", str(run_dir))
