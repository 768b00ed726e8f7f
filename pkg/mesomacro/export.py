# Copyright (C) 2024. BMW Car IT GmbH. All rights reserved.
"""CSV and JSON export of experiment results"""

import json
import logging
import os

import pandas as pd

from mesomacro.demonstrators import TUNING_COLUMNS, params_from_dict, params_to_dict
from mesomacro.drl_trainer import TRAINING_LOG_COLUMNS
from mesomacro.helpers import format_mean_std

logger = logging.getLogger(__name__)  # pylint: disable=invalid-name

RESULT_COLUMNS = ["control", "model", "reward", "TTT", "delay", "speed", "seed"]
METRIC_COLUMNS = ["reward", "TTT", "delay", "speed"]
AGGREGATE_COLUMNS = ["control", "model", "runs"] + METRIC_COLUMNS

RESULTS_FILE = "results.csv"
AGGREGATE_FILE = "results_aggregate.csv"
FLOAT_FORMAT = "%.6f"


def _write_frame(frame, path):
    try:
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    except OSError as err:
        raise IOError("Cannot write {}: {}".format(path, err))
    logger.info("Wrote %d rows to %s", len(frame), path)
    return path


def _prepare(directory):
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as err:
        raise IOError("Cannot create output directory {}: {}".format(directory, err))


def aggregate_rows(rows):
    """Mean±std of the metrics per (control, model), in order of first appearance

    Undefined metrics (None) are left out of the statistics.
    """
    groups = {}
    for row in rows:
        groups.setdefault((row["control"], row["model"]), []).append(row)

    aggregated = []
    for (control, model), members in groups.items():
        entry = {"control": control, "model": model, "runs": len(members)}
        for column in METRIC_COLUMNS:
            values = [row[column] for row in members if row[column] is not None]
            entry[column] = format_mean_std(values) if values else ""
        aggregated.append(entry)
    return aggregated


def export_results(rows, directory):
    """Write raw result rows and their mean±std aggregate

    :param list rows: dicts with the RESULT_COLUMNS keys
    :param str directory: output directory, created when missing
    :returns: paths of the raw and aggregate files
    :rtype: tuple
    :raises IOError: if a file cannot be written, naming its path
    """
    _prepare(directory)
    raw = pd.DataFrame(list(rows), columns=RESULT_COLUMNS)
    aggregate = pd.DataFrame(aggregate_rows(rows), columns=AGGREGATE_COLUMNS)
    return (
        _write_frame(raw, os.path.join(directory, RESULTS_FILE)),
        _write_frame(aggregate, os.path.join(directory, AGGREGATE_FILE)),
    )


def export_table(rows, columns, path):
    """Write dict rows with a fixed column order"""
    _prepare(os.path.dirname(path) or ".")
    return _write_frame(pd.DataFrame(list(rows), columns=columns), path)


def read_results(path):
    """Parse a results file written by export_results"""
    try:
        return pd.read_csv(path)
    except OSError as err:
        raise IOError("Cannot read {}: {}".format(path, err))


def export_episode(log, directory, prefix=""):
    """Write the per-interval metrics series of an episode and its last row as summary"""
    _prepare(directory)
    frame = log.as_frame()
    return (
        _write_frame(frame, os.path.join(directory, prefix + "metrics.csv")),
        _write_frame(frame.tail(1), os.path.join(directory, prefix + "episode_summary.csv")),
    )


def export_dynamics(recorder, directory, prefix=""):
    """Write sampled cell densities and region accumulations"""
    _prepare(directory)
    return (
        _write_frame(recorder.density_frame(), os.path.join(directory, prefix + "densities.csv")),
        _write_frame(recorder.accumulation_frame(), os.path.join(directory, prefix + "accumulations.csv")),
    )


def export_training_log(records, path):
    """Write per-epoch training records"""
    _prepare(os.path.dirname(path) or ".")
    frame = pd.DataFrame([record.as_row() for record in records], columns=TRAINING_LOG_COLUMNS)
    return _write_frame(frame, path)


def export_tuning(result, directory):
    """Write the tuning grid table and the best parameters per agent"""
    _prepare(directory)
    table = _write_frame(pd.DataFrame(result.table, columns=TUNING_COLUMNS), os.path.join(directory, "tuning.csv"))
    path = os.path.join(directory, "demonstrators.json")
    best = {agent: params_to_dict(params) for agent, params in sorted(result.best.items())}
    try:
        with open(path, "w") as handle:
            json.dump(best, handle, indent=2, sort_keys=True)
    except OSError as err:
        raise IOError("Cannot write {}: {}".format(path, err))
    logger.info("Wrote demonstrator parameters of %d agents to %s", len(best), path)
    return table, path


def load_demonstrators(path):
    """Read demonstrator parameters written by export_tuning

    :raises IOError: if the file is missing or unreadable
    """
    try:
        with open(path) as handle:
            data = json.load(handle)
    except (OSError, ValueError) as err:
        raise IOError("Cannot read demonstrator parameters {}: {}".format(path, err))
    return {agent: params_from_dict(values) for agent, values in data.items()}
