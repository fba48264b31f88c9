"""
This module compares a run's outputs against a golden tree.

Functions:
1. load_tolerances: [tolerances] section of an INI file (default, <column>, <file>:<column>).
2. compare_tables: Column-wise comparison of two tables, worst deviation over all columns reported.
3. compare_json: Leaf-wise comparison of two JSON sidecars.
4. diff_goldens: Every CSV and JSON file of the golden tree (recursively) against the output tree.
"""

import configparser
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from src.data.tables import read_json, read_table
from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

MODULE = "pipeline_cli"
DEFAULT_TOLERANCE = 1e-12
# top-level JSON keys that name the run location rather than its results
IGNORED_JSON_KEYS = frozenset({"output_dir"})
CACHE_DIRECTORY = "cache"


@dataclass
class FileComparison:
    file: str
    passed: bool
    message: str = ""
    worst_column: str = None
    worst_row: int = None
    worst_deviation: float = 0.0

    @property
    def location(self):
        if self.worst_row is None:
            return f"{self.worst_column}"
        return f"{self.worst_column}[{self.worst_row}]"


@dataclass
class GoldenReport:
    files: list = field(default_factory=list)

    @property
    def passed(self):
        return all(item.passed for item in self.files)

    def summary(self):
        lines = []
        for item in self.files:
            status = "PASS" if item.passed else "FAIL"
            detail = item.message or f"worst {item.location} = {item.worst_deviation:.3e}"
            lines.append(f"{status} {item.file}: {detail}")
        return "\n".join(lines)


def load_tolerances(path=None):
    """
    Read per-column tolerances.

    Returns:
        dict: Keys 'default', '<column>' or '<file>:<column>' mapped to absolute tolerances.
    """
    tolerances = {"default": DEFAULT_TOLERANCE}
    if path is None:
        return tolerances
    if not os.path.exists(path):
        raise ConfigurationError(f"tolerance file '{path}' does not exist", module=MODULE, parameter="tolerances")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    parser.read(path, encoding="utf-8")
    if parser.has_section("tolerances"):
        for key, value in parser.items("tolerances"):
            try:
                tolerances[key] = float(value)
            except ValueError:
                raise ConfigurationError(f"tolerance '{key}' is not a number", module=MODULE,
                                         parameter=f"tolerances.{key}")
    return tolerances


def _tolerance(tolerances, name, column):
    for key in (f"{name}:{column}", column, "default"):
        if key in tolerances:
            return tolerances[key]
    return DEFAULT_TOLERANCE


def _ratio(deviation, tolerance):
    if tolerance > 0:
        return deviation / tolerance
    return 0.0 if deviation == 0 else np.inf


def _track(comparison, state, column, row, deviation, tolerance):
    ratio = _ratio(deviation, tolerance)
    if ratio > state["worst_ratio"]:
        state["worst_ratio"] = ratio
        comparison.worst_column, comparison.worst_row = column, row
        comparison.worst_deviation = float(deviation)
    if deviation > tolerance:
        comparison.passed = False
        state["failures"].append(column)


def _finish(comparison, state):
    if state["failures"]:
        comparison.message = (
            f"{len(state['failures'])} column(s) out of tolerance {state['failures']}; "
            f"worst {comparison.location}: deviation {comparison.worst_deviation:.3e}"
        )
    return comparison


def compare_tables(name, output, golden, tolerances):
    """
    Compare two tables column by column.

    Every column is checked; the reported cell has the largest deviation relative
    to its tolerance over the whole table.
    """
    missing = [c for c in golden.columns if c not in output.columns]
    extra = [c for c in output.columns if c not in golden.columns]
    if missing or extra:
        return FileComparison(name, False, f"schema mismatch: missing {missing}, unexpected {extra}")
    if len(output) != len(golden):
        return FileComparison(name, False, f"row count {len(output)} != golden {len(golden)}")
    comparison = FileComparison(name, True)
    state = {"worst_ratio": -1.0, "failures": []}
    for column in golden.columns:
        expected, actual = golden[column], output[column]
        if expected.dtype.kind in "biuf" and actual.dtype.kind in "biuf":
            a, b = actual.to_numpy(dtype=float), expected.to_numpy(dtype=float)
            both_nan = np.isnan(a) & np.isnan(b)
            deviation = np.where(both_nan, 0.0, np.abs(a - b))
            deviation = np.where(np.isnan(deviation), np.inf, deviation)
        else:
            deviation = np.where(actual.astype(str).to_numpy() == expected.astype(str).to_numpy(), 0.0, np.inf)
        if deviation.size == 0:
            continue
        row = int(np.argmax(deviation))
        _track(comparison, state, column, row, deviation[row], _tolerance(tolerances, name, column))
    return _finish(comparison, state)


def _json_leaves(node, path=""):
    if isinstance(node, dict):
        for key in sorted(node):
            if not path and key in IGNORED_JSON_KEYS:
                continue
            yield from _json_leaves(node[key], f"{path}.{key}" if path else key)
    elif isinstance(node, list):
        yield path, ("list", len(node))
        for index, item in enumerate(node):
            yield from _json_leaves(item, f"{path}[{index}]")
    else:
        yield path, node


def _leaf_key(path):
    return path.rsplit(".", 1)[-1].split("[", 1)[0]


def _is_number(value):
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def compare_json(name, output, golden, tolerances):
    """
    Compare two JSON documents leaf by leaf.

    Numeric leaves use the tolerance of their key (file:key, key, default); any
    other difference, list lengths and key sets included, fails.
    """
    actual = dict(_json_leaves(output))
    expected = dict(_json_leaves(golden))
    missing = sorted(set(expected) - set(actual))
    extra = sorted(set(actual) - set(expected))
    if missing or extra:
        return FileComparison(name, False, f"structure mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    comparison = FileComparison(name, True)
    state = {"worst_ratio": -1.0, "failures": []}
    for path in sorted(expected):
        a, b = actual[path], expected[path]
        if _is_number(a) and _is_number(b):
            a, b = float(a), float(b)
            deviation = 0.0 if np.isnan(a) and np.isnan(b) else abs(a - b)
            deviation = np.inf if np.isnan(deviation) else deviation
            tolerance = _tolerance(tolerances, name, _leaf_key(path))
        else:
            same = type(a) is type(b) and a == b
            deviation, tolerance = (0.0 if same else np.inf), 0.0
        _track(comparison, state, path, None, deviation, tolerance)
    return _finish(comparison, state)


def _compare_file(name, output_path, golden_path, tolerances):
    if name.endswith(".json"):
        return compare_json(name, read_json(output_path), read_json(golden_path), tolerances)
    return compare_tables(name, read_table(output_path), read_table(golden_path), tolerances)


def diff_goldens(output_dir, golden_dir, tolerances_path=None):
    """
    Compare every golden CSV and JSON file with the file of the same relative path in output_dir.

    Parameters:
        output_dir (str): Directory of a finished run.
        golden_dir (str): Reference tree.
        tolerances_path (str): INI file with a [tolerances] section (optional).

    Returns:
        GoldenReport: One FileComparison per golden file.
    """
    for path, key in ((output_dir, "output_dir"), (golden_dir, "golden_dir")):
        if not os.path.isdir(path):
            raise ConfigurationError(f"directory '{path}' does not exist", module=MODULE, parameter=key)
    tolerances = load_tolerances(tolerances_path)
    report = GoldenReport()
    for root, dirs, files in os.walk(golden_dir):
        dirs[:] = sorted(d for d in dirs if d != CACHE_DIRECTORY)
        for file_name in sorted(files):
            if not file_name.endswith((".csv", ".json")):
                continue
            golden_path = os.path.join(root, file_name)
            name = os.path.relpath(golden_path, golden_dir).replace(os.sep, "/")
            output_path = os.path.join(output_dir, name)
            if not os.path.exists(output_path):
                report.files.append(FileComparison(name, False, "missing from output"))
                continue
            report.files.append(_compare_file(name, output_path, golden_path, tolerances))
    if not report.files:
        logger.warning("no CSV or JSON files found under %s", golden_dir)
    return report
