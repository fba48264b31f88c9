"""
This module writes and reads the pipeline's tabular outputs.

Functions:
1. provenance_header: '#' comment lines with config hash, code version and grids.
2. write_table: CSV with the provenance header, 17 significant digits, '\n' line ends.
3. read_table: Read a CSV written by write_table (comment lines skipped).
4. read_header: Provenance key/value pairs of a written table.
5. write_json / read_json: Sorted, indented JSON sidecar.
"""

import json
import os

import pandas as pd

FLOAT_FORMAT = "%.17g"


def provenance_header(config_hash, version, x_grid=None, R_grid=None, extra=None):
    lines = [f"config-hash: {config_hash}", f"version: {version}"]
    if x_grid is not None:
        lines.append(f"x-grid: {x_grid.describe()}")
    if R_grid is not None:
        lines.append(f"R-grid: {R_grid.describe()}")
    for key, value in (extra or {}).items():
        lines.append(f"{key}: {value}")
    return lines


def write_table(path, frame, header=()):
    """
    Write a DataFrame as CSV preceded by '#' header lines.

    Parameters:
        path (str): Output file; parent directories are created.
        frame (pd.DataFrame): Table to write (index dropped).
        header (iterable): Lines written as '# line'.

    Returns:
        str: The path written.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, na_rep="nan", lineterminator="\n")
    return path


def read_table(path):
    return pd.read_csv(path, comment="#", na_values=["nan"])


def read_header(path):
    header = {}
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition(":")
            header[key.strip()] = value.strip()
    return header


def write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True))
        handle.write("\n")
    return path


def read_json(path):
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)
