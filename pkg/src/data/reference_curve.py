"""
This module loads the H2+ reference curve and caches calibrated softening tables.

Functions:
1. load_reference_curve: Read a two-column (R, E) text file with '#' comments.
2. select_rows: Keep the reference rows that cover an R interval.
3. softening_digest: SHA-256 of every input that determines a softening table.
4. write_softening_table / read_softening_table: Plain-text cache with a hash header.
5. get_cached_softening_table: Calibrate once, reuse while the inputs are unchanged.
"""

import hashlib
import logging
import os

import numpy as np
import pandas as pd

from src.calculations.potentials import calibrate_softening
from src.errors import ConfigurationError

logger = logging.getLogger(__name__)

MODULE = "model_potentials"
DEFAULT_REFERENCE_CURVE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "h2p_1s_sigma_g.dat")
DIGEST_PREFIX = "# inputs-sha256:"


def load_reference_curve(path=None):
    """
    Read a reference curve.

    Parameters:
        path (str): Data file; the packaged 1s sigma_g curve when None.

    Returns:
        np.ndarray: Rows (R, E) sorted by strictly increasing R.
    """
    path = path or DEFAULT_REFERENCE_CURVE
    if not os.path.exists(path):
        raise ConfigurationError(f"reference curve '{path}' does not exist", module=MODULE, parameter="reference_curve")
    frame = pd.read_csv(path, sep=r"\s+", comment="#", header=None, names=["R", "E"])
    curve = frame.to_numpy(dtype=float)
    if curve.shape[0] < 2 or not np.all(np.isfinite(curve)):
        raise ConfigurationError(f"reference curve '{path}' is empty or malformed", module=MODULE, parameter="reference_curve")
    if np.any(np.diff(curve[:, 0]) <= 0):
        raise ConfigurationError(
            f"reference curve '{path}' is not strictly increasing in R", module=MODULE, parameter="reference_curve"
        )
    return curve


def select_rows(curve, r_min, r_max):
    """
    Rows inside [r_min, r_max] plus the nearest row on each side.
    """
    r_values = curve[:, 0]
    if r_min < r_values[0] - 1e-12 or r_max > r_values[-1] + 1e-12:
        raise ConfigurationError(
            f"reference curve covers [{r_values[0]}, {r_values[-1]}], nuclear grid needs [{r_min}, {r_max}]",
            module=MODULE,
            parameter="reference_curve",
        )
    first = max(int(np.searchsorted(r_values, r_min, side="right")) - 1, 0)
    last = min(int(np.searchsorted(r_values, r_max, side="left")), len(r_values) - 1)
    return curve[first:last + 1]


def softening_digest(curve, x_grid, model, dissociation_limit):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(curve, dtype=float).tobytes())
    h.update(repr((x_grid.r_min, x_grid.delta_r, x_grid.n_points)).encode())
    h.update(repr((model.z_alpha, model.z_beta, model.proton_mass, dissociation_limit)).encode())
    return h.hexdigest()


def write_softening_table(path, table, digest):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(f"{DIGEST_PREFIX} {digest}\n")
        handle.write("# columns: R (bohr)  a(R) (bohr^2)\n")
        for R, a_value in table:
            handle.write(f"{R:.17g} {a_value:.17g}\n")


def read_softening_table(path, expected_digest=None):
    """
    Read a cached softening table.

    Returns:
        tuple or None: The table, or None when the stored hash does not match.
    """
    with open(path, encoding="utf-8") as handle:
        first = handle.readline().strip()
    stored = first[len(DIGEST_PREFIX):].strip() if first.startswith(DIGEST_PREFIX) else None
    if expected_digest is not None and stored != expected_digest:
        return None
    frame = pd.read_csv(path, sep=r"\s+", comment="#", header=None, names=["R", "a"])
    return tuple((float(r), float(a)) for r, a in frame.to_numpy(dtype=float))


def get_cached_softening_table(model, curve, x_grid, cache_path, dissociation_limit=None):
    """
    Cached version of calibrate_softening keyed by softening_digest.
    """
    digest = softening_digest(curve, x_grid, model, dissociation_limit)
    if os.path.exists(cache_path):
        table = read_softening_table(cache_path, expected_digest=digest)
        if table is not None:
            logger.info("softening table cache hit: %s", cache_path)
            return table
        logger.info("softening table cache at %s is stale, recalibrating", cache_path)
    else:
        logger.info("softening table cache miss: %s", cache_path)
    table = calibrate_softening(model, curve, x_grid, dissociation_limit=dissociation_limit)
    write_softening_table(cache_path, table, digest)
    return table
