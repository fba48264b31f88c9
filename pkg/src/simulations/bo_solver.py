"""
This module solves the Born-Oppenheimer problem on FGH grids.

1. scan_electronic:
   - Solves the electronic FGH problem at every R of the nuclear grid.
   - Keeps the lowest n_states eigenpairs and enforces phase continuity in R.
   - Output: ElectronicScan (PECs and electronic states).

2. solve_nuclear / solve_nuclear_curve:
   - FGH nuclear problem on one potential energy curve.
   - Output: VibronicState list below an energy cutoff, ascending in W.

3. bo_total_wavefunction:
   - Psi(x_i, R_j) = phi_n(x_i; R_j) chi_nm(R_j).

4. electronic_overlap / overlap_matrix:
   - S_n(R_k, R_l) = sum_i phi_n(x_i; R_k) phi_n(x_i; R_l).

5. pec_table / vibronic_table:
   - DataFrames for the pec.csv and vibronic.csv exports.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg
from joblib import Parallel, delayed

from src.calculations.fgh import (
    GridFunction,
    build_fgh_hamiltonian,
    kinetic_matrix,
    parity_projector,
    solve_symmetric,
)
from src.errors import ConfigurationError, NumericError, VibronicError

logger = logging.getLogger(__name__)

MODULE = "bo_solver"
NODE_THRESHOLD = 1e-6
SYMMETRIES = {None: None, "gerade": "even", "ungerade": "odd"}


@dataclass(frozen=True, eq=False)
class ElectronicScan:
    x_grid: object
    R_grid: object
    energies: np.ndarray
    states: np.ndarray
    picture: str = "adiabatic"
    symmetry: str = None

    @property
    def n_states(self):
        return self.energies.shape[0]

    def surface(self, n):
        """Electronic amplitudes phi_n(x_i; R_j) as an (N_x, N_R) array."""
        return self.states[n]


@dataclass(frozen=True, eq=False)
class VibronicState:
    surface: int
    m: int
    energy: float
    chi: GridFunction
    picture: str = "adiabatic"

    @property
    def label(self):
        return f"n{self.surface + 1}_m{self.m}"

    @property
    def nodes(self):
        return count_nodes(self.chi.values)


def count_nodes(values, threshold=NODE_THRESHOLD):
    """
    Sign changes of a grid function, ignoring amplitudes below threshold * max|values|.
    """
    values = np.asarray(values, dtype=float)
    scale = np.abs(values).max()
    if scale == 0:
        return 0
    signs = np.sign(values[np.abs(values) > threshold * scale])
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def _solve_column(model, x_grid, kinetic, projector, R, n_states):
    try:
        hamiltonian = build_fgh_hamiltonian(x_grid, model.electron_mass, model.potential(x_grid.points, R), kinetic=kinetic)
        if projector is not None:
            hamiltonian = projector.T @ hamiltonian @ projector
        values, vectors = solve_symmetric(hamiltonian, n_states)
    except VibronicError as e:
        raise type(e)(f"electronic solve failed at R={R:.10g}: {e.message}", module=MODULE, parameter="R") from e
    if projector is not None:
        vectors = projector @ vectors
    return values, vectors


def _fix_phases(states):
    # states: (n_states, N_x, N_R), modified in place
    for n in range(states.shape[0]):
        first = states[n, :, 0]
        if first[np.argmax(np.abs(first))] < 0:
            states[n, :, 0] = -first
        for j in range(1, states.shape[2]):
            if np.dot(states[n, :, j], states[n, :, j - 1]) < 0:
                states[n, :, j] = -states[n, :, j]
    return states


def scan_electronic(model, x_grid, R_grid, n_states, symmetry=None, n_jobs=1):
    """
    Electronic eigenpairs over the nuclear grid.

    Parameters:
        model: H2pModel or ShinMetiuModel (anything with potential(x, R) and electron_mass).
        x_grid (Grid1D): Electron grid.
        R_grid (Grid1D): Nuclear grid.
        n_states (int): Number of lowest states kept at each R.
        symmetry (str): None, "gerade" or "ungerade"; restricts the solve to one parity.
        n_jobs (int): joblib workers for the independent per-R solves.

    Returns:
        ElectronicScan: energies (n_states, N_R) and states (n_states, N_x, N_R).
    """
    if symmetry not in SYMMETRIES:
        raise ConfigurationError(f"unknown symmetry '{symmetry}'", module=MODULE, parameter="symmetry")
    if not 1 <= n_states <= x_grid.n_points:
        raise ConfigurationError(
            f"n_states={n_states} must lie in [1, {x_grid.n_points}]", module=MODULE, parameter="electronic_states"
        )
    projector = parity_projector(x_grid, SYMMETRIES[symmetry]) if symmetry else None
    if projector is not None and n_states > projector.shape[1]:
        raise ConfigurationError(
            f"n_states={n_states} exceeds the {symmetry} subspace dimension", module=MODULE, parameter="electronic_states"
        )
    kinetic = kinetic_matrix(x_grid, model.electron_mass)
    columns = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_solve_column)(model, x_grid, kinetic, projector, R, n_states) for R in R_grid.points
    )
    energies = np.array([values for values, _ in columns]).T
    states = np.stack([vectors for _, vectors in columns], axis=-1).transpose(1, 0, 2).copy()
    _fix_phases(states)
    return ElectronicScan(x_grid, R_grid, energies, states, picture="adiabatic", symmetry=symmetry)


def solve_nuclear_curve(potential, R_grid, nuclear_mass, surface, energy_cutoff, picture="adiabatic"):
    """
    Vibrational states of one potential energy curve below energy_cutoff.
    """
    hamiltonian = build_fgh_hamiltonian(R_grid, nuclear_mass, potential)
    try:
        values, vectors = scipy.linalg.eigh(hamiltonian, subset_by_value=(-np.inf, energy_cutoff))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(
            f"nuclear eigensolve failed on surface {surface + 1}: {e}", module=MODULE, parameter="energy_cutoff"
        ) from e
    keep = values < energy_cutoff
    values, vectors = values[keep], vectors[:, keep]
    if values.size == 0:
        logger.warning(
            "no vibrational state below cutoff %.6f on surface %d (curve minimum %.6f)",
            energy_cutoff, surface + 1, float(np.min(potential)),
        )
        return []
    states = []
    for m, energy in enumerate(values):
        chi = vectors[:, m]
        leading = np.flatnonzero(np.abs(chi) > NODE_THRESHOLD * np.abs(chi).max())[0]
        if chi[leading] < 0:
            chi = -chi
        state = VibronicState(surface, m, float(energy), GridFunction(R_grid, chi, normalized=True), picture)
        if state.nodes != m:
            logger.warning("surface %d state m=%d has %d nodes", surface + 1, m, state.nodes)
        states.append(state)
    return states


def solve_nuclear(scan, surface, nuclear_mass, energy_cutoff=None, bound_only=False):
    """
    Vibronic states on surface n of a scan.

    Parameters:
        scan (ElectronicScan): Electronic scan.
        surface (int): 0-based surface index.
        nuclear_mass (float): Mass of the nuclear kinetic term.
        energy_cutoff (float): Keep states with W below it; E_n(R_max) when None.
        bound_only (bool): Also cap the cutoff at E_n(R_max) (dissociative curves).

    Returns:
        list: VibronicState objects ascending in W.
    """
    if not 0 <= surface < scan.n_states:
        raise ConfigurationError(
            f"surface {surface + 1} not in scan with {scan.n_states} states", module=MODULE, parameter="surface"
        )
    potential = scan.energies[surface]
    cutoff = float(potential[-1]) if energy_cutoff is None else float(energy_cutoff)
    if bound_only and cutoff > potential[-1]:
        logger.info(
            "surface %d cutoff %.6f lowered to the asymptote %.6f", surface + 1, cutoff, float(potential[-1])
        )
        cutoff = float(potential[-1])
    return solve_nuclear_curve(potential, scan.R_grid, nuclear_mass, surface, cutoff, picture=scan.picture)


def _check_state(scan, state):
    if state.chi.grid != scan.R_grid or not 0 <= state.surface < scan.n_states:
        raise ConfigurationError(
            f"vibronic state {state.label} does not belong to this scan", module=MODULE, parameter="state"
        )


def bo_total_wavefunction(scan, state):
    """
    Bipartite BO amplitude table Psi(x_i, R_j) = phi_n(x_i; R_j) chi(R_j).
    """
    _check_state(scan, state)
    return scan.surface(state.surface) * state.chi.values[np.newaxis, :]


def electronic_overlap(scan, n, k, l):
    n_R = scan.R_grid.n_points
    if not (0 <= k < n_R and 0 <= l < n_R):
        raise ConfigurationError(f"R indices ({k}, {l}) outside [0, {n_R})", module=MODULE, parameter="R_index")
    phi = scan.surface(n)
    return float(np.dot(phi[:, k], phi[:, l]))


def overlap_matrix(scan, n, indices=None):
    """
    S_n(R_k, R_l) for all (or the selected) nuclear grid indices.
    """
    phi = scan.surface(n)
    if indices is not None:
        phi = phi[:, np.asarray(indices, dtype=int)]
    return phi.T @ phi


def pec_table(scan):
    table = {"R": scan.R_grid.points}
    for n in range(scan.n_states):
        table[f"E_{n + 1}"] = scan.energies[n]
    return pd.DataFrame(table)


def vibronic_table(states):
    return pd.DataFrame(
        {
            "n": [state.surface + 1 for state in states],
            "m": [state.m for state in states],
            "W": [state.energy for state in states],
        }
    )
