"""
This module prepares the data behind the entanglement figures (no rendering).

Functions:
1. vibrational_wavefunctions_table: chi_nm(R) per vibronic state in wide format, with W per column.
2. bh_marginals_table: Nuclear and electronic marginal densities of the most strongly mixed BH states.
3. schmidt_mode_tables: Leading Schmidt modes on x and on R for one state.
"""

import numpy as np
import pandas as pd

from src.simulations.born_huang import bh_total_wavefunction


def vibrational_wavefunctions_table(states, R_grid):
    """
    One row per R point, one column per vibronic state labelled n<surface>_m<index>.

    Parameters:
        states (list): VibronicState objects on R_grid.
        R_grid (Grid1D): Nuclear grid.

    Returns:
        tuple: (pd.DataFrame of chi values, pd.DataFrame of labels and energies)
    """
    table = {"R": R_grid.points}
    energies = {"label": [], "n": [], "m": [], "W": []}
    for state in states:
        table[state.label] = state.chi.values
        energies["label"].append(state.label)
        energies["n"].append(state.surface + 1)
        energies["m"].append(state.m)
        energies["W"].append(state.energy)
    return pd.DataFrame(table), pd.DataFrame(energies)


def most_mixed_states(solution, count=2):
    """
    Indices of BH states with the smallest dominant-channel weight, in ascending energy order.
    """
    order = np.argsort(solution.dominant_weight, kind="stable")[:count]
    return sorted(int(k) for k in order)


def bh_marginals_table(scan, basis, solution, count=2):
    """
    Marginal densities |Psi|^2 integrated over x (nuclear) and over R (electronic).

    Returns:
        tuple: (nuclear marginals on R, electronic marginals on x) as DataFrames.
    """
    nuclear = {"R": scan.R_grid.points}
    electronic = {"x": scan.x_grid.points}
    for k in most_mixed_states(solution, count):
        psi = bh_total_wavefunction(scan, basis.states, solution.coefficients[k])
        density = psi**2
        nuclear[f"state_{k + 1}"] = density.sum(axis=0)
        electronic[f"state_{k + 1}"] = density.sum(axis=1)
    return pd.DataFrame(nuclear), pd.DataFrame(electronic)


def schmidt_mode_tables(result, x_grid, R_grid, n_modes=2):
    n_modes = min(n_modes, result.n_modes)
    electronic = {"coordinate": x_grid.points}
    nuclear = {"coordinate": R_grid.points}
    for k in range(n_modes):
        electronic[f"mode_{k + 1}"] = result.electronic_modes[:, k]
        nuclear[f"mode_{k + 1}"] = result.nuclear_modes[:, k]
    return pd.DataFrame(electronic), pd.DataFrame(nuclear)
