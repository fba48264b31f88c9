"""
This module tests the figure-data tables in `src/visualizations/figure_data.py`.
"""

import numpy as np

from src.calculations.entanglement import schmidt_decompose
from src.simulations.bo_solver import bo_total_wavefunction
from src.simulations.born_huang import assemble_bh_matrix, solve_bh
from src.visualizations.figure_data import (
    bh_marginals_table,
    most_mixed_states,
    schmidt_mode_tables,
    vibrational_wavefunctions_table,
)


def test_vibrational_wavefunctions_table(harmonic_states, harmonic_grid):
    """
    Test the wide chi table and its energy index.
    """
    chi, energies = vibrational_wavefunctions_table(harmonic_states, harmonic_grid)
    assert list(chi.columns) == ["R"] + [state.label for state in harmonic_states], "Incorrect columns"
    assert len(chi) == harmonic_grid.n_points, "One row per R point expected"
    assert np.allclose((chi.drop(columns="R") ** 2).sum(axis=0), 1.0), "Columns should be normalized"
    assert energies["n"].tolist() == [1] * len(harmonic_states), "Surface should be 1-based"


def test_schmidt_mode_tables(small_scan, small_channels):
    """
    Test that mode tables keep the requested number of modes on each grid.
    """
    result = schmidt_decompose(bo_total_wavefunction(small_scan, small_channels[0][0]))
    electronic, nuclear = schmidt_mode_tables(result, small_scan.x_grid, small_scan.R_grid, 3)
    assert list(electronic.columns) == ["coordinate", "mode_1", "mode_2", "mode_3"], "Incorrect mode columns"
    assert len(electronic) == small_scan.x_grid.n_points and len(nuclear) == small_scan.R_grid.n_points, \
        "Modes should live on their own grids"


def test_bh_marginals(small_scan, small_channels):
    """
    Test that marginal densities of one-hot BH states integrate to 1.
    """
    zeros = np.zeros((small_scan.R_grid.n_points, 3, 3))
    basis = assemble_bh_matrix(small_channels, zeros, zeros, 1836.152673)
    solution = solve_bh(basis)
    assert most_mixed_states(solution, 2) == sorted(most_mixed_states(solution, 2)), "Indices should ascend"
    nuclear, electronic = bh_marginals_table(small_scan, basis, solution)
    assert nuclear.columns[0] == "R" and electronic.columns[0] == "x", "Incorrect coordinate columns"
    for column in nuclear.columns[1:]:
        assert abs(nuclear[column].sum() - 1.0) < 1e-10, "Nuclear marginal should sum to 1"
        assert abs(electronic[column].sum() - 1.0) < 1e-10, "Electronic marginal should sum to 1"
