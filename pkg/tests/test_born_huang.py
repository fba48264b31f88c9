"""
This module tests the Born-Huang solver in `src/simulations/born_huang.py`.

1. test_zero_coupling_reduces_to_bo:
   - A = B = 0 gives the BO energies and one-hot coefficients.

2. test_two_channel_oracle:
   - Constant A between two channels reproduces the closed-form 2x2 matrix.

3. test_inconsistent_coupling_rejected:
   - A field that is not antisymmetric raises AssemblyError.

4. test_degenerate_pair_mixes_evenly:
   - Two degenerate channels coupled by a constant A mix 50/50 and are reported as the two leading channels.
"""

import numpy as np
import pytest

from src.calculations.entanglement import schmidt_decompose
from src.calculations.fgh import spectral_derivative_matrix
from src.errors import AssemblyError, ConfigurationError
from src.simulations.bo_solver import VibronicState, bo_total_wavefunction, solve_nuclear
from src.simulations.born_huang import (
    assemble_bh_matrix,
    bh_entropies,
    bh_report,
    bh_total_wavefunction,
    coefficient_records,
    solve_bh,
)
from src.simulations.diabatization import diabatize, second_order_B


@pytest.fixture(scope="module")
def diabatic_fields(small_scan, shin_metiu_model):
    result = diabatize(small_scan, shin_metiu_model)
    return result.fitted_nac, result.second_order


def _two_channels(harmonic_states):
    lower = harmonic_states[0]
    upper = VibronicState(1, 0, harmonic_states[1].energy + 0.3, harmonic_states[1].chi)
    return [[lower], [upper]]


def _constant_field(n_points, a, antisymmetric=True):
    field = np.zeros((n_points, 2, 2))
    field[:, 0, 1] = a
    field[:, 1, 0] = -a if antisymmetric else a
    return field


def test_zero_coupling_reduces_to_bo(small_channels):
    """
    Test that zero couplings leave the BO problem unchanged.
    """
    n_R = small_channels[0][0].chi.grid.n_points
    zeros = np.zeros((n_R, 3, 3))
    basis = assemble_bh_matrix(small_channels, zeros, zeros, 1836.152673)
    solution = solve_bh(basis)
    bo = np.sort([state.energy for group in small_channels.values() for state in group])
    assert np.allclose(solution.energies, bo, rtol=0, atol=1e-14), "BH energies should equal BO energies"
    assert np.allclose(solution.dominant_weight, 1.0), "Coefficients should be one-hot"
    assert basis.asymmetry == 0.0, "Zero coupling should be exactly symmetric"


def test_two_channel_oracle(harmonic_states, harmonic_grid):
    """
    Test the assembled matrix against the closed-form 2x2 problem.
    """
    a, mass = 0.1, 1.0
    channels = _two_channels(harmonic_states)
    field = _constant_field(harmonic_grid.n_points, a)
    basis = assemble_bh_matrix(channels, field, second_order_B(field), mass)
    chi_a, chi_b = channels[0][0].chi.values, channels[1][0].chi.values
    d = chi_a @ spectral_derivative_matrix(harmonic_grid) @ chi_b
    w_a, w_b = channels[0][0].energy, channels[1][0].energy
    expected = np.array([
        [w_a + a**2 / (2 * mass), -(a / mass) * d],
        [-(a / mass) * d, w_b + a**2 / (2 * mass)],
    ])
    assert np.abs(basis.hamiltonian - expected).max() < 1e-10, "Assembled matrix differs from the 2x2 oracle"
    solution = solve_bh(basis)
    assert np.allclose(solution.energies, np.linalg.eigvalsh(expected), atol=1e-8), "Incorrect BH energies"
    assert np.allclose(np.sum(solution.coefficients**2, axis=1), 1.0, atol=1e-10), "Rows should be normalized"


def test_inconsistent_coupling_rejected(harmonic_states, harmonic_grid):
    """
    Test that a symmetric (inconsistent) A field is rejected.
    """
    channels = _two_channels(harmonic_states)
    field = _constant_field(harmonic_grid.n_points, 0.1, antisymmetric=False)
    with pytest.raises(AssemblyError):
        assemble_bh_matrix(channels, field, np.zeros_like(field), 1.0)


def test_basis_validation(harmonic_states, harmonic_grid):
    """
    Test channel and grid checks of the assembly.
    """
    field = np.zeros((harmonic_grid.n_points, 2, 2))
    with pytest.raises(ConfigurationError):
        assemble_bh_matrix([harmonic_states[:2]], field, field, 1.0)
    with pytest.raises(ConfigurationError):
        assemble_bh_matrix(_two_channels(harmonic_states), field[:10], field[:10], 1.0)


def test_bh_wavefunction(small_scan, small_channels):
    """
    Test one-hot collapse and norm preservation of the BH amplitude table.
    """
    states = [small_channels[0][0], small_channels[0][1], small_channels[1][0]]
    one_hot = bh_total_wavefunction(small_scan, states, [1.0, 0.0, 0.0])
    assert np.abs(one_hot - bo_total_wavefunction(small_scan, states[0])).max() < 1e-14, \
        "One-hot coefficients should give the BO table"
    rng = np.random.default_rng(7)
    coefficients = rng.normal(size=3)
    coefficients /= np.linalg.norm(coefficients)
    psi = bh_total_wavefunction(small_scan, states, coefficients)
    assert abs(np.sum(psi**2) - 1.0) < 1e-8, "BH amplitude table should be normalized"


def test_coupled_small_basis(small_scan, small_channels, diabatic_fields):
    """
    Test a coupled BH solve on the coarse scan: Weyl bound, entropies and report.
    """
    couplings, second_order = diabatic_fields
    basis = assemble_bh_matrix(small_channels, couplings, second_order, 1836.152673)
    assert np.array_equal(basis.coupling, basis.coupling.T), "Coupling matrix should be symmetrized"
    solution = solve_bh(basis)
    assert solution.energies[0] <= basis.energies.min() + basis.coupling_norm, "Weyl bound violated"
    entropies = bh_entropies(small_scan, basis, solution)
    assert np.all(np.isfinite(entropies)) and np.all(entropies >= -1e-9), "BH entropies should be finite and >= 0"
    report = bh_report(solution, entropies)
    assert list(report.columns) == [
        "state", "W", "S", "dominant_n", "dominant_m", "dominant_weight", "second_n", "second_m", "second_weight"
    ], "Incorrect report columns"
    assert np.all(report["second_weight"] <= report["dominant_weight"]), "Second channel cannot outweigh the first"
    assert report["state"].iloc[0] == 1, "States should be numbered from 1"
    records = coefficient_records(solution, [0])
    assert len(records[0]["coefficients"]) == len(basis.states), "Every channel should be listed"


def test_one_hot_entropy_matches_bo(small_scan, small_channels):
    """
    Test that an uncoupled BH state has the BO entropy.
    """
    n_R = small_scan.R_grid.n_points
    zeros = np.zeros((n_R, 3, 3))
    basis = assemble_bh_matrix(small_channels, zeros, zeros, 1836.152673)
    solution = solve_bh(basis)
    entropies = bh_entropies(small_scan, basis, solution)
    for k in range(min(3, solution.n_states)):
        n, m = solution.dominant_channel[k]
        bo_state = small_channels[n][m]
        expected = schmidt_decompose(bo_total_wavefunction(small_scan, bo_state)).entropy
        assert abs(entropies[k] - expected) < 1e-8, "One-hot BH entropy should equal the BO entropy"



def test_degenerate_pair_mixes_evenly(harmonic_states, harmonic_grid):
    """
    Test that degenerate coupled channels give two 50/50 states with both channels reported.
    """
    lower = harmonic_states[0]
    partner = VibronicState(1, 0, lower.energy, harmonic_states[1].chi)
    field = _constant_field(harmonic_grid.n_points, 0.1)
    basis = assemble_bh_matrix([[lower], [partner]], field, second_order_B(field), 1.0)
    solution = solve_bh(basis)
    for k in range(2):
        (first, first_weight), (second, second_weight) = solution.leading_channels(k)
        assert {first, second} == {(0, 0), (1, 0)}, "Both channels should lead"
        assert abs(first_weight - 0.5) < 1e-10 and abs(second_weight - 0.5) < 1e-10, "Degenerate pair should mix evenly"
    report = bh_report(solution, [0.0, 0.0])
    assert set(report["second_n"]) | set(report["dominant_n"]) == {1, 2}, "Report should name both surfaces"
    assert np.allclose(report["second_weight"], 0.5), "Incorrect second weight"


def test_channel_cutoff_convergence(small_scan, small_channels, diabatic_fields, shin_metiu_model):
    """
    Test that raising every channel cutoff by 0.02 moves the lowest BH energies by less than 1e-4.
    """
    couplings, second_order = diabatic_fields
    mass = shin_metiu_model.nuclear_mass
    narrow = solve_bh(assemble_bh_matrix(small_channels, couplings, second_order, mass))
    wider_channels = {
        n: solve_nuclear(small_scan, n, mass, float(small_scan.energies[n].min()) + 0.03) for n in range(3)
    }
    wide = solve_bh(assemble_bh_matrix(wider_channels, couplings, second_order, mass))
    shift = narrow.energies[:2] - wide.energies[:2]
    assert np.all(shift >= -1e-10), "A larger basis cannot raise the lowest energies"
    assert np.all(shift < 1e-4), f"Lowest BH energies moved by {shift.max():.2e}"
