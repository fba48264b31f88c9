"""
This module tests the diabatization in `src/simulations/diabatization.py`.

1. test_diabatic_matrix_closed_form:
   - Closed forms equal U_T^T diag(V) U_T; eigenvalues and trace are preserved.

2. test_fit_angle_model_recovers_parameters:
   - Input: the exact Gaussian derivative of an erf angle.
   - Expected: amplitude, center and width within 1e-6.

3. test_hellmann_feynman_vs_finite_difference:
   - Analytic couplings agree with overlap differences on a fine R patch.

4. test_diabatize_small_scan:
   - Full diabatization of a coarse Shin-Metiu scan keeps the adiabatic spectrum.

5. test_rotation_order_insensitive / test_angles_vanish_at_the_other_crossing:
   - Each angle is zero where the other one varies, so U_1 U_2 = U_2 U_1 within 1e-6.

6. test_diabatic_states_smooth_across_sharp_crossing:
   - Neighbouring diabatic states overlap by more than 0.99 across R = -3.
"""

import numpy as np
import pytest
from scipy.integrate import trapezoid

from src.calculations.fgh import Grid1D
from src.calculations.potentials import H2pModel
from src.errors import ConfigurationError, FitError
from src.simulations.bo_solver import scan_electronic
from src.simulations.diabatization import (
    RotationAngleModel,
    couplings_table,
    diabatic_matrix,
    diabatic_nuclear_solve,
    diabatic_states,
    diabatize,
    fit_angle_model,
    fit_rotation_angles,
    fitted_nac,
    nac_finite_difference,
    nac_hellmann_feynman,
    rotation_matrix,
    second_order_B,
)

R = np.linspace(-8.9, 8.9, 1001)


@pytest.fixture(scope="module")
def diabatic_result(small_scan, shin_metiu_model):
    return diabatize(small_scan, shin_metiu_model)


def test_rotation_matrix_orthogonal():
    """
    Test that U_T is orthogonal for scalar and array angles.
    """
    single = rotation_matrix(0.3, -1.1)
    assert np.allclose(single @ single.T, np.eye(3), atol=1e-14), "U_T should be orthogonal"
    stacked = rotation_matrix(np.linspace(0, 1, 5), np.linspace(0, 2, 5))
    assert stacked.shape == (5, 3, 3), "Incorrect stacked shape"
    assert np.allclose(rotation_matrix(0.0, 0.0), np.eye(3)), "Zero angles should give the identity"


def test_diabatic_matrix_closed_form():
    """
    Test the closed-form diabatic matrix against the explicit rotation.
    """
    rng = np.random.default_rng(3)
    for _ in range(5):
        energies = np.sort(rng.normal(size=3))
        theta, phi = rng.uniform(-np.pi, np.pi, size=2)
        rotation = rotation_matrix(theta, phi)
        expected = rotation.T @ np.diag(energies) @ rotation
        closed = diabatic_matrix(energies, theta, phi)
        assert np.allclose(closed, expected, atol=1e-12), "Closed forms differ from U^T diag(V) U"
        assert np.allclose(np.linalg.eigvalsh(closed), energies, atol=1e-8), "Spectrum should be preserved"
        assert abs(np.trace(closed) - energies.sum()) < 1e-10, "Trace should be preserved"


def test_angle_model():
    """
    Test the erf angle model and its derivative.
    """
    model = RotationAngleModel(np.pi / 4, np.pi / 4, -3.0, 0.3)
    assert abs(model.angle(-20.0)) < 1e-12, "Angle should start at 0"
    assert abs(model.angle(20.0) - np.pi / 2) < 1e-12, "Angle should end at 2K"
    numeric = np.gradient(model.angle(R), R)
    assert np.allclose(model.derivative(R), numeric, atol=2e-2), "Derivative does not match the angle"
    assert np.all(np.diff(model.angle(R)) >= 0), "Angle should be monotone"


def test_fit_angle_model_recovers_parameters():
    """
    Test that exact synthetic couplings are fitted back.
    """
    truth = RotationAngleModel(0.7, 0.7, -3.0, 0.3)
    fitted = fit_angle_model(R, truth.derivative(R))
    assert abs(fitted.amplitude - 0.7) < 1e-6, "Amplitude not recovered"
    assert abs(fitted.center + 3.0) < 1e-6, "Center not recovered"
    assert abs(fitted.width - 0.3) < 1e-6, "Width not recovered"
    fixed = fit_angle_model(R, truth.derivative(R), amplitude=0.7)
    assert abs(fixed.center + 3.0) < 1e-6 and abs(fixed.width - 0.3) < 1e-6, "Fixed-amplitude fit failed"


def test_fit_without_signal():
    """
    Test that an all-zero coupling raises FitError.
    """
    with pytest.raises(FitError):
        fit_angle_model(R, np.zeros_like(R))


def test_fit_rotation_angles_synthetic():
    """
    Test theta/phi fits on a synthetic coupling field.
    """
    theta = RotationAngleModel(np.pi / 4, np.pi / 4, -3.0, 0.2)
    phi = RotationAngleModel(0.5, 0.5, 1.2, 0.8)
    field = fitted_nac(R, theta, phi)
    fit_theta, fit_phi = fit_rotation_angles(R, field)
    assert abs(fit_theta.center + 3.0) < 1e-6 and abs(fit_theta.width - 0.2) < 1e-6, "theta fit failed"
    assert abs(fit_phi.amplitude - 0.5) < 1e-6, "phi amplitude should come from the integral"
    assert abs(fit_phi.center - 1.2) < 1e-6, "phi center not recovered"


def test_coupling_algebra():
    """
    Test antisymmetry of A and symmetry of B = A.A.
    """
    theta = RotationAngleModel(np.pi / 4, np.pi / 4, -3.0, 0.2)
    phi = RotationAngleModel(0.5, 0.5, 1.2, 0.8)
    field = fitted_nac(R, theta, phi)
    assert np.array_equal(field, -field.transpose(0, 2, 1)), "A should be antisymmetric"
    B = second_order_B(field)
    assert np.array_equal(B, B.transpose(0, 2, 1)), "B should be symmetric"
    assert np.all(np.einsum("rnn->rn", B) <= 0), "Diagonal of A.A should be non-positive"
    single = second_order_B(field[500])
    assert np.allclose(single, B[500]), "Single-R input should match the field"


def test_hellmann_feynman_vs_finite_difference(shin_metiu_model):
    """
    Test analytic couplings against overlap differences on a fine R patch.
    """
    x_grid = Grid1D.from_bounds(-22.0, 22.0, 201)
    R_grid = Grid1D.from_bounds(0.0, 0.2, 21)
    scan = scan_electronic(shin_metiu_model, x_grid, R_grid, 3)
    analytic = nac_hellmann_feynman(scan, shin_metiu_model)
    numeric = nac_finite_difference(scan)
    assert np.array_equal(analytic, -analytic.transpose(0, 2, 1)), "HF couplings should be antisymmetric"
    assert np.all(np.einsum("rnn->rn", analytic) == 0), "HF diagonal should vanish"
    scale = np.abs(analytic).max()
    assert np.abs(analytic[1:-1] - numeric[1:-1]).max() < 1e-3 * scale + 1e-6, "HF and FD couplings disagree"


def test_hellmann_feynman_needs_derivative(small_scan):
    """
    Test that models without dU/dR are rejected.
    """
    with pytest.raises(ConfigurationError):
        nac_hellmann_feynman(small_scan, H2pModel())


def test_diabatize_small_scan(small_scan, diabatic_result):
    """
    Test the full diabatization of a coarse scan.
    """
    potential = diabatic_result.potential
    assert potential.shape == (121, 3, 3), "Incorrect diabatic matrix shape"
    assert np.array_equal(potential, potential.transpose(0, 2, 1)), "V^D should be symmetric"
    spectrum = np.linalg.eigvalsh(potential)
    assert np.allclose(spectrum, small_scan.energies.T, atol=1e-8), "V^D should keep the adiabatic energies"
    assert abs(diabatic_result.theta.total_change - np.pi / 2) < 1e-12 \
        or abs(diabatic_result.theta.total_change + np.pi / 2) < 1e-12, "theta should span pi/2"
    assert diabatic_result.theta.width > 0 and diabatic_result.phi.width > 0, "Widths should be positive"
    table = couplings_table(diabatic_result)
    expected = ["R", "V1D", "V2D", "V3D", "V12", "V13", "V23", "A12", "A13", "A23", "theta", "phi"]
    assert list(table.columns) == expected, "Incorrect couplings columns"


def test_diabatic_states(small_scan, diabatic_result):
    """
    Test that rotated states stay orthonormal and carry the diabatic diagonal.
    """
    points = small_scan.R_grid.points
    scan = diabatic_states(small_scan, diabatic_result.theta.angle(points), diabatic_result.phi.angle(points))
    assert scan.picture == "diabatic", "Rotated scan should be labelled diabatic"
    for j in (0, 40, 80, 120):
        column = scan.states[:, :, j]
        assert np.allclose(column @ column.T, np.eye(3), atol=1e-10), "Diabatic states are not orthonormal"
    assert np.allclose(scan.energies, diabatic_result.diagonal, atol=1e-12), "Energies should be the V^D diagonal"


def test_diabatic_nuclear_solve(small_scan, diabatic_result, shin_metiu_model):
    """
    Test vibrational states on the diabatic curves.
    """
    cutoffs = [float(curve.min()) + 0.005 for curve in diabatic_result.diagonal]
    states = diabatic_nuclear_solve(diabatic_result.diagonal, small_scan.R_grid, shin_metiu_model.nuclear_mass, cutoffs)
    assert sorted(states) == [0, 1, 2], "Expected one entry per surface"
    assert all(state.picture == "diabatic" for group in states.values() for state in group), "Incorrect picture"
    assert len(states[0]) >= 1, "Lowest diabatic curve should bind a state"


def test_diabatize_needs_three_states(shin_metiu_model):
    """
    Test that two-state scans are rejected.
    """
    x_grid = Grid1D.from_bounds(-22.0, 22.0, 51)
    R_grid = Grid1D.from_bounds(-1.0, 1.0, 5)
    scan = scan_electronic(shin_metiu_model, x_grid, R_grid, 2)
    with pytest.raises(ConfigurationError):
        diabatize(scan, shin_metiu_model)


def _separated_angles():
    theta = RotationAngleModel(np.pi / 4, np.pi / 4, -3.0, 0.2)
    phi = RotationAngleModel(0.5, 0.5, 1.2, 0.8)
    return fit_rotation_angles(R, fitted_nac(R, theta, phi))


def test_angles_vanish_at_the_other_crossing():
    """
    Test that theta runs from -/+pi/2 to 0 and is zero where phi varies, and phi is zero where theta varies.
    """
    theta, phi = _separated_angles()
    assert abs(theta.angle(R[-1])) < 1e-12, "theta should vanish right of its crossing"
    assert abs(abs(theta.angle(R[0])) - np.pi / 2) < 1e-12, "theta should reach pi/2 left of its crossing"
    assert abs(theta.angle(1.2)) < 1e-12, "theta should vanish at the second crossing"
    assert abs(phi.angle(R[0])) < 1e-12, "phi should vanish left of its crossing"
    assert abs(phi.angle(-3.0)) < 1e-6, "phi should vanish at the first crossing"
    mirrored = fitted_nac(R, RotationAngleModel(np.pi / 4, 0.0, 3.0, 0.2), RotationAngleModel(0.5, 0.0, -1.2, 0.8))
    theta, phi = fit_rotation_angles(R, mirrored)
    assert abs(theta.angle(R[0])) < 1e-12, "Mirrored theta should vanish left of its crossing"
    assert abs(phi.angle(R[-1])) < 1e-12, "Mirrored phi should vanish right of its crossing"


def test_rotation_order_insensitive():
    """
    Test that U_1 U_2 and U_2 U_1 agree below 1e-6 for well separated crossings.
    """
    theta, phi = _separated_angles()
    first = rotation_matrix(theta.angle(R), np.zeros_like(R))
    second = rotation_matrix(np.zeros_like(R), phi.angle(R))
    difference = np.abs(first @ second - second @ first).max()
    assert difference < 1e-6, f"Rotation order matters: {difference:.2e}"
    assert np.allclose(rotation_matrix(theta.angle(R), phi.angle(R)), first @ second), "U_T should be U_1 U_2"


def test_zero_side_option():
    """
    Test the K0 = K and K0 = -K anchors of a single fit.
    """
    truth = RotationAngleModel(0.7, 0.7, -3.0, 0.3)
    left = fit_angle_model(R, truth.derivative(R))
    right = fit_angle_model(R, truth.derivative(R), zero_side="right")
    assert abs(left.angle(R[0])) < 1e-9 and abs(right.angle(R[-1])) < 1e-9, "Incorrect anchors"
    assert np.allclose(left.derivative(R), right.derivative(R)), "Anchors should not change the derivative"
    with pytest.raises(ConfigurationError):
        fit_angle_model(R, truth.derivative(R), zero_side="middle")


def test_crossing_geometry_small_scan(small_scan, diabatic_result):
    """
    Test the A_12 peak position, crossing separation and angle anchoring on a coarse scan.
    """
    points = small_scan.R_grid.points
    peak = points[int(np.argmax(np.abs(diabatic_result.nac[:, 1, 0])))]
    assert abs(peak + 3.0) <= 0.2, f"A_12 should peak near R = -3.0, found {peak:.3f}"
    theta, phi = diabatic_result.theta, diabatic_result.phi
    assert abs(theta.center + 3.0) <= 0.2, f"theta center {theta.center:.3f} not near -3.0"
    separation = abs(theta.center - phi.center)
    assert separation > 3.0 * max(theta.width, phi.width), "Crossings should be separated by more than 3 widths"
    assert abs(theta.angle(phi.center)) < 1e-6, "theta should vanish at the second crossing"
    assert abs(phi.angle(theta.center)) < 1e-3, "phi should vanish at the first crossing"


def test_diabatic_states_smooth_across_sharp_crossing(shin_metiu_model):
    """
    Test that diabatic states overlap by more than 0.99 between neighbouring R across R = -3.
    """
    x_grid = Grid1D.from_bounds(-22.0, 22.0, 201)
    R_grid = Grid1D.from_bounds(-4.0, -2.0, 41)
    scan = scan_electronic(shin_metiu_model, x_grid, R_grid, 3)
    points = R_grid.points
    data = nac_hellmann_feynman(scan, shin_metiu_model)[:, 1, 0]
    amplitude = np.sign(trapezoid(data, points)) * np.pi / 4
    theta = fit_angle_model(points, data, amplitude=amplitude, zero_side="right")
    rotated = diabatic_states(scan, theta.angle(points), np.zeros_like(points))

    def neighbour_overlaps(states, j):
        return np.abs(np.einsum("xr,xr->r", states[j, :, :-1], states[j, :, 1:]))

    for j in (0, 1):
        diabatic = neighbour_overlaps(rotated.states, j)
        adiabatic = neighbour_overlaps(scan.states, j)
        assert diabatic.min() > 0.99, f"Diabatic state {j + 1} jumps: min overlap {diabatic.min():.4f}"
        assert diabatic.min() >= adiabatic.min(), "Diabatic states should be smoother than adiabatic ones"


def test_diabatic_ground_level_matches_adiabatic(small_scan, small_channels, diabatic_result, shin_metiu_model):
    """
    Test that the lowest diabatic vibronic level equals the adiabatic one far below the crossings.
    """
    cutoffs = [float(curve.min()) + 0.005 for curve in diabatic_result.diagonal]
    states = diabatic_nuclear_solve(diabatic_result.diagonal, small_scan.R_grid, shin_metiu_model.nuclear_mass, cutoffs)
    lowest = min(group[0].energy for group in states.values() if group)
    adiabatic = small_channels[0][0].energy
    assert lowest >= adiabatic - 1e-8, "Diabatic diagonal cannot lie below the adiabatic ground curve"
    assert lowest - adiabatic < 1e-4, f"Ground levels differ by {lowest - adiabatic:.2e}"
