"""
This module builds the diabatic picture of a three-state electronic scan.

1. nac_hellmann_feynman / nac_finite_difference:
   - First-order couplings A_nn'(R) = <phi_n | d/dR phi_n'>, from the off-diagonal
     Hellmann-Feynman theorem or from overlaps of neighbouring R columns.

2. RotationAngleModel / fit_angle_model / fit_rotation_angles:
   - angle(R) = K erf((R - R_c) / Gamma) + K0 fitted through its Gaussian derivative.

3. rotation_matrix / diabatic_matrix / diabatic_states:
   - U_T = U_1(theta) U_2(phi), V^D = U_T^T diag(V^A) U_T, phi^D = U_T^T phi^A.

4. diabatic_nuclear_solve:
   - Vibrational states on the diabatic diagonal curves.

5. second_order_B / fitted_nac:
   - B = A.A and the analytic A field of the fitted angle models.

6. diabatize / couplings_table:
   - Full pipeline step and the couplings.csv table.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
import scipy.optimize
from scipy.integrate import trapezoid
from scipy.special import erf

from src.errors import ConfigurationError, DomainError, FitError
from src.simulations.bo_solver import ElectronicScan, solve_nuclear_curve

logger = logging.getLogger(__name__)

MODULE = "diabatization"
GAP_THRESHOLD = 1e-8


@dataclass(frozen=True)
class RotationAngleModel:
    amplitude: float
    offset: float
    center: float
    width: float
    residual: float = 0.0

    def __post_init__(self):
        if not self.width > 0:
            raise DomainError(f"rotation width must be positive, got {self.width}", module=MODULE, parameter="width")

    def angle(self, R):
        return self.amplitude * erf((np.asarray(R, dtype=float) - self.center) / self.width) + self.offset

    def derivative(self, R):
        return _angle_derivative(np.asarray(R, dtype=float), self.amplitude, self.center, self.width)

    @property
    def total_change(self):
        return 2.0 * self.amplitude


@dataclass(frozen=True, eq=False)
class DiabaticResult:
    R_grid: object
    potential: np.ndarray
    nac: np.ndarray
    fitted_nac: np.ndarray
    second_order: np.ndarray
    theta: RotationAngleModel
    phi: RotationAngleModel

    @property
    def diagonal(self):
        """Diabatic curves V_n^D(R) as an (n_states, N_R) array."""
        return np.einsum("rnn->nr", self.potential)


def _angle_derivative(R, amplitude, center, width):
    return 2.0 * amplitude / np.sqrt(np.pi * width**2) * np.exp(-((R - center) / width) ** 2)


def nac_hellmann_feynman(scan, model, gap_threshold=GAP_THRESHOLD):
    """
    A_nn'(R) = <phi_n| dU/dR |phi_n'> / (E_n' - E_n).

    Parameters:
        scan (ElectronicScan): Phase-continuous adiabatic scan.
        model: Model providing potential_derivative(x, R).
        gap_threshold (float): Gaps below it are masked to 0 with a warning.

    Returns:
        np.ndarray: (N_R, n_states, n_states), antisymmetric, zero diagonal.
    """
    if not hasattr(model, "potential_derivative"):
        raise ConfigurationError(
            f"model '{model.name}' has no analytic dU/dR", module=MODULE, parameter="model"
        )
    x = scan.x_grid.points
    slopes = np.column_stack([model.potential_derivative(x, R) for R in scan.R_grid.points])
    elements = np.einsum("nxr,mxr->rnm", scan.states * slopes[np.newaxis], scan.states, optimize=True)
    elements = 0.5 * (elements + elements.transpose(0, 2, 1))
    gaps = scan.energies.T[:, np.newaxis, :] - scan.energies.T[:, :, np.newaxis]
    masked = np.abs(gaps) <= gap_threshold
    off_diagonal = ~np.eye(scan.n_states, dtype=bool)[np.newaxis]
    bad = masked & off_diagonal
    if np.any(bad):
        rows = np.flatnonzero(bad.any(axis=(1, 2)))
        logger.warning(
            "masked %d coupling entries with gap <= %.1e (first at R=%.6f)",
            int(bad.sum()), gap_threshold, scan.R_grid.points[rows[0]],
        )
    safe = np.where(masked, 1.0, gaps)
    return np.where(masked, 0.0, elements / safe)


def nac_finite_difference(scan):
    """
    Central-difference overlap derivative <phi_n(R_j) | phi_n'(R_j +- h)> / (2h).
    """
    phi = scan.states
    h = scan.R_grid.delta_r
    n_R = scan.R_grid.n_points
    couplings = np.zeros((n_R, scan.n_states, scan.n_states))
    for j in range(n_R):
        ahead = min(j + 1, n_R - 1)
        behind = max(j - 1, 0)
        forward = phi[:, :, j] @ phi[:, :, ahead].T
        backward = phi[:, :, j] @ phi[:, :, behind].T
        couplings[j] = (forward - backward) / ((ahead - behind) * h)
    couplings[:, np.arange(scan.n_states), np.arange(scan.n_states)] = 0.0
    return couplings


def fit_angle_model(R, coupling, amplitude=None, zero_side="left"):
    """
    Least-squares fit of 2K / sqrt(pi Gamma^2) exp(-(R - R_c)^2 / Gamma^2) to a coupling.

    Parameters:
        R (array-like): Nuclear grid points.
        coupling (array-like): Coupling values on R.
        amplitude (float): Fixed K; fitted when None.
        zero_side (str): "left" sets K0 = K (angle 0 for R << R_c), "right" sets K0 = -K (angle 0 for R >> R_c).

    Returns:
        RotationAngleModel: Fitted model.
    """
    if zero_side not in ("left", "right"):
        raise ConfigurationError(f"zero_side must be 'left' or 'right', got {zero_side!r}", module=MODULE,
                                 parameter="zero_side")
    R = np.asarray(R, dtype=float)
    data = np.asarray(coupling, dtype=float)
    if not np.all(np.isfinite(data)) or not np.any(data):
        raise FitError("coupling has no finite signal to fit", module=MODULE, parameter="coupling")
    peak = int(np.argmax(np.abs(data)))
    height = data[peak]
    area = trapezoid(data, R)
    if area == 0:
        area = height * (R[1] - R[0])
    width_guess = max(abs(area / (np.sqrt(np.pi) * height)), R[1] - R[0])
    history = []

    def unpack(params):
        if amplitude is None:
            return params
        return (amplitude, params[0], params[1])

    def residuals(params):
        k, center, width = unpack(params)
        misfit = _angle_derivative(R, k, center, width) - data
        history.append(float(np.linalg.norm(misfit)))
        return misfit

    if amplitude is None:
        start = [area / 2.0, R[peak], width_guess]
        bounds = ([-np.inf, R[0], 1e-8], [np.inf, R[-1], np.inf])
    else:
        start = [R[peak], width_guess]
        bounds = ([R[0], 1e-8], [R[-1], np.inf])
    try:
        result = scipy.optimize.least_squares(
            residuals, start, bounds=bounds, method="trf", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=5000
        )
    except (ValueError, np.linalg.LinAlgError) as e:
        raise FitError(f"angle fit failed: {e}", module=MODULE, parameter="coupling",
                       residual_history=history[-10:]) from e
    if not result.success:
        raise FitError(
            f"angle fit did not converge: {result.message}", module=MODULE, parameter="coupling",
            residual_history=history[-10:],
        )
    k, center, width = unpack(result.x)
    rms = float(np.sqrt(np.mean(result.fun**2)))
    offset = float(k) if zero_side == "left" else -float(k)
    return RotationAngleModel(float(k), offset, float(center), float(width), rms)


def fit_rotation_angles(R, couplings, theta_span=np.pi / 2):
    """
    Fit theta to A_21 and phi to A_32.

    Each angle vanishes on the side facing the other crossing, so U_1 is the
    identity where phi varies and U_2 is the identity where theta varies.

    Parameters:
        R (array-like): Nuclear grid points.
        couplings (np.ndarray): A field (N_R, 3, 3).
        theta_span (float): Total change of theta; None fits it freely.

    Returns:
        tuple: (theta model, phi model). The phi amplitude is half of the integral of A_32.
    """
    R = np.asarray(R, dtype=float)
    theta_data = couplings[:, 1, 0]
    phi_data = couplings[:, 2, 1]
    theta_amplitude = None
    if theta_span is not None:
        theta_amplitude = np.sign(trapezoid(theta_data, R) or 1.0) * theta_span / 2.0
    theta = fit_angle_model(R, theta_data, amplitude=theta_amplitude)
    phi = fit_angle_model(R, phi_data, amplitude=trapezoid(phi_data, R) / 2.0)
    if phi.center >= theta.center:
        theta = replace(theta, offset=-theta.amplitude)
    else:
        phi = replace(phi, offset=-phi.amplitude)
    logger.info(
        "theta: K=%.6f K0=%.6f R_c=%.6f Gamma=%.6f rms=%.3e; phi: K=%.6f K0=%.6f R_c=%.6f Gamma=%.6f rms=%.3e",
        theta.amplitude, theta.offset, theta.center, theta.width, theta.residual,
        phi.amplitude, phi.offset, phi.center, phi.width, phi.residual,
    )
    return theta, phi


def rotation_matrix(theta, phi):
    """
    U_T = U_1(theta) U_2(phi) for scalar or array angles (shape (..., 3, 3)).
    """
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    zero, one = np.zeros_like(theta), np.ones_like(theta)
    first = np.stack([np.stack([ct, st, zero], -1), np.stack([-st, ct, zero], -1), np.stack([zero, zero, one], -1)], -2)
    second = np.stack([np.stack([one, zero, zero], -1), np.stack([zero, cp, sp], -1), np.stack([zero, -sp, cp], -1)], -2)
    return first @ second


def diabatic_matrix(energies, theta, phi):
    """
    Closed-form diabatic potential matrix.

    Parameters:
        energies (array-like): Adiabatic (V1, V2, V3), shape (3,) or (N, 3).
        theta, phi (float or array-like): Rotation angles at the same R.

    Returns:
        np.ndarray: Symmetric (3, 3) or (N, 3, 3) matrix.
    """
    energies = np.asarray(energies, dtype=float)
    v1, v2, v3 = energies[..., 0], energies[..., 1], energies[..., 2]
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    c2t, s2t = np.cos(theta) ** 2, np.sin(theta) ** 2
    c2p, s2p = np.cos(phi) ** 2, np.sin(phi) ** 2
    mixed = v1 * s2t + v2 * c2t
    d1 = v1 * c2t + v2 * s2t
    d2 = mixed * c2p + v3 * s2p
    d3 = mixed * s2p + v3 * c2p
    v12 = 0.5 * (v1 - v2) * np.sin(2 * theta) * np.cos(phi)
    v13 = 0.5 * (v1 - v2) * np.sin(2 * theta) * np.sin(phi)
    v23 = 0.5 * (mixed - v3) * np.sin(2 * phi)
    d1, d2, d3, v12, v13, v23 = np.broadcast_arrays(d1, d2, d3, v12, v13, v23)
    return np.stack(
        [np.stack([d1, v12, v13], -1), np.stack([v12, d2, v23], -1), np.stack([v13, v23, d3], -1)], -2
    )


def diabatic_states(scan, theta, phi, potential=None):
    """
    phi^D_j(x; R) = sum_k U_T[k, j](R) phi^A_k(x; R) as a diabatic ElectronicScan.
    """
    if scan.n_states != 3:
        raise ConfigurationError("diabatization needs exactly 3 electronic states", module=MODULE,
                                 parameter="electronic_states")
    rotation = rotation_matrix(theta, phi)
    states = np.einsum("rkj,kxr->jxr", rotation, scan.states, optimize=True)
    if potential is None:
        potential = diabatic_matrix(scan.energies.T, theta, phi)
    energies = np.einsum("rnn->nr", potential).copy()
    return ElectronicScan(scan.x_grid, scan.R_grid, energies, states, picture="diabatic", symmetry=scan.symmetry)


def diabatic_nuclear_solve(diagonal, R_grid, mass, energy_cutoff):
    """
    Vibrational states on each diabatic curve.

    Parameters:
        diagonal (np.ndarray): V_n^D(R), shape (n_states, N_R).
        R_grid (Grid1D): Nuclear grid.
        mass (float): Nuclear mass.
        energy_cutoff (float or sequence): Cutoff for all or for each surface.

    Returns:
        dict: surface index -> list of VibronicState.
    """
    diagonal = np.asarray(diagonal, dtype=float)
    cutoffs = np.broadcast_to(np.asarray(energy_cutoff, dtype=float), (diagonal.shape[0],))
    return {
        n: solve_nuclear_curve(diagonal[n], R_grid, mass, n, float(cutoffs[n]), picture="diabatic")
        for n in range(diagonal.shape[0])
    }


def second_order_B(couplings, derivative_matrix=None):
    """
    B_nn'(R) = sum_l A_nl(R) A_ln'(R).

    With derivative_matrix (spectral d/dR on the R grid) the dA/dR term of
    <phi_n | d^2/dR^2 phi_n'> is added.
    """
    couplings = np.asarray(couplings, dtype=float)
    single = couplings.ndim == 2
    field = couplings[np.newaxis] if single else couplings
    product = np.einsum("rnl,rlm->rnm", field, field)
    product = 0.5 * (product + product.transpose(0, 2, 1))
    if derivative_matrix is not None:
        product = product + np.einsum("ij,jnm->inm", derivative_matrix, field)
    return product[0] if single else product


def fitted_nac(R, theta, phi, n_states=3):
    """
    A field of the fitted rotation models: A_21 = d theta/dR, A_32 = d phi/dR.
    """
    R = np.asarray(R, dtype=float)
    couplings = np.zeros((R.size, n_states, n_states))
    couplings[:, 1, 0] = theta.derivative(R)
    couplings[:, 0, 1] = -couplings[:, 1, 0]
    couplings[:, 2, 1] = phi.derivative(R)
    couplings[:, 1, 2] = -couplings[:, 2, 1]
    return couplings


def diabatize(scan, model, theta_span=np.pi / 2, gap_threshold=GAP_THRESHOLD):
    """
    Hellmann-Feynman couplings, angle fits, diabatic matrix and B for a 3-state scan.
    """
    if scan.n_states != 3:
        raise ConfigurationError("diabatization needs exactly 3 electronic states", module=MODULE,
                                 parameter="electronic_states")
    R = scan.R_grid.points
    couplings = nac_hellmann_feynman(scan, model, gap_threshold=gap_threshold)
    theta, phi = fit_rotation_angles(R, couplings, theta_span=theta_span)
    if abs(theta.center - phi.center) <= 3.0 * max(theta.width, phi.width):
        logger.warning(
            "crossings at R=%.3f and R=%.3f overlap within 3 widths; independent rotations are approximate",
            theta.center, phi.center,
        )
    potential = diabatic_matrix(scan.energies.T, theta.angle(R), phi.angle(R))
    analytic = fitted_nac(R, theta, phi, scan.n_states)
    return DiabaticResult(scan.R_grid, potential, couplings, analytic, second_order_B(analytic), theta, phi)


def couplings_table(result):
    R = result.R_grid.points
    potential = result.potential
    return pd.DataFrame(
        {
            "R": R,
            "V1D": potential[:, 0, 0],
            "V2D": potential[:, 1, 1],
            "V3D": potential[:, 2, 2],
            "V12": potential[:, 0, 1],
            "V13": potential[:, 0, 2],
            "V23": potential[:, 1, 2],
            "A12": result.nac[:, 0, 1],
            "A13": result.nac[:, 0, 2],
            "A23": result.nac[:, 1, 2],
            "theta": result.theta.angle(R),
            "phi": result.phi.angle(R),
        }
    )
