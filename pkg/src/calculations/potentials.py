"""
This module evaluates the model potentials U(x, R).

1. H2pModel / h2p_potential:
   - Soft-core 1D H2+ with an R-dependent softening a(R) interpolated from a table.
   - Input: model, electron coordinate x (array), internuclear distance R > 0.
   - Output: U(x, R) including the nuclear repulsion, hartree.

2. calibrate_softening:
   - Bisection on a(R) so the lowest 1D electronic eigenvalue reproduces a
     reference 1s sigma_g curve row by row.

3. ShinMetiuModel / shin_metiu_potential / shin_metiu_potential_derivative:
   - Two fixed ions at +-L/2, one moving ion at R, erf-screened electron
     attraction. The derivative is the analytic dU/dR used by Hellmann-Feynman.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import erf

from src.calculations.fgh import build_fgh_hamiltonian, kinetic_matrix
from src.errors import CalibrationError, ConfigurationError, DomainError

logger = logging.getLogger(__name__)

MODULE = "model_potentials"
PROTON_MASS = 1836.152673
SCREENING_LIMIT = 1e-8
SOFTENING_BRACKET = (1e-3, 1e3)


@dataclass(frozen=True)
class H2pModel:
    softening_table: tuple = ((1.0, 1.0),)
    z_alpha: float = 1.0
    z_beta: float = 1.0
    proton_mass: float = PROTON_MASS

    name = "h2p"

    def __post_init__(self):
        table = tuple((float(r), float(a)) for r, a in self.softening_table)
        object.__setattr__(self, "softening_table", table)
        if not table:
            raise ConfigurationError("softening table is empty", module=MODULE, parameter="softening_table")
        r_values = np.array([row[0] for row in table])
        a_values = np.array([row[1] for row in table])
        if np.any(np.diff(r_values) <= 0):
            raise ConfigurationError(
                "softening table must be strictly increasing in R", module=MODULE, parameter="softening_table"
            )
        if np.any(a_values <= 0) or not np.all(np.isfinite(a_values)):
            raise ConfigurationError(
                "softening parameters must be positive and finite", module=MODULE, parameter="softening_table"
            )
        if self.proton_mass <= 0:
            raise ConfigurationError("proton mass must be positive", module=MODULE, parameter="proton_mass")

    @property
    def electron_mass(self):
        # electron reduced mass against the two protons
        return 2.0 * self.proton_mass / (2.0 * self.proton_mass + 1.0)

    @property
    def nuclear_mass(self):
        # P_R^2 / M_p kinetic term, i.e. reduced mass M_p / 2
        return self.proton_mass / 2.0

    def with_softening(self, table):
        return H2pModel(tuple(table), self.z_alpha, self.z_beta, self.proton_mass)

    def potential(self, x, R):
        return h2p_potential(self, x, R)


@dataclass(frozen=True)
class ShinMetiuModel:
    separation: float = 18.897
    z_alpha: float = 1.0
    z_beta: float = 1.0
    z_gamma: float = 1.0
    rc_alpha: float = 3.00
    rc_beta: float = 2.20
    rc_gamma: float = 4.00
    moving_ion_mass: float = PROTON_MASS
    margin: float = 0.5

    name = "shin_metiu"

    def __post_init__(self):
        if self.separation <= 0:
            raise ConfigurationError("fixed-ion separation must be positive", module=MODULE, parameter="separation")
        for key in ("rc_alpha", "rc_beta", "rc_gamma"):
            if getattr(self, key) <= 0:
                raise ConfigurationError(f"{key} must be positive", module=MODULE, parameter=key)
        if self.margin <= 0 or self.margin >= self.separation / 2:
            raise ConfigurationError("margin must lie in (0, L/2)", module=MODULE, parameter="margin")
        if self.moving_ion_mass <= 0:
            raise ConfigurationError("moving ion mass must be positive", module=MODULE, parameter="moving_ion_mass")

    @property
    def electron_mass(self):
        return 1.0

    @property
    def nuclear_mass(self):
        return self.moving_ion_mass

    @property
    def r_limit(self):
        return self.separation / 2.0 - self.margin

    def potential(self, x, R):
        return shin_metiu_potential(self, x, R)

    def potential_derivative(self, x, R):
        return shin_metiu_potential_derivative(self, x, R)


def softening(model, R):
    """
    a(R) linearly interpolated in the table and clamped to the end rows.
    """
    r_values = [row[0] for row in model.softening_table]
    a_values = [row[1] for row in model.softening_table]
    return float(np.interp(R, r_values, a_values))


def soft_core_potential(x, R, a, z_alpha=1.0, z_beta=1.0):
    x = np.asarray(x, dtype=float)
    return (
        z_alpha * z_beta / R
        - z_alpha / np.sqrt((x + R / 2.0) ** 2 + a)
        - z_beta / np.sqrt((x - R / 2.0) ** 2 + a)
    )


def h2p_potential(model, x, R):
    """
    Soft-core H2+ potential U(x, R), hartree.

    Parameters:
        model (H2pModel): Charges and softening table.
        x (float or array): Electron coordinate(s), bohr.
        R (float): Internuclear distance, bohr (must be > 0).
    """
    if not R > 0:
        raise DomainError(f"H2+ potential needs R > 0, got R={R}", module=MODULE, parameter="R")
    return soft_core_potential(x, R, softening(model, R), model.z_alpha, model.z_beta)


def _ground_energy(x_grid, kinetic, R, a, model):
    potential = soft_core_potential(x_grid.points, R, a, model.z_alpha, model.z_beta)
    hamiltonian = build_fgh_hamiltonian(x_grid, model.electron_mass, potential, kinetic=kinetic)
    return float(scipy.linalg.eigvalsh(hamiltonian, subset_by_index=[0, 0])[0])


def _calibrate_row(R, target, x_grid, kinetic, model):
    def mismatch(a):
        return _ground_energy(x_grid, kinetic, R, a, model) - target

    # the ground energy rises monotonically with a
    lower, upper = 0.5, 2.0
    low_value, high_value = mismatch(lower), mismatch(upper)
    while low_value > 0 and lower > SOFTENING_BRACKET[0]:
        lower = max(lower / 4.0, SOFTENING_BRACKET[0])
        low_value = mismatch(lower)
    while high_value < 0 and upper < SOFTENING_BRACKET[1]:
        upper = min(upper * 4.0, SOFTENING_BRACKET[1])
        high_value = mismatch(upper)
    if low_value > 0 or high_value < 0:
        raise CalibrationError(
            f"no sign change for a in [{SOFTENING_BRACKET[0]:g}, {SOFTENING_BRACKET[1]:g}] at R={R:.6g} "
            f"(E_ref={target:.8f}, mismatch at ends {low_value:.3e}, {high_value:.3e})",
            module=MODULE,
            parameter="R",
        )
    root = scipy.optimize.bisect(mismatch, lower, upper, xtol=1e-12, rtol=1e-13, maxiter=200)
    residual = mismatch(root)
    if abs(residual) > 1e-6:
        raise CalibrationError(
            f"bisection stalled at R={R:.6g} with energy mismatch {residual:.3e}", module=MODULE, parameter="R"
        )
    return root


def calibrate_softening(model, reference_curve, x_grid, dissociation_limit=None):
    """
    Fit a(R) row by row against a reference ground-state curve.

    Parameters:
        model (H2pModel): Supplies charges and the electron reduced mass.
        reference_curve (array-like): Rows (R, E_ref) with E_ref including 1/R.
        x_grid (Grid1D): Electron grid of the 1D Hamiltonian.
        dissociation_limit (float): If given, replaces E_ref of the last row.

    Returns:
        tuple: Softening table ((R, a), ...).
    """
    curve = np.asarray(reference_curve, dtype=float)
    if curve.ndim != 2 or curve.shape[1] != 2 or curve.shape[0] == 0:
        raise CalibrationError("reference curve must be rows of (R, E)", module=MODULE, parameter="reference_curve")
    targets = curve[:, 1].copy()
    if dissociation_limit is not None:
        targets[-1] = dissociation_limit
    kinetic = kinetic_matrix(x_grid, model.electron_mass)
    table = []
    for R, target in zip(curve[:, 0], targets):
        if not R > 0:
            raise CalibrationError(f"reference row with R={R} <= 0", module=MODULE, parameter="R")
        a_value = _calibrate_row(float(R), float(target), x_grid, kinetic, model)
        logger.debug("calibrated a(%.4f) = %.10f", R, a_value)
        table.append((float(R), a_value))
    logger.info("calibrated %d softening rows on x grid %s", len(table), x_grid.describe())
    return tuple(table)


def _screened_attraction(z, u, rc):
    distance = np.abs(np.asarray(u, dtype=float))
    safe = np.where(distance < SCREENING_LIMIT, 1.0, distance)
    return np.where(
        distance < SCREENING_LIMIT,
        2.0 * z / (np.sqrt(np.pi) * rc),
        z * erf(safe / rc) / safe,
    )


def _screened_slope(u, rc):
    # d/du of erf(u/rc)/u, an odd function vanishing at u = 0
    u = np.asarray(u, dtype=float)
    prefactor = 2.0 / (np.sqrt(np.pi) * rc)
    small = np.abs(u) < 1e-3
    safe = np.where(small, 1.0, u)
    exact = prefactor * np.exp(-(safe / rc) ** 2) / safe - erf(safe / rc) / safe**2
    series = prefactor * (-(2.0 / 3.0) * u / rc**2 + 0.4 * u**3 / rc**4)
    return np.where(small, series, exact)


def _check_moving_ion(model, R):
    if not abs(R) < model.r_limit:
        raise DomainError(
            f"moving ion at R={R:.6g} outside |R| < L/2 - margin = {model.r_limit:.6g}",
            module=MODULE,
            parameter="R",
        )


def shin_metiu_potential(model, x, R):
    """
    Shin-Metiu potential U(x, R), hartree.

    Parameters:
        model (ShinMetiuModel): Charges, separation and screening lengths.
        x (float or array): Electron coordinate(s), bohr.
        R (float): Moving-ion position, bohr.
    """
    _check_moving_ion(model, R)
    x = np.asarray(x, dtype=float)
    half = model.separation / 2.0
    repulsion = model.z_alpha * model.z_gamma / abs(R + half) + model.z_beta * model.z_gamma / abs(R - half)
    attraction = (
        _screened_attraction(model.z_alpha, x + half, model.rc_alpha)
        + _screened_attraction(model.z_beta, x - half, model.rc_beta)
        + _screened_attraction(model.z_gamma, x - R, model.rc_gamma)
    )
    return repulsion - attraction


def shin_metiu_potential_derivative(model, x, R):
    """
    Analytic dU/dR of the Shin-Metiu potential on the electron coordinates x.
    """
    _check_moving_ion(model, R)
    x = np.asarray(x, dtype=float)
    half = model.separation / 2.0
    repulsion = -model.z_alpha * model.z_gamma * (R + half) / abs(R + half) ** 3
    repulsion -= model.z_beta * model.z_gamma * (R - half) / abs(R - half) ** 3
    return repulsion + model.z_gamma * _screened_slope(x - R, model.rc_gamma)
