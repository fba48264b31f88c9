"""
This module contains the electron-nuclear entanglement measures.

1. schmidt_decompose:
   - SVD of a bipartite amplitude table Psi(x_i, R_j).
   - Output: SchmidtResult (lambdas, electronic and nuclear modes, entropy).

2. von_neumann_entropy:
   - S = -sum lambda ln lambda (nats, or bits with base="2").

3. reduced_density_nuclear_bo / reduced_density_electronic_bo:
   - Reduced densities of a BO product state in their factored forms.

4. reduced_density_bh / reduced_density_electronic_bh:
   - Reduced densities of a Born-Huang superposition of vibronic channels.

5. density_spectrum:
   - Descending eigenvalues of a reduced density.

6. simplified_vibrational / simplified_density:
   - Keeps chi only at its m+1 extrema and builds the (m+1)x(m+1) density
     rho_kl = chi_k chi_l S_n(R_k, R_l).

7. perturbative_lambda_max / two_eigenvalue_entropy:
   - First-order estimate of the largest eigenvalue and the entropy of a
     two-eigenvalue spectrum {lambda, 1 - lambda}.

8. lambda_max_trend:
   - Diagnostic fit of 1 - lambda_max against a*E and a*E^2.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from src.errors import ConfigurationError, DomainError, ExtractionError

logger = logging.getLogger(__name__)

MODULE = "schmidt_entanglement"
LAMBDA_FLOOR = 1e-14
EXTREMUM_THRESHOLD = 1e-3


@dataclass(frozen=True, eq=False)
class SchmidtResult:
    lambdas: np.ndarray
    electronic_modes: np.ndarray
    nuclear_modes: np.ndarray
    entropy: float

    @property
    def n_modes(self):
        return self.lambdas.size

    def reconstruct(self, n_modes=None):
        """
        Psi rebuilt from the leading n_modes Schmidt pairs (all of them by default).
        """
        k = self.n_modes if n_modes is None else int(n_modes)
        weights = np.sqrt(np.clip(self.lambdas[:k], 0.0, None))
        return (self.electronic_modes[:, :k] * weights) @ self.nuclear_modes[:, :k].T


@dataclass(frozen=True, eq=False)
class SimplifiedDensity:
    surface: int
    m: int
    indices: np.ndarray
    points: np.ndarray
    amplitudes: np.ndarray
    matrix: np.ndarray
    overlaps: np.ndarray

    @property
    def spectrum(self):
        return density_spectrum(self.matrix)

    @property
    def entropy(self):
        return von_neumann_entropy(self.spectrum)


def schmidt_decompose(psi):
    """
    Schmidt decomposition of a bipartite amplitude table.

    Parameters:
        psi (np.ndarray): Psi(x_i, R_j), rows electronic, columns nuclear.

    Returns:
        SchmidtResult: lambdas are the squared singular values, descending.
    """
    psi = np.asarray(psi, dtype=float)
    if psi.ndim != 2 or not np.all(np.isfinite(psi)):
        raise DomainError("amplitude table must be a finite 2D array", module=MODULE, parameter="psi")
    norm = np.sqrt(np.sum(psi**2))
    if norm == 0:
        raise DomainError("amplitude table is identically zero", module=MODULE, parameter="psi")
    if abs(norm - 1.0) > 1e-6:
        logger.warning("renormalizing amplitude table with norm %.8f", norm)
    psi = psi / norm
    try:
        u, s, vt = scipy.linalg.svd(psi, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        # Fallback to the slower QR-based driver
        logger.warning("gesdd did not converge, retrying with gesvd")
        u, s, vt = scipy.linalg.svd(psi, full_matrices=False, lapack_driver="gesvd")
    lambdas = s**2
    return SchmidtResult(lambdas, u, vt.T, von_neumann_entropy(lambdas))


def von_neumann_entropy(lambdas, base="e"):
    """
    Calculate the von Neumann entropy of a Schmidt spectrum.

    Parameters:
        lambdas (array-like): Eigenvalues summing to 1.
        base (str): "e" for nats, "2" for bits.

    Returns:
        float: Entropy (0 ln 0 = 0, eigenvalues below 1e-14 dropped).
    """
    if base not in ("e", "2"):
        raise ConfigurationError("Base must be 'e' or '2'.", module=MODULE, parameter="entropy_base")
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    if np.any(lambdas < -1e-12):
        raise DomainError(
            f"eigenvalue {lambdas.min():.3e} is negative beyond rounding", module=MODULE, parameter="lambdas"
        )
    total = lambdas.sum()
    if abs(total - 1.0) > 1e-4:
        raise DomainError(f"eigenvalues sum to {total:.8f}, expected 1", module=MODULE, parameter="lambdas")
    kept = lambdas[lambdas >= LAMBDA_FLOOR]
    entropy = float(-np.sum(kept * np.log(kept)))
    entropy = max(entropy, 0.0)
    return entropy / np.log(2.0) if base == "2" else entropy


def density_spectrum(rho):
    return scipy.linalg.eigvalsh(rho)[::-1]


def _symmetrize(matrix):
    return 0.5 * (matrix + matrix.T)


def reduced_density_nuclear_bo(scan, state):
    """
    rho^R_ij = chi(R_i) chi(R_j) S_n(R_i, R_j).
    """
    phi = scan.surface(state.surface)
    chi = state.chi.values
    return _symmetrize(np.outer(chi, chi) * (phi.T @ phi))


def reduced_density_electronic_bo(scan, state):
    """
    rho^x_ij = sum_k phi_n(x_i; R_k) phi_n(x_j; R_k) chi(R_k)^2.
    """
    phi = scan.surface(state.surface)
    return _symmetrize((phi * state.chi.values**2) @ phi.T)


def channel_envelopes(scan, states, coefficients):
    """
    f_n(R_j) = sum_m Lambda_nm chi_nm(R_j) for every surface of the scan.

    Parameters:
        scan (ElectronicScan): Electronic states the channels refer to.
        states (list): VibronicState per channel.
        coefficients (array-like): Lambda, one entry per channel.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    if coefficients.shape != (len(states),):
        raise ConfigurationError(
            f"{coefficients.size} coefficients for {len(states)} channels", module=MODULE, parameter="coefficients"
        )
    envelopes = np.zeros((scan.n_states, scan.R_grid.n_points))
    for weight, state in zip(coefficients, states):
        envelopes[state.surface] += weight * state.chi.values
    return envelopes


def _normalized_coefficients(coefficients):
    coefficients = np.asarray(coefficients, dtype=float)
    total = float(np.sum(coefficients**2))
    if total == 0:
        raise DomainError("Born-Huang coefficients are all zero", module=MODULE, parameter="coefficients")
    if abs(total - 1.0) > 1e-6:
        logger.warning("renormalizing Born-Huang coefficients with norm^2 %.8f", total)
    return coefficients / np.sqrt(total)


def _bh_amplitudes(scan, states, coefficients):
    envelopes = channel_envelopes(scan, states, _normalized_coefficients(coefficients))
    return np.einsum("nij,nj->ij", scan.states, envelopes)


def reduced_density_bh(scan, states, coefficients):
    """
    Nuclear reduced density of a Born-Huang state.

    rho^R_ij = sum_{n,n'} f_n(R_i) f_n'(R_j) sum_k phi_n(x_k; R_i) phi_n'(x_k; R_j),
    evaluated as Psi^T Psi with Psi(x_k, R_j) = sum_n phi_n(x_k; R_j) f_n(R_j).
    """
    psi = _bh_amplitudes(scan, states, coefficients)
    return _symmetrize(psi.T @ psi)


def reduced_density_electronic_bh(scan, states, coefficients):
    psi = _bh_amplitudes(scan, states, coefficients)
    return _symmetrize(psi @ psi.T)


def simplified_vibrational(state, threshold=EXTREMUM_THRESHOLD):
    """
    Locate the m+1 extrema of chi_nm.

    Parameters:
        state (VibronicState): Vibrational state with index m.
        threshold (float): Extrema below threshold * max|chi| are ignored.

    Returns:
        SimplifiedDensity: Points and renormalized amplitudes; the matrix holds
        the unit-overlap limit until simplified_density fills in S_n.
    """
    chi = state.chi.values
    scale = np.abs(chi).max()
    slope = np.diff(chi)
    turning = np.flatnonzero(slope[:-1] * slope[1:] < 0) + 1
    extrema = turning[np.abs(chi[turning]) >= threshold * scale]
    if extrema.size != state.m + 1:
        raise ExtractionError(
            f"found {extrema.size} extrema for m={state.m} on surface {state.surface + 1} "
            f"(grid spacing {state.chi.grid.delta_r:.4g}, positions {np.round(state.chi.grid.points[extrema], 4).tolist()})",
            module=MODULE,
            parameter="vibrational_index",
        )
    amplitudes = chi[extrema] / np.sqrt(np.sum(chi[extrema] ** 2))
    return SimplifiedDensity(
        surface=state.surface,
        m=state.m,
        indices=extrema,
        points=state.chi.grid.points[extrema],
        amplitudes=amplitudes,
        matrix=np.outer(amplitudes, amplitudes),
        overlaps=np.ones((extrema.size, extrema.size)),
    )


def simplified_density(points, scan, n=None):
    """
    rho_kl = chi_k chi_l S_n(R_k, R_l) at the extrema of a vibrational state.
    """
    n = points.surface if n is None else n
    phi = scan.surface(n)[:, points.indices]
    overlaps = _symmetrize(phi.T @ phi)
    matrix = _symmetrize(np.outer(points.amplitudes, points.amplitudes) * overlaps)
    return replace(points, matrix=matrix, overlaps=overlaps)


def perturbative_lambda_max(simplified):
    """
    lambda_max = 1 + 2 sum_{k<l} eps_kl chi_k chi_l, eps_kl = -chi_k chi_l (1 - S_kl).
    """
    a = simplified.amplitudes
    upper_k, upper_l = np.triu_indices(a.size, 1)
    products = a[upper_k] * a[upper_l]
    epsilon = -products * (1.0 - simplified.overlaps[upper_k, upper_l])
    return float(min(1.0 + 2.0 * np.sum(epsilon * products), 1.0))


def two_eigenvalue_entropy(lambda_max):
    """
    Entropy of the spectrum {lambda_max, 1 - lambda_max}.
    """
    if not 0.0 < lambda_max <= 1.0:
        raise DomainError(f"lambda_max={lambda_max} outside (0, 1]", module=MODULE, parameter="lambda_max")
    terms = [p * np.log(p) for p in (lambda_max, 1.0 - lambda_max) if p > 0]
    return float(-sum(terms))


def lambda_max_trend(excitation_energies, lambda_max):
    """
    Least-squares fits of 1 - lambda_max = a E and 1 - lambda_max = a E^2.

    Returns:
        dict: Coefficients, residual sums of squares and the preferred model.
    """
    energies = np.asarray(excitation_energies, dtype=float)
    deficit = 1.0 - np.asarray(lambda_max, dtype=float)
    report = {"points": int(energies.size)}
    if energies.size < 2 or not np.any(energies > 0):
        report.update(linear_a=float("nan"), linear_rss=float("nan"),
                      quadratic_a=float("nan"), quadratic_rss=float("nan"), preferred="none")
        return report
    for name, power in (("linear", 1), ("quadratic", 2)):
        design = energies[:, np.newaxis] ** power
        coefficient, *_ = np.linalg.lstsq(design, deficit, rcond=None)
        residual = deficit - design[:, 0] * coefficient[0]
        report[f"{name}_a"] = float(coefficient[0])
        report[f"{name}_rss"] = float(np.sum(residual**2))
    report["preferred"] = "linear" if report["linear_rss"] <= report["quadratic_rss"] else "quadratic"
    return report
