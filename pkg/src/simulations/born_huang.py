"""
This module solves the coupled-channel (Born-Huang) vibronic problem.

1. assemble_bh_matrix:
   - H = diag(W_nm) + C in the basis of BO vibronic states chi_nm.
   - C couples channels through -(1/2mu) (2 A d/dR + B), with the A term
     symmetrized as (A D + D A) and D the spectral derivative matrix.

2. solve_bh:
   - Eigenpairs of H with normalized mixing coefficients Lambda and the
     dominant channel of every state.

3. bh_total_wavefunction:
   - Psi(x_i, R_j) = sum_n phi_n(x_i; R_j) sum_m Lambda_nm chi_nm(R_j).

4. bh_report:
   - DataFrame with energy, entropy and the two heaviest channels per BH state.
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg
from joblib import Parallel, delayed

from src.calculations.entanglement import channel_envelopes, schmidt_decompose, von_neumann_entropy
from src.calculations.fgh import spectral_derivative_matrix
from src.errors import AssemblyError, ConfigurationError, NumericError

logger = logging.getLogger(__name__)

MODULE = "born_huang"
ASYMMETRY_TOLERANCE = 1e-8
RESIDUAL_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class BhBasis:
    states: list
    energies: np.ndarray
    coupling: np.ndarray
    asymmetry: float

    @property
    def channels(self):
        return [(state.surface, state.m) for state in self.states]

    @property
    def hamiltonian(self):
        return np.diag(self.energies) + self.coupling

    @property
    def coupling_norm(self):
        return float(np.linalg.norm(self.coupling, 2))

    @property
    def surfaces(self):
        return sorted({state.surface for state in self.states})


@dataclass(frozen=True, eq=False)
class BhSolution:
    energies: np.ndarray
    coefficients: np.ndarray
    dominant_channel: list
    dominant_weight: np.ndarray
    channels: list

    @property
    def n_states(self):
        return self.energies.size

    def weights(self, k):
        """Lambda^2 of BH state k keyed by (surface, m)."""
        return dict(zip(self.channels, self.coefficients[k] ** 2))

    def leading_channels(self, k, count=2):
        """The count largest (channel, Lambda^2) pairs of BH state k, heaviest first."""
        weights = self.coefficients[k] ** 2
        order = np.argsort(-weights, kind="stable")[:count]
        return [(self.channels[i], float(weights[i])) for i in order]


def _flatten(vibronic_states):
    if isinstance(vibronic_states, dict):
        vibronic_states = [vibronic_states[key] for key in sorted(vibronic_states)]
    flat = []
    for group in vibronic_states:
        flat.extend(group if isinstance(group, (list, tuple)) else [group])
    return sorted(flat, key=lambda state: (state.surface, state.m))


def _coupling_block(X_n, X_m, a, b, derivative, mass):
    first = a[:, np.newaxis] * derivative + derivative * a[np.newaxis, :]
    return -(X_n.T @ (first @ X_m) + X_n.T @ (b[:, np.newaxis] * X_m)) / (2.0 * mass)


def assemble_bh_matrix(vibronic_states, couplings, second_order, mass, n_jobs=1):
    """
    Assemble the Born-Huang Hamiltonian in the BO vibronic basis.

    Parameters:
        vibronic_states (dict or list): VibronicState lists per surface.
        couplings (np.ndarray): A field (N_R, n_states, n_states).
        second_order (np.ndarray): B field (N_R, n_states, n_states).
        mass (float): Nuclear mass mu of the coupling operator.
        n_jobs (int): joblib workers over surface pairs.

    Returns:
        BhBasis: Channels, BO energies and the symmetrized coupling matrix.
    """
    states = _flatten(vibronic_states)
    if not states:
        raise ConfigurationError("no vibronic channels below the cutoff", module=MODULE, parameter="channel_cutoff")
    surfaces = sorted({state.surface for state in states})
    if len(surfaces) < 2:
        raise ConfigurationError(
            f"Born-Huang basis needs channels on at least 2 surfaces, got {len(surfaces)}",
            module=MODULE, parameter="channel_cutoff",
        )
    R_grid = states[0].chi.grid
    couplings = np.asarray(couplings, dtype=float)
    second_order = np.asarray(second_order, dtype=float)
    if couplings.shape[0] != R_grid.n_points or second_order.shape != couplings.shape:
        raise ConfigurationError(
            f"A/B fields {couplings.shape}/{second_order.shape} do not match N_R={R_grid.n_points}",
            module=MODULE, parameter="couplings",
        )
    if max(surfaces) >= couplings.shape[1]:
        raise ConfigurationError(
            f"surface {max(surfaces) + 1} outside the {couplings.shape[1]}-state coupling field",
            module=MODULE, parameter="couplings",
        )

    derivative = spectral_derivative_matrix(R_grid)
    columns = {n: np.column_stack([s.chi.values for s in states if s.surface == n]) for n in surfaces}
    offsets = np.cumsum([0] + [columns[n].shape[1] for n in surfaces])
    pairs = [(i, j) for i in range(len(surfaces)) for j in range(len(surfaces))]
    blocks = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_coupling_block)(
            columns[surfaces[i]], columns[surfaces[j]],
            couplings[:, surfaces[i], surfaces[j]], second_order[:, surfaces[i], surfaces[j]],
            derivative, mass,
        )
        for i, j in pairs
    )
    coupling = np.zeros((len(states), len(states)))
    for (i, j), block in zip(pairs, blocks):
        coupling[offsets[i]:offsets[i + 1], offsets[j]:offsets[j + 1]] = block

    asymmetry = float(np.max(np.abs(coupling - coupling.T)))
    if asymmetry > ASYMMETRY_TOLERANCE:
        raise AssemblyError(
            f"coupling matrix asymmetry {asymmetry:.3e} exceeds {ASYMMETRY_TOLERANCE:.0e}; A/B fields or grids are inconsistent",
            module=MODULE, parameter="couplings",
        )
    coupling = 0.5 * (coupling + coupling.T)
    energies = np.array([state.energy for state in states])
    logger.info(
        "assembled Born-Huang matrix: %d channels on surfaces %s, asymmetry %.2e, ||C||_2 %.4e",
        len(states), [n + 1 for n in surfaces], asymmetry, float(np.linalg.norm(coupling, 2)),
    )
    return BhBasis(states, energies, coupling, asymmetry)


def solve_bh(basis, n_lowest=None):
    """
    Diagonalize the Born-Huang Hamiltonian.

    Parameters:
        basis (BhBasis): Assembled basis.
        n_lowest (int): Number of lowest states; all when None.

    Returns:
        BhSolution: Ascending energies, Lambda rows (state x channel) and dominant channels.
    """
    hamiltonian = basis.hamiltonian
    size = hamiltonian.shape[0]
    subset = None if n_lowest is None else (0, min(int(n_lowest), size) - 1)
    try:
        values, vectors = scipy.linalg.eigh(hamiltonian, subset_by_index=subset)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(f"Born-Huang eigensolve failed: {e}", module=MODULE, parameter="hamiltonian") from e
    scale = max(1.0, float(np.max(np.abs(hamiltonian))))
    residual = float(np.max(np.abs(hamiltonian @ vectors - vectors * values))) / scale
    if residual > RESIDUAL_TOLERANCE:
        raise NumericError(f"eigen-residual {residual:.3e} too large", module=MODULE, parameter="hamiltonian")
    coefficients = vectors.T / np.linalg.norm(vectors, axis=0)[:, np.newaxis]
    weights = coefficients**2
    leading = np.argmax(weights, axis=1)
    channels = basis.channels
    return BhSolution(
        energies=values,
        coefficients=coefficients,
        dominant_channel=[channels[k] for k in leading],
        dominant_weight=weights[np.arange(values.size), leading],
        channels=channels,
    )


def bh_total_wavefunction(scan, states, coefficients):
    """
    Psi(x_i, R_j) for one Lambda row; states are the channels in basis order.
    """
    envelopes = channel_envelopes(scan, states, coefficients)
    psi = np.einsum("nij,nj->ij", scan.states[: envelopes.shape[0]], envelopes)
    norm = np.sqrt(np.sum(psi**2))
    if abs(norm - 1.0) > 1e-8:
        logger.debug("Born-Huang amplitude norm %.10f", norm)
    return psi


def bh_entropies(scan, basis, solution, base="e", n_jobs=1):
    def entropy(k):
        result = schmidt_decompose(bh_total_wavefunction(scan, basis.states, solution.coefficients[k]))
        return von_neumann_entropy(result.lambdas, base=base)

    return np.array(Parallel(n_jobs=n_jobs, prefer="threads")(delayed(entropy)(k) for k in range(solution.n_states)))


def nuclear_marginal(psi):
    return np.sum(psi**2, axis=0)


def bh_report(solution, entropies):
    """
    One row per BH state: state (1-based), W, S, then n, m and weight of the two heaviest channels.
    """
    second = [solution.leading_channels(k)[1:] for k in range(solution.n_states)]
    return pd.DataFrame(
        {
            "state": np.arange(1, solution.n_states + 1),
            "W": solution.energies,
            "S": np.asarray(entropies, dtype=float),
            "dominant_n": [n + 1 for n, _ in solution.dominant_channel],
            "dominant_m": [m for _, m in solution.dominant_channel],
            "dominant_weight": solution.dominant_weight,
            "second_n": [pair[0][0][0] + 1 if pair else np.nan for pair in second],
            "second_m": [pair[0][0][1] if pair else np.nan for pair in second],
            "second_weight": [pair[0][1] if pair else np.nan for pair in second],
        }
    )


def coefficient_records(solution, states=None):
    """
    Lambda of every BH state as JSON-ready records.
    """
    keep = range(solution.n_states) if states is None else states
    return [
        {
            "state": k + 1,
            "W": float(solution.energies[k]),
            "coefficients": [
                {"n": n + 1, "m": m, "lambda": float(value)}
                for (n, m), value in zip(solution.channels, solution.coefficients[k])
            ],
        }
        for k in keep
    ]
