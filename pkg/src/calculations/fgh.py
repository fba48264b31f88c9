"""
This module contains the Fourier grid Hamiltonian (FGH) building blocks.

1. Grid1D:
   - Uniform grid r_i = r_min + i * delta_r with an odd number of points.
   - Exposes the points, the reciprocal spacing delta_k and the period.

2. GridFunction:
   - Real amplitudes attached to a Grid1D (discrete norm sum(values**2) = 1).

3. kinetic_matrix / build_fgh_hamiltonian:
   - Cosine-sum kinetic matrix and the full Hamiltonian H = T + diag(V).
   - Inputs: grid, mass (a.u.), potential on the grid.
   - Output: dense real symmetric matrix.

4. solve_symmetric / eigenstates:
   - Lowest eigenpairs of a real symmetric matrix (ascending).

5. spectral_derivative_matrix:
   - Periodic Fourier first-derivative matrix, exactly antisymmetric.

6. parity_projector:
   - Orthonormal basis of even or odd grid functions on a grid centered at 0.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from src.errors import ConfigurationError, DomainError, NumericError

MODULE = "grid_core"


@dataclass(frozen=True)
class Grid1D:
    r_min: float
    delta_r: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 1 or self.n_points % 2 == 0:
            raise ConfigurationError(
                f"grid needs an odd number of points, got {self.n_points}",
                module=MODULE,
                parameter="n_points",
            )
        if not np.isfinite(self.delta_r) or self.delta_r <= 0:
            raise ConfigurationError(
                f"grid spacing must be positive, got {self.delta_r}", module=MODULE, parameter="delta_r"
            )
        if not np.isfinite(self.r_min):
            raise ConfigurationError("grid origin must be finite", module=MODULE, parameter="r_min")

    @classmethod
    def from_bounds(cls, r_min, r_max, n_points):
        """
        Build a grid whose first and last points are r_min and r_max.
        """
        if n_points < 2 or r_max <= r_min:
            raise ConfigurationError(
                f"invalid grid bounds [{r_min}, {r_max}] with {n_points} points",
                module=MODULE,
                parameter="n_points",
            )
        return cls(float(r_min), (float(r_max) - float(r_min)) / (n_points - 1), int(n_points))

    @property
    def points(self):
        return self.r_min + self.delta_r * np.arange(self.n_points)

    @property
    def r_max(self):
        return self.r_min + self.delta_r * (self.n_points - 1)

    @property
    def period(self):
        return self.n_points * self.delta_r

    @property
    def delta_k(self):
        return 2.0 * np.pi / self.period

    def describe(self):
        return f"[{self.r_min:.6g}, {self.r_max:.6g}] N={self.n_points}"


@dataclass(frozen=True)
class GridFunction:
    grid: Grid1D
    values: np.ndarray = field(repr=False)
    normalized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.n_points,):
            raise ConfigurationError(
                f"grid function has {values.shape} values for {self.grid.n_points} points",
                module=MODULE,
                parameter="values",
            )
        if self.normalized and abs(np.dot(values, values) - 1.0) > 1e-10:
            raise DomainError("grid function flagged normalized has norm != 1", module=MODULE, parameter="values")

    def norm(self):
        return float(np.sqrt(np.dot(self.values, self.values)))


def kinetic_matrix(grid, mass):
    """
    Cosine-sum FGH kinetic matrix.

    Parameters:
        grid (Grid1D): Uniform grid with odd point count.
        mass (float): Particle mass in atomic units.

    Returns:
        np.ndarray: T_ij = (2/N) sum_n cos(2 pi n (i-j) / N) (n dk)^2 / (2 mass).
    """
    if not mass > 0:
        raise ConfigurationError(f"mass must be positive, got {mass}", module=MODULE, parameter="mass")
    n_pts = grid.n_points
    harmonics = np.arange(1, (n_pts - 1) // 2 + 1)
    t_n = (harmonics * grid.delta_k) ** 2 / (2.0 * mass)
    offsets = np.arange(n_pts)
    first_column = (2.0 / n_pts) * np.cos(2.0 * np.pi * np.outer(offsets, harmonics) / n_pts) @ t_n
    return scipy.linalg.toeplitz(first_column)


def build_fgh_hamiltonian(grid, mass, potential_on_grid, kinetic=None):
    """
    Assemble the FGH Hamiltonian for one degree of freedom.

    Parameters:
        grid (Grid1D): Uniform grid.
        mass (float): Particle mass (a.u.).
        potential_on_grid (GridFunction or array-like): V(r_i).
        kinetic (np.ndarray): Optional precomputed kinetic_matrix(grid, mass).

    Returns:
        np.ndarray: Symmetric Hamiltonian matrix.
    """
    values = potential_on_grid.values if isinstance(potential_on_grid, GridFunction) else np.asarray(potential_on_grid, dtype=float)
    if values.shape != (grid.n_points,):
        raise ConfigurationError(
            f"potential has {values.shape} values for {grid.n_points} points", module=MODULE, parameter="potential"
        )
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise DomainError(
            f"potential is not finite at grid index {bad[0]} (r={grid.points[bad[0]]:.6g})",
            module=MODULE,
            parameter="potential",
        )
    hamiltonian = kinetic_matrix(grid, mass) if kinetic is None else np.array(kinetic, dtype=float)
    hamiltonian[np.diag_indices_from(hamiltonian)] += values
    return hamiltonian


def solve_symmetric(matrix, n_lowest):
    """
    Lowest eigenpairs of a real symmetric matrix.

    Returns:
        tuple: (eigenvalues ascending, eigenvectors as columns).
    """
    matrix = np.asarray(matrix, dtype=float)
    dim = matrix.shape[0]
    if not 1 <= n_lowest <= dim:
        raise ConfigurationError(
            f"requested {n_lowest} eigenpairs of a {dim}x{dim} matrix", module=MODULE, parameter="n_lowest"
        )
    try:
        values, vectors = scipy.linalg.eigh(matrix, subset_by_index=[0, n_lowest - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NumericError(
            f"symmetric eigensolver failed (dim={dim}, n_lowest={n_lowest}, "
            f"norm_inf={np.abs(matrix).sum(axis=1).max():.3e}): {e}",
            module=MODULE,
        ) from e
    return values, vectors


def eigenstates(matrix, grid, n_lowest):
    """
    Lowest eigenpairs as (eigenvalue, GridFunction) pairs.
    """
    values, vectors = solve_symmetric(matrix, n_lowest)
    return [(float(value), GridFunction(grid, vectors[:, k], normalized=True)) for k, value in enumerate(values)]


def spectral_derivative_matrix(grid):
    """
    Fourier first-derivative matrix on a periodic odd grid.

    D_ij = (pi / L) (-1)^(i-j) / sin(pi (i-j) / N) for i != j, with L = N * delta_r.
    Only the upper triangle is evaluated; D = U - U^T keeps it exactly antisymmetric.
    """
    n_pts = grid.n_points
    index = np.arange(n_pts)
    offset = np.subtract.outer(index, index)
    upper = np.zeros((n_pts, n_pts))
    mask = offset < 0
    d = offset[mask]
    sign = np.where(d % 2 == 0, 1.0, -1.0)
    upper[mask] = (np.pi / grid.period) * sign / np.sin(np.pi * d / n_pts)
    return upper - upper.T


def parity_projector(grid, parity="even"):
    """
    Columns span the even (or odd) grid functions of a grid symmetric about r = 0.
    """
    if abs(grid.r_min + grid.r_max) > 1e-9 * max(1.0, abs(grid.r_min)):
        raise ConfigurationError(
            f"parity projection needs a grid centered at 0, got {grid.describe()}", module=MODULE, parameter="symmetry"
        )
    if parity not in ("even", "odd"):
        raise ConfigurationError(f"unknown parity '{parity}'", module=MODULE, parameter="symmetry")
    n_pts = grid.n_points
    center = (n_pts - 1) // 2
    sign = 1.0 if parity == "even" else -1.0
    columns = center + 1 if parity == "even" else center
    projector = np.zeros((n_pts, columns))
    for i in range(center):
        projector[i, i] = 1.0 / np.sqrt(2.0)
        projector[n_pts - 1 - i, i] = sign / np.sqrt(2.0)
    if parity == "even":
        projector[center, center] = 1.0
    return projector
