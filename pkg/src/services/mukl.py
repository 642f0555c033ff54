"""Multivariate Karhunen-Loeve expansion of the stacked (u, v) wind process."""
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union
import logging

import numpy as np
from scipy import linalg

from src.core.config import settings
from src.core.exceptions import DataError, EigenSolverError, NumericalError
from src.services.archive import read_archive, write_archive
from src.services.ensemble_io import WindEnsemble, WindGrid
from src.utils.rbf import GriddedWindField, RbfSystem

logger = logging.getLogger(__name__)

ARCHIVE_MAGIC = b"WCDMUKL1"
SYMMETRY_RTOL = 1e-12
NEGATIVE_EIGEN_RTOL = 1e-10

@dataclass(frozen=True)
class AssembledCovariance:
    """Block covariance [C_uu, C_uv; C_uv^T, C_vv] with per-grid-point quadrature weights"""
    matrix: np.ndarray
    weights: np.ndarray
    mean_u: Optional[np.ndarray] = None
    mean_v: Optional[np.ndarray] = None
    n_members: int = 0

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def stacked_weights(self) -> np.ndarray:
        return np.tile(self.weights, 2)

@dataclass(frozen=True)
class MuklExpansion:
    """Truncated expansion; `eigenvectors` holds the M retained assembled eigenfunctions as columns"""
    grid: WindGrid
    weights: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mean_u: np.ndarray
    mean_v: np.ndarray
    xi_samples: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.eigenvectors.shape[1]

    @property
    def n_points(self) -> int:
        return self.weights.size

    @property
    def retained_eigenvalues(self) -> np.ndarray:
        return self.eigenvalues[:self.m]

    @property
    def explained_fraction(self) -> np.ndarray:
        """lambda_k / sum of all lambda, for every mode"""
        return self.eigenvalues / self.eigenvalues.sum()

    @property
    def cumulative_fraction(self) -> float:
        return float(self.explained_fraction[:self.m].sum())

    def subfunctions(self, component: str) -> np.ndarray:
        """phi_k^(i): the u or v half of each retained eigenfunction, shape (S, M)"""
        if component == "u":
            return self.eigenvectors[:self.n_points]
        if component == "v":
            return self.eigenvectors[self.n_points:]
        raise ValueError(f"component must be 'u' or 'v', got {component!r}")

    def scaled_eigenvalues(self, component: str) -> np.ndarray:
        """lambda_hat_k^(i) = lambda_k * ||phi_k^(i)||^2"""
        phi = self.subfunctions(component)
        norms2 = self.weights @ (phi * phi)
        return self.retained_eigenvalues * norms2

    def normalized_subfunctions(self, component: str) -> np.ndarray:
        """phi_hat_k^(i) = phi_k^(i) / ||phi_k^(i)||; all-zero halves stay zero"""
        phi = self.subfunctions(component)
        norms = np.sqrt(self.weights @ (phi * phi))
        safe = np.where(norms > 0.0, norms, 1.0)
        return phi / safe

def _uniform_weights(grid: WindGrid, weights: Optional[np.ndarray]) -> np.ndarray:
    if weights is None:
        return np.ones(grid.size)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if weights.shape != (grid.size,) or np.any(weights <= 0.0):
        raise DataError(f"quadrature weights must be {grid.size} positive values")
    return weights

def assemble_covariance(ens: WindEnsemble, weights: Optional[np.ndarray] = None) -> AssembledCovariance:
    """Empirical covariance of the stacked [u; v] member vectors (1/(R-1) normalization)"""
    stacked = ens.stacked()
    mean = stacked.mean(axis=0)
    deviations = stacked - mean
    matrix = deviations.T @ deviations / (ens.n_members - 1)
    n_points = ens.grid.size
    return AssembledCovariance(
        matrix=matrix,
        weights=_uniform_weights(ens.grid, weights),
        mean_u=mean[:n_points],
        mean_v=mean[n_points:],
        n_members=ens.n_members,
    )

def solve_eigenproblem(cov: AssembledCovariance) -> Tuple[np.ndarray, np.ndarray]:
    """Nystrom solution of the covariance eigenproblem.

    Returns:
        eigenvalues (descending, clipped at zero) and eigenvectors as columns,
        orthonormal under <f, g> = sum_s w_s f(s) g(s)
    """
    matrix = np.asarray(cov.matrix, dtype=np.float64)
    scale = max(float(np.max(np.abs(matrix))), np.finfo(float).tiny)
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_RTOL * scale:
        raise NumericalError("assembled covariance is not symmetric")

    w = cov.stacked_weights
    if w.size != matrix.shape[0]:
        raise DataError(f"weights cover {w.size} entries but the covariance has order {matrix.shape[0]}")
    root_w = np.sqrt(w)
    symmetric = root_w[:, None] * matrix * root_w[None, :]
    try:
        eigenvalues, vectors = linalg.eigh(symmetric)
    except linalg.LinAlgError as e:
        raise EigenSolverError(f"eigen-decomposition did not converge: {e}") from e

    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    vectors = vectors[:, order]

    lam_max = max(float(eigenvalues[0]), 0.0)
    if eigenvalues[-1] < -NEGATIVE_EIGEN_RTOL * lam_max:
        logger.warning(f"Covariance has a negative eigenvalue {eigenvalues[-1]:.3g} beyond round-off (max {lam_max:.3g})")
    eigenvalues = np.clip(eigenvalues, 0.0, None)

    eigenvectors = vectors / root_w[:, None]
    # largest-magnitude entry positive
    pivot = np.argmax(np.abs(eigenvectors), axis=0)
    signs = np.sign(eigenvectors[pivot, np.arange(eigenvectors.shape[1])])
    signs[signs == 0] = 1.0
    return eigenvalues, eigenvectors * signs

def selectable_modes(eigenvalues: np.ndarray) -> int:
    """Number of modes above the numerical-zero cut lambda_max * EIGEN_ZERO_RTOL"""
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    if eigenvalues.size == 0 or eigenvalues[0] <= 0.0:
        return 0
    return int(np.count_nonzero(eigenvalues > settings.EIGEN_ZERO_RTOL * eigenvalues[0]))

def truncate(eigenvalues: np.ndarray, delta: float) -> int:
    """Smallest M whose leading eigenvalues explain at least `delta` of the total variance"""
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    eigenvalues = np.asarray(eigenvalues, dtype=np.float64)
    available = selectable_modes(eigenvalues)
    if available == 0:
        raise NumericalError("covariance spectrum is identically zero; the ensemble has no spread")
    cumulative = np.cumsum(eigenvalues)
    total = cumulative[-1]
    # relative slack keeps delta = 1 from failing on summation round-off
    m = int(np.searchsorted(cumulative, delta * total * (1.0 - 1e-12))) + 1
    return min(m, available)

def extract_xi_samples(exp: MuklExpansion, ens: WindEnsemble) -> np.ndarray:
    """R x M matrix of xi_k realizations, one row per member"""
    lam = exp.retained_eigenvalues
    cut = settings.EIGEN_ZERO_RTOL * exp.eigenvalues[0]
    negligible = np.flatnonzero(lam <= cut)
    if negligible.size:
        raise NumericalError(
            f"mode {int(negligible[0]) + 1} has a numerically zero eigenvalue; truncate to at most "
            f"{selectable_modes(exp.eigenvalues)} modes"
        )
    mean = np.concatenate([exp.mean_u, exp.mean_v])
    deviations = ens.stacked() - mean
    weighted = deviations * np.tile(exp.weights, 2)
    return (weighted @ exp.eigenvectors) / np.sqrt(lam)

def build_expansion(
    ens: WindEnsemble,
    m: Optional[int] = None,
    delta: Optional[float] = None,
    weights: Optional[np.ndarray] = None,
) -> MuklExpansion:
    """Assemble, solve, truncate (fixed M or explained fraction delta) and extract xi"""
    if (m is None) == (delta is None):
        raise ValueError("give exactly one of m or delta")
    cov = assemble_covariance(ens, weights)
    eigenvalues, eigenvectors = solve_eigenproblem(cov)
    available = selectable_modes(eigenvalues)
    if available == 0:
        raise NumericalError("covariance spectrum is identically zero; the ensemble has no spread")

    if delta is not None:
        m = truncate(eigenvalues, delta)
    elif m < 1:
        raise ValueError(f"m must be at least 1, got {m}")
    elif m > available:
        raise NumericalError(f"m={m} exceeds the {available} modes with nonzero variance")

    expansion = MuklExpansion(
        grid=ens.grid,
        weights=cov.weights,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors[:, :m],
        mean_u=cov.mean_u,
        mean_v=cov.mean_v,
    )
    expansion = replace(expansion, xi_samples=extract_xi_samples(expansion, ens))
    logger.info(
        f"Built expansion with M={m} of {available} modes, "
        f"explaining {100.0 * expansion.cumulative_fraction:.4f}% of the variance"
    )
    return expansion

def truncated(exp: MuklExpansion, m: int) -> MuklExpansion:
    if not 1 <= m <= exp.m:
        raise ValueError(f"m must lie in [1, {exp.m}], got {m}")
    xi = None if exp.xi_samples is None else exp.xi_samples[:, :m]
    return replace(exp, eigenvectors=exp.eigenvectors[:, :m], xi_samples=xi)

def reconstruct_member(exp: MuklExpansion, xi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(u, v) fields of shape |lats| x |lons| for one xi vector"""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (exp.m,):
        raise ValueError(f"xi must have length {exp.m}, got shape {xi.shape}")
    stacked = np.concatenate([exp.mean_u, exp.mean_v]) + exp.eigenvectors @ (np.sqrt(exp.retained_eigenvalues) * xi)
    n = exp.n_points
    return stacked[:n].reshape(exp.grid.shape), stacked[n:].reshape(exp.grid.shape)

def explained_variance_table(exp: MuklExpansion, n_modes: Optional[int] = None) -> List[Tuple[int, float, float, float]]:
    """Rows (k, lambda_k, percent, cumulative percent) for the first `n_modes` (default M)"""
    n_modes = exp.m if n_modes is None else min(n_modes, exp.eigenvalues.size)
    percent = 100.0 * exp.explained_fraction
    cumulative = np.cumsum(percent)
    return [
        (k + 1, float(exp.eigenvalues[k]), float(percent[k]), float(cumulative[k]))
        for k in range(n_modes)
    ]

class ExpansionWindModel:
    """RBF interpolants of the mean fields and every sqrt(lambda_k)-scaled subfunction.

    The wind field of any xi is a linear mix of these columns, fitted once.
    """

    def __init__(self, exp: MuklExpansion, epsilon: Optional[float] = None, tail_degree: int = 0):
        self.expansion = exp
        system = RbfSystem(exp.grid, epsilon=epsilon, tail_degree=tail_degree)
        root_lam = np.sqrt(exp.retained_eigenvalues)
        columns = [exp.mean_u, exp.mean_v]
        for k in range(exp.m):
            columns.append(exp.subfunctions("u")[:, k] * root_lam[k])
            columns.append(exp.subfunctions("v")[:, k] * root_lam[k])
        # column order: mean u, mean v, then (u_k, v_k) per mode
        self._interpolant = system.fit(np.column_stack(columns))
        self.epsilon = system.epsilon

    def field(self, xi: np.ndarray) -> GriddedWindField:
        xi = np.asarray(xi, dtype=np.float64)
        if xi.shape != (self.expansion.m,):
            raise ValueError(f"xi must have length {self.expansion.m}, got shape {xi.shape}")
        mixing = np.zeros((2 + 2 * xi.size, 2))
        mixing[0, 0] = mixing[1, 1] = 1.0
        mixing[2::2, 0] = xi
        mixing[3::2, 1] = xi
        return GriddedWindField(self._interpolant.mixed(mixing))

def wind_field(exp: MuklExpansion, xi: np.ndarray, epsilon: Optional[float] = None) -> GriddedWindField:
    return ExpansionWindModel(exp, epsilon=epsilon).field(xi)

def save_expansion(exp: MuklExpansion, path: Union[str, Path]) -> None:
    """Archive `WCDMUKL1`: dims (n_lat, n_lon, n_eig, M, R), then lats, lons,
    weights, all eigenvalues, mean u, mean v, eigenvectors (2S x M), xi (R x M)"""
    xi = exp.xi_samples if exp.xi_samples is not None else np.zeros((0, exp.m))
    n_lat, n_lon = exp.grid.shape
    write_archive(
        path,
        ARCHIVE_MAGIC,
        [n_lat, n_lon, exp.eigenvalues.size, exp.m, xi.shape[0]],
        [exp.grid.lats, exp.grid.lons, exp.weights, exp.eigenvalues,
         exp.mean_u, exp.mean_v, exp.eigenvectors, xi],
    )

def load_expansion(path: Union[str, Path]) -> MuklExpansion:
    dims, reader = read_archive(path, ARCHIVE_MAGIC)
    if len(dims) != 5:
        raise DataError(f"{path}: expected 5 header dims, found {len(dims)}")
    n_lat, n_lon, n_eig, m, n_members = dims
    n_points = n_lat * n_lon
    grid = WindGrid(lats=reader.take(n_lat), lons=reader.take(n_lon))
    weights = reader.take(n_points)
    eigenvalues = reader.take(n_eig)
    mean_u = reader.take(n_points)
    mean_v = reader.take(n_points)
    eigenvectors = reader.take(2 * n_points, m)
    xi = reader.take(n_members, m)
    reader.finish()
    return MuklExpansion(
        grid=grid,
        weights=weights,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
        mean_u=mean_u,
        mean_v=mean_v,
        xi_samples=xi if n_members else None,
    )
