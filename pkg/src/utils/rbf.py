"""Gaussian radial basis interpolation of gridded fields, exp(-(eps * r)^2) in (lat, lon) degrees."""
from dataclasses import dataclass, replace
from typing import Optional, Tuple, Union
import logging

import numpy as np
from scipy import linalg
from scipy.interpolate import RBFInterpolator
from scipy.spatial import cKDTree

from src.core.config import settings
from src.core.exceptions import OutOfDomainError, SingularCollocationError
from src.services.ensemble_io import WindGrid, grid_points

logger = logging.getLogger(__name__)

DOMAIN_TOLERANCE_DEG = 1e-9
COLLOCATION_RTOL = 1e-8

def default_epsilon(points: np.ndarray) -> float:
    """1 / median nearest-neighbour spacing of the centers"""
    distances, _ = cKDTree(points).query(points, k=2)
    spacing = float(np.median(distances[:, 1]))
    if spacing <= 0.0:
        raise SingularCollocationError("duplicate RBF centers; cannot derive a shape parameter")
    return 1.0 / spacing

@dataclass(frozen=True)
class RbfInterpolant:
    """Fitted interpolant over k data columns, optionally mixed linearly into fewer output fields.

    Interpolation is linear in the data, so `mixed(matrix)` evaluates the
    interpolant of `values @ matrix` without refitting.
    """
    interpolator: RBFInterpolator
    epsilon: float
    tail_degree: int
    bounds: Tuple[float, float, float, float]
    n_columns: int
    mixing: Optional[np.ndarray] = None

    @property
    def n_fields(self) -> int:
        if self.mixing is not None:
            return self.mixing.shape[1]
        return self.n_columns

    def mixed(self, matrix: np.ndarray) -> "RbfInterpolant":
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != self.n_columns:
            raise ValueError(f"mixing matrix must have {self.n_columns} rows, got shape {matrix.shape}")
        return replace(self, mixing=matrix)

    def check_domain(self, lat: np.ndarray, lon: np.ndarray) -> None:
        lat_min, lat_max, lon_min, lon_max = self.bounds
        tol = DOMAIN_TOLERANCE_DEG
        outside = (
            (lat < lat_min - tol) | (lat > lat_max + tol)
            | (lon < lon_min - tol) | (lon > lon_max + tol)
        )
        if np.any(outside):
            k = int(np.flatnonzero(np.atleast_1d(outside))[0])
            bad_lat = float(np.atleast_1d(lat)[k])
            bad_lon = float(np.atleast_1d(lon)[k])
            raise OutOfDomainError(
                f"point (lat={bad_lat:.6f}, lon={bad_lon:.6f}) is outside the grid "
                f"[{lat_min}, {lat_max}] x [{lon_min}, {lon_max}]"
            )

    def evaluate(self, lat: Union[float, np.ndarray], lon: Union[float, np.ndarray]) -> np.ndarray:
        """Values at points; shape (m,) for a single field or (m, k) for k fields"""
        lat = np.atleast_1d(np.asarray(lat, dtype=np.float64))
        lon = np.atleast_1d(np.asarray(lon, dtype=np.float64))
        self.check_domain(lat, lon)
        values = self.interpolator(np.column_stack([lat, lon]))
        if self.mixing is not None:
            values = values.reshape(lat.size, -1) @ self.mixing
        return values

class RbfSystem:
    """Kernel settings for one grid; `fit` solves for any number of fields at once"""

    def __init__(self, grid: WindGrid, epsilon: Optional[float] = None, tail_degree: int = 0):
        if tail_degree not in (-1, 0, 1):
            raise ValueError(f"tail_degree must be -1, 0 or 1, got {tail_degree}")
        self.grid = grid
        self.centers = grid_points(grid)
        self.epsilon = default_epsilon(self.centers) if epsilon is None else float(epsilon)
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {epsilon}")
        self.tail_degree = tail_degree

    def _solve(self, values: np.ndarray, smoothing: float) -> Optional[RBFInterpolator]:
        """Interpolator that reproduces `values` at the centers, or None"""
        try:
            interpolator = RBFInterpolator(
                self.centers,
                values,
                kernel="gaussian",
                epsilon=self.epsilon,
                degree=self.tail_degree,
                smoothing=smoothing,
            )
        except linalg.LinAlgError:
            return None
        residual = np.abs(interpolator(self.centers) - values)
        if np.any(residual > COLLOCATION_RTOL * (1.0 + np.abs(values))):
            logger.debug(f"RBF residual {residual.max():.3g} at smoothing={smoothing:.3g}")
            return None
        return interpolator

    def fit(self, values: np.ndarray) -> RbfInterpolant:
        """Fit one field (S,) or several fields (S, k) given in flat grid order"""
        values = np.asarray(values, dtype=np.float64)
        if values.shape[0] != self.centers.shape[0] or values.ndim > 2:
            raise ValueError(f"values must have {self.centers.shape[0]} rows, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")

        interpolator = self._solve(values, 0.0)
        if interpolator is None:
            reg = settings.RBF_REGULARIZATION
            logger.warning(f"RBF collocation ill-conditioned (eps={self.epsilon:.4g}); regularizing by {reg:.3g}")
            interpolator = self._solve(values, reg)
        if interpolator is None:
            raise SingularCollocationError(
                f"RBF collocation matrix is singular for epsilon={self.epsilon:.4g}; "
                "increase epsilon (narrower kernels) to improve conditioning"
            )
        return RbfInterpolant(
            interpolator=interpolator,
            epsilon=self.epsilon,
            tail_degree=self.tail_degree,
            bounds=self.grid.bounds,
            n_columns=1 if values.ndim == 1 else values.shape[1],
        )

def fit_rbf(
    grid: WindGrid,
    values: np.ndarray,
    epsilon: Optional[float] = None,
    tail_degree: int = 0,
) -> RbfInterpolant:
    """Interpolant of a |lats| x |lons| field (or a flat length-S vector)"""
    values = np.asarray(values, dtype=np.float64)
    if values.shape == grid.shape:
        values = values.reshape(-1)
    elif values.shape != (grid.size,):
        raise ValueError(f"values shape {values.shape} does not match grid shape {grid.shape}")
    return RbfSystem(grid, epsilon=epsilon, tail_degree=tail_degree).fit(values)

def eval_rbf(interp: RbfInterpolant, lat: float, lon: float) -> float:
    """Scalar evaluation of a single-field interpolant"""
    if interp.n_fields != 1:
        raise ValueError("eval_rbf expects a single-field interpolant")
    return float(np.ravel(interp.evaluate(lat, lon))[0])

@dataclass(frozen=True)
class GriddedWindField:
    """Wind view (lat, lon) -> (V_WE, V_WN) backed by a two-field interpolant"""
    interpolant: RbfInterpolant

    def __post_init__(self):
        if self.interpolant.n_fields != 2:
            raise ValueError("GriddedWindField needs a two-field (u, v) interpolant")

    def __call__(self, lat: float, lon: float) -> Tuple[float, float]:
        u, v = self.interpolant.evaluate(lat, lon)[0]
        return float(u), float(v)

    @classmethod
    def from_fields(
        cls,
        grid: WindGrid,
        u: np.ndarray,
        v: np.ndarray,
        epsilon: Optional[float] = None,
        tail_degree: int = 0,
    ) -> "GriddedWindField":
        system = RbfSystem(grid, epsilon=epsilon, tail_degree=tail_degree)
        values = np.column_stack([np.asarray(u, dtype=np.float64).reshape(-1), np.asarray(v, dtype=np.float64).reshape(-1)])
        return cls(system.fit(values))

@dataclass(frozen=True)
class UniformWind:
    """Spatially constant wind; handy for closed-form checks"""
    east: float = 0.0
    north: float = 0.0

    def __call__(self, lat: float, lon: float) -> Tuple[float, float]:
        return self.east, self.north
