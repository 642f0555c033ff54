"""Forecast grid, ensemble ingestion and synthetic members. Grid points are flattened lat-major."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd
from scipy import linalg

from src.core.config import settings
from src.core.exceptions import (
    DataError,
    GridMismatchError,
    InsufficientMembersError,
    MissingCellError,
    NonFiniteValueError,
)
from src.schemas.ensemble import CorrelationSpec

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["member", "lat", "lon", "u", "v"]

PathLike = Union[str, Path]

def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.flags.writeable = False
    return array

@dataclass(frozen=True)
class WindGrid:
    """Regular latitude-longitude grid (degrees)"""
    lats: np.ndarray
    lons: np.ndarray
    resolution: Optional[float] = None

    def __post_init__(self):
        lats = _readonly(self.lats)
        lons = _readonly(self.lons)
        for name, axis in (("lats", lats), ("lons", lons)):
            if axis.ndim != 1 or axis.size < 2:
                raise DataError(f"grid axis '{name}' needs at least 2 points")
            if not np.all(np.diff(axis) > 0):
                raise DataError(f"grid axis '{name}' must be strictly increasing")
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        if self.resolution is None:
            spacing = np.concatenate([np.diff(lats), np.diff(lons)])
            object.__setattr__(self, "resolution", float(np.median(spacing)))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.lats.size, self.lons.size)

    @property
    def size(self) -> int:
        return self.lats.size * self.lons.size

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        """(lat_min, lat_max, lon_min, lon_max)"""
        return (float(self.lats[0]), float(self.lats[-1]), float(self.lons[0]), float(self.lons[-1]))

    def same_as(self, other: "WindGrid") -> bool:
        return np.array_equal(self.lats, other.lats) and np.array_equal(self.lons, other.lons)

def regular_grid(
    lat_min: float,
    lat_max: float,
    lon_min: float,
    lon_max: float,
    resolution: float,
) -> WindGrid:
    """Grid with the given extent and spacing (end points included)"""
    n_lat = int(round((lat_max - lat_min) / resolution)) + 1
    n_lon = int(round((lon_max - lon_min) / resolution)) + 1
    return WindGrid(
        lats=np.linspace(lat_min, lat_max, n_lat),
        lons=np.linspace(lon_min, lon_max, n_lon),
        resolution=resolution,
    )

def grid_index(grid: WindGrid, i_lat: int, i_lon: int) -> int:
    """Flat (lat-major) index of a grid cell"""
    n_lat, n_lon = grid.shape
    if not (0 <= i_lat < n_lat and 0 <= i_lon < n_lon):
        raise IndexError(f"cell ({i_lat}, {i_lon}) outside grid of shape {grid.shape}")
    return i_lat * n_lon + i_lon

def grid_points(grid: WindGrid) -> np.ndarray:
    """(S, 2) array of (lat, lon) in flat index order"""
    lat_mesh, lon_mesh = np.meshgrid(grid.lats, grid.lons, indexing="ij")
    points = np.column_stack([lat_mesh.ravel(), lon_mesh.ravel()])
    assert grid_index(grid, grid.shape[0] - 1, 0) == (grid.shape[0] - 1) * grid.shape[1]
    return points

def flatten_field(grid: WindGrid, field_values: np.ndarray) -> np.ndarray:
    """Matrix of shape |lats| x |lons| to a length-S vector in flat order"""
    field_values = np.asarray(field_values, dtype=np.float64)
    if field_values.shape != grid.shape:
        raise DataError(f"field shape {field_values.shape} does not match grid shape {grid.shape}")
    return field_values.reshape(-1)

@dataclass(frozen=True)
class WindEnsemble:
    """R equiprobable members with eastward (u) and northward (v) components (m/s)"""
    grid: WindGrid
    u: np.ndarray
    v: np.ndarray
    member_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        u = _readonly(self.u)
        v = _readonly(self.v)
        n_lat, n_lon = self.grid.shape
        if u.ndim != 3 or u.shape[1:] != (n_lat, n_lon) or v.shape != u.shape:
            raise DataError(f"member fields must have shape (R, {n_lat}, {n_lon})")
        if u.shape[0] < 2:
            raise InsufficientMembersError(
                f"ensemble has {u.shape[0]} member(s); covariance estimation needs at least 2"
            )
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise DataError("ensemble contains non-finite wind values")
        ids = np.arange(u.shape[0]) if self.member_ids is None else np.asarray(self.member_ids, dtype=np.int64)
        if ids.shape != (u.shape[0],):
            raise DataError("member_ids must hold one id per member")
        ids = ids.copy()
        ids.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "member_ids", ids)

    @property
    def n_members(self) -> int:
        return self.u.shape[0]

    @property
    def member_weights(self) -> np.ndarray:
        return np.full(self.n_members, 1.0 / self.n_members)

    def stacked(self) -> np.ndarray:
        """(R, 2S) matrix of [u(s); v(s)] per member, flat lat-major"""
        n = self.n_members
        return np.hstack([self.u.reshape(n, -1), self.v.reshape(n, -1)])

def load_ensemble(path: PathLike, format: str = "csv") -> WindEnsemble:
    """Read one ensemble file with header ``member,lat,lon,u,v``"""
    if format != "csv":
        raise DataError(f"unsupported ensemble format '{format}'")
    path = Path(path)
    if not path.exists():
        raise DataError(f"ensemble file not found: {path}")

    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    if list(frame.columns) != CSV_COLUMNS:
        raise DataError(f"{path}: expected header {','.join(CSV_COLUMNS)}, got {','.join(map(str, frame.columns))}")
    if frame.empty:
        raise InsufficientMembersError(f"{path}: no rows")

    for column in CSV_COLUMNS:
        values = pd.to_numeric(frame[column], errors="coerce").to_numpy(dtype=np.float64)
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            # header is line 1
            raise NonFiniteValueError(row=int(bad[0]) + 2, column=column)

    members = frame["member"].to_numpy()
    if not np.issubdtype(members.dtype, np.integer) or np.any(members < 0):
        raise DataError(f"{path}: member ids must be non-negative integers")

    lat = frame["lat"].to_numpy(dtype=np.float64)
    lon = frame["lon"].to_numpy(dtype=np.float64)
    lats = np.unique(lat)
    lons = np.unique(lon)
    member_ids = np.unique(members)
    if member_ids.size < 2:
        raise InsufficientMembersError(f"{path}: found {member_ids.size} member(s); at least 2 are required")
    grid = WindGrid(lats=lats, lons=lons)

    m_idx = np.searchsorted(member_ids, members)
    i_idx = np.searchsorted(lats, lat)
    j_idx = np.searchsorted(lons, lon)
    shape = (member_ids.size, lats.size, lons.size)
    counts = np.zeros(shape, dtype=np.int64)
    np.add.at(counts, (m_idx, i_idx, j_idx), 1)

    duplicated = np.argwhere(counts > 1)
    if duplicated.size:
        m, i, j = duplicated[0]
        raise DataError(
            f"{path}: member {member_ids[m]} lists cell (lat={lats[i]}, lon={lons[j]}) more than once"
        )
    missing = np.argwhere(counts == 0)
    if missing.size:
        m, i, j = missing[0]
        raise MissingCellError(int(member_ids[m]), float(lats[i]), float(lons[j]))

    u = np.empty(shape)
    v = np.empty(shape)
    u[m_idx, i_idx, j_idx] = frame["u"].to_numpy(dtype=np.float64)
    v[m_idx, i_idx, j_idx] = frame["v"].to_numpy(dtype=np.float64)

    logger.info(f"Loaded {member_ids.size} members on a {lats.size}x{lons.size} grid from {path}")
    return WindEnsemble(grid=grid, u=u, v=v, member_ids=member_ids)

def load_ensembles(paths: Sequence[PathLike]) -> WindEnsemble:
    """Pool several forecast files as equally weighted members (ids renumbered in file order)"""
    if not paths:
        raise DataError("no ensemble files given")
    ensembles = [load_ensemble(p) for p in paths]
    grid = ensembles[0].grid
    for path, ens in zip(paths[1:], ensembles[1:]):
        if not ens.grid.same_as(grid):
            raise GridMismatchError(f"{path}: grid differs from {paths[0]}")
    if len(ensembles) == 1:
        return ensembles[0]
    u = np.concatenate([e.u for e in ensembles])
    v = np.concatenate([e.v for e in ensembles])
    logger.info(f"Pooled {len(ensembles)} forecast files into {u.shape[0]} members")
    return WindEnsemble(grid=grid, u=u, v=v, member_ids=np.arange(u.shape[0]))

def save_ensemble(ens: WindEnsemble, path: PathLike) -> None:
    """Write the CSV format: member-major, then lat-major rows, 9 significant digits"""
    points = grid_points(ens.grid)
    n_points = points.shape[0]
    frame = pd.DataFrame({
        "member": np.repeat(ens.member_ids, n_points),
        "lat": np.tile(points[:, 0], ens.n_members),
        "lon": np.tile(points[:, 1], ens.n_members),
        "u": ens.u.reshape(-1),
        "v": ens.v.reshape(-1),
    })
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(
        path,
        index=False,
        float_format=settings.CSV_FLOAT_FORMAT,
        lineterminator="\n",
        encoding="utf-8",
    )

def ensemble_statistics(ens: WindEnsemble) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-cell (mean_u, mean_v, std_u, std_v) over members"""
    return (
        ens.u.mean(axis=0),
        ens.v.mean(axis=0),
        ens.u.std(axis=0, ddof=1),
        ens.v.std(axis=0, ddof=1),
    )

def _field_factor(points: np.ndarray, correlation_length: float) -> np.ndarray:
    """Matrix A with A @ A.T equal to the unit-variance squared-exponential covariance"""
    if math.isinf(correlation_length):
        return np.ones((points.shape[0], 1))
    diff = points[:, None, :] - points[None, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    cov = np.exp(-dist2 / (2.0 * correlation_length ** 2))
    eigvals, eigvecs = linalg.eigh(cov)
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))

def generate_synthetic_ensemble(
    seed: int,
    grid: WindGrid,
    n_members: int,
    spec: Optional[CorrelationSpec] = None,
) -> WindEnsemble:
    """Members drawn from a Gaussian random field; deterministic for a given seed"""
    spec = spec or CorrelationSpec()
    if n_members < 2:
        raise InsufficientMembersError(f"n_members={n_members}; at least 2 are required")

    rng = np.random.default_rng(seed)
    factor = _field_factor(grid_points(grid), spec.correlation_length_deg)
    z1 = rng.standard_normal((n_members, factor.shape[1]))
    z2 = rng.standard_normal((n_members, factor.shape[1]))
    rho = spec.cross_correlation

    base_u = z1 @ factor.T
    base_v = (rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z2) @ factor.T
    shape = (n_members,) + grid.shape
    u = spec.mean_u + spec.std_u * base_u.reshape(shape)
    v = spec.mean_v + spec.std_v * base_v.reshape(shape)

    logger.debug(f"Generated {n_members} synthetic members (seed={seed}, L={spec.correlation_length_deg})")
    return WindEnsemble(grid=grid, u=u, v=v, member_ids=np.arange(n_members))
