"""Builders shared by the test modules: small grids, ensembles, planners and scenario files"""
from pathlib import Path
from typing import Dict, Optional, Tuple
import math

import numpy as np
import pandas as pd

from src.schemas.ensemble import CorrelationSpec
from src.schemas.scenario import AircraftSpec
from src.services.ensemble_io import WindEnsemble, WindGrid, generate_synthetic_ensemble, regular_grid
from src.services.trajectory import Trajectory, WindFieldView, time_grid
from src.utils.geo import haversine_distance, initial_bearing

# routes of the three-aircraft cruise scenario, all inside GRID_EXTENT
TABLE_ROUTES: Dict[str, Tuple[Tuple[float, float], Tuple[float, float]]] = {
    "A": ((25.869, -18.389), (28.505, -14.677)),
    "B": ((25.283, -17.428), (28.689, -14.967)),
    "C": ((25.147, -14.964), (28.746, -15.547)),
}

GRID_EXTENT = (24.0, 30.0, -20.0, -13.0)

def small_grid(resolution: float = 1.0) -> WindGrid:
    """7 x 8 grid over the scenario area at 1 degree"""
    return regular_grid(*GRID_EXTENT, resolution)

def synthetic_ensemble(
    seed: int = 0,
    members: int = 40,
    grid: Optional[WindGrid] = None,
    **correlation,
) -> WindEnsemble:
    return generate_synthetic_ensemble(seed, grid or small_grid(), members, CorrelationSpec(**correlation))

def rank_one_ensemble(members: int = 4, amplitude: float = 3.0, grid: Optional[WindGrid] = None) -> WindEnsemble:
    """Members mean +/- amplitude * pattern, alternating sign, so the spread is one mode"""
    grid = grid or small_grid()
    lat_mesh, lon_mesh = np.meshgrid(grid.lats, grid.lons, indexing="ij")
    pattern_u = 1.0 + 0.1 * (lat_mesh - grid.lats.mean())
    pattern_v = 0.5 - 0.05 * (lon_mesh - grid.lons.mean())
    signs = np.array([1.0 if r % 2 == 0 else -1.0 for r in range(members)])
    u = 20.0 + amplitude * signs[:, None, None] * pattern_u[None]
    v = 1.0 + amplitude * signs[:, None, None] * pattern_v[None]
    return WindEnsemble(grid=grid, u=u, v=v)

def write_ensemble_csv(path: Path, rows) -> Path:
    """Write raw (member, lat, lon, u, v) rows with the ensemble header"""
    frame = pd.DataFrame(rows, columns=["member", "lat", "lon", "u", "v"])
    frame.to_csv(path, index=False, lineterminator="\n")
    return path

def aircraft(
    aircraft_id: str,
    origin: Tuple[float, float],
    destination: Tuple[float, float],
    airspeed: float = 230.0,
) -> AircraftSpec:
    return AircraftSpec(id=aircraft_id, origin=origin, destination=destination, airspeed=airspeed)

def table_aircraft(*ids: str) -> list:
    return [aircraft(i, *TABLE_ROUTES[i]) for i in (ids or tuple(TABLE_ROUTES))]

class StraightLinePlanner:
    """Stub planner: straight lat/lon line at a ground speed set by the wind at the origin.

    Only honours the planner contract (shared time grid, frozen after arrival);
    used to check that downstream code does not depend on the reference planner.
    """

    def plan(self, spec: AircraftSpec, wind: WindFieldView, dt: float, t_max: float) -> Trajectory:
        times = time_grid(dt, t_max)
        radius = 6_371_000.0 + spec.altitude
        course = initial_bearing(spec.origin, spec.destination)
        wind_east, wind_north = wind(*spec.origin)
        ground_speed = spec.airspeed + wind_east * math.sin(course) + wind_north * math.cos(course)
        length = haversine_distance(spec.origin, spec.destination, radius)
        fraction = np.clip(times * ground_speed / length, 0.0, 1.0)
        lat = spec.origin[0] + fraction * (spec.destination[0] - spec.origin[0])
        lon = spec.origin[1] + fraction * (spec.destination[1] - spec.origin[1])
        arrived = np.flatnonzero(fraction >= 1.0)
        return Trajectory(
            aircraft_id=spec.id,
            times=times,
            lat=lat,
            lon=lon,
            heading=np.full(times.size, math.degrees(course)),
            radius=radius,
            arrival_index=int(arrived[0]) if arrived.size else None,
            arrival_time=length / ground_speed,
        )

def _format(value) -> str:
    if isinstance(value, (tuple, list)):
        return ", ".join(str(v) for v in value)
    return str(value)

def write_scenario(
    directory: Path,
    aircraft_routes: Optional[Dict[str, Tuple[Tuple[float, float], Tuple[float, float]]]] = None,
    name: str = "scenario.ini",
    **sections: Dict[str, object],
) -> Path:
    """Scenario file over the synthetic ensemble; keyword sections override or extend the defaults.

    Passing a section as None drops it (e.g. synthetic=None together with an ensemble section).
    """
    base: Dict[str, Optional[Dict[str, object]]] = {
        "run": {"output_dir": str(directory / "run"), "seed": 7},
        "synthetic": {
            "lat_min": GRID_EXTENT[0], "lat_max": GRID_EXTENT[1],
            "lon_min": GRID_EXTENT[2], "lon_max": GRID_EXTENT[3],
            "resolution_deg": 1.0, "members": 30,
            "correlation_length_deg": 4.0, "std_u": 3.0, "std_v": 3.0,
        },
        "expansion": {"M": 2},
        "quadrature": {"p": 2},
        "planner": {"dt": 30.0, "t_max": 3600.0},
        "conflict": {"threshold_nm": 5.0, "probe_count": 3, "probe_spacing": 60.0, "ensemble_baseline": "false"},
    }
    for section, values in sections.items():
        if values is None:
            base[section] = None
        elif base.get(section) is None or section == "expansion":
            base[section] = dict(values)
        else:
            base[section] = {**base[section], **values}

    routes = aircraft_routes or {k: TABLE_ROUTES[k] for k in ("A", "B")}
    lines = []
    for section, values in base.items():
        if values is None:
            continue
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {_format(value)}" for key, value in values.items())
        lines.append("")
    for aircraft_id, (origin, destination) in routes.items():
        lines += [
            f"[aircraft.{aircraft_id}]",
            f"origin = {_format(origin)}",
            f"destination = {_format(destination)}",
            "airspeed = 230",
            "",
        ]
    path = directory / name
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
