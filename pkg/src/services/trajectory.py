from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Tuple, Union
import logging
import math

import numpy as np
import pandas as pd

from src.core.config import settings
from src.core.exceptions import DataError, PlannerError
from src.schemas.scenario import AircraftSpec
from src.utils.geo import haversine_array, haversine_distance, initial_bearing, wind_triangle

logger = logging.getLogger(__name__)

class WindFieldView(Protocol):
    def __call__(self, lat: float, lon: float) -> Tuple[float, float]:
        """(V_WE, V_WN) in m/s at a point given in degrees"""
        ...

@dataclass(frozen=True)
class Trajectory:
    aircraft_id: str
    times: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    heading: np.ndarray
    radius: float
    arrival_index: Optional[int] = None
    arrival_time: Optional[float] = None

    @property
    def arrived(self) -> bool:
        return self.arrival_index is not None

    def positions(self) -> np.ndarray:
        return np.column_stack([self.lat, self.lon])

class TrajectoryPlanner(Protocol):
    def plan(self, spec: AircraftSpec, wind: WindFieldView, dt: float, t_max: float) -> Trajectory:
        ...

def time_grid(dt: float, t_max: float) -> np.ndarray:
    """t_0 = 0 .. t_T with T = ceil(t_max / dt)"""
    if dt <= 0.0 or t_max <= 0.0:
        raise ValueError(f"dt and t_max must be positive, got dt={dt}, t_max={t_max}")
    n_steps = int(math.ceil(t_max / dt - 1e-9))
    return np.arange(n_steps + 1) * dt

class WindTrackingPlanner:
    """Constant-airspeed great-circle tracking with wind-corrected heading, integrated with fixed-step RK4.

    After arrival the position is held at the destination.
    """

    def __init__(
        self,
        earth_radius: float = settings.EARTH_RADIUS_M,
        arrival_tolerance: float = settings.ARRIVAL_TOLERANCE_M,
    ):
        self.earth_radius = earth_radius
        self.arrival_tolerance = arrival_tolerance

    def _rates(self, spec: AircraftSpec, wind: WindFieldView, radius: float, phi: float, lam: float):
        lat, lon = math.degrees(phi), math.degrees(lam)
        wind_east, wind_north = wind(lat, lon)
        course = initial_bearing((lat, lon), spec.destination)
        try:
            heading, ground_speed = wind_triangle(course, wind_east, wind_north, spec.airspeed)
        except PlannerError as e:
            raise PlannerError(f"aircraft {spec.id} at ({lat:.4f}, {lon:.4f}): {e}") from e
        phi_dot = (spec.airspeed * math.cos(heading) + wind_north) / radius
        lam_dot = (spec.airspeed * math.sin(heading) + wind_east) / (radius * math.cos(phi))
        return phi_dot, lam_dot, heading, ground_speed

    def plan(self, spec: AircraftSpec, wind: WindFieldView, dt: float, t_max: float) -> Trajectory:
        times = time_grid(dt, t_max)
        radius = self.earth_radius + spec.altitude
        n = times.size
        lat = np.empty(n)
        lon = np.empty(n)
        heading = np.empty(n)
        dest_lat, dest_lon = spec.destination

        phi, lam = math.radians(spec.origin[0]), math.radians(spec.origin[1])
        arrival_index = None
        arrival_time = None
        for k in range(n):
            lat[k], lon[k] = math.degrees(phi), math.degrees(lam)
            k1_phi, k1_lam, chi, ground_speed = self._rates(spec, wind, radius, phi, lam)
            heading[k] = math.degrees(chi)

            distance = haversine_distance((lat[k], lon[k]), spec.destination, radius)
            if distance <= self.arrival_tolerance or distance < 0.5 * ground_speed * dt:
                arrival_index = k
                arrival_time = float(times[k] + distance / ground_speed)
                lat[k + 1:] = dest_lat
                lon[k + 1:] = dest_lon
                heading[k + 1:] = heading[k]
                break
            if k == n - 1:
                break

            k2_phi, k2_lam, _, _ = self._rates(spec, wind, radius, phi + 0.5 * dt * k1_phi, lam + 0.5 * dt * k1_lam)
            k3_phi, k3_lam, _, _ = self._rates(spec, wind, radius, phi + 0.5 * dt * k2_phi, lam + 0.5 * dt * k2_lam)
            k4_phi, k4_lam, _, _ = self._rates(spec, wind, radius, phi + dt * k3_phi, lam + dt * k3_lam)
            phi += dt * (k1_phi + 2.0 * k2_phi + 2.0 * k3_phi + k4_phi) / 6.0
            lam += dt * (k1_lam + 2.0 * k2_lam + 2.0 * k3_lam + k4_lam) / 6.0

        trajectory = Trajectory(
            aircraft_id=spec.id,
            times=times,
            lat=lat,
            lon=lon,
            heading=heading,
            radius=radius,
            arrival_index=arrival_index,
            arrival_time=arrival_time,
        )
        if arrival_index is None:
            raise PlannerError(
                f"aircraft {spec.id} did not reach its destination within t_max={t_max:.0f} s",
                partial=trajectory,
            )
        logger.debug(f"Aircraft {spec.id} arrives at t={arrival_time:.2f} s (step {arrival_index})")
        return trajectory

def plan_trajectory(
    spec: AircraftSpec,
    wind: WindFieldView,
    dt: float = settings.DEFAULT_DT_S,
    t_max: float = settings.DEFAULT_T_MAX_S,
) -> Trajectory:
    return WindTrackingPlanner().plan(spec, wind, dt, t_max)

def separation_series(traj_a: Trajectory, traj_b: Trajectory) -> np.ndarray:
    """Haversine distance per shared step, on the mean cruise radius of the pair"""
    if traj_a.times.shape != traj_b.times.shape or not np.allclose(traj_a.times, traj_b.times, rtol=0.0, atol=1e-9):
        raise DataError(f"trajectories {traj_a.aircraft_id} and {traj_b.aircraft_id} use different time grids")
    radius = 0.5 * (traj_a.radius + traj_b.radius)
    return haversine_array(traj_a.lat, traj_a.lon, traj_b.lat, traj_b.lon, radius)

def write_trajectory_csv(traj: Trajectory, path: Union[str, Path]) -> None:
    frame = pd.DataFrame({"t": traj.times, "lat": traj.lat, "lon": traj.lon, "heading": traj.heading})
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")
