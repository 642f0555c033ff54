"""Spherical-earth helpers. Positions in degrees, bearings and headings in radians."""
from typing import Tuple, Union
import math

import numpy as np

from src.core.exceptions import PlannerError

LatLon = Tuple[float, float]
ArrayLike = Union[float, np.ndarray]

def haversine_distance(p1: LatLon, p2: LatLon, radius: float) -> float:
    """Great-circle distance (m) between two (lat, lon) points in degrees"""
    return float(haversine_array(p1[0], p1[1], p2[0], p2[1], radius))

def haversine_array(
    lat1: ArrayLike,
    lon1: ArrayLike,
    lat2: ArrayLike,
    lon2: ArrayLike,
    radius: ArrayLike,
) -> np.ndarray:
    """Element-wise haversine distance over broadcastable arrays"""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2.0) ** 2
    # clip guards asin against round-off above 1
    return 2.0 * np.asarray(radius) * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))

def initial_bearing(p1: LatLon, p2: LatLon) -> float:
    """Initial great-circle bearing (rad, clockwise from north) from p1 towards p2"""
    phi1, phi2 = math.radians(p1[0]), math.radians(p2[0])
    dlam = math.radians(p2[1] - p1[1])
    y = math.sin(dlam) * math.cos(phi2)
    x = math.cos(phi1) * math.sin(phi2) - math.sin(phi1) * math.cos(phi2) * math.cos(dlam)
    return math.atan2(y, x)

def wind_triangle(course: float, wind_east: float, wind_north: float, airspeed: float) -> Tuple[float, float]:
    """Heading and ground speed that keep the ground track on `course`.

    Returns:
        (heading in rad, ground speed in m/s along the course)

    Raises:
        PlannerError: if the crosswind is at least the airspeed or the
            resulting ground speed is not positive
    """
    crosswind = wind_north * math.sin(course) - wind_east * math.cos(course)
    if abs(crosswind) >= airspeed:
        raise PlannerError(
            f"crosswind {abs(crosswind):.2f} m/s is not below airspeed {airspeed:.2f} m/s"
        )
    crab = math.asin(crosswind / airspeed)
    heading = course + crab
    ground_speed = (
        airspeed * math.cos(crab)
        + wind_north * math.cos(course)
        + wind_east * math.sin(course)
    )
    if ground_speed <= 0.0:
        raise PlannerError(f"headwind leaves no forward ground speed ({ground_speed:.2f} m/s)")
    return heading, ground_speed

def cross_track_distance(point: LatLon, origin: LatLon, destination: LatLon, radius: float) -> float:
    """Signed distance (m) of `point` from the great circle through origin and destination"""
    d13 = haversine_distance(origin, point, 1.0)
    theta13 = initial_bearing(origin, point)
    theta12 = initial_bearing(origin, destination)
    return math.asin(math.sin(d13) * math.sin(theta13 - theta12)) * radius

def wrap_angle(angle: float) -> float:
    """Wrap radians to (-pi, pi]"""
    wrapped = math.atan2(math.sin(angle), math.cos(angle))
    return math.pi if wrapped == -math.pi else wrapped
