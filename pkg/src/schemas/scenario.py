from typing import List, Optional, Tuple
import math

from pydantic import BaseModel, Field, field_validator, model_validator

from src.core.config import settings
from src.schemas.ensemble import SyntheticEnsembleConfig

class AircraftSpec(BaseModel):
    """One flight: great-circle route flown at constant true airspeed and cruise altitude"""
    id: str = Field(..., min_length=1, description="Aircraft label", examples=["A"])
    origin: Tuple[float, float] = Field(..., description="(lat, lon) in degrees", examples=[(25.869, -18.389)])
    destination: Tuple[float, float] = Field(..., description="(lat, lon) in degrees", examples=[(28.505, -14.677)])
    airspeed: float = Field(..., gt=0, description="True airspeed (m/s)", examples=[230.0])
    altitude: float = Field(11000.0, ge=0, description="Cruise altitude (m)")

    model_config = {"frozen": True, "extra": "forbid"}

    @field_validator("origin", "destination")
    @classmethod
    def check_position(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        lat, lon = value
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError("coordinates must be finite")
        if abs(lat) >= 90.0:
            raise ValueError(f"latitude {lat} must satisfy |lat| < 90")
        if abs(lon) > 180.0:
            raise ValueError(f"longitude {lon} outside [-180, 180]")
        return value

    @model_validator(mode="after")
    def check_route(self) -> "AircraftSpec":
        if tuple(self.origin) == tuple(self.destination):
            raise ValueError("origin and destination must differ")
        return self

class ConditioningSpec(BaseModel):
    """Condition on d(t1) < bound before asking for a conflict at t*"""
    time: float = Field(..., ge=0, description="Conditioning instant t1 (s)", examples=[1168.86])
    bound_nm: float = Field(..., gt=0, description="Distance bound B (NM); inf conditions on a sure event", examples=[25.0])

class ScenarioConfig(BaseModel):
    """A complete detection run, as read from a scenario file"""
    output_dir: str = Field(..., description="Run directory for every artifact")
    seed: int = Field(0, ge=0)
    workers: Optional[int] = Field(None, ge=1, description="Planning processes (1 = in-process; unset uses MAX_WORKERS)")

    ensemble_files: List[str] = Field(default_factory=list, description="Ensemble CSV files, pooled")
    epsilon: Optional[float] = Field(None, gt=0, description="RBF shape parameter (1/deg); default from grid spacing")
    synthetic: Optional[SyntheticEnsembleConfig] = None

    m: Optional[int] = Field(None, ge=1, description="Truncation order M")
    delta: Optional[float] = Field(None, gt=0, le=1, description="Explained-variance fraction selecting M")
    p: int = Field(settings.DEFAULT_QUADRATURE_ORDER, ge=1, le=8, description="Polynomial order per variable")

    dt: float = Field(settings.DEFAULT_DT_S, gt=0, description="Planner step (s)")
    t_max: float = Field(settings.DEFAULT_T_MAX_S, gt=0, description="Planner horizon (s)")

    threshold_nm: float = Field(settings.SEPARATION_THRESHOLD_NM, gt=0)
    probe_times: List[float] = Field(default_factory=list, description="Explicit probe instants (s)")
    probe_count: int = Field(5, ge=1)
    probe_spacing: float = Field(30.0, gt=0, description="Spacing of automatic probes around t* (s)")
    conditioning: Optional[ConditioningSpec] = None
    sigma_multiplier: float = Field(settings.SIGMA_MULTIPLIER, gt=0)
    ensemble_baseline: bool = True
    bootstrap: int = Field(1, ge=1, description="Resampling multiplier for KDE samples (1 = off)")

    aircraft: List[AircraftSpec] = Field(..., min_length=2)

    model_config = {"extra": "forbid"}

    @model_validator(mode="after")
    def check_consistency(self) -> "ScenarioConfig":
        if (self.m is None) == (self.delta is None):
            raise ValueError("exactly one of expansion.M and expansion.delta must be set")
        if not self.ensemble_files and self.synthetic is None:
            raise ValueError("ensemble.files is empty and no [synthetic] section is given")
        if self.ensemble_files and self.synthetic is not None:
            raise ValueError("give either ensemble.files or a [synthetic] section, not both")
        ids = [a.id for a in self.aircraft]
        if len(set(ids)) != len(ids):
            raise ValueError(f"aircraft ids must be unique, got {ids}")
        if self.dt >= self.t_max:
            raise ValueError("planner.dt must be smaller than planner.t_max")
        if any(t < 0 for t in self.probe_times):
            raise ValueError("conflict.probe_times must be non-negative")
        return self

    @property
    def threshold_m(self) -> float:
        return self.threshold_nm * settings.NM_TO_M

    def aircraft_pairs(self) -> List[Tuple[AircraftSpec, AircraftSpec]]:
        """All unordered pairs in declaration order"""
        return [
            (a, b)
            for i, a in enumerate(self.aircraft)
            for b in self.aircraft[i + 1:]
        ]
