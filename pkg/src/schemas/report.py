from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

class Verdict(str, Enum):
    CONFLICT_BY_ENVELOPE = "conflict-by-envelope"
    NO_CONFLICT = "no-conflict"
    CONFLICT_BY_PROBABILITY = "conflict-by-probability"
    CLEAR_BY_PROBABILITY = "clear-by-probability"
    FAILED = "failed"

class ProbeResult(BaseModel):
    """Marginal conflict probability at one instant"""
    time: float = Field(..., description="Probe instant (s)")
    probability: float = Field(..., ge=0.0, le=1.0)
    bandwidth_m: Optional[float] = Field(None, description="KDE bandwidth; None when the samples were degenerate")
    degenerate: bool = False
    mean_separation_m: float
    pdf_file: Optional[str] = None

class ConditionalRecord(BaseModel):
    """P(d(t2) < threshold | d(t1) < bound)"""
    conditioning_time: float
    bound_nm: float
    target_time: float
    conditional_probability: float = Field(..., ge=0.0, le=1.0)
    joint_probability: float = Field(..., ge=0.0, le=1.0)
    condition_probability: float = Field(..., ge=0.0, le=1.0)
    marginal_probability: float = Field(..., ge=0.0, le=1.0, description="P(d(t2) < threshold) under the joint bandwidths")
    univariate_probability: Optional[float] = Field(
        None, ge=0.0, le=1.0, description="P(d(t2) < threshold) from the 1-D model, as reported for the pair"
    )
    joint_pdf_file: Optional[str] = None

    model_config = {"ser_json_inf_nan": "constants"}

class BaselineResult(BaseModel):
    """Counting estimates over the raw ensemble members"""
    members: int
    probability: float = Field(..., ge=0.0, le=1.0)
    conditional_probability: Optional[float] = Field(None, ge=0.0, le=1.0)
    min_over_time_probability: float = Field(..., ge=0.0, le=1.0)

class ConflictVerdict(BaseModel):
    """Outcome for one aircraft pair"""
    aircraft_a: str
    aircraft_b: str
    verdict: Verdict
    t_min_distance: Optional[float] = Field(None, description="Instant of minimum mean separation (s)")
    min_mean_separation_m: Optional[float] = None
    envelope_crossing_time: Optional[float] = None
    probability: Optional[float] = Field(None, ge=0.0, le=1.0, description="Marginal probability at t_min_distance")
    high_risk: bool = False
    probes: List[ProbeResult] = Field(default_factory=list)
    conditional: Optional[ConditionalRecord] = None
    baseline: Optional[BaselineResult] = None
    notes: List[str] = Field(default_factory=list)
    error: Optional[str] = None

    @property
    def pair_label(self) -> str:
        return f"{self.aircraft_a}_{self.aircraft_b}"

class DetectionReport(BaseModel):
    config_hash: str
    m: int
    p: int
    n_nodes: int
    threshold_m: float
    sigma_multiplier: float
    explained_variance_percent: float
    seed: int = 0
    bootstrap: int = 1
    pairs: List[ConflictVerdict]

    model_config = {"ser_json_inf_nan": "constants"}

class RunManifest(BaseModel):
    config_hash: str
    versions: Dict[str, str]
    timings: Dict[str, float] = Field(default_factory=dict, description="Wall-clock seconds per stage")
    artifacts: List[str] = Field(default_factory=list)

class PairFiles(BaseModel):
    """Plot-ready CSV series written for one pair (paths relative to the run directory)"""
    envelope: Optional[str] = None
    pdfs: Dict[str, str] = Field(default_factory=dict, description="Probe instant (s) -> PDF CSV")
    joint_pdf: Optional[str] = None

class ReportIndex(BaseModel):
    detection: str
    summary: str
    pairs: Dict[str, PairFiles]

class SurrogateIndex(BaseModel):
    """What the surrogate stage produced, and which aircraft could not be planned"""
    m: int
    p: int
    n_nodes: int
    dt: float
    t_max: float
    n_steps: int
    node_files: Dict[str, List[str]] = Field(default_factory=dict, description="Aircraft id -> node trajectory CSVs")
    pairs: Dict[str, str] = Field(default_factory=dict, description="Pair label -> surrogate archive")
    failed: Dict[str, str] = Field(default_factory=dict, description="Pair label -> failure message")
