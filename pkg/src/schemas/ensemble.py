from pydantic import BaseModel, Field, model_validator

class CorrelationSpec(BaseModel):
    """Parameters of the Gaussian random field behind a synthetic ensemble"""
    correlation_length_deg: float = Field(
        5.0, gt=0, description="Spatial correlation length in degrees (inf gives spatially constant members)"
    )
    cross_correlation: float = Field(0.0, ge=-1.0, le=1.0, description="Co-located u-v correlation")
    mean_u: float = Field(20.0, description="Mean eastward wind (m/s)")
    mean_v: float = Field(0.0, description="Mean northward wind (m/s)")
    std_u: float = Field(5.0, ge=0, description="Standard deviation of the eastward wind (m/s)")
    std_v: float = Field(5.0, ge=0, description="Standard deviation of the northward wind (m/s)")

    model_config = {"frozen": True}

class SyntheticEnsembleConfig(BaseModel):
    """Grid and member count for an ensemble generated instead of read from files"""
    lat_min: float = Field(..., ge=-89.0, le=89.0, examples=[24.0])
    lat_max: float = Field(..., ge=-89.0, le=89.0, examples=[30.0])
    lon_min: float = Field(..., ge=-180.0, le=180.0, examples=[-20.0])
    lon_max: float = Field(..., ge=-180.0, le=180.0, examples=[-13.0])
    resolution_deg: float = Field(0.5, gt=0)
    members: int = Field(300, ge=2)
    correlation: CorrelationSpec = Field(default_factory=CorrelationSpec)

    @model_validator(mode="after")
    def check_extent(self) -> "SyntheticEnsembleConfig":
        if self.lat_max <= self.lat_min:
            raise ValueError("lat_max must exceed lat_min")
        if self.lon_max <= self.lon_min:
            raise ValueError("lon_max must exceed lon_min")
        return self
