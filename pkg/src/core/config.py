import os
from pydantic_settings import BaseSettings
from typing import Optional

class Settings(BaseSettings):
    # Project
    PROJECT_NAME: str = "WindConflict"
    VERSION: str = "0.1.0"

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Output directory override; takes precedence over [run] output_dir of a scenario
    OUTPUT_DIR: Optional[str] = os.getenv("OUTPUT_DIR") or None

    # Planning pool (1 = plan in-process)
    MAX_WORKERS: int = int(os.getenv("MAX_WORKERS", "1"))

    # Geometry and kinematics
    EARTH_RADIUS_M: float = 6_371_000.0
    ARRIVAL_TOLERANCE_M: float = 2000.0
    DEFAULT_DT_S: float = 10.0
    DEFAULT_T_MAX_S: float = 6 * 3600.0

    # Separation
    NM_TO_M: float = 1852.0
    SEPARATION_THRESHOLD_NM: float = 5.0
    HIGH_RISK_PROBABILITY: float = 1e-2
    SIGMA_MULTIPLIER: float = 2.0

    # Expansion / quadrature defaults
    DEFAULT_TRUNCATION_ORDER: int = 4
    DEFAULT_QUADRATURE_ORDER: int = 2

    # Numerical tolerances
    EIGEN_ZERO_RTOL: float = 1e-12
    RBF_REGULARIZATION: float = 1e-10

    # CSV output
    CSV_FLOAT_FORMAT: str = "%.9g"

    @property
    def SEPARATION_THRESHOLD_M(self) -> float:
        return self.SEPARATION_THRESHOLD_NM * self.NM_TO_M

    class Config:
        env_file = ".env"
        case_sensitive = True

settings = Settings()
