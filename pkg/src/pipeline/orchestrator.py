"""Fan-out of trajectory planning jobs over a process pool"""
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Hashable, List, Optional
import asyncio
import logging

from src.core.config import settings
from src.core.exceptions import PipelineError
from src.schemas.scenario import AircraftSpec
from src.services.trajectory import Trajectory, TrajectoryPlanner, WindFieldView, WindTrackingPlanner

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class PlanJob:
    key: Hashable
    spec: AircraftSpec
    wind: WindFieldView
    dt: float
    t_max: float

@dataclass(frozen=True)
class PlanOutcome:
    key: Hashable
    trajectory: Optional[Trajectory] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.trajectory is not None

def run_plan_job(job: PlanJob, planner: Optional[TrajectoryPlanner] = None) -> PlanOutcome:
    """Plan one job; domain errors become a failed outcome instead of propagating"""
    planner = planner or WindTrackingPlanner()
    try:
        return PlanOutcome(key=job.key, trajectory=planner.plan(job.spec, job.wind, job.dt, job.t_max))
    except PipelineError as e:
        return PlanOutcome(key=job.key, error=str(e))

class PlanningOrchestrator:
    """Runs planning jobs in-process or over a process pool; results keep job order"""

    def __init__(self, workers: Optional[int] = None, planner: Optional[TrajectoryPlanner] = None):
        self.workers = max(1, workers or settings.MAX_WORKERS)
        self.planner = planner

    async def plan_all(self, jobs: List[PlanJob]) -> List[PlanOutcome]:
        if self.workers == 1 or len(jobs) < 2:
            return [run_plan_job(job, self.planner) for job in jobs]

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            futures = [
                loop.run_in_executor(pool, run_plan_job, job, self.planner)
                for job in jobs
            ]
            outcomes = await asyncio.gather(*futures)
        return list(outcomes)

    def run(self, jobs: List[PlanJob]) -> List[PlanOutcome]:
        """Synchronous entry point"""
        logger.info(f"Planning {len(jobs)} trajectories with {self.workers} worker(s)")
        outcomes = asyncio.run(self.plan_all(jobs))
        failed = sum(1 for o in outcomes if not o.ok)
        if failed:
            logger.warning(f"{failed} of {len(jobs)} planning jobs failed")
        return outcomes
