import sys
sys.path.append(".")

import numpy as np
import pytest

from src.pipeline.orchestrator import PlanJob, PlanningOrchestrator, run_plan_job
from src.services.trajectory import plan_trajectory
from src.utils.rbf import UniformWind
from src.tests.utils.test_helpers import StraightLinePlanner, aircraft

def _jobs(count=4, t_max=3600.0):
    return [
        PlanJob(key=("A", k), spec=aircraft("A", (0.0, 0.0), (1.0, 0.2 * k)), wind=UniformWind(10.0, -5.0), dt=30.0, t_max=t_max)
        for k in range(count)
    ]

def test_failed_job_becomes_outcome():
    """Test that a planner error is reported on the outcome instead of raised"""
    job = _jobs(1, t_max=300.0)[0]
    outcome = run_plan_job(job)

    assert not outcome.ok
    assert outcome.key == ("A", 0)
    assert "did not reach its destination" in outcome.error

@pytest.mark.asyncio
async def test_in_process_keeps_order():
    jobs = _jobs()
    outcomes = await PlanningOrchestrator(workers=1).plan_all(jobs)

    assert [o.key for o in outcomes] == [j.key for j in jobs]
    assert all(o.ok for o in outcomes)
    expected = plan_trajectory(jobs[2].spec, jobs[2].wind, 30.0, 3600.0)
    np.testing.assert_array_equal(outcomes[2].trajectory.lat, expected.lat)

@pytest.mark.asyncio
async def test_process_pool_matches_in_process():
    """Test that two worker processes give the same trajectories in job order"""
    jobs = _jobs(5)
    pooled = await PlanningOrchestrator(workers=2, planner=StraightLinePlanner()).plan_all(jobs)
    local = await PlanningOrchestrator(workers=1, planner=StraightLinePlanner()).plan_all(jobs)

    assert [o.key for o in pooled] == [j.key for j in jobs]
    for a, b in zip(pooled, local):
        np.testing.assert_array_equal(a.trajectory.lat, b.trajectory.lat)
        np.testing.assert_array_equal(a.trajectory.lon, b.trajectory.lon)

def test_sync_run_mixes_failures():
    jobs = _jobs(2) + _jobs(1, t_max=300.0)
    outcomes = PlanningOrchestrator(workers=1).run(jobs)

    assert [o.ok for o in outcomes] == [True, True, False]
    assert outcomes[2].trajectory is None
