"""Pipeline stages; each reads from and persists to the run directory."""
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import functools
import json
import logging
import math
import shutil
import time

import numpy as np
import pandas as pd

from src.core.config import settings
from src.core.exceptions import MissingArtifactError, NumericalError, PipelineError, UndefinedConditionalError
from src.pipeline.orchestrator import PlanJob, PlanningOrchestrator
from src.schemas.report import (
    BaselineResult,
    ConditionalRecord,
    ConflictVerdict,
    DetectionReport,
    PairFiles,
    ProbeResult,
    ReportIndex,
    RunManifest,
    SurrogateIndex,
    Verdict,
)
from src.schemas.scenario import AircraftSpec, ScenarioConfig
from src.services import apc, conflict, mukl
from src.services.ensemble_io import (
    WindEnsemble,
    ensemble_statistics,
    generate_synthetic_ensemble,
    grid_points,
    load_ensemble,
    load_ensembles,
    regular_grid,
    save_ensemble,
)
from src.services.scenario_loader import config_hash, load_scenario
from src.services.trajectory import Trajectory, TrajectoryPlanner, separation_series, time_grid, write_trajectory_csv
from src.utils.rbf import GriddedWindField, RbfSystem

logger = logging.getLogger(__name__)

class RunPaths:
    """File layout of one run directory"""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)

    @property
    def ensemble(self) -> Path:
        return self.root / "ensemble.csv"

    @property
    def expansion(self) -> Path:
        return self.root / "expansion.bin"

    @property
    def explained_variance(self) -> Path:
        return self.root / "explained_variance.csv"

    @property
    def wind_statistics(self) -> Path:
        return self.root / "wind_statistics.csv"

    @property
    def nodes_dir(self) -> Path:
        return self.root / "nodes"

    @property
    def surrogate_index(self) -> Path:
        return self.root / "surrogate_index.json"

    @property
    def detection(self) -> Path:
        return self.root / "detection.json"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"

    @property
    def summary(self) -> Path:
        return self.root / "summary.txt"

    @property
    def report_index(self) -> Path:
        return self.root / "report.json"

    @property
    def manifest(self) -> Path:
        return self.root / "manifest.json"

    @property
    def timings(self) -> Path:
        return self.root / "timings.json"

    def surrogate(self, pair_label: str) -> Path:
        return self.root / f"surrogate_{pair_label}.bin"

    def node_csv(self, aircraft_id: str, k: int) -> Path:
        return self.nodes_dir / f"{aircraft_id}_{k:03d}.csv"

    def relative(self, path: Path) -> str:
        return path.relative_to(self.root).as_posix()

@dataclass
class RunContext:
    config: ScenarioConfig
    config_hash: str
    paths: RunPaths
    workers: int = 1
    planner: Optional[TrajectoryPlanner] = None
    timings: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_scenario(cls, scenario: Union[str, Path], workers: Optional[int] = None) -> "RunContext":
        config = load_scenario(scenario)
        return cls(
            config=config,
            config_hash=config_hash(scenario),
            paths=RunPaths(config.output_dir),
            workers=workers or config.workers or settings.MAX_WORKERS,
        )

    def orchestrator(self) -> PlanningOrchestrator:
        return PlanningOrchestrator(workers=self.workers, planner=self.planner)

def pair_label(a: AircraftSpec, b: AircraftSpec) -> str:
    return f"{a.id}_{b.id}"

def write_csv(frame: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT, lineterminator="\n", encoding="utf-8")

def write_json(text: str, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text + "\n", encoding="utf-8")

def _record_timing(ctx: RunContext, stage: str, seconds: float) -> None:
    ctx.timings[stage] = seconds
    stored: Dict[str, float] = {}
    if ctx.paths.timings.exists():
        stored = json.loads(ctx.paths.timings.read_text(encoding="utf-8"))
    stored[stage] = round(seconds, 6)
    write_json(json.dumps(stored, indent=2, sort_keys=True), ctx.paths.timings)

def _staged(stage: str):
    """Time a stage and tag domain errors with its name"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(ctx: RunContext, *args, **kwargs):
            start = time.perf_counter()
            logger.info(f"Stage {stage} started in {ctx.paths.root}")
            try:
                result = func(ctx, *args, **kwargs)
            except PipelineError as e:
                if e.stage is None:
                    e.with_stage(stage)
                logger.error(f"Stage {stage} failed: {e}")
                raise
            _record_timing(ctx, stage, time.perf_counter() - start)
            logger.info(f"Stage {stage} finished in {ctx.timings[stage]:.2f} s")
            return result
        return wrapper
    return decorator

@_staged("ingest")
def run_ingest(ctx: RunContext) -> WindEnsemble:
    """Pool the configured files (or generate the synthetic ensemble) into ensemble.csv"""
    config = ctx.config
    if config.synthetic is not None:
        syn = config.synthetic
        grid = regular_grid(syn.lat_min, syn.lat_max, syn.lon_min, syn.lon_max, syn.resolution_deg)
        ens = generate_synthetic_ensemble(config.seed, grid, syn.members, syn.correlation)
    else:
        ens = load_ensembles(config.ensemble_files)
    save_ensemble(ens, ctx.paths.ensemble)
    logger.info(f"Wrote {ens.n_members} members to {ctx.paths.ensemble}")
    # downstream stages read the persisted file
    return load_ensemble(ctx.paths.ensemble)

def _read_ensemble(ctx: RunContext, build: bool) -> WindEnsemble:
    if not ctx.paths.ensemble.exists():
        if not build:
            raise MissingArtifactError(f"{ctx.paths.ensemble} is missing; run the ingest stage first")
        return run_ingest(ctx)
    return load_ensemble(ctx.paths.ensemble)

@_staged("decompose")
def run_decompose(ctx: RunContext, build: bool = True) -> mukl.MuklExpansion:
    """muKL expansion archive plus explained-variance and wind-statistics tables"""
    ens = _read_ensemble(ctx, build)
    expansion = mukl.build_expansion(ens, m=ctx.config.m, delta=ctx.config.delta)
    mukl.save_expansion(expansion, ctx.paths.expansion)

    n_selectable = mukl.selectable_modes(expansion.eigenvalues)
    rows = mukl.explained_variance_table(expansion, n_modes=n_selectable)
    write_csv(
        pd.DataFrame(rows, columns=["k", "eigenvalue", "percent", "cumulative_percent"]),
        ctx.paths.explained_variance,
    )

    mean_u, mean_v, std_u, std_v = ensemble_statistics(ens)
    points = grid_points(ens.grid)
    write_csv(
        pd.DataFrame({
            "lat": points[:, 0],
            "lon": points[:, 1],
            "mean_u": mean_u.reshape(-1),
            "mean_v": mean_v.reshape(-1),
            "std_u": std_u.reshape(-1),
            "std_v": std_v.reshape(-1),
        }),
        ctx.paths.wind_statistics,
    )
    return expansion

def _read_expansion(ctx: RunContext, build: bool) -> mukl.MuklExpansion:
    if not ctx.paths.expansion.exists():
        if not build:
            raise MissingArtifactError(f"{ctx.paths.expansion} is missing; run the decompose stage first")
        return run_decompose(ctx)
    return mukl.load_expansion(ctx.paths.expansion)

@_staged("surrogate")
def run_surrogate(ctx: RunContext, build: bool = True) -> SurrogateIndex:
    """Plan every aircraft at every tensor node and fit one separation surrogate per pair"""
    config = ctx.config
    expansion = _read_expansion(ctx, build)
    bases = apc.build_bases(expansion.xi_samples, config.p)
    index_set = apc.build_index_set(expansion.m, config.p)
    nodes, _ = apc.tensor_nodes(bases)
    times = time_grid(config.dt, config.t_max)
    logger.info(f"Surrogate: M={expansion.m}, p={config.p}, {nodes.shape[0]} node tuples, {index_set.size} basis terms")

    wind_model = mukl.ExpansionWindModel(expansion, epsilon=config.epsilon)
    jobs = [
        PlanJob(key=(spec.id, k), spec=spec, wind=wind_model.field(node), dt=config.dt, t_max=config.t_max)
        for spec in config.aircraft
        for k, node in enumerate(nodes)
    ]
    outcomes = ctx.orchestrator().run(jobs)

    trajectories: Dict[str, List[Trajectory]] = {spec.id: [] for spec in config.aircraft}
    failures: Dict[str, str] = {}
    node_files: Dict[str, List[str]] = {spec.id: [] for spec in config.aircraft}
    for outcome in outcomes:
        aircraft_id, k = outcome.key
        if not outcome.ok:
            failures.setdefault(aircraft_id, f"node {k}: {outcome.error}")
            continue
        trajectories[aircraft_id].append(outcome.trajectory)
        path = ctx.paths.node_csv(aircraft_id, k)
        write_trajectory_csv(outcome.trajectory, path)
        node_files[aircraft_id].append(ctx.paths.relative(path))

    index = SurrogateIndex(
        m=expansion.m,
        p=config.p,
        n_nodes=nodes.shape[0],
        dt=config.dt,
        t_max=config.t_max,
        n_steps=times.size,
        node_files=node_files,
    )
    for a, b in config.aircraft_pairs():
        label = pair_label(a, b)
        broken = [f"{ac}: {failures[ac]}" for ac in (a.id, b.id) if ac in failures]
        if broken:
            index.failed[label] = "; ".join(broken)
            logger.warning(f"Pair {label} has no surrogate: {index.failed[label]}")
            continue
        separations = np.vstack([
            separation_series(ta, tb) for ta, tb in zip(trajectories[a.id], trajectories[b.id])
        ])
        surrogate = apc.fit_surrogate(separations, bases, index_set, times=times)
        path = ctx.paths.surrogate(label)
        apc.save_surrogate(surrogate, path)
        index.pairs[label] = ctx.paths.relative(path)

    write_json(index.model_dump_json(indent=2), ctx.paths.surrogate_index)
    return index

def _read_surrogate_index(ctx: RunContext, build: bool) -> SurrogateIndex:
    if not ctx.paths.surrogate_index.exists():
        if not build:
            raise MissingArtifactError(f"{ctx.paths.surrogate_index} is missing; run the surrogate stage first")
        return run_surrogate(ctx)
    return SurrogateIndex.model_validate_json(ctx.paths.surrogate_index.read_text(encoding="utf-8"))

def member_wind_fields(ens: WindEnsemble, epsilon: Optional[float]) -> List[GriddedWindField]:
    """One wind view per raw member, all with the same kernel settings"""
    system = RbfSystem(ens.grid, epsilon=epsilon)
    n = ens.n_members
    return [
        GriddedWindField(system.fit(np.column_stack([ens.u[r].reshape(-1), ens.v[r].reshape(-1)])))
        for r in range(n)
    ]

def _plan_members(ctx: RunContext, ens: WindEnsemble) -> Tuple[Dict[str, Dict[int, Trajectory]], List[str]]:
    config = ctx.config
    winds = member_wind_fields(ens, config.epsilon)
    jobs = [
        PlanJob(key=(spec.id, r), spec=spec, wind=wind, dt=config.dt, t_max=config.t_max)
        for spec in config.aircraft
        for r, wind in enumerate(winds)
    ]
    planned: Dict[str, Dict[int, Trajectory]] = {spec.id: {} for spec in config.aircraft}
    notes: List[str] = []
    for outcome in ctx.orchestrator().run(jobs):
        aircraft_id, r = outcome.key
        if outcome.ok:
            planned[aircraft_id][r] = outcome.trajectory
        else:
            notes.append(f"member {r}, aircraft {aircraft_id}: {outcome.error}")
    return planned, notes

def kde_rows(expansion: mukl.MuklExpansion, bootstrap: int, seed: int) -> np.ndarray:
    return conflict.resample_rows(expansion.xi_samples, bootstrap, seed)

def analyze_pair(
    config: ScenarioConfig,
    a: AircraftSpec,
    b: AircraftSpec,
    surrogate: apc.Surrogate,
    xi_rows: np.ndarray,
    member_separations: Optional[np.ndarray] = None,
) -> ConflictVerdict:
    """Envelope screen, then marginal, probe and conditional probabilities for one pair"""
    times = surrogate.times
    threshold = config.threshold_m
    env = conflict.envelope_series(
        surrogate.node_outputs, surrogate.weights, times, threshold, config.sigma_multiplier
    )
    crosses, crossing_time = conflict.envelope_verdict(env)
    t_star = conflict.min_distance_index(env)
    verdict = ConflictVerdict(
        aircraft_a=a.id,
        aircraft_b=b.id,
        verdict=Verdict.CONFLICT_BY_ENVELOPE,
        t_min_distance=float(times[t_star]),
        min_mean_separation_m=float(env.mean[t_star]),
        envelope_crossing_time=crossing_time,
    )

    cond_index = None
    if config.conditioning is not None:
        cond_index = conflict.time_index(times, config.conditioning.time)

    if member_separations is not None:
        baseline_conditioning = None
        if cond_index is not None:
            baseline_conditioning = (cond_index, config.conditioning.bound_nm * settings.NM_TO_M)
        try:
            base = conflict.ensemble_baseline(member_separations, threshold, t_star, baseline_conditioning)
            verdict.baseline = BaselineResult(
                members=base.members,
                probability=base.probability,
                conditional_probability=base.conditional_probability,
                min_over_time_probability=base.min_over_time_probability,
            )
        except UndefinedConditionalError as e:
            base = conflict.ensemble_baseline(member_separations, threshold, t_star)
            verdict.baseline = BaselineResult(
                members=base.members,
                probability=base.probability,
                min_over_time_probability=base.min_over_time_probability,
            )
            verdict.notes.append(f"baseline conditional undefined: {e}")

    if crosses:
        return verdict

    headline = conflict.conflict_probability(surrogate, t_star, xi_rows, threshold)
    verdict.probability = headline.probability
    if headline.degenerate:
        verdict.notes.append(f"degenerate separation samples at t={times[t_star]:.2f} s; hard threshold used")
    for k in conflict.probe_indices(times, t_star, config.probe_times, config.probe_count, config.probe_spacing):
        estimate = headline if k == t_star else conflict.conflict_probability(surrogate, k, xi_rows, threshold)
        verdict.probes.append(ProbeResult(
            time=float(times[k]),
            probability=estimate.probability,
            bandwidth_m=estimate.bandwidth,
            degenerate=estimate.degenerate,
            mean_separation_m=float(env.mean[k]),
        ))

    if cond_index is not None:
        bound_m = config.conditioning.bound_nm * settings.NM_TO_M
        if cond_index == t_star:
            verdict.notes.append("conditioning instant coincides with the minimum-distance instant; conditional skipped")
        else:
            try:
                joint = conflict.joint_conditional(surrogate, xi_rows, cond_index, t_star, bound_m, threshold)
                verdict.conditional = ConditionalRecord(
                    conditioning_time=float(times[cond_index]),
                    bound_nm=config.conditioning.bound_nm,
                    target_time=float(times[t_star]),
                    conditional_probability=joint.conditional_probability,
                    joint_probability=joint.joint_probability,
                    condition_probability=joint.condition_probability,
                    marginal_probability=joint.marginal_probability,
                    univariate_probability=headline.probability,
                )
            except NumericalError as e:
                verdict.notes.append(f"conditional probability unavailable: {e}")

    worst = max([verdict.probability] + [p.probability for p in verdict.probes])
    verdict.verdict = conflict.decide_verdict(False, worst)
    verdict.high_risk = worst > settings.HIGH_RISK_PROBABILITY
    return verdict

@_staged("detect")
def run_detect(ctx: RunContext) -> DetectionReport:
    """Conflict verdicts for every pair; builds missing earlier artifacts"""
    config = ctx.config
    index = _read_surrogate_index(ctx, build=True)
    expansion = _read_expansion(ctx, build=True)
    xi_rows = kde_rows(expansion, config.bootstrap, config.seed)

    member_trajectories: Optional[Dict[str, Dict[int, Trajectory]]] = None
    baseline_notes: List[str] = []
    if config.ensemble_baseline:
        member_trajectories, baseline_notes = _plan_members(ctx, _read_ensemble(ctx, build=True))

    pairs: List[ConflictVerdict] = []
    for a, b in config.aircraft_pairs():
        label = pair_label(a, b)
        if label in index.failed:
            pairs.append(ConflictVerdict(aircraft_a=a.id, aircraft_b=b.id, verdict=Verdict.FAILED, error=index.failed[label]))
            continue
        try:
            surrogate = apc.load_surrogate(ctx.paths.root / index.pairs[label])
            member_separations = None
            notes: List[str] = []
            if member_trajectories is not None:
                shared = sorted(set(member_trajectories[a.id]) & set(member_trajectories[b.id]))
                dropped = expansion.xi_samples.shape[0] - len(shared)
                if dropped:
                    notes.append(f"ensemble baseline excludes {dropped} member(s) that could not be planned")
                if shared:
                    member_separations = np.vstack([
                        separation_series(member_trajectories[a.id][r], member_trajectories[b.id][r])
                        for r in shared
                    ])
            verdict = analyze_pair(config, a, b, surrogate, xi_rows, member_separations)
            verdict.notes.extend(notes)
        except PipelineError as e:
            logger.error(f"Pair {label} failed: {e}")
            verdict = ConflictVerdict(aircraft_a=a.id, aircraft_b=b.id, verdict=Verdict.FAILED, error=str(e))
        pairs.append(verdict)
        logger.info(f"Pair {label}: {verdict.verdict.value}")

    if baseline_notes:
        logger.warning(f"{len(baseline_notes)} member trajectories failed; first: {baseline_notes[0]}")

    report = DetectionReport(
        config_hash=ctx.config_hash,
        m=expansion.m,
        p=config.p,
        n_nodes=index.n_nodes,
        threshold_m=config.threshold_m,
        sigma_multiplier=config.sigma_multiplier,
        explained_variance_percent=100.0 * expansion.cumulative_fraction,
        seed=config.seed,
        bootstrap=config.bootstrap,
        pairs=pairs,
    )
    write_json(report.model_dump_json(indent=2), ctx.paths.detection)
    return report

def _fmt(value: Optional[float], spec: str = ".6g") -> str:
    return "n/a" if value is None else format(value, spec)

def render_summary(report: DetectionReport) -> str:
    lines = [
        f"scenario {report.config_hash}",
        f"M={report.m} p={report.p} nodes={report.n_nodes} "
        f"explained={report.explained_variance_percent:.4f}% threshold={report.threshold_m:.0f} m "
        f"envelope={report.sigma_multiplier:g}-sigma",
        "",
    ]
    for pair in report.pairs:
        head = f"{pair.aircraft_a}-{pair.aircraft_b}: {pair.verdict.value}"
        if pair.verdict == Verdict.FAILED:
            lines.append(f"{head} ({pair.error})")
            continue
        head += f" t*={_fmt(pair.t_min_distance, '.2f')} s min-mean={_fmt(pair.min_mean_separation_m, '.1f')} m"
        if pair.envelope_crossing_time is not None:
            head += f" envelope-crossing={pair.envelope_crossing_time:.2f} s"
        if pair.probability is not None:
            head += f" P={pair.probability:.6g}"
        if pair.high_risk:
            head += " HIGH RISK"
        lines.append(head)
        for probe in pair.probes:
            flag = " HIGH RISK" if probe.probability > settings.HIGH_RISK_PROBABILITY else ""
            lines.append(f"  probe t={probe.time:.2f} s P={probe.probability:.6g}{flag}")
        if pair.conditional is not None:
            c = pair.conditional
            flag = " HIGH RISK" if c.conditional_probability > settings.HIGH_RISK_PROBABILITY else ""
            lines.append(
                f"  conditional P(d({c.target_time:.2f} s) < threshold | d({c.conditioning_time:.2f} s) < "
                f"{c.bound_nm:g} NM) = {c.conditional_probability:.6g}{flag}"
            )
            # the conditional is coherent with the joint-model marginal, not the 1-D one
            lines.append(
                f"    marginal at t={c.target_time:.2f} s: joint model {c.marginal_probability:.6g}, "
                f"1-D model {_fmt(c.univariate_probability)}"
            )
        if pair.baseline is not None:
            base = pair.baseline
            lines.append(
                f"  ensemble baseline ({base.members} members): P={base.probability:.6g} "
                f"conditional={_fmt(base.conditional_probability)} min-over-time={base.min_over_time_probability:.6g}"
            )
        for note in pair.notes:
            lines.append(f"  note: {note}")
    return "\n".join(lines) + "\n"

def _versions() -> Dict[str, str]:
    versions = {"windconflict": settings.VERSION}
    for package in ("numpy", "scipy", "pandas", "pydantic"):
        try:
            versions[package] = metadata.version(package)
        except metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions

def run_report(run_dir: Union[str, Path]) -> ReportIndex:
    """Plot-ready CSVs, summary.txt, report.json and manifest.json from detect artifacts"""
    paths = RunPaths(run_dir)
    start = time.perf_counter()
    for required, stage in (
        (paths.detection, "detect"),
        (paths.surrogate_index, "surrogate"),
        (paths.expansion, "decompose"),
    ):
        if not required.exists():
            raise MissingArtifactError(f"{required} is missing; run the {stage} stage first").with_stage("report")

    report = DetectionReport.model_validate_json(paths.detection.read_text(encoding="utf-8"))
    index = SurrogateIndex.model_validate_json(paths.surrogate_index.read_text(encoding="utf-8"))
    expansion = mukl.load_expansion(paths.expansion)
    xi_rows = kde_rows(expansion, report.bootstrap, report.seed)

    files: Dict[str, PairFiles] = {}
    for pair in report.pairs:
        label = pair.pair_label
        pair_files = PairFiles()
        files[label] = pair_files
        if label not in index.pairs:
            continue
        surrogate = apc.load_surrogate(paths.root / index.pairs[label])
        times = surrogate.times
        env = conflict.envelope_series(
            surrogate.node_outputs, surrogate.weights, times, report.threshold_m, report.sigma_multiplier
        )
        envelope_path = paths.report_dir / f"{label}_envelope.csv"
        write_csv(
            pd.DataFrame({"t": env.times, "mean": env.mean, "lower": env.lower, "upper": env.upper, "sigma": env.sigma}),
            envelope_path,
        )
        pair_files.envelope = paths.relative(envelope_path)

        for probe in pair.probes:
            if probe.degenerate:
                continue
            k = conflict.time_index(times, probe.time)
            model = conflict.kde_pdf(surrogate.evaluate(xi_rows, k))
            x, density = conflict.pdf_grid(model)
            pdf_path = paths.report_dir / f"{label}_pdf_{k:05d}.csv"
            write_csv(pd.DataFrame({"distance": x, "pdf": density}), pdf_path)
            pair_files.pdfs[f"{probe.time:.2f}"] = paths.relative(pdf_path)

        if pair.conditional is not None:
            c = pair.conditional
            joint = conflict.joint_conditional(
                surrogate,
                xi_rows,
                conflict.time_index(times, c.conditioning_time),
                conflict.time_index(times, c.target_time),
                c.bound_nm * settings.NM_TO_M,
                report.threshold_m,
            )
            x, y, density, cdf = conflict.pdf_grid(joint.model, n=101)
            xx, yy = np.meshgrid(x, y)
            joint_path = paths.report_dir / f"{label}_joint_pdf.csv"
            write_csv(
                pd.DataFrame({"d_t1": xx.ravel(), "d_t2": yy.ravel(), "pdf": density.ravel(), "cdf": cdf.ravel()}),
                joint_path,
            )
            pair_files.joint_pdf = paths.relative(joint_path)

    paths.summary.write_text(render_summary(report), encoding="utf-8")
    report_index = ReportIndex(
        detection=paths.relative(paths.detection),
        summary=paths.relative(paths.summary),
        pairs=files,
    )
    write_json(report_index.model_dump_json(indent=2), paths.report_index)

    timings: Dict[str, float] = {}
    if paths.timings.exists():
        timings = json.loads(paths.timings.read_text(encoding="utf-8"))
    timings["report"] = round(time.perf_counter() - start, 6)
    write_json(json.dumps(timings, indent=2, sort_keys=True), paths.timings)

    artifacts = sorted(
        paths.relative(p) for p in paths.root.rglob("*")
        if p.is_file() and p.name != paths.manifest.name
    )
    manifest = RunManifest(
        config_hash=report.config_hash,
        versions=_versions(),
        timings=timings,
        artifacts=artifacts + [paths.manifest.name],
    )
    write_json(manifest.model_dump_json(indent=2), paths.manifest)
    logger.info(f"Report written to {paths.root}")
    return report_index

def parse_m_range(text: str) -> List[int]:
    """'a..b' (inclusive) or a single integer"""
    try:
        if ".." in text:
            low, high = (int(part) for part in text.split("..", 1))
        else:
            low = high = int(text)
    except ValueError as e:
        raise ValueError(f"expected a range like '1..6', got {text!r}") from e
    if low < 1 or high < low:
        raise ValueError(f"invalid M range {text!r}")
    return list(range(low, high + 1))

def run_sweep(ctx: RunContext, m_values: List[int]) -> pd.DataFrame:
    """One full run per M under <run>/M<m>/ plus sweep.csv comparing probabilities and timings"""
    if not ctx.paths.ensemble.exists():
        run_ingest(ctx)
    rows = []
    for m in m_values:
        sub_root = ctx.paths.root / f"M{m}"
        sub_root.mkdir(parents=True, exist_ok=True)
        sub = RunContext(
            config=ctx.config.model_copy(update={"m": m, "delta": None, "output_dir": str(sub_root)}),
            config_hash=ctx.config_hash,
            paths=RunPaths(sub_root),
            workers=ctx.workers,
            planner=ctx.planner,
        )
        shutil.copyfile(ctx.paths.ensemble, sub.paths.ensemble)
        start = time.perf_counter()
        report = run_detect(sub)
        run_report(sub_root)
        seconds = time.perf_counter() - start
        for pair in report.pairs:
            rows.append({
                "M": m,
                "pair": f"{pair.aircraft_a}-{pair.aircraft_b}",
                "verdict": pair.verdict.value,
                "explained_percent": report.explained_variance_percent,
                "marginal": pair.probability if pair.probability is not None else math.nan,
                "conditional": pair.conditional.conditional_probability if pair.conditional else math.nan,
                "seconds": seconds,
            })
    frame = pd.DataFrame(rows, columns=["M", "pair", "verdict", "explained_percent", "marginal", "conditional", "seconds"])
    write_csv(frame, ctx.paths.root / "sweep.csv")
    return frame
