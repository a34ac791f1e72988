import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.cli.scenario import build_scenario, mobility_rng, scenario_from_population
from src.data.ingest import (
    SampleSpec,
    build_sample_report,
    empirical_rt,
    load_cases_csv,
    load_population_csv,
)
from src.errors import ConfigError, HeaderError, MissingFileError
from src.models.dynamics import TRAJECTORY_COLUMNS, run_network_sir
from src.models.geometry import step_mobility
from src.models.metrics import MetricsReport, beta_critical_sweep
from src.models.network import build_snapshot, histogram_from_degrees, write_snapshot_csv
from src.utils.config import ScenarioConfig, config_from_dict, origin_slug
from src.utils.export import (
    RunManifest,
    comparison_frame,
    write_comparison_csv,
    write_histogram_csv,
    write_json,
    write_sweep_csv,
)
from src.utils.performance import RunMonitor
from src.utils.plotting import render_plots, write_gnuplot_script

logger = logging.getLogger(__name__)


def _prepare(out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _finish(manifest: RunManifest, monitor: RunMonitor, out_dir: str, paths: Sequence[str]) -> Dict[str, str]:
    for path in paths:
        manifest.add_output(path, root=out_dir)
    metrics = monitor.get_metrics()
    manifest.performance = metrics
    manifest.wall_clock_seconds = metrics.get("wall_clock_seconds", 0.0)
    manifest_path = manifest.write(out_dir)
    outputs = {os.path.relpath(p, out_dir): p for p in paths}
    outputs["manifest.json"] = manifest_path
    return outputs


def _plots(kind: str, csv_path: str, out_dir: str, plot: bool) -> List[str]:
    written = [write_gnuplot_script(kind, os.path.basename(csv_path), out_dir)]
    if plot:
        written.extend(render_plots(kind, csv_path, out_dir))
    return written


def cmd_sample(population_csv: str, out_dir: str, spec: Optional[SampleSpec] = None, **spec_flags) -> List[Dict]:
    """
    Sample sizes and migrated allocation for every region of a census CSV.

    Args:
        population_csv: region,total_population,migrated_population file
        out_dir: where sample_report.json and the manifest go
        spec: sampling precision; z, p, e keyword flags build one otherwise

    Returns:
        The report rows written
    """
    if spec is None:
        try:
            spec = SampleSpec(**{k: v for k, v in spec_flags.items() if v is not None})
        except ValueError as e:
            raise ConfigError(f"invalid sample spec: {str(e)}") from e
    monitor = RunMonitor()
    records = load_population_csv(population_csv)
    report = build_sample_report(records, spec)

    _prepare(out_dir)
    report_path = os.path.join(out_dir, "sample_report.json")
    write_json(report, report_path)
    for row in report:
        logger.info(f"{row['region']}: sampled {row['sampled_total']}, migrated {row['sampled_migrated']}")

    manifest = RunManifest(command="sample", config_hash=None, seed=None)
    _finish(manifest, monitor, out_dir, [report_path])
    return report


def apply_population(config: ScenarioConfig, population_csv: Optional[str], region: Optional[str]) -> ScenarioConfig:
    if population_csv is None and region is None:
        return config
    if population_csv is None or region is None:
        raise ConfigError("--population and --region must be given together")
    return scenario_from_population(config, load_population_csv(population_csv), region)


def cmd_simulate(
    config: ScenarioConfig,
    out_dir: str,
    snapshots: bool = False,
    plot: bool = False,
) -> Dict[str, str]:
    """Run the network SIR and write trajectory.csv, metrics.json, plot.gp and manifest.json."""
    _prepare(out_dir)
    monitor = RunMonitor()
    scenario = build_scenario(config)
    paths: List[str] = []

    on_snapshot = None
    if snapshots:
        snap_dir = _prepare(os.path.join(out_dir, "snapshots"))

        def on_snapshot(snapshot):
            path = os.path.join(snap_dir, f"snapshot_{snapshot.tick:04d}.csv")
            write_snapshot_csv(snapshot, path)

        on_snapshot(build_snapshot(scenario.fleet.positions, config.threshold, tick=0,
                                   method=config.snapshot_method))

    logger.info(f"Simulating {config.horizon} days on {config.n_nodes} nodes with {config.workers} worker(s)")
    record = run_network_sir(
        scenario.state,
        scenario.fleet,
        config,
        scenario.params,
        config.horizon,
        rng=mobility_rng(config),
        workers=config.workers,
        snapshot_method=config.snapshot_method,
        on_snapshot=on_snapshot,
        on_tick=monitor.record_tick,
    )
    if record.clamp_events:
        logger.warning(f"Negative-fraction guard clamped {record.clamp_events} node-steps during the run")

    trajectory_path = os.path.join(out_dir, "trajectory.csv")
    record.write_csv(trajectory_path)
    metrics_path = os.path.join(out_dir, "metrics.json")
    MetricsReport.from_trajectory(record).write_json(metrics_path)
    paths.extend([trajectory_path, metrics_path])
    if snapshots:
        snap_dir = os.path.join(out_dir, "snapshots")
        paths.extend(os.path.join(snap_dir, name) for name in sorted(os.listdir(snap_dir)))
    paths.extend(_plots("trajectory", trajectory_path, out_dir, plot))

    manifest = RunManifest(command="simulate", config_hash=config.config_hash(), seed=config.seed,
                           config=config.to_dict())
    logger.info(f"Trajectory written to {trajectory_path}")
    return _finish(manifest, monitor, out_dir, paths)


def cmd_degree_hist(config: ScenarioConfig, out_dir: str, plot: bool = False) -> Dict[str, str]:
    """Mobility and snapshots only; degrees accumulated over ticks 0..horizon."""
    _prepare(out_dir)
    monitor = RunMonitor()
    scenario = build_scenario(config)
    rng = mobility_rng(config)
    fleet = scenario.fleet

    degrees = np.zeros(config.n_nodes, dtype=np.int64)
    for tick in range(config.horizon + 1):
        if tick > 0:
            fleet = step_mobility(fleet, config, rng)
        snapshot = build_snapshot(fleet.positions, config.threshold, tick=tick, method=config.snapshot_method)
        degrees += snapshot.degrees()
        monitor.record_memory()

    histogram = histogram_from_degrees(degrees, config.histogram_bin_width)
    hist_path = os.path.join(out_dir, "degree_hist.csv")
    write_histogram_csv(histogram, hist_path)
    paths = [hist_path]
    logger.info(f"Mean accumulated degree {histogram.mean_degree:.3f} over {config.horizon + 1} snapshots")

    if config.n_migrated > 0:
        migrated = histogram_from_degrees(degrees[scenario.migrated_ids], config.histogram_bin_width)
        migrated_path = os.path.join(out_dir, "degree_hist_migrated.csv")
        write_histogram_csv(migrated, migrated_path)
        paths.append(migrated_path)
        for label, ids in scenario.origin_ids().items():
            origin = histogram_from_degrees(degrees[ids], config.histogram_bin_width)
            origin_path = os.path.join(out_dir, f"degree_hist_migrated_{origin_slug(label)}.csv")
            write_histogram_csv(origin, origin_path)
            paths.append(origin_path)
            logger.info(f"{label}: {len(ids)} migrated nodes, mean accumulated degree {origin.mean_degree:.3f}")

    paths.extend(_plots("degree_hist", hist_path, out_dir, plot))
    manifest = RunManifest(command="degree-hist", config_hash=config.config_hash(), seed=config.seed,
                           config=config.to_dict())
    return _finish(manifest, monitor, out_dir, paths)


def load_model_rt(trajectory_csv: str) -> List[Tuple[int, float]]:
    """(tick, R_t) from a trajectory CSV written by simulate."""
    if not os.path.isfile(trajectory_csv):
        raise MissingFileError("trajectory file not found", path=trajectory_csv)
    frame = pd.read_csv(trajectory_csv)
    if list(frame.columns) != TRAJECTORY_COLUMNS:
        raise HeaderError(
            f"bad trajectory header, expected {','.join(TRAJECTORY_COLUMNS)}", path=trajectory_csv, line=1
        )
    return [(int(t), float(v)) for t, v in zip(frame["tick"], frame["R_t"])]


def cmd_compare(
    case_csv: str,
    trajectory_csv: str,
    window: int,
    out_dir: str,
    plot: bool = False,
) -> Dict[str, str]:
    """Align the window-ratio R_t of real cases with the model R_t by day index."""
    if window < 1:
        raise ConfigError(f"--window must be >= 1, got {window}")
    _prepare(out_dir)
    monitor = RunMonitor()
    series = load_cases_csv(case_csv)
    estimates = empirical_rt(series, window)
    start = series.dates[0]
    empirical = [((day - start).days, value) for day, value in estimates]
    model = load_model_rt(trajectory_csv)

    frame = comparison_frame(empirical, model)
    comparison_path = os.path.join(out_dir, "comparison.csv")
    write_comparison_csv(frame, comparison_path)
    logger.info(f"Compared {len(empirical)} empirical points with {len(model)} model ticks")

    paths = [comparison_path] + _plots("comparison", comparison_path, out_dir, plot)
    manifest = RunManifest(command="compare", config_hash=None, seed=None)
    return _finish(manifest, monitor, out_dir, paths)


def _sweep_run(config_data: Dict, out_dir: str) -> List[Tuple[int, float, float]]:
    """One radius in its own process and output directory."""
    config = config_from_dict(config_data)
    scenario = build_scenario(config)
    record = run_network_sir(
        scenario.state, scenario.fleet, config, scenario.params, config.horizon,
        rng=mobility_rng(config), workers=1, snapshot_method=config.snapshot_method,
    )
    _prepare(out_dir)
    record.write_csv(os.path.join(out_dir, "trajectory.csv"))
    return [(tick, config.threshold, value) for tick, value in zip(record.ticks, record.beta_critical)]


def cmd_sweep(
    config: ScenarioConfig,
    out_dir: str,
    radii: Optional[Sequence[float]] = None,
    processes: Optional[int] = None,
    plot: bool = False,
) -> Dict[str, str]:
    """beta_critical(t) for each threshold radius, one process per radius."""
    radii = list(radii) if radii is not None else list(config.sweep_radii)
    if not radii or any(r < 0 for r in radii):
        raise ConfigError(f"radii must be a non-empty list of lengths >= 0, got {radii}")
    _prepare(out_dir)
    monitor = RunMonitor()

    scenario = build_scenario(config)
    initial = beta_critical_sweep(
        scenario.fleet.positions, config.area, config.mu, config.sigma, radii,
        r_critical=config.r_critical, workers=config.workers,
    ) if config.mu > 0 else [(float(r), float("nan")) for r in radii]
    initial_path = os.path.join(out_dir, "sweep_initial.csv")
    pd.DataFrame(initial, columns=["radius", "beta_critical"]).to_csv(
        initial_path, index=False, float_format="%.6e", lineterminator="\n"
    )

    jobs = [(config.replace(d_T=float(r)).to_dict(), os.path.join(out_dir, f"radius_{r:g}")) for r in radii]
    workers = processes or min(len(jobs), os.cpu_count() or 1)
    logger.info(f"Sweeping {len(radii)} radii across {workers} process(es)")
    rows: List[Tuple[int, float, float]] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_sweep_run, *zip(*jobs)):
                rows.extend(part)
    else:
        for data, run_dir in jobs:
            rows.extend(_sweep_run(data, run_dir))

    sweep_path = os.path.join(out_dir, "sweep.csv")
    write_sweep_csv(rows, sweep_path)
    paths = [sweep_path, initial_path]
    paths.extend(os.path.join(run_dir, "trajectory.csv") for _, run_dir in jobs)
    paths.extend(_plots("sweep", sweep_path, out_dir, plot))

    manifest = RunManifest(command="sweep", config_hash=config.config_hash(), seed=config.seed,
                           config=config.to_dict())
    return _finish(manifest, monitor, out_dir, paths)
