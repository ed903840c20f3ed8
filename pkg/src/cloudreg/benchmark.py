"""Benchmark grid: realizations x regimes x scan counts x seeds.

Each run registers the accumulated local map against the regime-cropped
global map and classifies success against an ICP baseline obtained from the
ground-truth initialization on the basic-regime clouds. Raw per-run rows are
written to two CSV files: raw.csv holds the deterministic error columns and
is byte-stable across invocations; timings.csv holds wall-clock stage times,
which cannot be. Aggregates are recomputed from the written files so that an
independent re-aggregation matches them exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cloud import voxel_downsample
from .errors import CloudRegError, InvalidParameter
from .estimation import icp_refine
from .metrics import (
    AlignmentError,
    SuccessCriteria,
    alignment_error,
    classify_success,
    min_scans_from_flags,
    zero_baseline,
)
from .pipeline import (
    RealizationConfig,
    STAGES,
    enumerate_realizations,
    realization_by_name,
    run_registration,
)
from .synthetic import (
    REGIMES,
    SceneParams,
    SyntheticScene,
    build_local_map,
    crop_global_map,
    generate_synthetic_scene,
    load_scene,
    true_local_bounds,
)

RAW_COLUMNS = ("realization", "regime", "scan_count", "seed", "e_t_m", "e_r_deg", "success")
TIMING_COLUMNS = (
    "realization", "regime", "scan_count", "seed",
    "t_feature_ms", "t_descr_ms", "t_match_ms", "t_estim_ms", "t_icp_ms",
)
_TIMING_BY_STAGE = dict(zip(STAGES, TIMING_COLUMNS[4:]))

RAW_FILE = "raw.csv"
TIMINGS_FILE = "timings.csv"
AGGREGATE_CSV = "aggregate.csv"
AGGREGATE_JSON = "aggregate.json"


@dataclass(frozen=True)
class RunRecord:
    """Outcome of a single benchmark run; errors are NaN when the run failed."""

    realization: str
    regime: str
    scan_count: int
    seed: int
    e_t: float
    e_r: float
    success: bool
    timings_ms: dict[str, float]
    failure: str | None = None


@dataclass(frozen=True)
class BenchmarkReport:
    records: list[RunRecord]
    aggregates: dict


# Per-process caches; workers rebuild scenes lazily and deterministically.
_SCENE_CACHE: dict = {}
_BASELINE_CACHE: dict = {}


def _get_scene(source: str, seed: int, params: SceneParams) -> SyntheticScene:
    key = (source, seed, params)
    if key not in _SCENE_CACHE:
        if source == "synthetic":
            _SCENE_CACHE[key] = generate_synthetic_scene(seed, params)
        else:
            _SCENE_CACHE[key] = load_scene(source, seed)
        if len(_SCENE_CACHE) > 4:
            _SCENE_CACHE.pop(next(iter(_SCENE_CACHE)))
    return _SCENE_CACHE[key]


def baseline_error(
    scene: SyntheticScene,
    scan_count: int,
    seed: int,
    config: RealizationConfig,
) -> AlignmentError:
    """ICP-from-ground-truth reference error on the basic-regime clouds."""
    key = (id(scene), scan_count, seed, config.preprocess.icp_voxel_leaf)
    if key in _BASELINE_CACHE:
        return _BASELINE_CACHE[key]
    local, t_gt = build_local_map(scene, scan_count, seed=seed)
    box = true_local_bounds(scene, scan_count)
    global_crop = crop_global_map(scene.global_cloud, box, "basic")
    try:
        refined = icp_refine(
            voxel_downsample(local, config.preprocess.icp_voxel_leaf),
            voxel_downsample(global_crop, config.preprocess.icp_voxel_leaf),
            t_gt,
            max_iterations=config.icp.max_iterations,
            max_corr_dist=config.icp.max_corr_dist,
            convergence_eps=config.icp.convergence_eps,
        )
        baseline = alignment_error(refined.transform, t_gt)
    except CloudRegError:
        baseline = zero_baseline()
    _BASELINE_CACHE[key] = baseline
    return baseline


def execute_run(
    source: str,
    scene_params: SceneParams,
    config: RealizationConfig,
    regime: str,
    scan_count: int,
    seed: int,
) -> RunRecord:
    """One grid cell; failures are captured in the record, not raised."""
    scene = _get_scene(source, seed, scene_params)
    local, t_gt = build_local_map(scene, scan_count, seed=seed)
    if regime == "basic":
        box = true_local_bounds(scene, scan_count)
    else:
        box = true_local_bounds(scene, len(scene.scans))
    try:
        global_crop = crop_global_map(scene.global_cloud, box, regime)
        result = run_registration(local, global_crop, config, seed)
        err = alignment_error(result.transform, t_gt)
        baseline = baseline_error(scene, scan_count, seed, config)
        success = classify_success(err, SuccessCriteria(baseline))
        timings = {stage: result.stage_timings.get(stage, 0.0) for stage in STAGES}
        return RunRecord(
            config.name, regime, scan_count, seed, err.e_t, err.e_r, success, timings
        )
    except CloudRegError as exc:
        nan_timings = {stage: float("nan") for stage in STAGES}
        return RunRecord(
            config.name, regime, scan_count, seed,
            float("nan"), float("nan"), False, nan_timings, failure=str(exc),
        )


def _execute_run_star(args) -> RunRecord:
    return execute_run(*args)


def resolve_realizations(names: list[str] | str) -> list[RealizationConfig]:
    if names == "all" or names == ["all"]:
        return enumerate_realizations()
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    return [n if isinstance(n, RealizationConfig) else realization_by_name(n) for n in names]


def run_benchmark(
    scene_source: str,
    realizations: list[RealizationConfig],
    regimes: list[str],
    seeds: int,
    max_scans: int,
    out_dir: str | os.PathLike,
    jobs: int = 1,
    scene_params: SceneParams | None = None,
    scan_counts: list[int] | None = None,
) -> BenchmarkReport:
    """Execute the benchmark grid and write raw and aggregate files.

    Rows cover every (realization, regime, scan_count, seed) cell, including
    failed runs. Files are written atomically after all runs finish, sorted
    by (realization, regime, scan_count, seed).
    """
    for regime in regimes:
        if regime not in REGIMES:
            raise InvalidParameter(f"unknown regime '{regime}'")
    if seeds < 1:
        raise InvalidParameter("seeds must be >= 1")
    if scene_params is None:
        scene_params = SceneParams(scan_count=max_scans)
    if scan_counts is None:
        scan_counts = list(range(1, max_scans + 1))

    tasks = [
        (scene_source, scene_params, config, regime, k, seed)
        for config in realizations
        for regime in regimes
        for k in scan_counts
        for seed in range(seeds)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_execute_run_star, tasks, chunksize=1))
    else:
        records = [_execute_run_star(t) for t in tasks]
    records.sort(key=lambda r: (r.realization, r.regime, r.scan_count, r.seed))

    out_dir = str(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    _atomic_write(os.path.join(out_dir, RAW_FILE), _raw_csv_bytes(records))
    _atomic_write(os.path.join(out_dir, TIMINGS_FILE), _timings_csv_bytes(records))

    aggregates = aggregate_from_files(
        os.path.join(out_dir, RAW_FILE), os.path.join(out_dir, TIMINGS_FILE)
    )
    _atomic_write(os.path.join(out_dir, AGGREGATE_CSV), _aggregate_csv_bytes(aggregates))
    _atomic_write(
        os.path.join(out_dir, AGGREGATE_JSON),
        (json.dumps(aggregates, indent=2, sort_keys=True) + "\n").encode(),
    )
    return BenchmarkReport(records, aggregates)


def _fmt_float(x: float) -> str:
    return "nan" if math.isnan(x) else format(x, ".9g")


def _raw_csv_bytes(records: list[RunRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RAW_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.realization,
                r.regime,
                r.scan_count,
                r.seed,
                _fmt_float(r.e_t),
                _fmt_float(math.degrees(r.e_r) if not math.isnan(r.e_r) else r.e_r),
                int(r.success),
            ]
        )
    return buf.getvalue().encode()


def _timings_csv_bytes(records: list[RunRecord]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMING_COLUMNS)
    for r in records:
        row = [r.realization, r.regime, r.scan_count, r.seed]
        row += [_fmt_float(r.timings_ms[stage]) for stage in STAGES]
        writer.writerow(row)
    return buf.getvalue().encode()


def _atomic_write(path: str, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def aggregate_from_files(raw_path: str, timings_path: str) -> dict:
    """Aggregate statistics recomputed from the written CSV files.

    Success fractions and minimal reliable scan counts come from raw.csv;
    per-stage timing means and standard deviations come from timings.csv.
    Any independent script applying the same arithmetic to the same files
    reproduces this dictionary exactly.
    """
    success_cells: dict[tuple[str, str, int], list[bool]] = {}
    with open(raw_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["realization"], row["regime"], int(row["scan_count"]))
            success_cells.setdefault(key, []).append(row["success"] == "1")

    success_fraction: dict = {}
    min_scans: dict = {}
    for (realization, regime, count), flags in sorted(success_cells.items()):
        frac = sum(flags) / len(flags)
        success_fraction.setdefault(realization, {}).setdefault(regime, {})[str(count)] = frac

    by_pair: dict[tuple[str, str], dict[int, list[bool]]] = {}
    for (realization, regime, count), flags in success_cells.items():
        by_pair.setdefault((realization, regime), {})[count] = flags
    for (realization, regime), per_count in sorted(by_pair.items()):
        value = min_scans_from_flags(per_count)
        min_scans.setdefault(realization, {})[regime] = value if value is not None else "N/A"

    timing_values: dict[tuple[str, str], list[float]] = {}
    with open(timings_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            for stage in STAGES:
                v = float(row[_TIMING_BY_STAGE[stage]])
                if not math.isnan(v):
                    timing_values.setdefault((row["realization"], stage), []).append(v)
    timing_stats: dict = {}
    for (realization, stage), values in sorted(timing_values.items()):
        arr = np.asarray(values)
        timing_stats.setdefault(realization, {})[stage] = {
            "mean_ms": float(arr.mean()),
            "std_ms": float(arr.std()),
            "count": int(arr.size),
        }

    return {
        "success_fraction": success_fraction,
        "min_scans": min_scans,
        "timing_stats": timing_stats,
    }


def _aggregate_csv_bytes(aggregates: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["realization", "regime", "scan_count", "success_fraction"])
    for realization in sorted(aggregates["success_fraction"]):
        for regime in sorted(aggregates["success_fraction"][realization]):
            per_count = aggregates["success_fraction"][realization][regime]
            for count in sorted(per_count, key=int):
                writer.writerow(
                    [realization, regime, count, _fmt_float(per_count[count])]
                )
    writer.writerow([])
    writer.writerow(["realization", "regime", "min_scans"])
    for realization in sorted(aggregates["min_scans"]):
        for regime in sorted(aggregates["min_scans"][realization]):
            writer.writerow([realization, regime, aggregates["min_scans"][realization][regime]])
    return buf.getvalue().encode()
