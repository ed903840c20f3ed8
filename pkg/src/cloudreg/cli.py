"""Command-line harness: register, benchmark, and gen-scene subcommands.

Exit codes: 0 on a completed run, 2 when registration found no usable
features or no overlap, 1 on input or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .benchmark import resolve_realizations, run_benchmark
from .config import load_realization_config
from .errors import CloudRegError, NoFeatures, NoOverlap, StageError
from .io import read_cloud
from .pipeline import realization_by_name, run_registration
from .synthetic import REGIMES, SceneParams, generate_synthetic_scene, save_scene

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NO_SOLUTION = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudreg",
        description="Global registration of local LiDAR maps against dense aerial maps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("register", help="register one local cloud against a global cloud")
    reg.add_argument("--local", required=True, help="local map file (ply, pcd, xyz)")
    reg.add_argument("--global", dest="global_map", required=True, help="global map file")
    reg.add_argument("--config", default=None, help="realization config file; default SHOT")
    reg.add_argument("--seed", type=int, default=0)
    reg.add_argument("--out", required=True, help="JSON result path")

    bench = sub.add_parser("benchmark", help="run the realization grid on a scene")
    bench.add_argument("--scene", default="synthetic", help="'synthetic' or a scene directory")
    bench.add_argument("--regimes", default="basic", help=f"comma list from {REGIMES}")
    bench.add_argument("--realizations", default="all", help="comma list of names, or 'all'")
    bench.add_argument("--seeds", type=int, default=1, help="seeds 0..N-1")
    bench.add_argument("--max-scans", type=int, default=5, help="scan counts 1..max per run")
    bench.add_argument("--jobs", type=int, default=None, help="parallel workers (CLOUDREG_JOBS)")
    bench.add_argument("--out", required=True, help="output directory")

    gen = sub.add_parser("gen-scene", help="generate and save a synthetic scene")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--scans", type=int, default=5)
    gen.add_argument("--extent", type=float, default=SceneParams.extent)
    gen.add_argument("--structures", type=int, default=SceneParams.structure_count)
    gen.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_register(args) -> int:
    if args.config is None:
        config = realization_by_name("SHOT")
    else:
        config = load_realization_config(args.config)
    local = read_cloud(args.local)
    global_map = read_cloud(args.global_map)
    result = run_registration(local, global_map, config, args.seed)
    payload = {
        "realization": config.name,
        "seed": args.seed,
        "transform_3x4_row_major": [float(v) for v in result.transform.flat_3x4()],
        "inlier_indices": [int(i) for i in result.inlier_indices],
        "rms_residual_m": result.rms_residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "stage_timings_ms": {k: float(v) for k, v in result.stage_timings.items()},
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    jobs = args.jobs
    if jobs is None:
        jobs = int(os.environ.get("CLOUDREG_JOBS", "1"))
    regimes = [r.strip() for r in args.regimes.split(",") if r.strip()]
    realizations = resolve_realizations(args.realizations)
    run_benchmark(
        scene_source=args.scene,
        realizations=realizations,
        regimes=regimes,
        seeds=args.seeds,
        max_scans=args.max_scans,
        out_dir=args.out,
        jobs=jobs,
    )
    return EXIT_OK


def _cmd_gen_scene(args) -> int:
    params = SceneParams(
        extent=args.extent, structure_count=args.structures, scan_count=args.scans
    )
    scene = generate_synthetic_scene(args.seed, params)
    save_scene(scene, args.out)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "register": _cmd_register,
        "benchmark": _cmd_benchmark,
        "gen-scene": _cmd_gen_scene,
    }
    try:
        return handlers[args.command](args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, (NoFeatures, NoOverlap)):
            return EXIT_NO_SOLUTION
        return EXIT_INPUT_ERROR
    except (NoFeatures, NoOverlap) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except (CloudRegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
