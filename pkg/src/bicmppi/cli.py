"""Command-line benchmark interface.

Subcommands:
    gen-maps  generate benchmark maps into a directory
    run       execute an experiment suite from a config file
    report    recompute the aggregate summary from trial records

Exit status is 0 when a suite completes (even with failed trials) and
nonzero for configuration or I/O errors.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import bench, environment
from .mppi import derive_seed


def _cmd_gen_maps(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        spec = environment.MapSpec(
            obstacle_count=args.obstacles,
            inflation_radius=args.inflate,
            rng_seed=derive_seed(args.seed, "map", i),
            resolution=args.resolution,
        )
        grid = environment.generate_map(spec)
        path = out / f"gen{i:04d}.map"
        environment.save_map(grid, path)
        print(f"wrote {path}")
    return 0


def _cmd_run(args):
    overrides = {"algorithm": args.algo, "maps": args.maps, "seed": args.seed}
    cfg = bench.load_config(args.config, overrides)
    out_dir = args.out or "bench_out"

    def progress(result):
        status = "ok" if result.success else f"FAIL({result.failure_reason})"
        print(f"{result.map_id} start{result.start_id}: {status} "
              f"iters={result.iterations} err={result.terminal_error:.3f}")

    results, report = bench.run_suite(cfg, out_dir, args.dump_trajectories,
                                      progress)
    print(f"{report.algorithm}: {report.trials} trials, "
          f"{report.failures} failures, "
          f"success rate {report.success_rate:.3f}, "
          f"avg iters {report.avg_iters:.1f}")
    print(f"reports written to {out_dir}")
    return 0


def _cmd_report(args):
    trials_path = Path(args.in_dir) / "trials.jsonl"
    results = bench.load_trial_results(trials_path)
    algorithm = args.algo or "unknown"
    report = bench.summarize(results, algorithm)
    if args.format == "csv":
        out = Path(args.in_dir) / "summary.csv"
        bench.write_summary_csv(report, out)
    else:
        out = Path(args.in_dir) / "summary.jsonl"
        with open(out, "w") as fh:
            fh.write(json.dumps(dataclasses.asdict(report), sort_keys=True)
                     + "\n")
    print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bicmppi",
        description="Grid-map navigation benchmarks for sampling-based "
                    "trajectory optimizers.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-maps", help="generate benchmark maps")
    gen.add_argument("--count", type=int, required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--obstacles", type=int, default=10)
    gen.add_argument("--resolution", type=float, default=0.1)
    gen.add_argument("--inflate", type=float, default=0.15)
    gen.set_defaults(func=_cmd_gen_maps)

    run = sub.add_parser("run", help="run an experiment suite")
    run.add_argument("--config", required=True)
    run.add_argument("--algo", choices=bench.ALGORITHMS)
    run.add_argument("--maps")
    run.add_argument("--out")
    run.add_argument("--seed", type=int)
    run.add_argument("--dump-trajectories", action="store_true")
    run.set_defaults(func=_cmd_run)

    rep = sub.add_parser("report", help="summarize recorded trials")
    rep.add_argument("--in", dest="in_dir", required=True)
    rep.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    rep.add_argument("--algo")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (bench.ConfigError, environment.MapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
