"""Benchmark harness: experiment config, trial execution, aggregation, I/O.

An experiment runs one algorithm over a set of maps and start states,
executing one closed-loop trial per (map, start) pair. Per-trial seeds are
the master seed mixed with a stable hash of the map and start ids, so a
suite rerun with the same config reproduces every trial record byte for
byte (wall-clock fields aside) regardless of how trials are scheduled.

Config files are flat ``key = value`` text. '#' starts a comment. Vector
values are comma-separated numbers; start-state lists separate vectors with
';'. Unknown keys are errors; keys that do not apply to the chosen
algorithm produce a warning and are ignored. Schema:

    algorithm        mppi | cluster-mppi | bic-mppi
    model            diffdrive | quadrotor
    maps             directory of map files (or use map_count/map_seed
                     to generate: map_count, map_seed, map_obstacles,
                     map_resolution, map_inflation)
    starts           start states, e.g. 0.5,0,1.5708; 2.5,0,1.5708
    goal             goal state
    sigma_u          diagonal input-noise covariance, e.g. 0.25,0.25
    gamma_u          inverse temperature
    t_f              forward horizon (t_b: backward, bic-mppi only)
    n_f              forward sample count (n_b, n_g: bic-mppi only)
    dbscan_min_points, dbscan_eps, dbscan_cost_weight
                     clustering knobs (cluster-mppi and bic-mppi)
    lambda_x, lambda_u, epsilon_goal
                     guide-cost knobs (bic-mppi only)
    dt               integration step, seconds
    terminal_weight  weight of the terminal distance cost
    stage_weight     per-input effort weights (optional, default zeros)
    v_min, v_max, w_max    diffdrive input bounds
    a_max, tilt_max_deg    quadrotor input bounds
    bounds_lower, bounds_upper   optional per-dimension state box
    max_iters        iteration budget per trial
    err              success radius, meters
    seed             master seed

Outputs: trials.jsonl (one record per trial), summary.csv (aggregate row),
summary.json, and optional per-trial trajectory CSVs.
"""

import csv
import dataclasses
import json
import warnings
from pathlib import Path

import numpy as np

from . import environment
from .bic import (BicConfig, BicMppiPlanner, ClusterMppiPlanner, GuideWeights,
                  MppiPlanner, closed_loop_drive)
from .clustering import DbscanParams
from .constraints import BoxConstraint, ConeBallConstraint, StateConstraint
from .dynamics import MODELS
from .mppi import CostModel, NoiseSpec, Problem, derive_seed

ALGORITHMS = ("mppi", "cluster-mppi", "bic-mppi")

SUMMARY_COLUMNS = ("algorithm", "trials", "failures", "success_rate",
                   "avg_iters", "avg_time_s", "q1", "q2", "q3")


class ConfigError(Exception):
    """Invalid or incomplete experiment configuration."""


# Keys shared by every algorithm.
_COMMON_KEYS = {
    "algorithm", "model", "maps", "map_count", "map_seed", "map_obstacles",
    "map_resolution", "map_inflation", "map_size", "map_margins", "starts",
    "goal", "sigma_u",
    "gamma_u", "t_f", "n_f", "dt", "terminal_weight", "stage_weight",
    "goal_stage_weight",
    "v_min", "v_max", "w_max", "a_max", "tilt_max_deg", "bounds_lower",
    "bounds_upper", "max_iters", "err", "seed",
}
_CLUSTER_KEYS = {"dbscan_min_points", "dbscan_eps", "dbscan_cost_weight"}
_BIC_KEYS = _CLUSTER_KEYS | {"t_b", "n_b", "n_g", "lambda_x", "lambda_u",
                             "epsilon_goal"}
_ALL_KEYS = _COMMON_KEYS | _BIC_KEYS

_REQUIRED = {
    "mppi": {"algorithm", "model", "starts", "goal", "sigma_u", "gamma_u",
             "t_f", "n_f", "dt", "terminal_weight", "max_iters", "err",
             "seed"},
}
_REQUIRED["cluster-mppi"] = _REQUIRED["mppi"] | {"dbscan_min_points",
                                                 "dbscan_eps"}
_REQUIRED["bic-mppi"] = _REQUIRED["cluster-mppi"] | {"t_b", "n_b", "n_g"}

_APPLICABLE = {
    "mppi": _COMMON_KEYS,
    "cluster-mppi": _COMMON_KEYS | _CLUSTER_KEYS,
    "bic-mppi": _COMMON_KEYS | _BIC_KEYS,
}


@dataclasses.dataclass
class ExperimentConfig:
    """Parsed and validated experiment settings."""

    algorithm: str
    model: str
    starts: list
    goal: np.ndarray
    sigma_u: np.ndarray
    gamma_u: float
    t_f: int
    n_f: int
    dt: float
    terminal_weight: float
    max_iters: int
    err: float
    seed: int
    maps_dir: str | None = None
    map_count: int | None = None
    map_seed: int = 0
    map_obstacles: int = 10
    map_resolution: float = 0.1
    map_inflation: float = 0.15
    map_size: tuple = (3.0, 5.0)
    map_margins: tuple = (1.0, 1.0)
    stage_weight: np.ndarray | None = None
    goal_stage_weight: float = 0.0
    v_min: float = 0.0
    v_max: float = 1.0
    w_max: float = np.pi / 4
    a_max: float = 20.0
    tilt_max_deg: float = 60.0
    bounds_lower: np.ndarray | None = None
    bounds_upper: np.ndarray | None = None
    t_b: int | None = None
    n_b: int | None = None
    n_g: int | None = None
    dbscan_min_points: int = 5
    dbscan_eps: float = 0.12
    dbscan_cost_weight: float = 1.0
    lambda_x: float = 1.0
    lambda_u: float = 0.0
    epsilon_goal: float = 0.01


@dataclasses.dataclass
class TrialResult:
    """Outcome of one (map, start) trial."""

    map_id: str
    start_id: int
    success: bool
    iterations: int
    wall_time: float
    terminal_error: float
    failure_reason: str | None = None

    def to_json(self) -> str:
        d = dataclasses.asdict(self)
        d["wall_time"] = round(d["wall_time"], 6)
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str):
        return cls(**json.loads(line))


@dataclasses.dataclass
class SummaryReport:
    """Aggregate metrics over a suite of trials."""

    algorithm: str
    trials: int
    failures: int
    success_rate: float
    avg_iters: float
    avg_time_s: float
    q1: float
    q2: float
    q3: float
    iteration_cap: int | None = None


def parse_config_text(text: str) -> dict:
    """Parse flat key = value lines into a raw string dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _parse_vector(value: str) -> np.ndarray:
    return np.array([float(v) for v in value.split(",") if v.strip() != ""])


def _parse_states(value: str) -> list:
    return [_parse_vector(chunk) for chunk in value.split(";")
            if chunk.strip()]


def build_config(raw: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw key/value dict and build an ExperimentConfig.

    Unknown keys raise; keys inapplicable to the algorithm warn and are
    dropped. overrides (from CLI flags) replace file values.
    """
    raw = dict(raw)
    if overrides:
        raw.update({k: v for k, v in overrides.items() if v is not None})

    unknown = set(raw) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    algorithm = raw.get("algorithm")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"algorithm must be one of {ALGORITHMS}, "
                          f"got {algorithm!r}")
    missing = _REQUIRED[algorithm] - set(raw)
    if missing:
        raise ConfigError(f"missing config keys for {algorithm}: "
                          f"{sorted(missing)}")
    if "maps" not in raw and "map_count" not in raw:
        raise ConfigError("need either 'maps' (directory) or 'map_count'")
    inapplicable = set(raw) - _APPLICABLE[algorithm]
    if inapplicable:
        warnings.warn(f"config keys ignored for {algorithm}: "
                      f"{sorted(inapplicable)}")
        for key in inapplicable:
            del raw[key]
    if raw.get("model") not in MODELS:
        raise ConfigError(f"model must be one of {sorted(MODELS)}, "
                          f"got {raw.get('model')!r}")

    def get(key, cast, default=None):
        if key not in raw:
            return default
        try:
            return cast(raw[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc

    try:
        cfg = ExperimentConfig(
            algorithm=algorithm,
            model=raw["model"],
            starts=_parse_states(raw["starts"]),
            goal=_parse_vector(raw["goal"]),
            sigma_u=_parse_vector(raw["sigma_u"]),
            gamma_u=get("gamma_u", float),
            t_f=get("t_f", int),
            n_f=get("n_f", int),
            dt=get("dt", float),
            terminal_weight=get("terminal_weight", float),
            max_iters=get("max_iters", int),
            err=get("err", float),
            seed=get("seed", int),
            maps_dir=raw.get("maps"),
            map_count=get("map_count", int),
            map_seed=get("map_seed", int, 0),
            map_obstacles=get("map_obstacles", int, 10),
            map_resolution=get("map_resolution", float, 0.1),
            map_inflation=get("map_inflation", float, 0.15),
            map_size=get("map_size", lambda v: tuple(_parse_vector(v)),
                         (3.0, 5.0)),
            map_margins=get("map_margins", lambda v: tuple(_parse_vector(v)),
                            (1.0, 1.0)),
            stage_weight=get("stage_weight", _parse_vector),
            goal_stage_weight=get("goal_stage_weight", float, 0.0),
            v_min=get("v_min", float, 0.0),
            v_max=get("v_max", float, 1.0),
            w_max=get("w_max", float, np.pi / 4),
            a_max=get("a_max", float, 20.0),
            tilt_max_deg=get("tilt_max_deg", float, 60.0),
            bounds_lower=get("bounds_lower", _parse_vector),
            bounds_upper=get("bounds_upper", _parse_vector),
            t_b=get("t_b", int),
            n_b=get("n_b", int),
            n_g=get("n_g", int),
            dbscan_min_points=get("dbscan_min_points", int, 5),
            dbscan_eps=get("dbscan_eps", float, 0.12),
            dbscan_cost_weight=get("dbscan_cost_weight", float, 1.0),
            lambda_x=get("lambda_x", float, 1.0),
            lambda_u=get("lambda_u", float, 0.0),
            epsilon_goal=get("epsilon_goal", float, 0.01),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    model = MODELS[cfg.model]
    for i, s in enumerate(cfg.starts):
        if s.shape != (model.state_dim,):
            raise ConfigError(f"start {i} must have {model.state_dim} "
                              f"components, got {s.shape[0]}")
    if cfg.goal.shape != (model.state_dim,):
        raise ConfigError(f"goal must have {model.state_dim} components")
    if cfg.sigma_u.shape != (model.input_dim,):
        raise ConfigError(f"sigma_u must have {model.input_dim} entries")
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    return build_config(parse_config_text(Path(path).read_text()), overrides)


def _input_constraint(cfg: ExperimentConfig):
    if cfg.model == "diffdrive":
        return BoxConstraint(np.array([cfg.v_min, -cfg.w_max]),
                             np.array([cfg.v_max, cfg.w_max]))
    return ConeBallConstraint(cfg.a_max, np.deg2rad(cfg.tilt_max_deg))


def resolve_maps(cfg: ExperimentConfig) -> list:
    """(map_id, OccupancyGrid) pairs from a directory or generation spec."""
    if cfg.maps_dir is not None:
        paths = sorted(Path(cfg.maps_dir).glob("*.map"))
        if not paths:
            raise ConfigError(f"no .map files in {cfg.maps_dir}")
        return [(p.stem, environment.load_map(p)) for p in paths]
    maps = []
    for i in range(cfg.map_count):
        spec = environment.MapSpec(
            extended_size=cfg.map_size,
            free_margins=cfg.map_margins,
            obstacle_count=cfg.map_obstacles,
            obstacle_radius=0.15,
            inflation_radius=cfg.map_inflation,
            rng_seed=derive_seed(cfg.map_seed, "map", i),
            resolution=cfg.map_resolution,
        )
        maps.append((f"gen{i:04d}", environment.generate_map(spec)))
    return maps


def build_planner(cfg: ExperimentConfig, grid: environment.OccupancyGrid,
                  x_init):
    """Instantiate the configured planner for one map and start state."""
    model = MODELS[cfg.model]
    sc = StateConstraint(grid, cfg.bounds_lower, cfg.bounds_upper)
    problem = Problem(model, _input_constraint(cfg), sc, cfg.dt)
    noise = NoiseSpec(cfg.sigma_u, cfg.gamma_u, 0)
    cost_f = CostModel(model, cfg.goal, cfg.terminal_weight,
                       cfg.stage_weight, cfg.goal_stage_weight)
    if cfg.algorithm == "mppi":
        planner = MppiPlanner(problem, cost_f, noise, cfg.n_f, cfg.t_f)
    elif cfg.algorithm == "cluster-mppi":
        params = DbscanParams(cfg.dbscan_min_points, cfg.dbscan_eps,
                              cfg.dbscan_cost_weight)
        planner = ClusterMppiPlanner(problem, cost_f, noise, cfg.n_f,
                                     cfg.t_f, params)
    else:
        params = DbscanParams(cfg.dbscan_min_points, cfg.dbscan_eps,
                              cfg.dbscan_cost_weight)
        bic_cfg = BicConfig(cfg.n_f, cfg.n_b, cfg.n_g, cfg.t_f, cfg.t_b,
                            params, GuideWeights(cfg.lambda_x, cfg.lambda_u,
                                                 cfg.epsilon_goal))
        cost_b = CostModel(model, x_init, cfg.terminal_weight,
                           cfg.stage_weight, cfg.goal_stage_weight)
        planner = BicMppiPlanner(problem, cost_f, cost_b, noise, cfg.goal,
                                 bic_cfg)
    return problem, planner


def run_trial(cfg: ExperimentConfig, map_id: str,
              grid: environment.OccupancyGrid, start_id: int):
    """One closed-loop trial; returns (TrialResult, states array)."""
    x_init = cfg.starts[start_id]
    trial_seed = derive_seed(cfg.seed, map_id, start_id)
    problem, planner = build_planner(cfg, grid, x_init)
    record = closed_loop_drive(planner, problem, x_init, cfg.goal,
                               cfg.max_iters, cfg.err, trial_seed)
    result = TrialResult(map_id, start_id, record.success, record.iterations,
                         record.wall_time, record.terminal_error,
                         record.failure_reason)
    return result, record.states


def run_suite(cfg: ExperimentConfig, out_dir=None, dump_trajectories=False,
              progress=None):
    """Execute every (map, start) trial and aggregate.

    Returns (results, SummaryReport). When out_dir is given, writes
    trials.jsonl, summary.csv, and summary.json there (plus per-trial
    trajectory CSVs when requested).
    """
    maps = resolve_maps(cfg)
    results = []
    trajectories = {}
    for map_id, grid in maps:
        for start_id in range(len(cfg.starts)):
            result, states = run_trial(cfg, map_id, grid, start_id)
            results.append(result)
            if dump_trajectories:
                trajectories[(map_id, start_id)] = states
            if progress:
                progress(result)
    results.sort(key=lambda r: (r.map_id, r.start_id))
    report_data = summarize(results, cfg.algorithm, cfg.max_iters)
    if out_dir is not None:
        write_reports(results, report_data, out_dir, trajectories)
    return results, report_data


def summarize(results: list, algorithm: str,
              iteration_cap: int | None = None) -> SummaryReport:
    """Aggregate trial results.

    Mean iterations cover successful trials only (failures ran up to the
    iteration cap, recorded alongside). Error quartiles use linear
    interpolation over the terminal errors of all trials, failures
    included.
    """
    if not results:
        raise ValueError("summarize needs at least one result")
    n = len(results)
    failures = sum(1 for r in results if not r.success)
    success_iters = [r.iterations for r in results if r.success]
    avg_iters = float(np.mean(success_iters)) if success_iters else float("nan")
    errors = np.array([r.terminal_error for r in results])
    q1, q2, q3 = np.percentile(errors, [25, 50, 75], method="linear")
    return SummaryReport(
        algorithm=algorithm,
        trials=n,
        failures=failures,
        success_rate=1.0 - failures / n,
        avg_iters=avg_iters,
        avg_time_s=float(np.mean([r.wall_time for r in results])),
        q1=float(q1), q2=float(q2), q3=float(q3),
        iteration_cap=iteration_cap,
    )


def write_reports(results: list, report: SummaryReport, out_dir,
                  trajectories: dict | None = None) -> None:
    """Write trials.jsonl, summary.csv, summary.json, trajectory dumps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trials.jsonl", "w") as fh:
        for r in results:
            fh.write(r.to_json() + "\n")
    write_summary_csv(report, out / "summary.csv")
    with open(out / "summary.json", "w") as fh:
        json.dump(dataclasses.asdict(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for (map_id, start_id), states in (trajectories or {}).items():
        path = out / f"traj_{map_id}_s{start_id}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(states.shape[1])])
            writer.writerows(states.tolist())


def write_summary_csv(report: SummaryReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerow([report.algorithm, report.trials, report.failures,
                         report.success_rate, report.avg_iters,
                         report.avg_time_s, report.q1, report.q2, report.q3])


def load_trial_results(path) -> list:
    """Read trials.jsonl back into TrialResult values."""
    results = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                results.append(TrialResult.from_json(line))
    return results
