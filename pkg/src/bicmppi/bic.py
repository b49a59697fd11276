"""Bidirectional clustered MPPI: branch generation, association, guide pass.

One planning step has three stages. First, clustered MPPI passes run in both
directions: forward rollouts from the current state and time-reversed
rollouts from the goal, each clustered into branches (every cluster average
is kept, not just the best). Second, each forward branch is associated with
the backward branch and cut indices that minimize the position distance
between trajectory points; trimming both at the junction and concatenating
gives a reference trajectory from start to goal, zero-padded (controls) and
goal-padded (states) up to the forward horizon. Third, a guide MPPI pass per
reference adds per-timestep deviation penalties from the reference and a
heavily weighted terminal goal term to the usual cost, pulling dynamically
feasible rollouts along the reference. The candidate with the lowest plain
forward cost wins.

The module also provides the receding-horizon driver and planner classes for
the plain, clustered, and bidirectional optimizers.
"""

import dataclasses
import time

import numpy as np
from scipy.spatial.distance import cdist

from .clustering import (DbscanParams, cluster_controls, cluster_mppi_step,
                         cluster_rollouts)
from .dynamics import Model, rk4_forward, rollout
from .mppi import (CostModel, NoiseSpec, NoValidSamples, Problem,
                   derive_seed, evaluate_cost_batch, sample_batch,
                   vanilla_mppi_step, warm_start_shift, weighted_average)


class PlanningFailure(Exception):
    """A planning step could not produce any feasible candidate."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclasses.dataclass
class BranchSet:
    """Cluster-averaged control sequences with their rollouts and costs."""

    direction: str
    controls: list
    trajectories: list
    costs: np.ndarray

    @property
    def count(self):
        return len(self.controls)


@dataclasses.dataclass
class GuideReference:
    """Concatenated forward/backward reference with junction bookkeeping.

    effective_horizon is the pre-padding concatenated length
    cut_forward + (T_b - cut_backward); controls/states are padded so the
    horizon is at least the forward horizon and states end at the goal.
    """

    controls: np.ndarray
    states: np.ndarray
    forward_branch: int
    backward_branch: int
    cut_forward: int
    cut_backward: int
    junction_distance: float
    effective_horizon: int


@dataclasses.dataclass(frozen=True)
class GuideWeights:
    """Deviation weights and the inverse weight of the terminal goal term."""

    lambda_x: float = 1.0
    lambda_u: float = 0.0
    epsilon_goal: float = 0.01

    def __post_init__(self):
        if self.lambda_x < 0 or self.lambda_u < 0:
            raise ValueError("deviation weights must be nonnegative")
        if self.epsilon_goal <= 0:
            raise ValueError("epsilon_goal must be positive")


def _clustered_branches(problem, base, anchor, direction, cost_model,
                        noise, n_samples, params) -> BranchSet:
    batch = sample_batch(problem, base, anchor, direction, cost_model,
                         noise, n_samples)
    try:
        clusters = cluster_rollouts(batch, noise, params)
    except NoValidSamples as exc:
        raise PlanningFailure(f"no valid {direction} samples") from exc
    candidates = cluster_controls(batch, clusters, noise.gamma)
    stacked = np.stack(candidates)
    trajs = rollout(problem.model, anchor, stacked, direction, problem.dt,
                    check=False)
    costs = evaluate_cost_batch(trajs, stacked, cost_model,
                                problem.state_constraint, direction)
    return BranchSet(direction, candidates, list(trajs), costs)


def forward_cluster(problem: Problem, base, x_init, cost_model: CostModel,
                    noise: NoiseSpec, n_samples: int,
                    params: DbscanParams) -> BranchSet:
    """Clustered MPPI from the initial state; keeps every cluster average."""
    return _clustered_branches(problem, base, x_init, "forward", cost_model,
                               noise, n_samples, params)


def backward_cluster(problem: Problem, base, x_goal, cost_model: CostModel,
                     noise: NoiseSpec, n_samples: int,
                     params: DbscanParams) -> BranchSet:
    """Clustered MPPI in reverse time from the goal state; the cost anchors
    the earliest trajectory state toward the start."""
    return _clustered_branches(problem, base, x_goal, "backward", cost_model,
                               noise, n_samples, params)


def associate(forward: BranchSet, backward: BranchSet, model: Model,
              x_goal, horizon_floor: int) -> list:
    """Connect each forward branch to its nearest backward branch.

    For forward branch i the junction (j, tau, tau') minimizes the position
    distance between forward state tau and backward state tau', ties going
    to the lexicographically smallest triple. The trimmed halves are
    concatenated; if the result is shorter than horizon_floor it is padded
    with zero inputs and goal states. The rare cut at the very end of the
    backward branch is extended by one zero-input step so the reference
    still ends at the goal.
    """
    x_goal = np.asarray(x_goal, dtype=float)
    m = forward.controls[0].shape[1]
    refs = []
    for i, (U_f, X_f) in enumerate(zip(forward.controls,
                                       forward.trajectories)):
        P_f = model.position(X_f)
        best = None
        for j, X_b in enumerate(backward.trajectories):
            D = cdist(P_f, model.position(X_b))
            flat = int(np.argmin(D))
            tau, tau_p = np.unravel_index(flat, D.shape)
            if best is None or D[tau, tau_p] < best[0]:
                best = (float(D[tau, tau_p]), j, int(tau), int(tau_p))
        dist, j, tau, tau_p = best
        U_b = backward.controls[j]
        X_b = backward.trajectories[j]
        t_back = U_b.shape[0]

        controls = np.concatenate([U_f[:tau], U_b[tau_p:]], axis=0)
        states = np.concatenate([X_f[:tau + 1], X_b[tau_p + 1:]], axis=0)
        effective = tau + (t_back - tau_p)
        if effective < horizon_floor:
            pad = horizon_floor - effective
            controls = np.concatenate([controls, np.zeros((pad, m))], axis=0)
            states = np.concatenate(
                [states, np.tile(x_goal, (pad, 1))], axis=0)
        elif tau_p == t_back:
            controls = np.concatenate([controls, np.zeros((1, m))], axis=0)
            states = np.concatenate([states, x_goal[None]], axis=0)
        refs.append(GuideReference(controls, states, i, j, tau, tau_p,
                                   dist, effective))
    return refs


def guide_costs(trajs, inputs, reference: GuideReference, base_costs,
                model: Model, x_goal, weights: GuideWeights) -> np.ndarray:
    """Add reference-deviation and terminal-goal terms to plain costs.

    Comparison is timestep-aligned: state t against reference state t,
    input t against reference input t. The goal term reads the state at the
    reference's effective horizon.
    """
    costs = base_costs.copy()
    if weights.lambda_x > 0:
        dx = model.difference(trajs, reference.states[None])
        costs = costs + weights.lambda_x * np.einsum("ktn,ktn->k", dx, dx)
    if weights.lambda_u > 0:
        du = inputs - reference.controls[None]
        costs = costs + weights.lambda_u * np.einsum("ktm,ktm->k", du, du)
    t_i = min(reference.effective_horizon, trajs.shape[1] - 1)
    dg = model.difference(trajs[:, t_i], np.asarray(x_goal, dtype=float)[None])
    costs = costs + np.linalg.norm(dg, axis=-1) / weights.epsilon_goal
    return costs


def guide_mppi(problem: Problem, reference: GuideReference, x_init, x_goal,
               cost_model: CostModel, weights: GuideWeights,
               noise: NoiseSpec, n_samples: int):
    """One guided MPPI pass warm-started at the reference controls.

    Returns the weighted-average control sequence, or None when every
    sample is infeasible (the caller skips this candidate).
    """
    batch = sample_batch(problem, reference.controls, x_init, "forward",
                         cost_model, noise, n_samples)
    costs = guide_costs(batch.trajectories, batch.inputs, reference,
                        batch.costs, problem.model, x_goal, weights)
    try:
        return weighted_average(batch.inputs, costs,
                                np.arange(batch.n_samples), noise.gamma)
    except NoValidSamples:
        return None


@dataclasses.dataclass
class StepDiagnostics:
    """Per-step introspection for benchmark logs and tests."""

    n_forward_branches: int
    n_backward_branches: int
    junction_distances: list
    candidate_costs: list
    selected: int
    selected_backward_branch: int


@dataclasses.dataclass(frozen=True)
class BicConfig:
    """Knobs of one bidirectional step (sample counts, horizons, stages)."""

    n_forward: int
    n_backward: int
    n_guide: int
    horizon_forward: int
    horizon_backward: int
    dbscan: DbscanParams = DbscanParams()
    guide: GuideWeights = GuideWeights()


def bic_mppi_step(problem: Problem, base_forward, base_backward, x_init,
                  x_goal, cost_forward: CostModel, cost_backward: CostModel,
                  noise: NoiseSpec, cfg: BicConfig):
    """One full bidirectional step; returns (controls, diagnostics).

    Raises PlanningFailure when either direction yields no feasible samples
    or every guided candidate is infeasible.
    """
    seed = noise.seed
    fwd = forward_cluster(problem, base_forward, x_init, cost_forward,
                          dataclasses.replace(noise, seed=derive_seed(seed, "f")),
                          cfg.n_forward, cfg.dbscan)
    bwd = backward_cluster(problem, base_backward, x_goal, cost_backward,
                           dataclasses.replace(noise, seed=derive_seed(seed, "b")),
                           cfg.n_backward, cfg.dbscan)
    refs = associate(fwd, bwd, problem.model, x_goal, cfg.horizon_forward)

    candidates = []
    for i, ref in enumerate(refs):
        guided = guide_mppi(problem, ref, x_init, x_goal, cost_forward,
                            cfg.guide,
                            dataclasses.replace(noise,
                                                seed=derive_seed(seed, "g", i)),
                            cfg.n_guide)
        candidates.append(guided)

    # Final selection: plain forward cost of each candidate, evaluated on
    # the rollout of its first horizon_forward inputs.
    costs = np.full(len(candidates), np.inf)
    for i, U in enumerate(candidates):
        if U is None:
            continue
        U_trim = U[:cfg.horizon_forward]
        traj = rollout(problem.model, x_init, U_trim, "forward", problem.dt,
                       check=False)
        costs[i] = evaluate_cost_batch(
            traj[None], U_trim[None], cost_forward,
            problem.state_constraint, "forward")[0]
    if not np.isfinite(costs).any():
        raise PlanningFailure("all guided candidates infeasible")
    selected = int(np.argmin(costs))
    diag = StepDiagnostics(
        n_forward_branches=fwd.count,
        n_backward_branches=bwd.count,
        junction_distances=[r.junction_distance for r in refs],
        candidate_costs=costs.tolist(),
        selected=selected,
        selected_backward_branch=refs[selected].backward_branch,
    )
    return candidates[selected], diag, bwd


class MppiPlanner:
    """Receding-horizon wrapper around the plain MPPI step."""

    def __init__(self, problem: Problem, cost_model: CostModel,
                 noise: NoiseSpec, n_samples: int, horizon: int):
        self.problem = problem
        self.cost_model = cost_model
        self.noise = noise
        self.n_samples = n_samples
        self.nominal = np.tile(problem.model.trim_input, (horizon, 1))

    def plan(self, x, seed: int) -> np.ndarray:
        try:
            controls, _ = vanilla_mppi_step(
                self.problem, self.nominal, x, self.cost_model,
                dataclasses.replace(self.noise, seed=seed), self.n_samples)
        except NoValidSamples as exc:
            raise PlanningFailure("no valid samples") from exc
        self.nominal = warm_start_shift(controls,
                                        self.problem.input_constraint)
        return controls


class ClusterMppiPlanner:
    """Receding-horizon wrapper around the clustered MPPI step."""

    def __init__(self, problem: Problem, cost_model: CostModel,
                 noise: NoiseSpec, n_samples: int, horizon: int,
                 params: DbscanParams):
        self.problem = problem
        self.cost_model = cost_model
        self.noise = noise
        self.n_samples = n_samples
        self.params = params
        self.nominal = np.tile(problem.model.trim_input, (horizon, 1))

    def plan(self, x, seed: int) -> np.ndarray:
        try:
            controls, _ = cluster_mppi_step(
                self.problem, self.nominal, x, self.cost_model,
                dataclasses.replace(self.noise, seed=seed), self.n_samples,
                self.params)
        except NoValidSamples as exc:
            raise PlanningFailure("no valid samples") from exc
        self.nominal = warm_start_shift(controls,
                                        self.problem.input_constraint)
        return controls


class BicMppiPlanner:
    """Receding-horizon wrapper around the bidirectional step.

    The forward nominal is the shifted previous solution; the backward
    nominal reuses the previously selected backward branch unshifted, since
    its anchor (the goal) does not advance.
    """

    def __init__(self, problem: Problem, cost_forward: CostModel,
                 cost_backward: CostModel, noise: NoiseSpec, x_goal,
                 cfg: BicConfig):
        self.problem = problem
        self.cost_forward = cost_forward
        self.cost_backward = cost_backward
        self.noise = noise
        self.x_goal = np.asarray(x_goal, dtype=float)
        self.cfg = cfg
        trim = problem.model.trim_input
        self.nominal_forward = np.tile(trim, (cfg.horizon_forward, 1))
        self.nominal_backward = np.tile(trim, (cfg.horizon_backward, 1))
        self.last_diagnostics = None

    def plan(self, x, seed: int) -> np.ndarray:
        controls, diag, bwd = bic_mppi_step(
            self.problem, self.nominal_forward, self.nominal_backward, x,
            self.x_goal, self.cost_forward, self.cost_backward,
            dataclasses.replace(self.noise, seed=seed), self.cfg)
        self.last_diagnostics = diag
        self.nominal_forward = warm_start_shift(
            controls[:self.cfg.horizon_forward],
            self.problem.input_constraint)
        self.nominal_backward = bwd.controls[diag.selected_backward_branch]
        return controls


@dataclasses.dataclass
class DriveRecord:
    """Outcome of one closed-loop trial."""

    success: bool
    iterations: int
    wall_time: float
    terminal_error: float
    failure_reason: str | None
    states: np.ndarray


def closed_loop_drive(planner, problem: Problem, x_init, x_goal,
                      max_iters: int, err: float, seed: int) -> DriveRecord:
    """Receding-horizon execution: plan, apply the first input, repeat.

    Ends with success when the position error drops below err, and with
    failure on executed-state collision, a planning failure, or an
    exhausted iteration budget. Only discrete executed states are collision
    checked.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if err <= 0:
        raise ValueError("err must be positive")
    model = problem.model
    goal_p = model.position(np.asarray(x_goal, dtype=float))
    x = np.asarray(x_init, dtype=float).copy()
    states = [x.copy()]

    def pos_err(state):
        return float(np.linalg.norm(model.position(state) - goal_p))

    start = time.perf_counter()
    if pos_err(x) < err:
        return DriveRecord(True, 0, time.perf_counter() - start,
                           pos_err(x), None, np.array(states))
    iterations = 0
    failure = "max_iters"
    success = False
    for it in range(max_iters):
        try:
            controls = planner.plan(x, derive_seed(seed, "iter", it))
        except PlanningFailure as exc:
            failure = exc.reason
            break
        u_next = controls[min(1, len(controls) - 1)]
        x = rk4_forward(model, x, controls[0], u_next, problem.dt)
        iterations = it + 1
        states.append(x.copy())
        if problem.state_constraint.violated(x, model.position(x)):
            failure = "collision"
            break
        if pos_err(x) < err:
            success = True
            failure = None
            break
    wall = time.perf_counter() - start
    return DriveRecord(success, iterations, wall, pos_err(x), failure,
                       np.array(states))
