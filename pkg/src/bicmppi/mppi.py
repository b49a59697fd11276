"""Sampling, rollout evaluation, softmax weighting, and the plain MPPI step.

A control sequence is a (T, m) float array. One optimizer step perturbs a
nominal sequence with Gaussian noise, projects every sampled input onto the
input-constraint set, rolls each sample out through the dynamics, costs the
trajectories, and returns a softmax-weighted average of the sampled inputs.
The minimum sampled cost is subtracted before exponentiation, so weights are
invariant to constant cost shifts and never overflow.

Infeasible samples (collision, state-bound violation, or a non-finite
rollout) carry an infinite cost; exp(-gamma * inf) is exactly zero, so they
drop out of the average. If every sample in an index set is infeasible the
average is undefined and NoValidSamples is raised.

Determinism: all noise for a batch is drawn in a single call from a
generator derived from the seed, before any evaluation happens, so results
do not depend on how the rollout work is split across workers. Sub-seeds
for iterations, stages, and trials are derived with a stable hash.
"""

import dataclasses
import hashlib

import numpy as np

from .constraints import StateConstraint
from .dynamics import Model, rollout


class NoValidSamples(Exception):
    """Every sample in the relevant index set was infeasible."""


def derive_seed(seed: int, *parts) -> int:
    """Stable 64-bit sub-seed from a master seed and a key path."""
    tag = "/".join(str(p) for p in parts).encode()
    digest = hashlib.sha256(tag).digest()
    return (int(seed) ^ int.from_bytes(digest[:8], "little")) & (2 ** 64 - 1)


@dataclasses.dataclass(frozen=True)
class NoiseSpec:
    """Diagonal input-noise covariance, inverse temperature, and seed."""

    variance: np.ndarray
    gamma: float
    seed: int = 0

    def __post_init__(self):
        var = np.atleast_1d(np.asarray(self.variance, dtype=float))
        if np.any(var <= 0):
            raise ValueError("noise variances must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "variance", var)


@dataclasses.dataclass(frozen=True)
class CostModel:
    """Terminal-distance plus input-effort cost.

    terminal_weight scales the Euclidean distance between the trajectory
    endpoint position and the target position. stage_weight (per input
    dimension) scales summed squared inputs. goal_stage_weight optionally
    adds the summed per-step position distance to the target, which rewards
    early arrival; it defaults to off. target is a full state; only its
    position coordinates enter the distance terms.
    """

    model: Model
    target: np.ndarray
    terminal_weight: float = 50.0
    stage_weight: np.ndarray | None = None
    goal_stage_weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "target",
                           np.asarray(self.target, dtype=float))
        if self.stage_weight is not None:
            w = np.asarray(self.stage_weight, dtype=float)
            object.__setattr__(self, "stage_weight", w)


@dataclasses.dataclass(frozen=True)
class Problem:
    """Static planning context shared by every optimizer step."""

    model: Model
    input_constraint: object
    state_constraint: StateConstraint
    dt: float = 0.1


@dataclasses.dataclass
class RolloutBatch:
    """N sampled noise sequences with their projected inputs, trajectories,
    and costs. costs[k] is +inf exactly when sample k is infeasible."""

    noises: np.ndarray
    inputs: np.ndarray
    trajectories: np.ndarray
    costs: np.ndarray

    @property
    def n_samples(self):
        return self.inputs.shape[0]

    @property
    def collided(self):
        return ~np.isfinite(self.costs)


def evaluate_cost(traj, controls, cost_model: CostModel,
                  state_constraint: StateConstraint, direction: str) -> float:
    """Cost of a single trajectory; +inf when any state is infeasible.

    Forward trajectories are scored at their last state, backward ones at
    their first (the end that should approach the anchor target).
    """
    costs = evaluate_cost_batch(traj[None], np.asarray(controls)[None],
                                cost_model, state_constraint, direction)
    return float(costs[0])


def evaluate_cost_batch(trajs, controls, cost_model: CostModel,
                        state_constraint: StateConstraint,
                        direction: str) -> np.ndarray:
    """Vectorized evaluate_cost over a (N, T+1, n) trajectory batch."""
    model = cost_model.model
    end = -1 if direction == "forward" else 0
    x_end = trajs[:, end, :]
    p_err = model.position(x_end) - model.position(cost_model.target)
    costs = cost_model.terminal_weight * np.linalg.norm(p_err, axis=-1)

    if cost_model.stage_weight is not None:
        costs = costs + np.einsum("ntm,m->n", controls ** 2,
                                  cost_model.stage_weight)
    if cost_model.goal_stage_weight > 0:
        d = model.position(trajs) - model.position(cost_model.target)
        costs = costs + cost_model.goal_stage_weight * np.linalg.norm(
            d, axis=-1).sum(axis=-1)

    finite = np.isfinite(trajs).all(axis=(1, 2))
    positions = model.position(trajs)
    blocked = state_constraint.violated_batch(trajs, positions).any(axis=-1)
    costs = np.where(finite & ~blocked, costs, np.inf)
    return costs


def sample_batch(problem: Problem, base, x_start, direction: str,
                 cost_model: CostModel, noise: NoiseSpec,
                 n_samples: int) -> RolloutBatch:
    """Draw, project, roll out, and cost N perturbed control sequences.

    Every input sequence is feasible after per-timestep projection; the
    batch is a pure function of (arguments, noise.seed).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    base = np.asarray(base, dtype=float)
    T, m = base.shape
    rng = np.random.default_rng(noise.seed)
    std = np.sqrt(noise.variance)
    noises = rng.standard_normal((n_samples, T, m)) * std
    inputs = problem.input_constraint.project(base + noises)
    trajs = rollout(problem.model, x_start, inputs, direction,
                    problem.dt, check=False)
    costs = evaluate_cost_batch(trajs, inputs, cost_model,
                                problem.state_constraint, direction)
    return RolloutBatch(noises, inputs, trajs, costs)


def weighted_average(inputs, costs, index_set, gamma: float) -> np.ndarray:
    """Softmax-weighted average of input sequences over an index set.

    The minimum finite cost in the set is subtracted before weighting, so a
    constant shift of all costs leaves the result unchanged. Infeasible
    members get weight exactly zero. Raises NoValidSamples when no member
    has finite cost.
    """
    idx = np.asarray(index_set, dtype=int)
    if idx.size == 0:
        raise NoValidSamples("empty index set")
    sel = costs[idx]
    finite = np.isfinite(sel)
    if not finite.any():
        raise NoValidSamples("all samples in the index set are infeasible")
    j_base = np.min(sel[finite])
    w = np.exp(-gamma * (sel - j_base))
    return np.einsum("k,ktm->tm", w / w.sum(), inputs[idx])


def vanilla_mppi_step(problem: Problem, base, x_start, cost_model: CostModel,
                      noise: NoiseSpec, n_samples: int):
    """One plain MPPI iteration: sample forward rollouts and average all of
    them. Returns (controls, batch)."""
    batch = sample_batch(problem, base, x_start, "forward", cost_model,
                         noise, n_samples)
    controls = weighted_average(batch.inputs, batch.costs,
                                np.arange(batch.n_samples), noise.gamma)
    return controls, batch


def warm_start_shift(prev, constraint) -> np.ndarray:
    """Advance a solved sequence one step: drop the first input, append a
    projected zero input."""
    prev = np.asarray(prev, dtype=float)
    tail = constraint.project(np.zeros((1, prev.shape[1])))
    return np.concatenate([prev[1:], tail], axis=0)
