"""Density-based clustering of rollout samples and per-cluster averaging.

Plain MPPI averages every sample at once, which can blend distinct local
minima (a left pass and a right pass around the same obstacle) into an
infeasible middle. Clustering first groups samples by a low-dimensional
feature - the time-mean of each whitened noise sequence plus a normalized
cost scalar - and averages controls within each group, so each cluster
yields a candidate that stays on its own side.

DBSCAN is implemented directly: a core point has at least min_points
neighbors within eps (itself included), clusters are connected components
of core points plus their border points, and remaining points are noise.
Border points reachable from several clusters go to the first-discovered
cluster; discovery scans points in index order, so the partition is
deterministic. Infeasible samples are excluded up front. When no cluster is
found, a single cluster containing every (feasible) sample is returned.
"""

import dataclasses

import numpy as np
from scipy.spatial.distance import cdist

from .dynamics import rollout
from .mppi import (CostModel, NoiseSpec, NoValidSamples, Problem,
                   RolloutBatch, evaluate_cost_batch, sample_batch,
                   weighted_average)


@dataclasses.dataclass(frozen=True)
class DbscanParams:
    """min_points: neighbor count (self included) for a core point.
    eps: neighborhood radius in feature space. cost_weight: scale of the
    normalized-cost feature. feature_scheme: "time_mean" (default) or
    "flat" (whole whitened noise sequence, for ablation)."""

    min_points: int = 5
    eps: float = 0.12
    cost_weight: float = 1.0
    feature_scheme: str = "time_mean"

    def __post_init__(self):
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.cost_weight < 0:
            raise ValueError("cost_weight must be nonnegative")
        if self.feature_scheme not in ("time_mean", "flat"):
            raise ValueError(f"unknown feature scheme {self.feature_scheme!r}")


@dataclasses.dataclass
class ClusterSet:
    """Disjoint clusters of sample indices."""

    clusters: list

    @property
    def count(self):
        return len(self.clusters)


def build_features(batch: RolloutBatch, noise: NoiseSpec,
                   cost_weight: float = 1.0, feature_scheme: str = "time_mean"):
    """Feature rows for all feasible samples plus their sample indices.

    Each row is the noise sequence whitened by the per-dimension standard
    deviation, reduced to its time mean (or flattened for the "flat"
    scheme), concatenated with cost_weight times the min-max normalized
    finite cost.
    """
    finite = np.isfinite(batch.costs)
    if not finite.any():
        raise NoValidSamples("no feasible samples to cluster")
    indices = np.flatnonzero(finite)
    white = batch.noises[indices] / np.sqrt(noise.variance)
    if feature_scheme == "time_mean":
        core = white.mean(axis=1)
    else:
        core = white.reshape(len(indices), -1)
    costs = batch.costs[indices]
    span = costs.max() - costs.min()
    norm_cost = (costs - costs.min()) / span if span > 0 else np.zeros_like(costs)
    features = np.concatenate([core, cost_weight * norm_cost[:, None]], axis=1)
    return features, indices


def dbscan(features: np.ndarray, params: DbscanParams) -> list:
    """Cluster feature rows; returns a list of row-index arrays.

    Falls back to one cluster holding every row when no cluster is found.
    """
    n = features.shape[0]
    if n == 0:
        return []
    within = cdist(features, features, "sqeuclidean") <= params.eps ** 2
    core = within.sum(axis=1) >= params.min_points

    unassigned = -1
    labels = np.full(n, unassigned)
    n_clusters = 0
    for i in range(n):
        if labels[i] != unassigned or not core[i]:
            continue
        cluster = n_clusters
        n_clusters += 1
        labels[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop(0)
            for k in np.flatnonzero(within[j]):
                if labels[k] == unassigned:
                    labels[k] = cluster
                    if core[k]:
                        frontier.append(k)
    if n_clusters == 0:
        return [np.arange(n)]
    return [np.flatnonzero(labels == c) for c in range(n_clusters)]


def cluster_rollouts(batch: RolloutBatch, noise: NoiseSpec,
                     params: DbscanParams) -> ClusterSet:
    """DBSCAN over a rollout batch, mapped back to sample indices."""
    features, indices = build_features(batch, noise, params.cost_weight,
                                       params.feature_scheme)
    groups = dbscan(features, params)
    return ClusterSet([indices[g] for g in groups])


def cluster_controls(batch: RolloutBatch, clusters: ClusterSet,
                     gamma: float) -> list:
    """Per-cluster softmax-weighted averages, each with its own minimum-cost
    baseline."""
    return [weighted_average(batch.inputs, batch.costs, c, gamma)
            for c in clusters.clusters]


def cluster_mppi_step(problem: Problem, base, x_start, cost_model: CostModel,
                      noise: NoiseSpec, n_samples: int, params: DbscanParams):
    """One clustered MPPI iteration.

    Samples, clusters, averages per cluster, re-rolls each averaged
    sequence, and returns the lowest-cost one (ties to the lowest cluster
    index). If every averaged sequence is infeasible, the best single
    feasible sample is returned instead.
    """
    batch = sample_batch(problem, base, x_start, "forward", cost_model,
                         noise, n_samples)
    clusters = cluster_rollouts(batch, noise, params)
    candidates = cluster_controls(batch, clusters, noise.gamma)
    stacked = np.stack(candidates)
    trajs = rollout(problem.model, x_start, stacked, "forward", problem.dt,
                    check=False)
    costs = evaluate_cost_batch(trajs, stacked, cost_model,
                                problem.state_constraint, "forward")
    if np.isfinite(costs).any():
        best = int(np.argmin(costs))
        return candidates[best], batch
    best_sample = int(np.argmin(batch.costs))
    return batch.inputs[best_sample], batch
