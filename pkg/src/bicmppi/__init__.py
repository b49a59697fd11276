"""Sampling-based trajectory optimization over occupancy-grid benchmarks.

Implements plain MPPI, rollout-clustered MPPI, and a bidirectional
clustered variant that connects forward and backward rollout branches and
refines the connection with a guided sampling pass. Ships with a ground
robot and a point-mass flyer model, a procedural map generator, and a
benchmark CLI.
"""

from .bic import (BicConfig, BicMppiPlanner, BranchSet, ClusterMppiPlanner,
                  DriveRecord, GuideReference, GuideWeights, MppiPlanner,
                  PlanningFailure, StepDiagnostics, associate,
                  backward_cluster, bic_mppi_step, closed_loop_drive,
                  forward_cluster, guide_mppi)
from .clustering import (ClusterSet, DbscanParams, build_features,
                         cluster_controls, cluster_mppi_step,
                         cluster_rollouts, dbscan)
from .constraints import (BoxConstraint, ConeBallConstraint, StateConstraint,
                          project_input)
from .dynamics import (DIFF_DRIVE, MODELS, QUADROTOR, Model, NumericError,
                       rk4_backward, rk4_forward, rollout, wrap_angle)
from .environment import (MapError, MapSpec, OccupancyGrid, generate_map,
                          inflate, is_colliding, load_map, save_map)
from .mppi import (CostModel, NoiseSpec, NoValidSamples, Problem,
                   RolloutBatch, derive_seed, evaluate_cost,
                   evaluate_cost_batch, sample_batch, vanilla_mppi_step,
                   warm_start_shift, weighted_average)

__version__ = "0.1.0"
