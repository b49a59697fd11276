"""Input-constraint sets with Euclidean projection, and the state indicator.

Two constraint families cover the benchmarks: a per-component box (velocity
limits of the ground robot) and the intersection of a thrust-direction cone
with an acceleration-norm ball (the point-mass vehicle). Both are closed and
convex, so the projection exists and is unique. The cone-ball projection is
computed in closed form: project onto the second-order cone, then clamp the
radius; because the cone is scale invariant and the ball is centered, the
composition equals the exact projection onto the intersection (verified
against a numeric oracle in the tests).

The state indicator marks a state infeasible when its position falls in the
obstacle region or an optional per-dimension state box is violated. Rather
than an infinite cost value, callers receive a boolean so downstream sample
weights can be zeroed exactly.
"""

import dataclasses

import numpy as np

from .environment import OccupancyGrid, collides_batch, is_colliding


@dataclasses.dataclass(frozen=True)
class BoxConstraint:
    """Componentwise bounds lower <= u <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("box bounds must satisfy lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.shape[-1]

    def project(self, u):
        return np.clip(u, self.lower, self.upper)

    def contains(self, u, tol=0.0):
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))


@dataclasses.dataclass(frozen=True)
class ConeBallConstraint:
    """{a in R^3 : ||a|| <= a_max, ||a|| cos(tilt_max) <= a_z}.

    Equivalently the ice-cream cone ||a_xy|| <= a_z tan(tilt_max) intersected
    with the centered ball of radius a_max.
    """

    a_max: float
    tilt_max: float

    def __post_init__(self):
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        if not 0 < self.tilt_max < np.pi / 2:
            raise ValueError("tilt_max must be in (0, pi/2)")

    @property
    def dim(self):
        return 3

    def project(self, u):
        u = np.asarray(u, dtype=float)
        flat = u.reshape(-1, 3)
        out = _project_soc(flat, np.tan(self.tilt_max))
        norms = np.linalg.norm(out, axis=-1, keepdims=True)
        over = norms > self.a_max
        scale = np.where(over, self.a_max / np.where(norms > 0, norms, 1.0), 1.0)
        return (out * scale).reshape(u.shape)

    def contains(self, u, tol=1e-9):
        u = np.asarray(u, dtype=float)
        norm = np.linalg.norm(u, axis=-1)
        in_ball = norm <= self.a_max + tol
        in_cone = norm * np.cos(self.tilt_max) <= u[..., 2] + tol
        return bool(np.all(in_ball & in_cone))


def _project_soc(points, alpha):
    """Projection of rows (x, y, z) onto {||(x,y)|| <= alpha*z}."""
    xy = points[:, :2]
    z = points[:, 2]
    r = np.linalg.norm(xy, axis=-1)
    out = points.copy()

    inside = r <= alpha * z
    to_origin = (alpha * r <= -z) & ~inside
    boundary = ~inside & ~to_origin

    out[to_origin] = 0.0
    if np.any(boundary):
        rb = r[boundary]
        zb = z[boundary]
        t = (alpha * rb + zb) / (1.0 + alpha ** 2)
        # rb > 0 on the boundary branch (rb = 0 with z < 0 projects to origin)
        scale = alpha * t / rb
        out[boundary, :2] = xy[boundary] * scale[:, None]
        out[boundary, 2] = t
    return out


def project_input(constraint, u):
    """Euclidean projection of u (single input or any leading batch shape)
    onto the constraint set. Idempotent; feasible inputs pass unchanged."""
    return constraint.project(np.asarray(u, dtype=float))


@dataclasses.dataclass(frozen=True)
class StateConstraint:
    """Combined state-feasibility test: grid collision plus an optional
    per-dimension state box."""

    grid: OccupancyGrid
    bounds_lower: np.ndarray | None = None
    bounds_upper: np.ndarray | None = None

    def violated(self, state, position) -> bool:
        """Indicator for a single state: True means infeasible (the cost
        contribution is infinite)."""
        if is_colliding(self.grid, position):
            return True
        if self.bounds_lower is not None and np.any(state < self.bounds_lower):
            return True
        if self.bounds_upper is not None and np.any(state > self.bounds_upper):
            return True
        return False

    def violated_batch(self, states, positions) -> np.ndarray:
        """Vectorized indicator over (..., n) states / (..., d) positions."""
        bad = collides_batch(self.grid, positions)
        if self.bounds_lower is not None:
            bad |= np.any(states < self.bounds_lower, axis=-1)
        if self.bounds_upper is not None:
            bad |= np.any(states > self.bounds_upper, axis=-1)
        return bad
