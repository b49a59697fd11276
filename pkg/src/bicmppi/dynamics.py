"""Continuous dynamics models and bidirectional RK4 rollout maps.

States and inputs are plain float arrays; a Model describes their layout.

differential drive: state (x, y, heading), input (v, w)
point-mass vehicle: state (px, py, pz, vx, vy, vz), input accel (ax, ay, az)

All derivative functions broadcast over leading axes, so a whole batch of
states advances in one call. The forward step integrates the ODE ahead in
time with the midpoint input (u_t + u_next) / 2; the backward step produces
the predecessor state from minus-signed stage offsets and midpoint input
(u_t + u_prev) / 2. Heading angles are never wrapped during integration,
only when states are compared.
"""

import dataclasses

import numpy as np

GRAVITY = 9.81


class NumericError(Exception):
    """Raised when integration produces non-finite values."""


def _plain_difference(a, b):
    return a - b


@dataclasses.dataclass(frozen=True)
class Model:
    """Dynamics descriptor.

    derivative(state, input) -> state derivative, broadcasting over leading
    axes. position(state) extracts the d position coordinates. difference
    computes a metric-safe state difference (wrapping angles where needed).
    trim_input is the equilibrium input used to seed nominal sequences.
    """

    name: str
    state_dim: int
    input_dim: int
    position_dim: int
    derivative: callable
    position: callable = None
    difference: callable = _plain_difference
    trim_input: np.ndarray = None

    def __post_init__(self):
        if self.position is None:
            d = self.position_dim
            object.__setattr__(self, "position", lambda x: x[..., :d])
        if self.trim_input is None:
            object.__setattr__(
                self, "trim_input", np.zeros(self.input_dim))


def diff_drive_derivative(state, inp):
    """(v cos h, v sin h, w) for state (x, y, h) and input (v, w)."""
    v = inp[..., 0]
    w = inp[..., 1]
    heading = state[..., 2]
    return np.stack([v * np.cos(heading), v * np.sin(heading), w], axis=-1)


def quadrotor_derivative(state, inp):
    """(velocity, accel - g e3) for a point-mass vehicle."""
    out = np.empty_like(state)
    out[..., :3] = state[..., 3:]
    out[..., 3:] = inp
    out[..., 5] -= GRAVITY
    return out


def wrap_angle(a):
    """Wrap radians to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


def _diff_drive_difference(a, b):
    d = a - b
    d[..., 2] = wrap_angle(d[..., 2])
    return d


DIFF_DRIVE = Model(
    name="diffdrive",
    state_dim=3,
    input_dim=2,
    position_dim=2,
    derivative=diff_drive_derivative,
    difference=_diff_drive_difference,
)

QUADROTOR = Model(
    name="quadrotor",
    state_dim=6,
    input_dim=3,
    position_dim=3,
    derivative=quadrotor_derivative,
    trim_input=np.array([0.0, 0.0, GRAVITY]),
)

MODELS = {m.name: m for m in (DIFF_DRIVE, QUADROTOR)}


def rk4_forward(model: Model, x, u, u_next, dt: float):
    """One forward RK4 step from x using the stage inputs of the scheme:
    u at the start point, (u + u_next)/2 at the two midpoints, u_next at the
    far point."""
    f = model.derivative
    u_mid = 0.5 * (u + u_next)
    k1 = dt * f(x, u)
    k2 = dt * f(x + 0.5 * k1, u_mid)
    k3 = dt * f(x + 0.5 * k2, u_mid)
    k4 = dt * f(x + k3, u_next)
    return x + (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def rk4_backward(model: Model, x, u, u_prev, dt: float):
    """One backward RK4 step: the predecessor of x under the time-reversed
    scheme with minus-signed stage offsets and midpoint input (u + u_prev)/2."""
    f = model.derivative
    u_mid = 0.5 * (u + u_prev)
    k1 = dt * f(x, u)
    k2 = dt * f(x - 0.5 * k1, u_mid)
    k3 = dt * f(x - 0.5 * k2, u_mid)
    k4 = dt * f(x - k3, u_prev)
    return x - (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0


def rollout(model: Model, x_start, controls, direction: str, dt: float,
            check: bool = True):
    """Integrate a control sequence over its horizon.

    controls has shape (T, m) or batched (N, T, m); x_start has shape (n,)
    or (N, n). Returns (T+1, n) or (N, T+1, n) states. Forward rollouts
    anchor index 0 at x_start; backward rollouts anchor index T and fill
    T -> 0. At the horizon end the final input is duplicated for the
    midpoint stage. With check=False non-finite states are returned to the
    caller instead of raising, so batch users can flag samples individually.
    """
    U = np.asarray(controls, dtype=float)
    batched = U.ndim == 3
    if not batched:
        U = U[None]
    N, T, m = U.shape
    if T < 1:
        raise ValueError("control sequence must have horizon >= 1")
    x0 = np.asarray(x_start, dtype=float)
    x0 = np.broadcast_to(x0, (N, model.state_dim)).copy()

    X = np.empty((N, T + 1, model.state_dim))
    if direction == "forward":
        X[:, 0] = x0
        for t in range(T):
            u_next = U[:, min(t + 1, T - 1)]
            X[:, t + 1] = rk4_forward(model, X[:, t], U[:, t], u_next, dt)
    elif direction == "backward":
        X[:, T] = x0
        for t in range(T, 0, -1):
            u_cur = U[:, min(t, T - 1)]
            X[:, t - 1] = rk4_backward(model, X[:, t], u_cur, U[:, t - 1], dt)
    else:
        raise ValueError(f"unknown direction {direction!r}")

    if check and not np.isfinite(X).all():
        raise NumericError("rollout produced non-finite states")
    return X if batched else X[0]
