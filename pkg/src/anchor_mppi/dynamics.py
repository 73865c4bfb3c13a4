"""Quadrotor rigid-body model with collective-thrust / body-rate inputs.

States are packed into float arrays of shape ``(..., 10)``::

    [px, py, pz, qw, qx, qy, qz, vx, vy, vz]

and controls into ``(..., 4)`` arrays ``[F_t, wx, wy, wz]``. Quaternions are
scalar-first with the Hamilton product; ``R(q)`` maps body to world.
All functions broadcast over leading dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from anchor_mppi.config import DynamicsParams

P = slice(0, 3)
Q = slice(3, 7)
V = slice(7, 10)
STATE_DIM = 10
CONTROL_DIM = 4


@dataclass(frozen=True)
class State:
    """Position (m, world), unit quaternion (scalar first), velocity (m/s, world)."""

    p: np.ndarray
    q: np.ndarray
    v: np.ndarray

    @classmethod
    def at(cls, p, v=(0.0, 0.0, 0.0), q=(1.0, 0.0, 0.0, 0.0)) -> State:
        return cls(np.asarray(p, float), np.asarray(q, float), np.asarray(v, float))

    @classmethod
    def from_array(cls, x: np.ndarray) -> State:
        x = np.asarray(x, float)
        return cls(x[P].copy(), x[Q].copy(), x[V].copy())

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v]).astype(float)


@dataclass(frozen=True)
class ControlInput:
    """Collective thrust (N) and body rates (rad/s)."""

    thrust: float
    omega: np.ndarray

    @classmethod
    def from_array(cls, u: np.ndarray) -> ControlInput:
        u = np.asarray(u, float)
        return cls(float(u[0]), u[1:4].copy())

    @property
    def array(self) -> np.ndarray:
        return np.concatenate([[self.thrust], np.asarray(self.omega, float)])


def _as_state(x) -> np.ndarray:
    return x.array if isinstance(x, State) else np.asarray(x, float)


def _as_control(u) -> np.ndarray:
    return u.array if isinstance(u, ControlInput) else np.asarray(u, float)


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product ``a ⊙ b`` of scalar-first quaternions."""
    aw, ax, ay, az = np.moveaxis(np.asarray(a, float), -1, 0)
    bw, bx, by, bz = np.moveaxis(np.asarray(b, float), -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.asarray(q, float) * np.array([1.0, -1.0, -1.0, -1.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (body to world) of a unit quaternion; shape ``(..., 3, 3)``."""
    w, x, y, z = np.moveaxis(np.asarray(q, float), -1, 0)
    rows = [
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)])


def thrust_direction(q: np.ndarray) -> np.ndarray:
    """Body z axis expressed in world coordinates, ``R(q) @ [0, 0, 1]``."""
    w, x, y, z = np.moveaxis(np.asarray(q, float), -1, 0)
    return np.stack([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)], axis=-1)


def acceleration(q: np.ndarray, thrust, params: DynamicsParams) -> np.ndarray:
    """Linear acceleration produced by ``thrust`` at attitude ``q``."""
    thrust = np.asarray(thrust, float)[..., None]
    return thrust_direction(q) * thrust / params.mass + np.asarray(params.gravity)


def state_derivative(x, u, params: DynamicsParams) -> np.ndarray:
    """Continuous-time model ``(p', q', v')``.

    ``p' = v``, ``q' = q ⊙ [0, ω] / 2`` and ``v' = R(q) [0, 0, F_t] / m + g``.

    Raises:
        ValueError: if the state or control holds non-finite values.
    """
    x = _as_state(x)
    u = _as_control(u)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("invalid state")
    return _derivative(x, u, params)


def _derivative(x: np.ndarray, u: np.ndarray, params: DynamicsParams) -> np.ndarray:
    q = x[..., Q]
    omega_q = np.concatenate([np.zeros_like(u[..., :1]), u[..., 1:4]], axis=-1)
    out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (STATE_DIM,)))
    out[..., P] = x[..., V]
    out[..., Q] = 0.5 * quat_multiply(q, omega_q)
    out[..., V] = acceleration(q, u[..., 0], params)
    return out


def rk4_step(x, u, params: DynamicsParams, dt: float | None = None, renormalize: bool = True) -> np.ndarray:
    """One classic RK4 step with the control held constant over ``dt``.

    The quaternion is renormalised afterwards unless ``renormalize`` is off.
    Returns the packed next state.
    """
    x = _as_state(x)
    u = _as_control(u)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("invalid state")
    h = params.dt if dt is None else dt
    k1 = _derivative(x, u, params)
    k2 = _derivative(x + 0.5 * h * k1, u, params)
    k3 = _derivative(x + 0.5 * h * k2, u, params)
    k4 = _derivative(x + h * k3, u, params)
    nxt = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if renormalize:
        nxt[..., Q] = quat_normalize(nxt[..., Q])
    return nxt


def clamp_control(u, params: DynamicsParams) -> np.ndarray:
    """Saturate thrust and body rates to the actuator limits."""
    return np.clip(_as_control(u), params.control_lower, params.control_upper)


def propagate(x0, controls: np.ndarray, params: DynamicsParams) -> np.ndarray:
    """Chain :func:`rk4_step` over a control sequence; returns ``(N + 1, 10)``."""
    controls = np.asarray(controls, float)
    states = np.empty((len(controls) + 1, STATE_DIM))
    states[0] = _as_state(x0)
    for j, u in enumerate(controls):
        states[j + 1] = rk4_step(states[j], u, params)
    return states
