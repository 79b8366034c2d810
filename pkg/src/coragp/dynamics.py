"""Planar 2-link manipulator dynamics and the leader trajectory.

Standard point-mass model (masses concentrated at the link ends), gravity
acting in the plane of motion:

    H(q) qdd + C(q, qd) qd + g(q) + f(q) = u

with
    H11 = (m1+m2) l1^2 + m2 l2^2 + 2 m2 l1 l2 cos(q2)
    H12 = H21 = m2 l2^2 + m2 l1 l2 cos(q2)
    H22 = m2 l2^2
    C   = m2 l1 l2 sin(q2) * [[-qd2, -(qd1+qd2)], [qd1, 0]]
    g1  = (m1+m2) g l1 cos(q1) + m2 g l2 cos(q1+q2)
    g2  = m2 g l2 cos(q1+q2)

which satisfies the usual structural properties (H symmetric positive
definite, Hdot - 2C skew-symmetric). All functions are vectorized over a
leading batch of agents: q may be (2,) or (n, 2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteStateError(RuntimeError):
    """Raised when the simulated state stops being finite."""


@dataclass(frozen=True)
class ELParams:
    """Manipulator constants: point masses (kg), link lengths (m), gravity (m/s^2).

    ``gravity=0`` gives the gravity-free ablation."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 1.0
    l2: float = 1.0
    gravity: float = 9.81

    def __post_init__(self):
        if min(self.m1, self.m2, self.l1, self.l2) <= 0:
            raise ValueError("masses and lengths must be positive")
        if self.gravity < 0:
            raise ValueError("gravity must be nonnegative")


@dataclass
class AgentState:
    """Joint positions and velocities of one agent."""

    q: np.ndarray
    qdot: np.ndarray


def inertia(q, params: ELParams) -> np.ndarray:
    """Inertia matrix H(q); (..., 2, 2) for batched q."""
    q = np.asarray(q, dtype=np.float64)
    c2 = np.cos(q[..., 1])
    m1, m2, l1, l2 = params.m1, params.m2, params.l1, params.l2
    H = np.empty(q.shape[:-1] + (2, 2))
    H[..., 0, 0] = (m1 + m2) * l1**2 + m2 * l2**2 + 2 * m2 * l1 * l2 * c2
    H[..., 0, 1] = m2 * l2**2 + m2 * l1 * l2 * c2
    H[..., 1, 0] = H[..., 0, 1]
    H[..., 1, 1] = m2 * l2**2
    return H


def coriolis(q, qdot, params: ELParams) -> np.ndarray:
    """Coriolis/centrifugal matrix C(q, qd); (..., 2, 2) for batched inputs."""
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    h = params.m2 * params.l1 * params.l2 * np.sin(q[..., 1])
    C = np.empty(q.shape[:-1] + (2, 2))
    C[..., 0, 0] = -h * qdot[..., 1]
    C[..., 0, 1] = -h * (qdot[..., 0] + qdot[..., 1])
    C[..., 1, 0] = h * qdot[..., 0]
    C[..., 1, 1] = 0.0
    return C


def gravity(q, params: ELParams) -> np.ndarray:
    """Gravity torque vector g(q); (..., 2) for batched q."""
    q = np.asarray(q, dtype=np.float64)
    m1, m2, l1, l2, gr = params.m1, params.m2, params.l1, params.l2, params.gravity
    c1 = np.cos(q[..., 0])
    c12 = np.cos(q[..., 0] + q[..., 1])
    g = np.empty_like(q)
    g[..., 0] = (m1 + m2) * gr * l1 * c1 + m2 * gr * l2 * c12
    g[..., 1] = m2 * gr * l2 * c12
    return g


def unknown_f(q) -> np.ndarray:
    """Ground-truth disturbance; the learner only ever sees noisy samples of it.

    f(q) = [q2 sin(4 q2) + cos(q1),  q2 sin(0.2 q1^2) + cos(q1)]
    """
    q = np.asarray(q, dtype=np.float64)
    q1, q2 = q[..., 0], q[..., 1]
    f = np.empty_like(q)
    f[..., 0] = q2 * np.sin(4.0 * q2) + np.cos(q1)
    f[..., 1] = q2 * np.sin(0.2 * q1**2) + np.cos(q1)
    return f


def forward_dynamics(q, qdot, u, params: ELParams, f=None) -> np.ndarray:
    """Joint accelerations qdd = H^-1 (u - C qd - g - f), solved (2x2 closed
    form), vectorized over a leading agent batch."""
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    rhs = np.asarray(u, dtype=np.float64) - gravity(q, params)
    rhs = rhs - np.einsum("...ij,...j->...i", coriolis(q, qdot, params), qdot)
    if f is not None:
        rhs = rhs - f
    H = inertia(q, params)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot)) and np.all(np.isfinite(rhs))):
        raise NonFiniteStateError("non-finite state or force in forward dynamics")
    det = H[..., 0, 0] * H[..., 1, 1] - H[..., 0, 1] * H[..., 1, 0]
    qdd = np.empty_like(rhs)
    qdd[..., 0] = (H[..., 1, 1] * rhs[..., 0] - H[..., 0, 1] * rhs[..., 1]) / det
    qdd[..., 1] = (H[..., 0, 0] * rhs[..., 1] - H[..., 1, 0] * rhs[..., 0]) / det
    return qdd


@dataclass(frozen=True)
class LeaderTrajectory:
    """Circular reference q0(t) = (a cos(w t), -a sin(w t)) with analytic
    derivatives. The velocity norm is constant: a*w."""

    amplitude: float = 0.8
    angular_rate: float = 0.02 * np.pi

    def __call__(self, t):
        a, w = self.amplitude, self.angular_rate
        t = np.asarray(t, dtype=np.float64)
        q0 = np.stack([a * np.cos(w * t), -a * np.sin(w * t)], axis=-1)
        qd0 = np.stack([-a * w * np.sin(w * t), -a * w * np.cos(w * t)], axis=-1)
        qdd0 = np.stack([-a * w**2 * np.cos(w * t), a * w**2 * np.sin(w * t)], axis=-1)
        return q0, qd0, qdd0

    @property
    def velocity_bound(self) -> float:
        return self.amplitude * self.angular_rate


def leader_state(t, trajectory: LeaderTrajectory | None = None):
    """(q0, qd0, qdd0) of the default leader circle at time t."""
    if trajectory is None:
        trajectory = LeaderTrajectory()
    return trajectory(t)
