"""Distributed feedback-linearizing tracking control and its stability report.

The control law cancels the known manipulator terms and the learned
disturbance estimate, leaving (with a perfect estimate) the linear consensus
loop qdd_i = c_i nu_i driven by the synchronization error nu_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import ELParams, coriolis, gravity, inertia
from .topology import TopologyEnsemble


@dataclass(frozen=True)
class ControlGains:
    """Consensus gain alpha, per-agent feedback gains c_i, and the
    aggregation width sigma_g passed through to the learning layer."""

    alpha: float = 2.0
    c: np.ndarray = field(default_factory=lambda: np.array([2.0]))
    sigma_g: float = 0.15

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        object.__setattr__(self, "c", c)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if np.any(c <= 0):
            raise ValueError("all feedback gains c_i must be positive")


def sync_error(i, q_all, qd_all, q0, qd0, adjacency_row, leader_link, alpha):
    """Synchronization error of agent i.

    Returns (nu, dq, dqd) with dq = sum_{j>=1} a_ij (q_j - q_i) plus the
    leader term a_i0 (q0 - q_i), dqd its velocity analogue, and
    nu = alpha dq + dqd. Only neighbor and leader-link states enter.
    """
    q_all = np.asarray(q_all, dtype=np.float64)
    qd_all = np.asarray(qd_all, dtype=np.float64)
    a = np.asarray(adjacency_row, dtype=np.float64)
    dq = a @ (q_all - q_all[i]) + leader_link * (np.asarray(q0) - q_all[i])
    dqd = a @ (qd_all - qd_all[i]) + leader_link * (np.asarray(qd0) - qd_all[i])
    return alpha * dq + dqd, dq, dqd


def sync_error_all(q, qd, q0, qd0, adjacency, leader_links, alpha):
    """Stacked synchronization errors for all agents at once.

    Equivalent to per-agent :func:`sync_error`; uses the identity
    dq = -L_tilde q + L0 q0 with the leader-augmented follower Laplacian.
    """
    q = np.asarray(q, dtype=np.float64)
    qd = np.asarray(qd, dtype=np.float64)
    A = np.asarray(adjacency, dtype=np.float64)
    L0 = np.asarray(leader_links, dtype=np.float64)
    deg = (A.sum(axis=1) + L0)[:, None]
    dq = A @ q - deg * q + L0[:, None] * np.asarray(q0)
    dqd = A @ qd - deg * qd + L0[:, None] * np.asarray(qd0)
    return alpha * dq + dqd, dq, dqd


def control_input(q, qdot, nu, c_i, params: ELParams, f_hat) -> np.ndarray:
    """Feedback-linearizing input u = c_i H(q) nu + C(q, qd) qd + g(q) - f_hat.

    Vectorized over a leading agent batch when c_i is an array. With a
    perfect estimate f_hat = f the closed loop reduces to qdd = c_i nu.
    """
    q = np.asarray(q, dtype=np.float64)
    qdot = np.asarray(qdot, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    H = inertia(q, params)
    C = coriolis(q, qdot, params)
    c_nu = np.asarray(c_i)[..., None] * nu if np.ndim(c_i) else c_i * nu
    u = np.einsum("...ij,...j->...i", H, c_nu)
    u += np.einsum("...ij,...j->...i", C, qdot)
    u += gravity(q, params)
    return u - np.asarray(f_hat, dtype=np.float64)


@dataclass
class BoundReport:
    """Checkable stability conditions and the resulting tracking-error bound.

    ``error_bound`` is the spectral bound on ||e_bar||;
    ``ultimate_bound`` is the intermediate Lyapunov ultimate bound
    ||Phi_2||^2 / (2 (sigma_min(Phi_1) + 1/2)).
    """

    phi1: np.ndarray
    is_pd: bool
    phi2_norm: float
    error_bound: float
    min_sigma_min_laplacian: float
    max_sigma_max_laplacian: float
    min_sigma_max_inertia: float
    eta_tilde: float
    leader_velocity_bound: float
    ultimate_bound: float

    def to_dict(self) -> dict:
        return {
            "phi1": [[float(x) for x in row] for row in self.phi1],
            "is_pd": bool(self.is_pd),
            "phi2_norm": float(self.phi2_norm),
            "error_bound": float(self.error_bound),
            "ultimate_bound": float(self.ultimate_bound),
            "min_sigma_min_laplacian": float(self.min_sigma_min_laplacian),
            "max_sigma_max_laplacian": float(self.max_sigma_max_laplacian),
            "min_sigma_max_inertia": float(self.min_sigma_max_inertia),
            "eta_tilde": float(self.eta_tilde),
            "leader_velocity_bound": float(self.leader_velocity_bound),
        }


def is_pd_2x2(M: np.ndarray) -> bool:
    """Positive definiteness of a symmetric 2x2 matrix by leading principal
    minors."""
    return M[0, 0] > 0 and (M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]) > 0


def _singular_values_gram(M: np.ndarray) -> np.ndarray:
    """Singular values of a (possibly nonsymmetric) matrix via eigenvalues of
    M^T M; cheap and cache-friendly for small n."""
    eigs = np.linalg.eigvalsh(M.T @ M)
    return np.sqrt(np.clip(eigs, 0.0, None))


def min_sigma_max_inertia(params: ELParams, grid_size: int = 50) -> float:
    """min over a workspace grid of the largest singular value of H(q).

    H depends on q only through cos(q2), so the grid reduces to q2 in
    [-pi, pi]; grid_size points are used."""
    q2 = np.linspace(-np.pi, np.pi, grid_size)
    q = np.stack([np.zeros_like(q2), q2], axis=-1)
    H = inertia(q, params)
    tr = H[:, 0, 0] + H[:, 1, 1]
    det = H[:, 0, 0] * H[:, 1, 1] - H[:, 0, 1] * H[:, 1, 0]
    smax = tr / 2 + np.sqrt(np.maximum(tr**2 / 4 - det, 0.0))
    return float(smax.min())


def theorem1_check(ensemble: TopologyEnsemble, gains: ControlGains,
                   params: ELParams, eta_tilde: float,
                   leader_velocity_bound: float,
                   workspace_grid: int = 50) -> BoundReport:
    """Stability-condition report: Phi_1 positive definiteness and the
    spectral tracking-error bound. Never raises on a failed condition;
    the report carries ``is_pd`` instead.
    """
    n = ensemble.n
    alpha = gains.alpha
    c = np.broadcast_to(gains.c, (n,))
    # Kronecker with I_m only duplicates singular values, so the n x n
    # matrix diag(c) L - alpha I carries the same extremes.
    sig_min_cL = min(
        float(_singular_values_gram(np.diag(c) @ L - alpha * np.eye(n))[0])
        for L in ensemble.laplacians
    )
    phi1 = np.array([
        [sig_min_cL, -(1 + alpha**2) / 2],
        [-(1 + alpha**2) / 2, alpha],
    ])
    pd = is_pd_2x2(phi1)
    sig_min_phi1 = float(np.linalg.eigvalsh(phi1)[0])

    min_sig_L = float(ensemble.sigma_min.min())
    max_sig_L = float(ensemble.sigma_max.max())
    min_smax_H = min_sigma_max_inertia(params, workspace_grid)
    phi2 = np.array([
        max_sig_L * (eta_tilde / min_smax_H + np.sqrt(n) * leader_velocity_bound),
        0.0,
    ])
    phi2_norm = float(np.linalg.norm(phi2))
    denom_rate = sig_min_phi1 + 0.5
    if pd and denom_rate > 0:
        bound = (1 + alpha) * phi2_norm / (2 * min_sig_L * np.sqrt(denom_rate))
        ultimate = phi2_norm**2 / (2 * denom_rate)
    else:
        bound = np.inf
        ultimate = np.inf
    return BoundReport(
        phi1=phi1,
        is_pd=pd,
        phi2_norm=phi2_norm,
        error_bound=float(bound),
        ultimate_bound=float(ultimate),
        min_sigma_min_laplacian=min_sig_L,
        max_sigma_max_laplacian=max_sig_L,
        min_sigma_max_inertia=min_smax_H,
        eta_tilde=float(eta_tilde),
        leader_velocity_bound=float(leader_velocity_bound),
    )
