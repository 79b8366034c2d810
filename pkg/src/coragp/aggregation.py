"""Aggregation of neighbor GP predictions.

The correlation-aware modes (CoraTop, CoraAvg) weight each in-neighborhood
prediction by how strongly the query correlates with that neighbor's
training data, read off the prior kernel vector k(P_l, p) that is already
computed for the posterior means, so no posterior variance is needed. The
CGP baseline uses classical inverse-posterior-variance weights and
therefore pays the O(M^2) variance cost per neighbor. Weights always form
a convex combination supported on the inclusive neighborhood (self-loop
included), which is what makes the single-agent case collapse to the
individual prediction for every mode.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class DegenerateWeightsWarning(UserWarning):
    """Query is uncorrelated with every neighbor's data; weights fall back
    to uniform over the neighborhood."""


class AggregationMode(Enum):
    WITHOUT_GP = "WithoutGP"
    INDIVIDUAL = "Individual"
    CGP = "CGP"
    CORA_TOP = "CoraTop"
    CORA_AVG = "CoraAvg"
    PERFECT = "Perfect"  # oracle f-hat = f, for linearization checks

    @classmethod
    def parse(cls, name: str) -> "AggregationMode":
        for mode in cls:
            if mode.value.lower() == str(name).lower():
                return mode
        raise ValueError(f"unknown aggregation mode {name!r}; "
                         f"expected one of {[m.value for m in cls]}")


@dataclass(frozen=True)
class AggregationSettings:
    """Mode plus the Gaussian weighting width sigma_g and the floor epsilon
    used for degenerate normalizers / clamped variances."""

    mode: AggregationMode = AggregationMode.CORA_AVG
    sigma_g: float = 0.15
    epsilon: float = 1e-12

    def __post_init__(self):
        if self.sigma_g <= 0:
            raise ValueError("sigma_g must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class CorrelationSummary:
    """Per-neighbor correlation norms ||s_il||, their normalizer s_tilde and
    the peak normalized correlation w_bar (the Gaussian weighting center)."""

    neighbor_ids: np.ndarray
    norms: np.ndarray
    normalizer: float
    peak: float


@dataclass(frozen=True)
class WeightVector:
    """Convex aggregation weights over all n agents; zero off-neighborhood."""

    h: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        h = np.asarray(self.h, dtype=np.float64)
        object.__setattr__(self, "h", h)


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the uniform prediction error bound.

    phi = 2 m log(r_omega sqrt(m) / (2 tau)) - 2 log(delta / n), precomputed
    once per experiment. The Lipschitz-constant side condition is reported,
    not enforced (the constants are configuration inputs).
    """

    delta: float = 0.05
    tau: float = 0.01
    domain_diameter: float = 2.0 * np.sqrt(2.0)
    state_dim: int = 2
    num_agents: int = 4
    phi: float = field(init=False)

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.tau <= 0 or self.domain_diameter <= 0:
            raise ValueError("tau and domain_diameter must be positive")
        m, n = self.state_dim, self.num_agents
        phi = 2 * m * np.log(self.domain_diameter * np.sqrt(m) / (2 * self.tau)) \
            - 2 * np.log(self.delta / n)
        if phi <= 0:
            raise ValueError(f"phi = {phi} must be positive; decrease tau")
        object.__setattr__(self, "phi", float(phi))


def correlation_top(kvec: np.ndarray, m_min: int) -> np.ndarray:
    """The m_min largest entries of a kernel vector (partial selection, ties
    broken toward lower original index)."""
    kvec = np.asarray(kvec, dtype=np.float64)
    if not 1 <= m_min <= kvec.shape[0]:
        raise ValueError(f"m_min={m_min} out of range for a length-{kvec.shape[0]} vector")
    if m_min == kvec.shape[0]:
        return kvec.copy()
    # Stable sort on -kvec keeps the lower original index on ties.
    idx = np.argsort(-kvec, kind="stable")[:m_min]
    idx.sort()
    return kvec[idx]


def correlation_avg(kvec: np.ndarray) -> float:
    """Mean of the kernel-vector entries."""
    kvec = np.asarray(kvec, dtype=np.float64)
    if kvec.shape[0] < 1:
        raise ValueError("kernel vector must be nonempty")
    return float(kvec.mean())


def _correlation_norms(agent: int, kvecs: dict[int, np.ndarray],
                       neighbor_ids: np.ndarray, mode: AggregationMode) -> np.ndarray:
    if mode is AggregationMode.CORA_TOP:
        m_min = min(kvecs[l].shape[0] for l in neighbor_ids)
        return np.array([
            np.linalg.norm(correlation_top(kvecs[l], m_min)) for l in neighbor_ids
        ])
    if mode is AggregationMode.CORA_AVG:
        return np.array([abs(correlation_avg(kvecs[l])) for l in neighbor_ids])
    raise ValueError(f"correlation norms undefined for mode {mode}")


def correlation_summary(agent: int, kvecs: dict[int, np.ndarray],
                        adjacency_row: np.ndarray,
                        mode: AggregationMode) -> CorrelationSummary:
    """Correlation norms, normalizer and peak for one agent's neighborhood."""
    neighbor_ids = np.flatnonzero(np.asarray(adjacency_row) > 0)
    if neighbor_ids.size == 0:
        raise ValueError("inclusive neighborhood is empty (self-loop expected)")
    norms = _correlation_norms(agent, kvecs, neighbor_ids, mode)
    normalizer = float(norms.sum())
    peak = float(norms.max() / normalizer) if normalizer > 0 else 0.0
    return CorrelationSummary(neighbor_ids=neighbor_ids, norms=norms,
                              normalizer=normalizer, peak=peak)


def cora_weights(agent: int, kvecs: dict[int, np.ndarray], adjacency_row: np.ndarray,
                 settings: AggregationSettings) -> WeightVector:
    """Correlation-aware aggregation weights for one agent.

    ``kvecs`` maps each inclusive neighbor l to the kernel vector k(P_l, p)
    already computed for the neighbor means. Falls back to uniform weights
    over the neighborhood when the query is uncorrelated with all data.
    """
    adjacency_row = np.asarray(adjacency_row, dtype=np.float64)
    summary = correlation_summary(agent, kvecs, adjacency_row, settings.mode)
    ids = summary.neighbor_ids
    h = np.zeros(adjacency_row.shape[0])
    if summary.normalizer <= 0.0:
        warnings.warn(
            f"agent {agent}: query uncorrelated with all neighbor data; "
            "using uniform aggregation weights",
            DegenerateWeightsWarning,
            stacklevel=2,
        )
        h[ids] = 1.0 / ids.size
        return WeightVector(h=h, degenerate=True)
    normalized = summary.norms / summary.normalizer
    w = _INV_SQRT_2PI / settings.sigma_g * np.exp(
        -((normalized - summary.peak) ** 2) / (2.0 * settings.sigma_g**2)
    )
    h[ids] = w / w.sum()
    return WeightVector(h=h)


def cgp_weights(agent: int, neighbor_variances: dict[int, float],
                adjacency_row: np.ndarray,
                settings: AggregationSettings) -> WeightVector:
    """Inverse-posterior-variance weights (cooperative-GP baseline)."""
    adjacency_row = np.asarray(adjacency_row, dtype=np.float64)
    ids = np.flatnonzero(adjacency_row > 0)
    if ids.size == 0:
        raise ValueError("inclusive neighborhood is empty (self-loop expected)")
    variances = np.array([max(neighbor_variances[l], settings.epsilon) for l in ids])
    w = 1.0 / variances
    h = np.zeros(adjacency_row.shape[0])
    h[ids] = w / w.sum()
    return WeightVector(h=h)


def aggregate_mean(weights: WeightVector, neighbor_means: np.ndarray) -> np.ndarray:
    """Convex combination of neighbor means; rows of ``neighbor_means`` are
    the per-agent multi-output means, shape (n, m). Only supported entries
    are touched, so a one-hot weight returns that neighbor's mean exactly."""
    ids = np.flatnonzero(weights.h)
    return weights.h[ids] @ np.asarray(neighbor_means)[ids]


def error_bound(weights: WeightVector, neighbor_stds: np.ndarray,
                bound: BoundParams) -> tuple[np.ndarray, float]:
    """Per-dimension high-probability error bound and its Euclidean norm.

    eta_j = 2 sqrt(phi) h^T sigma^j, with ``neighbor_stds`` of shape (n, m)
    holding each agent's posterior std per output dimension.
    """
    stds = np.asarray(neighbor_stds, dtype=np.float64)
    eta = 2.0 * np.sqrt(bound.phi) * (weights.h @ stds)
    return eta, float(np.linalg.norm(eta))
