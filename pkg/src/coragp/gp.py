"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Each agent owns one multi-output GP: independent outputs share the same
hyperparameters, so a single Cholesky factorization of the regularized Gram
matrix serves every output dimension. Note the lengthscale convention:
``inv_lengthscales[j]`` multiplies the squared coordinate difference, i.e.
large values mean short correlation lengths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import backend


class GramFactorizationError(RuntimeError):
    """Raised when K + sigma_o^2 I is not numerically SPD (e.g. duplicate
    inputs with zero observation noise)."""


@dataclass(frozen=True)
class KernelParams:
    """ARD-SE hyperparameters: signal std, per-dimension inverse lengthscales
    and observation-noise std."""

    signal_std: float = 1.0
    inv_lengthscales: np.ndarray = field(default_factory=lambda: np.ones(1))
    noise_std: float = 0.1

    def __post_init__(self):
        ls = np.asarray(self.inv_lengthscales, dtype=np.float64)
        object.__setattr__(self, "inv_lengthscales", ls)
        if self.signal_std <= 0:
            raise ValueError(f"signal_std must be positive, got {self.signal_std}")
        if np.any(ls <= 0):
            raise ValueError(f"inverse lengthscales must be positive, got {ls}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")

    @property
    def input_dim(self) -> int:
        return self.inv_lengthscales.shape[0]


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and (optional) per-dimension std at one query point.

    Outputs share hyperparameters, so the std is identical across the m
    output dimensions; ``std`` is None for mean-only predictions.
    """

    mean: np.ndarray
    std: np.ndarray | None = None


def kernel_eval(a, b, params: KernelParams) -> float:
    """Single ARD-SE kernel evaluation k(a, b)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(backend.kernel_vector(a[None, :], b, params.signal_std, params.inv_lengthscales)[0])


def kernel_vector(P, p, params: KernelParams) -> np.ndarray:
    """Kernel vector k(P, p) between M training inputs and one query point.

    This vector is the shared ingredient of both the posterior mean and the
    correlation-aware aggregation weights, so callers cache and reuse it.
    """
    return backend.kernel_vector(P, p, params.signal_std, params.inv_lengthscales)


def kernel_matrix(P, Q, params: KernelParams) -> np.ndarray:
    """Cross-kernel matrix K(P, Q), shape (M, nq)."""
    return backend.kernel_matrix(P, Q, params.signal_std, params.inv_lengthscales)


class GPModel:
    """One agent's fitted GP: training set plus a cached Cholesky solve
    operator for (K + sigma_o^2 I).

    The O(M^3) factorization happens once in :func:`fit`; predictions are
    O(M) for the mean and O(M^2) when the posterior variance is requested.
    Fitted models are immutable apart from ``clamp_warnings``, which counts
    round-off-negative variances clamped to zero.
    """

    def __init__(self, inputs, targets, params, cho, alpha):
        self.inputs = inputs
        self.targets = targets
        self.params = params
        self._cho = cho
        self._alpha = alpha  # (K + sigma_o^2 I)^-1 Y, shape (M, m)
        self.clamp_warnings = 0

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def kernel_vector(self, p) -> np.ndarray:
        return kernel_vector(self.inputs, p, self.params)

    def kernel_vectors(self, Q) -> np.ndarray:
        """Kernel vectors for a batch of queries, shape (M, nq)."""
        return kernel_matrix(self.inputs, Q, self.params)

    @property
    def cholesky(self):
        """The cached (factor, lower) pair for (K + sigma_o^2 I)."""
        return self._cho

    def solve(self, v, check_finite: bool = True) -> np.ndarray:
        """Apply the cached (K + sigma_o^2 I)^-1 to a vector or matrix."""
        return cho_solve(self._cho, v, check_finite=check_finite)

    def predict(self, p, with_std: bool = False) -> Prediction:
        kvec = self.kernel_vector(p)
        return self.predict_from_kvec(kvec, with_std=with_std)

    def predict_from_kvec(self, kvec, with_std: bool = False) -> Prediction:
        """Posterior prediction reusing an already-computed kernel vector."""
        mean = kvec @ self._alpha
        if not with_std:
            return Prediction(mean=mean)
        var = self._variance_from_kvecs(kvec[:, None])[0]
        std = np.full(self.output_dim, np.sqrt(var))
        return Prediction(mean=mean, std=std)

    def predict_mean_batch(self, Q) -> np.ndarray:
        """Posterior means for a batch of queries, shape (nq, m)."""
        return self.mean_from_kvecs(self.kernel_vectors(Q))

    def mean_from_kvecs(self, kvecs) -> np.ndarray:
        """Posterior means from precomputed kernel vectors (M, nq) -> (nq, m)."""
        return kvecs.T @ self._alpha

    def variance_batch(self, Q, kvecs=None) -> np.ndarray:
        """Shared-across-outputs posterior variances for a batch of queries."""
        if kvecs is None:
            kvecs = self.kernel_vectors(Q)
        return self._variance_from_kvecs(kvecs)

    def _variance_from_kvecs(self, kvecs) -> np.ndarray:
        # k(p,p) = sigma_r^2 for the SE kernel, independent of p.
        prior = self.params.signal_std**2
        quad = np.einsum("mq,mq->q", kvecs, cho_solve(self._cho, kvecs))
        var = prior - quad
        negative = var < 0
        if np.any(negative):
            self.clamp_warnings += int(np.count_nonzero(negative))
            var = np.where(negative, 0.0, var)
        return var


def fit(P, Y, params: KernelParams) -> GPModel:
    """Condition a zero-mean GP prior on training data.

    P is (M, D), Y is (M, m). Raises :class:`GramFactorizationError` when the
    regularized Gram matrix is not positive definite, which happens for
    duplicate inputs with zero observation noise.
    """
    P = np.ascontiguousarray(np.atleast_2d(P), dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if P.shape[0] < 1:
        raise ValueError("need at least one training sample")
    if Y.shape[0] != P.shape[0]:
        raise ValueError(f"inputs have {P.shape[0]} rows but targets have {Y.shape[0]}")
    if P.shape[1] != params.input_dim:
        raise ValueError(
            f"inputs are {P.shape[1]}-d but kernel has {params.input_dim} inverse lengthscales"
        )

    K = kernel_matrix(P, P, params)
    K[np.diag_indices_from(K)] += params.noise_std**2
    try:
        cho = cho_factor(K, lower=True)
    except LinAlgError as exc:
        raise GramFactorizationError(
            "Gram matrix K + sigma_o^2 I is not positive definite; "
            "this typically means duplicate training inputs with noise_std=0"
        ) from exc
    alpha = cho_solve(cho, Y)
    return GPModel(inputs=P, targets=Y, params=params, cho=cho, alpha=alpha)
