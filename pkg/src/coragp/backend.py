"""Kernel-evaluation backend selection.

Prefers the compiled Cython core and falls back to NumPy. Set the
environment variable ``CORAGP_PURE_PYTHON=1`` before import to force the
fallback (used by the backend benchmark and equivalence tests).
"""

import os

import numpy as np

if os.environ.get("CORAGP_PURE_PYTHON"):
    from . import _purekern as _impl

    COMPILED = False
else:
    try:
        from . import _fastkern as _impl  # type: ignore[attr-defined]

        COMPILED = True
    except ImportError:
        from . import _purekern as _impl

        COMPILED = False

BACKEND_NAME = "cython" if COMPILED else "numpy"


def _as_c2d(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def kernel_matrix(P, Q, sigma_r, inv_ls):
    """ARD-SE cross-kernel matrix, shape (len(P), len(Q))."""
    P = _as_c2d(np.atleast_2d(P))
    Q = _as_c2d(np.atleast_2d(Q))
    inv_ls = np.ascontiguousarray(inv_ls, dtype=np.float64)
    if P.shape[1] != Q.shape[1] or P.shape[1] != inv_ls.shape[0]:
        raise ValueError(
            f"dimension mismatch: P is {P.shape[1]}-d, Q is {Q.shape[1]}-d, "
            f"inverse lengthscales are {inv_ls.shape[0]}-d"
        )
    out = np.empty((P.shape[0], Q.shape[0]), dtype=np.float64)
    _impl.kernel_matrix_impl(P, Q, float(sigma_r), inv_ls, out)
    return out


def kernel_vector(P, p, sigma_r, inv_ls):
    """ARD-SE kernel vector between the rows of P and a single query point."""
    P = _as_c2d(np.atleast_2d(P))
    p = np.ascontiguousarray(p, dtype=np.float64).ravel()
    inv_ls = np.ascontiguousarray(inv_ls, dtype=np.float64)
    if P.shape[1] != p.shape[0] or P.shape[1] != inv_ls.shape[0]:
        raise ValueError(
            f"dimension mismatch: P is {P.shape[1]}-d, query is {p.shape[0]}-d, "
            f"inverse lengthscales are {inv_ls.shape[0]}-d"
        )
    out = np.empty(P.shape[0], dtype=np.float64)
    _impl.kernel_vector_impl(P, p, float(sigma_r), inv_ls, out)
    return out


def cora_avg_weights(kcat, offsets, sigma_g):
    """Average-correlation aggregation weights for a query block.

    ``kcat`` stacks the neighbors' kernel vectors row-wise, shape
    (sum_l M_l, nq); ``offsets`` has length n+1 with neighbor l occupying
    rows offsets[l]:offsets[l+1]. Returns the (n, nq) weight matrix whose
    columns are convex combinations.
    """
    kcat = _as_c2d(kcat)
    offsets = np.ascontiguousarray(offsets, dtype=np.intp)
    if offsets[-1] != kcat.shape[0]:
        raise ValueError(
            f"offsets end at {offsets[-1]} but kcat has {kcat.shape[0]} rows"
        )
    out = np.empty((offsets.shape[0] - 1, kcat.shape[1]), dtype=np.float64)
    _impl.cora_avg_weights_impl(kcat, offsets, float(sigma_g), out)
    return out
