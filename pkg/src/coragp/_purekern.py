"""Pure-NumPy fallback for the compiled kernel core.

Same contract as ``_fastkern``; used when the extension is not built or
when ``CORAGP_PURE_PYTHON`` is set.
"""

import numpy as np


def kernel_matrix_impl(P, Q, sigma_r, inv_ls, out):
    diff = (P[:, None, :] - Q[None, :, :]) * inv_ls
    np.einsum("abj,abj->ab", diff, diff, out=out)
    out *= -0.5
    np.exp(out, out=out)
    out *= sigma_r * sigma_r


def kernel_vector_impl(P, p, sigma_r, inv_ls, out):
    diff = (P - p) * inv_ls
    np.einsum("aj,aj->a", diff, diff, out=out)
    out *= -0.5
    np.exp(out, out=out)
    out *= sigma_r * sigma_r


def cora_avg_weights_impl(kcat, offsets, sigma_g, out):
    counts = np.diff(offsets)
    sums = np.add.reduceat(kcat, offsets[:-1], axis=0)
    s = np.abs(sums / counts[:, None])
    normalized = s / s.sum(axis=0)
    peak = normalized.max(axis=0)
    w = np.exp(-((normalized - peak) ** 2) / (2.0 * sigma_g**2))
    w /= sigma_g * np.sqrt(2.0 * np.pi)
    out[:] = w / w.sum(axis=0)
