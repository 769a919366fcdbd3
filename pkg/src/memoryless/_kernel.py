"""Compiled inner loop for blocks of synchronous rounds.

``run_block(current, lls, w, out)`` applies, for each step b,

    z[i, k] = lls[b, i, k] + sum_j w[b, i, j] * current[j, k]   (j ascending)
    current = z - logsumexp_k(z)

and writes the post-step log-beliefs to ``out[b]``. Returns the index of the
first step whose normalizer is not finite, or -1. Falls back to numpy when
numba is unavailable.
"""
import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None


def _run_block_py(current, lls, w, out):
    for b in range(lls.shape[0]):
        wb = w[b][:, :, None]
        with np.errstate(invalid="ignore"):
            z = lls[b] + np.where(wb != 0.0, wb * current[None, :, :], 0.0).sum(axis=1)
        top = z.max(axis=1, keepdims=True)
        if not np.isfinite(top).all():
            return b
        z = z - top
        current = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        out[b] = current
    return -1


def _run_block(current, lls, w, out):
    n_steps, n, k = lls.shape
    prev = current.copy()
    z = np.empty((n, k))
    for b in range(n_steps):
        for i in range(n):
            for s in range(k):
                acc = lls[b, i, s]
                for j in range(n):
                    wij = w[b, i, j]
                    if wij != 0.0:
                        acc += wij * prev[j, s]
                z[i, s] = acc
        for i in range(n):
            top = z[i, 0]
            for s in range(1, k):
                if z[i, s] > top:
                    top = z[i, s]
            if not np.isfinite(top):
                return b
            total = 0.0
            for s in range(k):
                total += np.exp(z[i, s] - top)
            log_total = np.log(total)
            for s in range(k):
                prev[i, s] = (z[i, s] - top) - log_total
                out[b, i, s] = prev[i, s]
    return -1


run_block = _run_block_py if njit is None else njit(cache=True, nogil=True)(_run_block)
