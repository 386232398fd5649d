"""Numeric inner loops, with a numba path and a pure-numpy path.

The numba path is used when numba imports cleanly and the environment
variable ``OTSVAD_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always
importable as ``*_numpy`` / ``*_numba`` so tests and the benchmark can compare
them directly.
"""
import os

import numpy as np

_DISABLED = os.environ.get("OTSVAD_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


# ---------------------------------------------------------------------------
# label-weighted sums: sums[n] = sum_t labels[t, n] * emb[t]
# ---------------------------------------------------------------------------

def label_sums_numpy(emb, labels):
    """Per-column weighted sums and counts. ``labels`` is a T x N 0/1 matrix."""
    w = labels.astype(np.float64)
    return w.T @ emb, labels.sum(axis=0).astype(np.int64)


def _label_sums_loop(emb, labels):
    T, D = emb.shape
    N = labels.shape[1]
    sums = np.zeros((N, D))
    counts = np.zeros(N, dtype=np.int64)
    for t in range(T):
        for n in range(N):
            if labels[t, n] != 0:
                counts[n] += 1
                for d in range(D):
                    sums[n, d] += emb[t, d]
    return sums, counts


# ---------------------------------------------------------------------------
# logistic-cosine scoring: p[t, n] = sigmoid(scale * cos(e_t, g_n) + offset)
# ---------------------------------------------------------------------------

def cosine_posteriors_numpy(emb, targets, scale, offset):
    enorm = np.linalg.norm(emb, axis=1)
    gnorm = np.linalg.norm(targets, axis=1)
    dots = emb @ targets.T
    denom = np.outer(enorm, gnorm)
    cos = np.divide(dots, denom, out=np.zeros_like(dots), where=denom > 0)
    # clip guards rounding of parallel vectors to |cos| slightly above 1
    cos = np.clip(cos, -1.0, 1.0)
    return 1.0 / (1.0 + np.exp(-(scale * cos + offset)))


def _cosine_posteriors_loop(emb, targets, scale, offset):
    T, D = emb.shape
    N = targets.shape[0]
    gnorm = np.zeros(N)
    for n in range(N):
        acc = 0.0
        for d in range(D):
            acc += targets[n, d] * targets[n, d]
        gnorm[n] = np.sqrt(acc)
    out = np.empty((T, N))
    for t in range(T):
        acc = 0.0
        for d in range(D):
            acc += emb[t, d] * emb[t, d]
        enorm = np.sqrt(acc)
        for n in range(N):
            cos = 0.0
            if enorm > 0.0 and gnorm[n] > 0.0:
                dot = 0.0
                for d in range(D):
                    dot += emb[t, d] * targets[n, d]
                cos = dot / (enorm * gnorm[n])
                if cos > 1.0:
                    cos = 1.0
                elif cos < -1.0:
                    cos = -1.0
            out[t, n] = 1.0 / (1.0 + np.exp(-(scale * cos + offset)))
    return out


if HAS_NUMBA:
    label_sums_numba = njit(cache=True)(_label_sums_loop)
    # reassociation lets the dot products vectorise; nan/inf semantics are kept
    cosine_posteriors_numba = njit(cache=True, fastmath={"reassoc", "contract"})(_cosine_posteriors_loop)
else:  # pragma: no cover
    label_sums_numba = _label_sums_loop
    cosine_posteriors_numba = _cosine_posteriors_loop


def label_sums(emb, labels):
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int8)
    if USE_NUMBA:
        return label_sums_numba(emb, labels)
    return label_sums_numpy(emb, labels)


def cosine_posteriors(emb, targets, scale, offset):
    emb = np.ascontiguousarray(emb, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.float64)
    if USE_NUMBA:
        return cosine_posteriors_numba(emb, targets, float(scale), float(offset))
    return cosine_posteriors_numpy(emb, targets, float(scale), float(offset))
