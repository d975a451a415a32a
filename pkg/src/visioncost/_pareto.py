"""Dominance kernels behind the Pareto filter.

Two interchangeable implementations of the same O(n^2) dominance test over a
row-per-point matrix of minimized objectives: a numba-compiled kernel and a
chunked pure-numpy fallback. ``VISIONCOST_BACKEND`` (``numba`` or ``numpy``)
picks the implementation at import time; both produce identical masks, so
the flag affects speed only. Objective values used by the package are
integers well below 2**53 (or annotation floats), so float64 comparisons
are exact.
"""

from __future__ import annotations

import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "dominated_mask",
    "dominated_mask_numpy",
    "dominated_mask_numba",
    "active_backend",
    "HAS_NUMBA",
]

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    HAS_NUMBA = False


def dominated_mask_numpy(values: np.ndarray) -> np.ndarray:
    """mask[i] is True when some row j has all coords <= row i and one <."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    n = v.shape[0]
    out = np.zeros(n, dtype=bool)
    if n == 0:
        return out
    chunk = max(1, min(n, 512))
    for start in range(0, n, chunk):
        block = v[start : start + chunk]  # (b, m)
        le_all = (v[:, None, :] <= block[None, :, :]).all(axis=2)  # (n, b)
        lt_any = (v[:, None, :] < block[None, :, :]).any(axis=2)
        out[start : start + chunk] = (le_all & lt_any).any(axis=0)
    return out


def _dominated_mask_loops(v):  # pragma: no cover - compiled path
    n, m = v.shape
    out = np.zeros(n, dtype=np.bool_)
    order = np.argsort(v[:, 0])
    for a in range(n):
        i = order[a]
        for bpos in range(n):
            j = order[bpos]
            # Rows are visited in ascending first-objective order; once a
            # candidate's first objective exceeds row i's, none later can
            # dominate it.
            if v[j, 0] > v[i, 0]:
                break
            if j == i:
                continue
            le_all = True
            lt_any = False
            for c in range(m):
                if v[j, c] > v[i, c]:
                    le_all = False
                    break
                if v[j, c] < v[i, c]:
                    lt_any = True
            if le_all and lt_any:
                out[i] = True
                break
    return out


if HAS_NUMBA:
    dominated_mask_numba = njit(cache=True)(_dominated_mask_loops)
else:  # pragma: no cover
    dominated_mask_numba = None


def _resolve_backend(requested: str | None) -> str:
    req = (requested or "").strip().lower()
    if req == "numpy":
        return "numpy"
    if req == "numba":
        if HAS_NUMBA:
            return "numba"
        logger.warning("VISIONCOST_BACKEND=numba requested but numba is unavailable")
        return "numpy"
    if req:
        logger.warning("unknown VISIONCOST_BACKEND %r; using default", requested)
    return "numba" if HAS_NUMBA else "numpy"


_BACKEND = _resolve_backend(os.environ.get("VISIONCOST_BACKEND"))


def active_backend() -> str:
    return _BACKEND


def dominated_mask(values: np.ndarray) -> np.ndarray:
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"expected a 2-d objective matrix, got shape {v.shape}")
    if _BACKEND == "numba":
        return np.asarray(dominated_mask_numba(v))
    return dominated_mask_numpy(v)
