"""Compiled inner loops for the simulation hot paths."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def ks_scaled_statistics(baseline, x, sizes):
    """``n0 * n_t * D`` for consecutive current samples packed in ``x``.

    Both ``baseline`` (sorted) and ``x`` must lie in ``[0, 1]`` (apply any
    continuous CDF first; the statistic only sees ranks).  Step ``s`` uses the
    next ``sizes[s]`` entries of ``x``.  With ``M_j`` current points below the
    ``j``-th baseline order statistic the supremum is
    ``max_j max(|j n_t - M_j n0|, |(j-1) n_t - M_j n0|)``.
    """
    m = baseline.size
    n = sizes.size
    # bucket index: start[k] = #baseline < k / nb, so each lookup is a short scan
    nb = 8 * (m + 1)
    start = np.empty(nb + 1, np.int64)
    i = 0
    for k in range(nb + 1):
        edge = k / nb
        while i < m and baseline[i] < edge:
            i += 1
        start[k] = i
    out = np.empty(n, np.int64)
    counts = np.zeros(m + 1, np.int64)
    pos = 0
    for s in range(n):
        nt = sizes[s]
        counts[:] = 0
        for r in range(pos, pos + nt):
            v = x[r]
            k = int(v * nb)
            if k >= nb:
                k = nb - 1
            i = start[k]
            while i < m and baseline[i] < v:
                i += 1
            counts[i] += 1
        pos += nt
        below = 0
        best = 0
        for j in range(1, m + 1):
            below += counts[j - 1]
            a = abs(j * nt - below * m)
            b = abs((j - 1) * nt - below * m)
            if a > best:
                best = a
            if b > best:
                best = b
        out[s] = best
    return out
