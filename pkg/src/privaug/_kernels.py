"""Compiled Metropolis-within-Gibbs sweep.

Used by :func:`privaug.engine.sweep_latent` when a model supplies a
numba-compiled log-density. The Python loop in the engine is the reference
implementation; this kernel performs the same arithmetic on flattened arrays.
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(nogil=True)
def mh_sweep(logdens, params, sdp, total, x, proposals, stats_cur, stats_new, uniforms):
    """Sequential scan over records, updating ``x``, ``total`` in place.

    Returns ``(mean_alpha, bad_record)`` where ``bad_record`` is the index
    of the first record whose log-density came back NaN, or -1.
    """
    n = x.shape[0]
    width = total.shape[0]
    cand = np.empty(width)
    lp_cur = logdens(sdp, total, params)
    if math.isnan(lp_cur):
        return 0.0, 0
    alpha_sum = 0.0
    for i in range(n):
        for k in range(width):
            cand[k] = total[k] - stats_cur[i, k] + stats_new[i, k]
        lp_new = logdens(sdp, cand, params)
        if math.isnan(lp_new):
            return alpha_sum / n, i
        if lp_new == -math.inf and lp_cur == -math.inf:
            alpha = 1.0
        else:
            diff = lp_new - lp_cur
            alpha = 1.0 if diff >= 0.0 else math.exp(diff)
        alpha_sum += alpha
        if uniforms[i] < alpha:
            for k in range(width):
                total[k] = cand[k]
                stats_cur[i, k] = stats_new[i, k]
            for j in range(x.shape[1]):
                x[i, j] = proposals[i, j]
            lp_cur = lp_new
    return alpha_sum / n, -1
