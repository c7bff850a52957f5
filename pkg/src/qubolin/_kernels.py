"""Compiled sweep kernels.

Convention: the energy change of setting ``q_i`` from 0 to 1 is
``d_i = linear[i] + sum_j A_ij q_j`` (A symmetric), so the heat-bath
probability of ``q_i = 1`` is ``1 / (1 + exp(beta * d_i))``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _p_one(x):
    # logistic(-x) without overflow
    if x >= 0.0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


@njit(cache=True)
def _local(i, state, linear, indptr, indices, data):
    d = linear[i]
    for p in range(indptr[i], indptr[i + 1]):
        d += data[p] * state[indices[p]]
    return d


@njit(cache=True)
def heat_bath(state, linear, indptr, indices, data, betas, uniforms):
    """One single-site sweep per entry of ``betas``, ascending index order.

    ``uniforms`` has shape (len(betas), N); ``state`` is updated in place.
    """
    n = state.shape[0]
    for k in range(betas.shape[0]):
        b = betas[k]
        for i in range(n):
            d = _local(i, state, linear, indptr, indices, data)
            state[i] = 1 if uniforms[k, i] < _p_one(b * d) else 0


@njit(cache=True)
def heat_bath_chain(state, linear, indptr, indices, data, beta, uniforms, codes):
    """Fixed-beta sweeps recording the state (as an integer code) after each sweep."""
    n = state.shape[0]
    for k in range(uniforms.shape[0]):
        for i in range(n):
            d = _local(i, state, linear, indptr, indices, data)
            state[i] = 1 if uniforms[k, i] < _p_one(beta * d) else 0
        c = 0
        for i in range(n):
            c |= np.int64(state[i]) << i
        codes[k] = c


@njit(cache=True)
def onehot_heat_bath(state, linear, indptr, indices, data, betas, uniforms, gptr, gidx, free):
    """Sweeps where each one-hot group is resampled as a single categorical variable.

    Groups are visited in order of their first index, followed by the
    ungrouped (``free``) variables, each updated by single-site heat bath.
    Group ``g`` draws its choice from ``uniforms[k, gidx[gptr[g]]]``.
    """
    n_groups = gptr.shape[0] - 1
    width = 0
    for g in range(n_groups):
        width = max(width, gptr[g + 1] - gptr[g])
    e = np.empty(width)
    for k in range(betas.shape[0]):
        b = betas[k]
        for g in range(n_groups):
            lo = gptr[g]
            hi = gptr[g + 1]
            for p in range(lo, hi):
                state[gidx[p]] = 0
            emin = np.inf
            for p in range(lo, hi):
                i = gidx[p]
                e[p - lo] = _local(i, state, linear, indptr, indices, data)
                if e[p - lo] < emin:
                    emin = e[p - lo]
            z = 0.0
            for p in range(lo, hi):
                e[p - lo] = math.exp(-b * (e[p - lo] - emin))
                z += e[p - lo]
            u = uniforms[k, gidx[lo]] * z
            acc = 0.0
            pick = hi - 1
            for p in range(lo, hi):
                acc += e[p - lo]
                if u < acc:
                    pick = p
                    break
            state[gidx[pick]] = 1
        for t in range(free.shape[0]):
            i = free[t]
            d = _local(i, state, linear, indptr, indices, data)
            state[i] = 1 if uniforms[k, i] < _p_one(b * d) else 0
