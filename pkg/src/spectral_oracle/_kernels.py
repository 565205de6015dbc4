"""numba kernels.  Hash formulas must stay bit-identical to randomness.py."""

import os

import numba as nb
import numpy as np

# the TBB layer shipped with some distributions is too old and warns on load
if "NUMBA_THREADING_LAYER" not in os.environ:
    nb.config.THREADING_LAYER = "omp"

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_G = np.uint64(0x9E3779B97F4A7C15)
_SALT = np.uint64(0xD1B54A32D192ED03)
_MASK32 = np.uint64(0xFFFFFFFF)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S32 = np.uint64(32)

BLOCK = 16


@nb.njit(inline="always", cache=True)
def mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(inline="always", cache=True)
def fold(state, w):
    return mix(state ^ mix(np.uint64(w) + _SALT))


@nb.njit(inline="always", cache=True)
def draw_bounded(u, bound):
    b = np.uint64(bound)
    thr = (np.uint64(1) << _S32) % b
    while True:
        prod = (u >> _S32) * b
        if (prod & _MASK32) >= thr:
            return np.int64(prod >> _S32)
        u = mix(u + _G)


@nb.njit(cache=True)
def sample_with_replacement(base, count, n):
    out = np.empty(count, dtype=np.int64)
    for i in range(count):
        out[i] = draw_bounded(mix(fold(base, i)), n)
    return out


@nb.njit(parallel=True, cache=True)
def walk_endpoints(ext, starts, walk_offsets, reps, R, t, state0, tag):
    """Endpoints of ``R`` lazy walks of length ``t`` from each start.

    Column j uses keys (tag, starts[j], reps[j], walk_offsets[j] + w).

    ``ext`` is the (n, 2d) step table: column c < d holds slot c, columns
    >= d hold the vertex itself (stay).  Walks are advanced in lockstep
    blocks so that independent memory loads overlap.
    """
    ncols = starts.shape[0]
    two_d = ext.shape[1]
    d = two_d // 2
    bound = np.uint64(two_d)
    thr = (np.uint64(1) << _S32) % bound
    nblocks = (R + BLOCK - 1) // BLOCK
    ends = np.empty((ncols, R), dtype=np.int32)
    moves = np.zeros(ncols * nblocks, dtype=np.int64)
    for task in nb.prange(ncols * nblocks):
        j = task // nblocks
        b0 = (task % nblocks) * BLOCK
        nb_ = min(BLOCK, R - b0)
        col_state = fold(fold(fold(state0, tag), starts[j]), reps[j])
        hw = np.empty(BLOCK, dtype=np.uint64)
        v = np.empty(BLOCK, dtype=np.int64)
        for i in range(nb_):
            hw[i] = fold(col_state, walk_offsets[j] + b0 + i)
            v[i] = starts[j]
        mv = 0
        for st in range(1, t + 1):
            inc = np.uint64(st) * _G
            for i in range(nb_):
                u = mix(hw[i] + inc)
                prod = (u >> _S32) * bound
                if (prod & _MASK32) < thr:
                    u = mix(u + _G)
                    prod = (u >> _S32) * bound
                    while (prod & _MASK32) < thr:
                        u = mix(u + _G)
                        prod = (u >> _S32) * bound
                c = np.int64(prod >> _S32)
                v[i] = ext[v[i], c]
                mv += c < d
        for i in range(nb_):
            ends[j, b0 + i] = v[i]
        moves[task] = mv
    per_col = np.zeros(ncols, dtype=np.int64)
    for task in range(ncols * nblocks):
        per_col[task // nblocks] += moves[task]
    return ends, per_col


@nb.njit(cache=True)
def min_subset_conductance(local_adj, d):
    """Exhaustive min over S, 1 <= |S| <= c/2, of |E(S, C-S)| / (d |S|).

    ``local_adj[x]`` lists the in-C slots of local vertex x (local ids,
    -1 padded).  Returns (value, best mask).
    """
    c = local_adj.shape[0]
    best = np.inf
    best_mask = 0
    half = c // 2
    for mask in range(1, 1 << c):
        size = 0
        m = mask
        while m:
            m &= m - 1
            size += 1
        if size > half:
            continue
        cut = 0
        for x in range(c):
            if (mask >> x) & 1:
                for j in range(local_adj.shape[1]):
                    y = local_adj[x, j]
                    if y >= 0 and not ((mask >> y) & 1):
                        cut += 1
        val = cut / (d * size)
        if val < best:
            best = val
            best_mask = mask
    return best, best_mask


@nb.njit(cache=True)
def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi rotations on a symmetric matrix (in place on a copy).

    Returns (eigenvalues, eigenvectors as columns, sweeps used).
    """
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += A[i, j] * A[i, j]
    scale = np.sqrt(scale)
    sweeps = 0
    if scale == 0.0:
        return np.zeros(n), V, sweeps
    for sweep in range(max_sweeps):
        off = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                off += A[i, j] * A[i, j]
        if np.sqrt(2.0 * off) <= tol * scale:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app = A[p, p]
                aqq = A[q, q]
                if abs(apq) <= 1e-300:
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    continue
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    tt = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    tt = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                cs = 1.0 / np.sqrt(1.0 + tt * tt)
                sn = tt * cs
                for r in range(n):
                    arp = A[r, p]
                    arq = A[r, q]
                    A[r, p] = cs * arp - sn * arq
                    A[r, q] = sn * arp + cs * arq
                for r in range(n):
                    apr = A[p, r]
                    aqr = A[q, r]
                    A[p, r] = cs * apr - sn * aqr
                    A[q, r] = sn * apr + cs * aqr
                A[p, q] = 0.0
                A[q, p] = 0.0
                for r in range(n):
                    vrp = V[r, p]
                    vrq = V[r, q]
                    V[r, p] = cs * vrp - sn * vrq
                    V[r, q] = sn * vrp + cs * vrq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V, sweeps


@nb.njit(cache=True)
def project_columns(factor, a):
    """u[:, j] = factor^T a[:, j] summed in a fixed order, so a vertex's
    vector does not depend on which batch it was computed in."""
    s, k = factor.shape
    ncols = a.shape[1]
    u = np.zeros((k, ncols))
    for j in range(ncols):
        for c in range(k):
            acc = 0.0
            for i in range(s):
                acc += factor[i, c] * a[i, j]
            u[c, j] = acc
    return u
