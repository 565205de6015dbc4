"""Lazy random walks: empirical endpoint distributions, sampled transition
matrices, and the median-boosted collision Gram matrix.

Endpoint masses are kept as integer counts (mass = count / R), so sums and
inner products are exact until the final division.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._kernels import walk_endpoints
from .graph import RegularGraph, UsageError
from .randomness import STAY, Seed, Tag, WalkKey, as_seed, step_choice

# cap on walks materialized per kernel call (columns x R)
_CHUNK_WALKS = 1 << 22


@dataclass(frozen=True)
class WalkDistribution:
    start: int
    t: int
    R: int
    vertices: np.ndarray  # sorted, distinct
    counts: np.ndarray    # positive, sums to R

    @property
    def mass(self) -> np.ndarray:
        return self.counts / self.R

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.vertices.tolist(), self.mass.tolist()))

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        out[self.vertices] = self.mass
        return out


@dataclass(frozen=True)
class TransitionSample:
    """Columns m_hat_x for x in I_S, stored CSC-style as integer counts."""

    I_S: np.ndarray
    R: int
    t: int
    n: int
    indptr: np.ndarray
    indices: np.ndarray
    counts: np.ndarray

    @property
    def s(self) -> int:
        return self.I_S.size

    def column(self, j: int) -> WalkDistribution:
        a, b = self.indptr[j], self.indptr[j + 1]
        return WalkDistribution(int(self.I_S[j]), self.t, self.R, self.indices[a:b], self.counts[a:b])

    def count_matrix(self) -> sp.csc_matrix:
        """n x s sparse matrix of endpoint counts (int64)."""
        return sp.csc_matrix((self.counts, self.indices, self.indptr), shape=(self.n, self.s))

    def dense(self) -> np.ndarray:
        return self.count_matrix().toarray() / self.R


@dataclass(frozen=True)
class CollisionGram:
    matrix: np.ndarray
    R: int
    m: int
    probes: int


def _endpoints(g: RegularGraph, starts, walk_offsets, R: int, t: int, seed: Seed, tag: int, reps):
    starts = np.ascontiguousarray(starts, dtype=np.int64)
    walk_offsets = np.ascontiguousarray(walk_offsets, dtype=np.int64)
    reps = np.ascontiguousarray(np.broadcast_to(reps, starts.shape), dtype=np.int64)
    if R < 1:
        raise UsageError("R must be >= 1")
    if t < 0:
        raise UsageError("t must be >= 0")
    if starts.size and (starts.min() < 0 or starts.max() >= g.n):
        raise UsageError("start vertex out of range")
    ends, moves = walk_endpoints(g.step_table, starts, walk_offsets, reps, R, t,
                                 np.uint64(seed.state), np.int64(tag))
    g.add_probes(int(moves.sum()))
    return ends


def endpoint_counts(g: RegularGraph, starts, reps, R: int, t: int, seed, tag: int) -> sp.csc_matrix:
    """n x len(starts) integer count matrix; column j holds R walks keyed
    (tag, starts[j], reps[j], w).  Batched form of run_random_walks."""
    seed = as_seed(seed)
    starts = np.asarray(starts, dtype=np.int64)
    reps = np.broadcast_to(np.asarray(reps, dtype=np.int64), starts.shape)
    ncols = starts.size
    step = max(1, _CHUNK_WALKS // R)
    blocks = []
    for a in range(0, ncols, step):
        b = min(ncols, a + step)
        ends = _endpoints(g, starts[a:b], np.zeros(b - a, dtype=np.int64), R, t, seed, tag, reps[a:b])
        rows = ends.ravel().astype(np.int64)
        cols = np.repeat(np.arange(b - a), R)
        mat = sp.csc_matrix((np.ones(rows.size, dtype=np.int64), (rows, cols)), shape=(g.n, b - a))
        mat.sum_duplicates()
        blocks.append(mat)
    return sp.hstack(blocks, format="csc") if len(blocks) > 1 else blocks[0]


def _tally(ends_row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    v, c = np.unique(ends_row, return_counts=True)
    return v.astype(np.int64), c.astype(np.int64)


def run_random_walks(g: RegularGraph, R: int, t: int, x: int, seed, tag: int = Tag.WALK_QUERY,
                     rep: int = 0, walk_offset: int = 0) -> WalkDistribution:
    """R lazy walks of length t from x.  Walk w uses key (tag, x, rep, walk_offset + w)."""
    seed = as_seed(seed)
    ends = _endpoints(g, [x], [walk_offset], R, t, seed, tag, rep)
    v, c = _tally(ends[0])
    return WalkDistribution(int(x), t, R, v, c)


def replay_walk(g: RegularGraph, seed, tag: int, x: int, rep: int, walk: int, t: int) -> int:
    """Pure-Python endpoint of one keyed walk; reference for the kernel."""
    seed = as_seed(seed)
    v = int(x)
    for step in range(1, t + 1):
        c = step_choice(seed, WalkKey(int(tag), int(x), rep, walk, step), g.d)
        if c != STAY:
            v = int(g.slots[v, c])
    return v


def estimate_transition_matrix(g: RegularGraph, I_S, R: int, t: int, seed, rep: int = 0,
                               tag: int = Tag.WALK_INIT) -> TransitionSample:
    """Column j holds R walks from I_S[j] with walk indices j*R .. j*R+R-1,
    so repeated entries of I_S get independent columns."""
    seed = as_seed(seed)
    I_S = np.asarray(I_S, dtype=np.int64)
    s = I_S.size
    if s < 1:
        raise UsageError("I_S must be nonempty")
    indptr = [0]
    idx_parts, cnt_parts = [], []
    step = max(1, _CHUNK_WALKS // R)
    for a in range(0, s, step):
        cols = np.arange(a, min(s, a + step))
        ends = _endpoints(g, I_S[cols], cols * R, R, t, seed, tag, rep)
        for row in ends:
            v, c = _tally(row)
            idx_parts.append(v)
            cnt_parts.append(c)
            indptr.append(indptr[-1] + v.size)
    return TransitionSample(I_S=I_S, R=R, t=t, n=g.n, indptr=np.asarray(indptr, dtype=np.int64),
                            indices=np.concatenate(idx_parts), counts=np.concatenate(cnt_parts))


def _median_odd(stack: np.ndarray) -> np.ndarray:
    """Entrywise median of an odd-length stack; returns actual elements."""
    m = stack.shape[0]
    return np.partition(stack, m // 2, axis=0)[m // 2]


def collision_numerators(p: TransitionSample, q: TransitionSample) -> np.ndarray:
    """P^T Q + Q^T P in integer counts (twice the symmetrized Gram times R^2)."""
    a = (p.count_matrix().T @ q.count_matrix()).toarray().astype(np.int64)
    return a + a.T


def estimate_collision_probabilities(g: RegularGraph, I_S, R: int, t: int, m: int, seed) -> CollisionGram:
    """Entrywise median over m repetitions of (P_i^T Q_i + Q_i^T P_i) / 2."""
    if m < 1 or m % 2 == 0:
        raise UsageError(f"m must be a positive odd integer, got {m}")
    seed = as_seed(seed)
    before = g.probe_counter
    reps = []
    for i in range(m):
        p = estimate_transition_matrix(g, I_S, R, t, seed, rep=i, tag=Tag.WALK_GRAM_P)
        q = estimate_transition_matrix(g, I_S, R, t, seed, rep=i, tag=Tag.WALK_GRAM_Q)
        reps.append(collision_numerators(p, q))
    med = _median_odd(np.stack(reps))
    matrix = med / (2.0 * R * R)
    return CollisionGram(matrix=matrix, R=R, m=m, probes=g.probe_counter - before)


def total_variation(dist: WalkDistribution, exact: np.ndarray) -> float:
    diff = exact.copy()
    diff[dist.vertices] -= dist.mass
    return 0.5 * float(np.abs(diff).sum())


def walk_stats(g: RegularGraph, starts, R: int, t: int, seed) -> dict:
    """TV distance of empirical walk distributions to the exact M^t 1_x."""
    from .exact import exact_walk_matrix

    seed = as_seed(seed)
    starts = np.asarray(starts, dtype=np.int64)
    sample = estimate_transition_matrix(g, starts, R, t, seed, tag=Tag.WALK_DIAGNOSTIC)
    exact = exact_walk_matrix(g, t, starts)
    tv = [total_variation(sample.column(j), exact[:, j]) for j in range(starts.size)]
    return {"starts": starts.tolist(), "R": R, "t": t, "seed": seed.hex, "tv": tv,
            "max_tv": max(tv), "mean_tv": float(np.mean(tv))}
