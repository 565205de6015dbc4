"""d-regular graphs with probe-counted neighbor access, conductance
utilities, and a generator for clusterable instances."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._kernels import min_subset_conductance


class UsageError(ValueError):
    """Invalid arguments to a graph operation."""


class CapabilityError(RuntimeError):
    """Requested computation exceeds a configured size limit."""


class GenerationError(RuntimeError):
    pass


class RegularGraph:
    """A d-regular multigraph stored as an (n, d) slot table.

    Self-loops and multi-edges are allowed.  Slot order is part of the
    graph's identity: ``neighbor(x, i)`` always returns ``slots[x, i]``.
    Only :meth:`neighbor` and the walk kernels count as probes; the exact
    utilities in this module read the table directly.
    """

    def __init__(self, slots, check: bool = True):
        slots = np.ascontiguousarray(slots, dtype=np.int64)
        if slots.ndim != 2:
            raise UsageError("slots must be a 2-D array")
        self.slots = slots
        self.slots.setflags(write=False)
        self.n, self.d = slots.shape
        self._probes = 0
        self._lock = threading.Lock()
        self._ext = None
        if check:
            check_symmetric(self)

    @property
    def probe_counter(self) -> int:
        return self._probes

    def add_probes(self, count: int) -> None:
        with self._lock:
            self._probes += int(count)

    def neighbor(self, x: int, i: int) -> int:
        if not 0 <= x < self.n:
            raise UsageError(f"vertex {x} out of range [0, {self.n})")
        if not 0 <= i < self.d:
            raise UsageError(f"slot {i} out of range [0, {self.d})")
        self.add_probes(1)
        return int(self.slots[x, i])

    @property
    def step_table(self) -> np.ndarray:
        """(n, 2d) int32 table used by the lazy-walk kernel."""
        if self._ext is None:
            stay = np.repeat(np.arange(self.n, dtype=np.int32)[:, None], self.d, axis=1)
            self._ext = np.ascontiguousarray(
                np.concatenate([self.slots.astype(np.int32), stay], axis=1))
        return self._ext

    def adjacency(self):
        """Sparse adjacency A_G with multiplicities (self-loops on the diagonal)."""
        import scipy.sparse as sp

        rows = np.repeat(np.arange(self.n), self.d)
        a = sp.csr_matrix((np.ones(self.n * self.d), (rows, self.slots.ravel())),
                          shape=(self.n, self.n))
        a.sum_duplicates()
        return a

    def __repr__(self):
        return f"RegularGraph(n={self.n}, d={self.d})"


def check_symmetric(g: RegularGraph) -> None:
    """Raise unless every non-loop slot x->y is matched by a slot y->x."""
    x = np.repeat(np.arange(g.n), g.d)
    y = g.slots.ravel()
    if y.min(initial=0) < 0 or y.max(initial=0) >= g.n:
        raise UsageError("slot entry out of vertex range")
    keep = x != y
    fwd = np.sort(x[keep] * g.n + y[keep])
    bwd = np.sort(y[keep] * g.n + x[keep])
    if not np.array_equal(fwd, bwd):
        raise UsageError("slot table is not symmetric")


def degree_regularize(adjacency: Sequence[Iterable[int]], d: int) -> RegularGraph:
    """Pad each vertex's neighbor list with self-loops up to ``d`` slots."""
    n = len(adjacency)
    slots = np.empty((n, d), dtype=np.int64)
    for v, nbrs in enumerate(adjacency):
        nbrs = list(nbrs)
        if len(nbrs) > d:
            raise UsageError(f"vertex {v} has degree {len(nbrs)} > d={d}")
        slots[v, :len(nbrs)] = nbrs
        slots[v, len(nbrs):] = v
    return RegularGraph(slots)


def _as_mask(n: int, vertices, name: str) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.asarray(list(vertices) if not isinstance(vertices, np.ndarray) else vertices,
                     dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise UsageError(f"{name} contains out-of-range vertices")
    mask[idx] = True
    return mask


def _crossing(g: RegularGraph, inside: np.ndarray, region: np.ndarray) -> int:
    """Slots from ``inside`` vertices to ``region & ~inside`` vertices."""
    rows = g.slots[inside]
    dest = rows.ravel()
    return int(np.count_nonzero(region[dest] & ~inside[dest]))


def conductance_within(g: RegularGraph, S, C) -> float:
    """|E(S, C \\ S)| / (d |S|); self-loops never cross."""
    s_mask = _as_mask(g.n, S, "S")
    c_mask = _as_mask(g.n, C, "C")
    size = int(s_mask.sum())
    if size == 0:
        raise UsageError("S must be nonempty")
    if np.any(s_mask & ~c_mask):
        raise UsageError("S must be a subset of C")
    return _crossing(g, s_mask, c_mask) / (g.d * size)


def outer_conductance(g: RegularGraph, C) -> float:
    """|E(C, V \\ C)| / (d |C|)."""
    c_mask = _as_mask(g.n, C, "C")
    size = int(c_mask.sum())
    if size == 0:
        raise UsageError("C must be nonempty")
    return _crossing(g, c_mask, np.ones(g.n, dtype=bool)) / (g.d * size)


def inner_conductance(g: RegularGraph, C, limit: int = 20) -> float:
    """Exact min over S subset of C with |S| <= |C|/2 of conductance within C.

    Exponential in |C|; for larger sets use the spectral lower bound
    ``phi >= lambda_2`` style checks in :mod:`spectral_oracle.exact`.
    """
    members = np.unique(np.asarray(list(C), dtype=np.int64))
    c = members.size
    if c == 0:
        raise UsageError("C must be nonempty")
    if c == 1:
        return 1.0
    if c > limit:
        raise CapabilityError(
            f"|C|={c} exceeds exhaustive limit {limit}; use the spectral "
            "lower bound (exact.bottom_k_embedding on the induced cluster) instead")
    local = -np.ones(g.n, dtype=np.int64)
    local[members] = np.arange(c)
    local_adj = local[g.slots[members]]
    value, _ = min_subset_conductance(local_adj, g.d)
    return float(value)


@dataclass
class ClusterableInstance:
    graph: RegularGraph
    clusters: list[np.ndarray]
    k: int
    target_phi: float
    target_eps: float
    seed: int
    max_size_ratio: float = 4.0
    metadata: dict = field(default_factory=dict)

    @property
    def labels(self) -> np.ndarray:
        lab = np.empty(self.graph.n, dtype=np.int64)
        for i, c in enumerate(self.clusters):
            lab[c] = i
        return lab

    @property
    def eps_hat(self) -> float:
        return self.metadata["eps_hat"]

    @property
    def phi_hat(self) -> float:
        return self.metadata["phi_hat"]

    @property
    def min_cluster_size(self) -> int:
        return min(len(c) for c in self.clusters)


def _cluster_edges(size: int, d: int, rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """Union of random permutations (each adds degree 2), plus one perfect
    matching when d is odd.  Returns edge endpoint arrays in local ids."""
    parts = []
    for _ in range(d // 2):
        perm = rng.permutation(size)
        parts.append((np.arange(size), perm))
    if d % 2:
        if size % 2:
            raise GenerationError(f"odd d={d} needs even cluster sizes (got {size})")
        order = rng.permutation(size)
        parts.append((order[0::2], order[1::2]))
    return parts


def generate_clusterable(k: int, cluster_sizes: Sequence[int], d: int, p_cross: float,
                         seed: int, max_size_ratio: float = 4.0, lambda_floor: float = 0.05,
                         max_retries: int = 5, certify: bool = True) -> ClusterableInstance:
    """Random (k, phi, eps)-clusterable d-regular instance.

    Each cluster is an expander built from random permutations; then about
    ``p_cross * n / 4`` intra-cluster edge pairs ``(a,b), (c,e)`` from two
    different clusters are rewired to ``(a,c), (b,e)``, which keeps every
    degree at exactly d and gives each cluster roughly ``p_cross * |C|``
    boundary edges.
    """
    sizes = [int(s) for s in cluster_sizes]
    if len(sizes) != k:
        raise UsageError(f"expected {k} cluster sizes, got {len(sizes)}")
    if min(sizes) < d + 1:
        raise UsageError(f"cluster sizes must be >= d+1={d + 1}")
    if not 0 <= p_cross < d:
        raise UsageError("p_cross must lie in [0, d)")
    if max(sizes) / min(sizes) > max_size_ratio:
        raise UsageError(f"size ratio exceeds max_size_ratio={max_size_ratio}")

    attempts = []
    for attempt in range(max_retries):
        rng = np.random.default_rng([seed, attempt])
        inst = _build_instance(k, sizes, d, p_cross, rng, seed, max_size_ratio)
        if not certify:
            inst.metadata["certified"] = False
            return inst
        from .exact import certify_instance

        report = certify_instance(inst)
        attempts.append(report)
        if report["lambda_k1"] >= lambda_floor and report["lambda_k_ok"]:
            inst.metadata.update(report)
            inst.metadata["certified"] = True
            inst.metadata["attempt"] = attempt
            return inst
    raise GenerationError(
        f"expansion certificate failed after {max_retries} attempts "
        f"(floor {lambda_floor}): {attempts}")


def _build_instance(k, sizes, d, p_cross, rng, seed, max_size_ratio):
    n = sum(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    src_parts, dst_parts, owner_parts = [], [], []
    for i, size in enumerate(sizes):
        for a, b in _cluster_edges(size, d, rng):
            src_parts.append(a + offsets[i])
            dst_parts.append(b + offsets[i])
            owner_parts.append(np.full(a.size, i))
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    owner = np.concatenate(owner_parts)

    n_rewire = int(round(p_cross * n / 4)) if k > 1 else 0
    if n_rewire:
        weights = np.asarray(sizes, dtype=float) / n
        intra = np.flatnonzero(src != dst)
        pools = [list(rng.permutation(intra[owner[intra] == i])) for i in range(k)]
        for _ in range(n_rewire):
            i = rng.choice(k, p=weights)
            w = weights.copy()
            w[i] = 0
            j = rng.choice(k, p=w / w.sum())
            if not pools[i] or not pools[j]:
                raise GenerationError("ran out of intra-cluster edges to rewire")
            e1 = pools[i].pop()
            e2 = pools[j].pop()
            a, b = src[e1], dst[e1]
            c, e = src[e2], dst[e2]
            src[e1], dst[e1] = a, c
            src[e2], dst[e2] = b, e
            owner[e1] = owner[e2] = -1

    slots = [[] for _ in range(n)]
    for u, v in zip(src.tolist(), dst.tolist()):
        slots[u].append(v)
        slots[v].append(u)
    table = np.empty((n, d), dtype=np.int64)
    for v in range(n):
        row = np.asarray(slots[v], dtype=np.int64)
        if row.size != d:
            raise GenerationError(f"vertex {v} ended with degree {row.size} != {d}")
        table[v] = row[rng.permutation(d)]
    g = RegularGraph(table)
    clusters = [np.arange(offsets[i], offsets[i + 1]) for i in range(k)]
    outer = [outer_conductance(g, c) for c in clusters]
    inst = ClusterableInstance(
        graph=g, clusters=clusters, k=k, target_phi=float("nan"),
        target_eps=p_cross / d, seed=seed, max_size_ratio=max_size_ratio,
        metadata={"outer_conductance": outer, "eps_hat": max(outer), "p_cross": p_cross,
                  "sizes": sizes})
    return inst


def disjoint_cliques(sizes: Sequence[int], d: int) -> ClusterableInstance:
    """Disjoint cliques padded with self-loops to degree d (eps = 0)."""
    n = sum(sizes)
    if max(sizes) - 1 > d:
        raise UsageError("clique degree exceeds d")
    adjacency = []
    clusters = []
    start = 0
    for size in sizes:
        block = range(start, start + size)
        for v in block:
            adjacency.append([u for u in block if u != v])
        clusters.append(np.arange(start, start + size))
        start += size
    g = degree_regularize(adjacency, d)
    inst = ClusterableInstance(graph=g, clusters=clusters, k=len(sizes), target_phi=float("nan"),
                               target_eps=0.0, seed=0, max_size_ratio=max(sizes) / min(sizes),
                               metadata={"outer_conductance": [0.0] * len(sizes), "eps_hat": 0.0,
                                         "sizes": list(sizes)})
    from .exact import certify_instance

    inst.metadata.update(certify_instance(inst))
    inst.metadata["certified"] = True
    return inst


# ---------------------------------------------------------------- file format

def write_graph(path, g: RegularGraph, clusters: Sequence[np.ndarray] = ()) -> None:
    """Text format: ``n d k``, k lines ``start end`` (half-open id ranges),
    then n lines of d neighbor ids."""
    with open(path, "w") as fh:
        fh.write(f"{g.n} {g.d} {len(clusters)}\n")
        for c in clusters:
            c = np.asarray(c)
            if c.size and not np.array_equal(c, np.arange(c[0], c[0] + c.size)):
                raise UsageError("clusters must be contiguous id ranges to serialize")
            fh.write(f"{int(c[0])} {int(c[0]) + c.size}\n")
        for row in g.slots:
            fh.write(" ".join(map(str, row.tolist())) + "\n")


def read_graph(path) -> tuple[RegularGraph, list[np.ndarray]]:
    with open(path) as fh:
        n, d, k = map(int, fh.readline().split())
        clusters = []
        for _ in range(k):
            a, b = map(int, fh.readline().split())
            clusters.append(np.arange(a, b))
        slots = np.loadtxt(fh, dtype=np.int64, ndmin=2)
    if slots.shape != (n, d):
        raise UsageError(f"expected {n}x{d} slot table, got {slots.shape}")
    return RegularGraph(slots), clusters


def size_floor(n: int, k: int, max_size_ratio: float) -> float:
    """Default lower bound for the smallest cluster when sizes are unknown."""
    return n / (k * max_size_ratio)


def log2_ceil(k: int) -> int:
    return math.ceil(math.log2(k)) if k > 1 else 0
