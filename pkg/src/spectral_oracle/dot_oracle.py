"""Preprocessing and queries for approximate spectral dot products.

``initialize_oracle`` builds the sketch D = (Psi, Q_1..Q_m, I_S) from
random walks started at a uniform vertex sample; ``spectral_dot_product``
answers <f_x, f_y> from fresh walks at x and y.
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from ._kernels import project_columns
from .graph import RegularGraph, UsageError
from .linalg import fixed_order_dot, symmetric_eig
from .randomness import Seed, Tag, as_seed, sample_vertices
from .walks import (TransitionSample, endpoint_counts, estimate_collision_probabilities,
                    estimate_transition_matrix, run_random_walks)

MAGIC = b"SPECORC1"


class InitFailure(RuntimeError):
    """The k-th eigenvalue of (n/s) * Gram fell below the floor."""

    def __init__(self, message: str, eigen_report):
        super().__init__(message)
        self.eigen_report = list(eigen_report)


def default_walk_length(n: int, phi: float, c_t: float = 20.0) -> int:
    return max(1, math.ceil(c_t * math.log(n) / phi ** 2))


def default_repetitions(n: int) -> int:
    return 2 * math.ceil(math.log2(max(n, 2))) + 1


@dataclass(frozen=True)
class OracleParams:
    k: int
    t: int
    R_init: int
    R_query: int
    s: int
    m: int
    delta: float = 0.5
    xi: float = 0.5
    eig_floor: float = 1e-9

    def __post_init__(self):
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if min(self.R_init, self.R_query, self.s) < 1:
            raise UsageError("R_init, R_query and s must be >= 1")
        if self.m < 1 or self.m % 2 == 0:
            raise UsageError("m must be a positive odd integer")
        if not 0 < self.delta <= 0.5:
            raise UsageError("delta must lie in (0, 1/2]")
        if self.t < 0:
            raise UsageError("t must be >= 0")

    @classmethod
    def desk_scale(cls, n: int, k: int, phi: float, delta: float = 0.5, xi: float = 0.5,
                   c_R: float = 20.0, c_s: float = 10.0, c_t: float = 20.0, m: int | None = None,
                   **overrides) -> "OracleParams":
        """R_init = c_R n^(1-delta) k^2/xi^2, R_query = c_R n^delta k^2/xi^2,
        s = c_s k^2 ceil(ln n), t = ceil(c_t ln n / phi^2)."""
        base = dict(
            k=k, delta=delta, xi=xi,
            t=default_walk_length(n, phi, c_t),
            R_init=max(1, math.ceil(c_R * n ** (1 - delta) * k * k / xi ** 2)),
            R_query=max(1, math.ceil(c_R * n ** delta * k * k / xi ** 2)),
            s=max(k, math.ceil(c_s * k * k * math.ceil(math.log(n)))),
            m=default_repetitions(n) if m is None else m,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class OracleData:
    n: int
    params: OracleParams
    seed: Seed
    I_S: np.ndarray
    qhats: list[TransitionSample]
    psi: np.ndarray
    eigen_report: np.ndarray
    init_probes: int = 0
    _rows: list = field(default_factory=list, repr=False)
    _factor: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        # Q_i^T m needs rows of Q_i indexed by the walk support of m
        self._rows = [q.count_matrix().tocsr() for q in self.qhats]
        w, v = symmetric_eig(self.psi, method="lapack")
        keep = w[: self.params.k].clip(min=0.0)
        self._factor = v[:, : self.params.k] * np.sqrt(keep)

    def alpha(self, g: RegularGraph, x: int) -> np.ndarray:
        """Entrywise median over i of Q_i^T m_x^i, as integer counts
        (scaled by R_init * R_query)."""
        p = self.params
        reps = []
        for i, rows in enumerate(self._rows):
            dist = run_random_walks(g, p.R_query, p.t, x, self.seed, Tag.WALK_QUERY, rep=i)
            reps.append(rows[dist.vertices].T @ dist.counts)
        stack = np.stack(reps).astype(np.int64)
        return np.partition(stack, p.m // 2, axis=0)[p.m // 2]

    def alpha_batch(self, g: RegularGraph, xs) -> np.ndarray:
        """Rows alpha(x) for each x in ``xs``; same keys and values as
        :meth:`alpha`, with the walks of all vertices run in one batch."""
        p = self.params
        xs = np.asarray(xs, dtype=np.int64)
        reps = []
        for i, rows in enumerate(self._rows):
            counts = endpoint_counts(g, xs, i, p.R_query, p.t, self.seed, Tag.WALK_QUERY)
            reps.append((rows.T @ counts).toarray().T.astype(np.int64))
        return np.partition(np.stack(reps), p.m // 2, axis=0)[p.m // 2]

    def alpha_scaled(self, g: RegularGraph, x: int) -> np.ndarray:
        return self.alpha(g, x) / (self.params.R_init * self.params.R_query)

    def embed(self, alpha_scaled: np.ndarray) -> np.ndarray:
        """k-vector u with u_x . u_y = alpha_x^T Psi alpha_y (columns map
        to columns when given a matrix)."""
        a = np.asarray(alpha_scaled, dtype=np.float64)
        u = project_columns(self._factor, np.ascontiguousarray(a.reshape(a.shape[0], -1)))
        return u[:, 0] if a.ndim == 1 else u

    def to_bytes(self) -> bytes:
        return dumps(self)


def initialize_oracle(g: RegularGraph, params: OracleParams, seed) -> OracleData:
    seed = as_seed(seed)
    p = params
    if p.s < p.k:
        raise UsageError("s must be >= k")
    before = g.probe_counter
    n = g.n
    I_S = sample_vertices(seed, Tag.SAMPLE_IS, p.s, n, replace=True)
    qhats = [estimate_transition_matrix(g, I_S, p.R_init, p.t, seed, rep=i, tag=Tag.WALK_INIT)
             for i in range(p.m)]
    gram = estimate_collision_probabilities(g, I_S, p.R_init, p.t, p.m, seed)
    w, v = symmetric_eig((n / p.s) * gram.matrix)
    report = w[: p.k + 1].copy()
    if not w[p.k - 1] > p.eig_floor:
        raise InitFailure(f"k-th eigenvalue {w[p.k - 1]:.3e} <= floor {p.eig_floor:.1e}", report)
    wk = v[:, : p.k]
    psi = (n / p.s) * (wk / w[: p.k] ** 2) @ wk.T
    psi = 0.5 * (psi + psi.T)
    return OracleData(n=n, params=p, seed=seed, I_S=I_S, qhats=qhats, psi=psi,
                      eigen_report=report, init_probes=g.probe_counter - before)


def spectral_dot_product(g: RegularGraph, x: int, y: int, D: OracleData) -> float:
    """alpha_x^T Psi alpha_y."""
    ax = D.alpha_scaled(g, x)
    ay = ax if x == y else D.alpha_scaled(g, y)
    return float(ax @ D.psi @ ay)


class DotProductOracle:
    """Caching front end over OracleData.

    Query walks are keyed by (x, repetition, walk), so alpha_x is a pure
    function of x and can be memoized; the cache changes cost, not answers.
    Dots are computed through the rank-k factor of Psi, which agrees with
    alpha_x^T Psi alpha_y up to rounding and is exactly symmetric.
    """

    def __init__(self, g: RegularGraph, data: OracleData):
        self.g = g
        self.data = data
        self._emb: dict[int, np.ndarray] = {}
        self._lock = threading.Lock()
        self.query_probes = 0

    @property
    def n(self) -> int:
        return self.data.n

    def embedding(self, x: int) -> np.ndarray:
        x = int(x)
        u = self._emb.get(x)
        if u is None:
            before = self.g.probe_counter
            u = self.data.embed(self.data.alpha_scaled(self.g, x))
            with self._lock:
                self.query_probes += self.g.probe_counter - before
                self._emb[x] = u
        return u

    def embeddings(self, xs) -> np.ndarray:
        """k x len(xs) matrix of per-vertex vectors (missing ones batched)."""
        xs = np.asarray(xs, dtype=np.int64).ravel()
        missing = sorted(set(xs.tolist()) - self._emb.keys())
        if missing:
            before = self.g.probe_counter
            a = self.data.alpha_batch(self.g, missing)
            scaled = a / (self.data.params.R_init * self.data.params.R_query)
            u = self.data.embed(scaled.T)
            with self._lock:
                self.query_probes += self.g.probe_counter - before
                for j, x in enumerate(missing):
                    self._emb[x] = u[:, j].copy()
        if xs.size == 0:
            return np.zeros((self.data.params.k, 0))
        return np.stack([self._emb[x] for x in xs.tolist()], axis=1)

    def warm(self, xs) -> None:
        self.embeddings(xs)

    def dot(self, x: int, y: int) -> float:
        return float(fixed_order_dot(self.embedding(x), self.embedding(y)))

    def dots(self, xs, ys) -> np.ndarray:
        return fixed_order_dot(self.embeddings(xs), self.embeddings(ys))


# ------------------------------------------------------------- serialization
#
# little-endian layout:
#   magic[8] | header struct | eigen_report f64[k+1] | I_S i64[s]
#   | m blocks of (nnz u64, indptr i64[s+1], indices i64[nnz], counts i64[nnz])
#   | psi f64[s*s] row-major

_HEADER = struct.Struct("<QIIIIQQdddQQQ")


def dumps(D: OracleData) -> bytes:
    p = D.params
    lo = D.seed.root & ((1 << 64) - 1)
    hi = D.seed.root >> 64
    out = [MAGIC, _HEADER.pack(D.n, p.k, p.s, p.m, p.t, p.R_init, p.R_query, p.delta, p.xi,
                               p.eig_floor, lo, hi, D.init_probes)]
    report = np.full(p.k + 1, np.nan)
    report[: D.eigen_report.size] = D.eigen_report
    out.append(report.astype("<f8").tobytes())
    out.append(D.I_S.astype("<i8").tobytes())
    for q in D.qhats:
        out.append(struct.pack("<Q", q.indices.size))
        out.append(q.indptr.astype("<i8").tobytes())
        out.append(q.indices.astype("<i8").tobytes())
        out.append(q.counts.astype("<i8").tobytes())
    out.append(np.ascontiguousarray(D.psi).astype("<f8").tobytes())
    return b"".join(out)


def loads(buf: bytes) -> OracleData:
    if buf[:8] != MAGIC:
        raise UsageError("not an oracle file (bad magic)")
    pos = 8
    n, k, s, m, t, R_init, R_query, delta, xi, floor, lo, hi, probes = _HEADER.unpack_from(buf, pos)
    pos += _HEADER.size

    def take(count, dtype):
        nonlocal pos
        arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr.copy()

    params = OracleParams(k=k, t=t, R_init=R_init, R_query=R_query, s=s, m=m, delta=delta, xi=xi,
                          eig_floor=floor)
    report = take(k + 1, "<f8")
    I_S = take(s, "<i8").astype(np.int64)
    qhats = []
    for _ in range(m):
        (nnz,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        indptr = take(s + 1, "<i8").astype(np.int64)
        indices = take(nnz, "<i8").astype(np.int64)
        counts = take(nnz, "<i8").astype(np.int64)
        qhats.append(TransitionSample(I_S=I_S, R=R_init, t=t, n=n, indptr=indptr, indices=indices,
                                      counts=counts))
    psi = take(s * s, "<f8").astype(np.float64).reshape(s, s)
    if pos != len(buf):
        raise UsageError(f"trailing bytes in oracle file ({len(buf) - pos})")
    report = report[~np.isnan(report)]
    return OracleData(n=n, params=params, seed=Seed((hi << 64) | lo), I_S=I_S, qhats=qhats, psi=psi,
                      eigen_report=report, init_probes=probes)


def save_oracle(path, D: OracleData) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(D))


def load_oracle(path) -> OracleData:
    with open(path, "rb") as fh:
        return loads(fh.read())


def params_dict(p: OracleParams) -> dict:
    return asdict(p)


def with_overrides(p: OracleParams, **kw) -> OracleParams:
    return replace(p, **kw)
