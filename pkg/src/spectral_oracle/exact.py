"""Dense ground truth: Laplacian spectrum, exact spectral embedding, cluster
means, projections, and the geometric quantities the oracle is checked
against."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .graph import CapabilityError, RegularGraph, UsageError

DENSE_LIMIT = 5000
WALK_DENSE_LIMIT = 50_000


class DegenerateGap(UserWarning):
    """lambda_k and lambda_{k+1} coincide, so <f_x, f_y> is not well defined."""


def normalized_laplacian(g: RegularGraph, limit: int = DENSE_LIMIT) -> np.ndarray:
    """L = I - A/d as a dense array (self-loops sit on the diagonal of A)."""
    if g.n > limit:
        raise CapabilityError(f"n={g.n} exceeds dense limit {limit}")
    a = np.zeros((g.n, g.n))
    np.add.at(a, (np.repeat(np.arange(g.n), g.d), g.slots.ravel()), 1.0)
    return np.eye(g.n) - a / g.d


def walk_operator(g: RegularGraph):
    """Sparse lazy-walk matrix M = (I + A/d) / 2."""
    import scipy.sparse as sp

    return (0.5 * sp.identity(g.n, format="csr") + g.adjacency() * (0.5 / g.d)).tocsr()


def exact_walk_distribution(g: RegularGraph, t: int, x: int, limit: int = WALK_DENSE_LIMIT) -> np.ndarray:
    """M^t 1_x by t sparse matrix-vector products."""
    return exact_walk_matrix(g, t, [x], limit)[:, 0]


def exact_walk_matrix(g: RegularGraph, t: int, starts: Sequence[int], limit: int = WALK_DENSE_LIMIT) -> np.ndarray:
    """Columns M^t 1_x for each start (the exact M^t S)."""
    if g.n > limit:
        raise CapabilityError(f"n={g.n} exceeds dense walk limit {limit}")
    m = walk_operator(g)
    starts = np.asarray(starts, dtype=np.int64)
    p = np.zeros((g.n, starts.size))
    p[starts, np.arange(starts.size)] = 1.0
    for _ in range(t):
        p = m @ p
    return p


def collision_variance(P: np.ndarray, Q: np.ndarray, R1: int, R2: int) -> np.ndarray:
    """Exact variance of m_a^T m_b when m_a (column a of P) and m_b
    (column b of Q) are empirical distributions of R1 and R2 independent
    samples.  Returned as a matrix over all column pairs (a, b)."""
    p = P.T @ Q
    ab2 = P.T @ (Q * Q)  # sum_i m_a(i) m_b(i)^2
    a2b = (P * P).T @ Q
    var = p - p * p + (R2 - 1) * (ab2 - p * p) + (R1 - 1) * (a2b - p * p)
    return np.maximum(var, 0.0) / (R1 * R2)


@dataclass
class SpectralEmbedding:
    k: int
    F: np.ndarray
    eigenvalues: np.ndarray  # lambda_1 .. lambda_{k+1}, ascending
    degenerate: bool = False

    @property
    def n(self) -> int:
        return self.F.shape[1]

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[self.k] - self.eigenvalues[self.k - 1])

    def gram(self, rows=None, cols=None) -> np.ndarray:
        a = self.F if rows is None else self.F[:, rows]
        b = self.F if cols is None else self.F[:, cols]
        return a.T @ b


def bottom_k_embedding(g: RegularGraph, k: int, limit: int = DENSE_LIMIT) -> SpectralEmbedding:
    """Bottom-k eigenvectors of L as the rows of F (f_x is column x)."""
    if not 1 <= k < g.n:
        raise UsageError(f"need 1 <= k < n, got k={k}, n={g.n}")
    lap = normalized_laplacian(g, limit)
    top = min(k, g.n - 1)
    w, v = scipy.linalg.eigh(lap, subset_by_index=[0, top], driver="evr")
    emb = SpectralEmbedding(k=k, F=np.ascontiguousarray(v[:, :k].T), eigenvalues=w)
    if abs(w[k] - w[k - 1]) <= 1e-10:
        emb.degenerate = True
        warnings.warn(f"lambda_k={w[k - 1]:.3e} and lambda_k+1={w[k]:.3e} coincide",
                      DegenerateGap, stacklevel=2)
    return emb


def exact_dot(emb: SpectralEmbedding, x: int, y: int) -> float:
    return float(emb.F[:, x] @ emb.F[:, y])


def _parts(partition, n: int | None = None) -> list[np.ndarray]:
    return [np.asarray(c, dtype=np.int64) for c in partition]


@dataclass
class ClusterMeans:
    mu: np.ndarray  # column i is mu_i
    sizes: np.ndarray

    def norms2(self) -> np.ndarray:
        return (self.mu ** 2).sum(axis=0)


def cluster_means(emb: SpectralEmbedding, partition) -> ClusterMeans:
    parts = _parts(partition)
    mu = np.stack([emb.F[:, c].mean(axis=1) for c in parts], axis=1)
    return ClusterMeans(mu=mu, sizes=np.array([c.size for c in parts]))


def center_vector(emb: SpectralEmbedding, members) -> np.ndarray:
    """Coordinates of the implicit center (1/|B|) sum_{y in B} f_y."""
    members = np.asarray(members, dtype=np.int64)
    return emb.F[:, members].mean(axis=1)


def directional_variance(emb: SpectralEmbedding, partition, alpha) -> float:
    """sum_i sum_{x in C_i} <f_x - mu_i, alpha>^2 for a unit vector alpha."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if abs(np.linalg.norm(alpha) - 1.0) > 1e-9:
        raise UsageError("alpha must be a unit vector")
    proj = alpha @ emb.F
    total = 0.0
    for c in _parts(partition):
        dev = proj[c] - proj[c].mean()
        total += float(dev @ dev)
    return total


def tail_fraction(u, beta: float, min_cluster_size: int) -> float:
    """Fraction of coordinates with |u(x)| >= beta * sqrt(10 / min_cluster_size)."""
    if not beta > 1:
        raise UsageError("beta must exceed 1")
    u = np.asarray(u, dtype=np.float64)
    threshold = beta * math.sqrt(10.0 / min_cluster_size)
    return float(np.count_nonzero(np.abs(u) >= threshold)) / u.size


def projector_complement(vectors: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of span(columns), built by
    Gram-Schmidt with re-orthogonalization."""
    k = vectors.shape[0]
    basis: list[np.ndarray] = []
    for j in range(vectors.shape[1]):
        v = vectors[:, j].astype(np.float64).copy()
        for _ in range(2):
            for b in basis:
                v -= (b @ v) * b
        norm = np.linalg.norm(v)
        if norm > 1e-12 * max(1.0, np.linalg.norm(vectors[:, j])):
            basis.append(v / norm)
    pi = np.eye(k)
    for b in basis:
        pi -= np.outer(b, b)
    return pi


@dataclass
class ProjectedQuantities:
    pi: np.ndarray
    means: ClusterMeans
    projected_means: np.ndarray
    emb: SpectralEmbedding = field(repr=False)

    def dot(self, x: int, y: int) -> float:
        return float(self.emb.F[:, x] @ self.pi @ self.emb.F[:, y])

    def norm2(self, i: int) -> float:
        return float(self.projected_means[:, i] @ self.projected_means[:, i])


def exact_projected_quantities(emb: SpectralEmbedding, partition, removed: Sequence[int]) -> ProjectedQuantities:
    means = cluster_means(emb, partition)
    removed = list(removed)
    pi = projector_complement(means.mu[:, removed]) if removed else np.eye(emb.k)
    return ProjectedQuantities(pi=pi, means=means, projected_means=pi @ means.mu, emb=emb)


def mean_embedding_spectrum(means: ClusterMeans) -> np.ndarray:
    """Eigenvalues of sum_i |C_i| mu_i mu_i^T (close to 1 on good instances)."""
    m = (means.mu * means.sizes) @ means.mu.T
    return np.linalg.eigvalsh(0.5 * (m + m.T))


def certify_instance(inst, limit: int = DENSE_LIMIT) -> dict:
    """Spectral certificate recorded in generator metadata."""
    from .graph import outer_conductance

    k = inst.k
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateGap)
        emb = bottom_k_embedding(inst.graph, k, limit)
    outer = [outer_conductance(inst.graph, c) for c in inst.clusters]
    eps_hat = max(outer)
    lam_k = float(emb.eigenvalues[k - 1])
    lam_k1 = float(emb.eigenvalues[k])
    return {
        "lambda_k": lam_k,
        "lambda_k1": lam_k1,
        "phi_hat": math.sqrt(2.0 * max(lam_k1, 0.0)),
        "eps_hat": eps_hat,
        "outer_conductance": outer,
        "lambda_k_ok": lam_k <= 2.0 * eps_hat + 1e-9,
    }
