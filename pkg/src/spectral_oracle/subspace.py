"""Dot products in the orthogonal complement of removed approximate centers.

A center is a multiset B of vertices standing for (1/|B|) sum_{y in B} f_y.
With removed centers B_1..B_r, X(i,j) averages the approximate dots over
member pairs, h_x(i) averages <f_z, f_x> over z in B_i, and

    <f_x, P f_y>_apx = <f_x, f_y>_apx - h_x^T X^{-1} h_y.

Every approximate dot here is u_x . u_y for the oracle's per-vertex
vectors, so those averages are dots with mean vectors; they are computed
that way instead of pair by pair, which gives the same values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dot_oracle import DotProductOracle
from .graph import UsageError
from .linalg import SingularMatrix, gauss_jordan_inverse
from .linalg import fixed_order_dot as _pair

PIVOT_FLOOR = 1e-10


class ContextFailure(ArithmeticError):
    """The removed centers are (numerically) linearly dependent."""


@dataclass(frozen=True, order=True)
class CenterRef:
    members: tuple[int, ...]

    def __post_init__(self):
        if len(self.members) == 0:
            raise UsageError("a center needs at least one member")

    @classmethod
    def of(cls, members: Iterable[int]) -> "CenterRef":
        return cls(tuple(sorted(int(v) for v in members)))

    def __len__(self) -> int:
        return len(self.members)


def center_vector(oracle: DotProductOracle, B: CenterRef) -> np.ndarray:
    """Mean of the members' vectors, summed in member order."""
    u = oracle.embeddings(B.members)
    return u.sum(axis=1) / len(B)


@dataclass
class SubspaceContext:
    oracle: DotProductOracle
    removed: list[CenterRef]
    gram_X: np.ndarray
    x_inverse: np.ndarray
    xi_inner: float
    inner: DotProductOracle | None = None
    _centers: np.ndarray = field(default=None, repr=False)

    @property
    def r(self) -> int:
        return len(self.removed)

    def h(self, u: np.ndarray) -> np.ndarray:
        """Averaged dots of the removed centers with vector(s) u."""
        if self.r == 0:
            return np.zeros((0,) + u.shape[1:])
        return _pair(self._centers, u)

    def project_dot(self, ua: np.ndarray, ub: np.ndarray) -> np.ndarray:
        """<a, P b>_apx for vectors (or column stacks) ua, ub."""
        raw = _pair(ua, ub)
        if self.r == 0:
            return raw
        return raw - _pair(self.h(ua), _pair(self.x_inverse.T, self.h(ub)))


def identity_context(oracle: DotProductOracle) -> SubspaceContext:
    """Context with nothing removed (P = I)."""
    return SubspaceContext(oracle=oracle, removed=[], gram_X=np.zeros((0, 0)),
                           x_inverse=np.zeros((0, 0)), xi_inner=oracle.data.params.xi,
                           _centers=np.zeros((oracle.data.params.k, 0)))


def refined_oracle(oracle: DotProductOracle, xi_inner: float) -> DotProductOracle:
    """Oracle for center members at the tighter accuracy xi_inner: R_query
    grows by (xi / xi_inner)^2."""
    from dataclasses import replace

    from .dot_oracle import OracleData

    data = oracle.data
    p = data.params
    factor = (p.xi / xi_inner) ** 2
    params = replace(p, R_query=max(1, int(np.ceil(p.R_query * factor))), xi=xi_inner)
    inner = OracleData(n=data.n, params=params, seed=data.seed, I_S=data.I_S, qhats=data.qhats,
                       psi=data.psi, eigen_report=data.eigen_report, init_probes=data.init_probes)
    return DotProductOracle(oracle.g, inner)


def build_subspace(oracle: DotProductOracle, removed: Sequence[CenterRef], xi_inner: float | None = None,
                   inner: DotProductOracle | None = None) -> SubspaceContext:
    """X(i,j) = mean over member pairs of <f_a, f_b>_apx, inverted by
    Gauss-Jordan.  Members use ``inner`` (default: the query oracle, i.e.
    xi_inner = xi)."""
    removed = list(removed)
    if not removed:
        raise UsageError("removed must be nonempty; use identity_context for P = I")
    xi = oracle.data.params.xi
    if inner is None:
        inner = oracle if xi_inner is None or xi_inner >= xi else refined_oracle(oracle, xi_inner)
    xi_inner = inner.data.params.xi
    centers = np.stack([center_vector(inner, B) for B in removed], axis=1)
    X = _pair(centers, centers)
    try:
        Xinv = gauss_jordan_inverse(X, PIVOT_FLOOR)
    except SingularMatrix as exc:
        raise ContextFailure(str(exc)) from exc
    if np.abs(X @ Xinv - np.eye(len(removed))).max() > 1e-6:
        raise ContextFailure("X inverse residual above 1e-6")
    return SubspaceContext(oracle=oracle, removed=removed, gram_X=X, x_inverse=Xinv,
                           xi_inner=xi_inner, inner=inner, _centers=centers)


def dot_on_subspace(x: int, y: int, ctx: SubspaceContext) -> float:
    """<f_x, P f_y>_apx."""
    o = ctx.oracle
    return float(ctx.project_dot(o.embedding(x), o.embedding(y)))


def _center_for(ctx: SubspaceContext, B: CenterRef) -> np.ndarray:
    return center_vector(ctx.inner or ctx.oracle, B)


def dot_with_projected_center(x: int, B: CenterRef, ctx: SubspaceContext) -> float:
    """(1/|B|) sum_{y in B} <f_x, P f_y>_apx."""
    return float(ctx.project_dot(ctx.oracle.embedding(x), _center_for(ctx, B)))


@dataclass(frozen=True)
class ProjectedNorm:
    value: float
    raw: float


def projected_center_norm(B: CenterRef, ctx: SubspaceContext) -> ProjectedNorm:
    """(1/|B|) sum_{x in B} <f_x, P mu_B>_apx, clamped at 0 (raw kept)."""
    c = _center_for(ctx, B)
    raw = float(ctx.project_dot(c, c))
    return ProjectedNorm(value=max(raw, 0.0), raw=raw)


def membership_scores(xs, centers: Sequence[CenterRef], ctx: SubspaceContext) -> np.ndarray:
    """len(xs) x len(centers) matrix of <f_x, P mu_B>_apx."""
    if len(centers) == 0:
        return np.zeros((len(xs), 0))
    ux = ctx.oracle.embeddings(xs)
    cs = np.stack([_center_for(ctx, B) for B in centers], axis=1)
    return np.atleast_2d(ctx.project_dot(ux, cs))
