"""Small dense linear algebra: symmetric eigendecomposition and
Gauss-Jordan inversion with a pivot floor."""

from __future__ import annotations

import numpy as np

from ._kernels import jacobi_eigh
from .graph import UsageError

JACOBI_LIMIT = 256


class SingularMatrix(ArithmeticError):
    pass


def symmetric_eig(m, method: str = "auto", tol: float = 1e-14, max_sweeps: int = 60):
    """Eigenvalues (descending) and orthonormal eigenvectors (columns).

    ``method`` is ``"jacobi"`` (cyclic Jacobi rotations), ``"lapack"``, or
    ``"auto"``, which uses Jacobi up to ``JACOBI_LIMIT`` rows and LAPACK above
    that, where the O(s^3)-per-sweep rotation loop gets slow.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise UsageError("matrix must be square")
    scale = np.abs(m).max(initial=0.0)
    if np.abs(m - m.T).max(initial=0.0) > 1e-12 * scale:
        raise UsageError("matrix is not symmetric within 1e-12 relative tolerance")
    m = 0.5 * (m + m.T)
    if method == "auto":
        method = "jacobi" if m.shape[0] <= JACOBI_LIMIT else "lapack"
    if method == "jacobi":
        w, v, _ = jacobi_eigh(m, tol, max_sweeps)
    elif method == "lapack":
        w, v = np.linalg.eigh(m)
    else:
        raise UsageError(f"unknown method {method!r}")
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def gauss_jordan_inverse(x, pivot_floor: float = 1e-10) -> np.ndarray:
    """Inverse by Gauss-Jordan elimination with partial pivoting.

    Raises SingularMatrix when a pivot falls below ``pivot_floor`` times
    the largest absolute entry of ``x``.
    """
    a = np.array(x, dtype=np.float64)
    r = a.shape[0]
    if a.shape != (r, r):
        raise UsageError("matrix must be square")
    floor = pivot_floor * np.abs(a).max(initial=0.0)
    aug = np.hstack([a, np.eye(r)])
    for col in range(r):
        p = col + int(np.argmax(np.abs(aug[col:, col])))
        if not abs(aug[p, col]) > floor:
            raise SingularMatrix(f"pivot {aug[p, col]:.3e} at column {col} below floor {floor:.3e}")
        if p != col:
            aug[[col, p]] = aug[[p, col]]
        aug[col] /= aug[col, col]
        for row in range(r):
            if row != col:
                aug[row] -= aug[row, col] * aug[col]
    return aug[:, r:]


def fixed_order_dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """a^T b for vectors or column stacks, summed in a fixed order so an
    entry does not depend on how many columns were batched with it (BLAS
    may reorder)."""
    a2 = a.reshape(a.shape[0], -1)
    b2 = b.reshape(b.shape[0], -1)
    out = (a2[:, :, None] * b2[:, None, :]).sum(axis=0)
    return out.reshape(a.shape[1:] + b.shape[1:])
