"""Sparse saddle-point solves with bordered constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-9


class SingularSystemError(RuntimeError):
    """Raised when a factorization breaks down; ``pivot`` locates it if known."""

    def __init__(self, message, pivot=None):
        super().__init__(message if pivot is None else f"{message} (pivot {pivot})")
        self.pivot = pivot


@dataclass
class SparseSystem:
    """Square sparse system with optional bordered constraint rows.

    ``constraints`` holds rows C (m, n) that are appended as
    ``[[A, C^T], [C, 0]]`` with right-hand side ``constraint_rhs``.

    ``kernel`` optionally gives the null vector ``e`` of a symmetric matrix
    whose one-dimensional kernel is fixed by a single constraint row.  The
    solver then avoids the dense bordered row (which ruins the fill of the
    sparse factorization) and solves an equivalent pinned system instead.
    """

    matrix: sp.spmatrix
    rhs: np.ndarray
    constraints: sp.spmatrix | None = None
    constraint_rhs: np.ndarray | None = field(default=None)
    kernel: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        n, m = self.matrix.shape
        if n != m:
            raise ValueError(f"matrix is not square: {self.matrix.shape}")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape[0] != n:
            raise ValueError(f"rhs length {self.rhs.shape[0]} != {n}")
        if self.constraints is not None:
            self.constraints = sp.csr_matrix(self.constraints)
            if self.constraints.shape[1] != n:
                raise ValueError("constraint width does not match the matrix")
            nc = self.constraints.shape[0]
            if self.constraint_rhs is None:
                self.constraint_rhs = np.zeros((nc,) + self.rhs.shape[1:])

    def bordered(self):
        """Full matrix and right-hand side including constraint rows."""
        if self.constraints is None:
            return self.matrix, self.rhs
        C = self.constraints
        nc = C.shape[0]
        K = sp.bmat([[self.matrix, C.T], [C, sp.csr_matrix((nc, nc))]], format="csc")
        b = np.concatenate([self.rhs, self.constraint_rhs])
        return K, b


def is_symmetric(A, n_samples=200, tol=1e-13, seed=0):
    """Check A[i, j] == A[j, i] on random stored entries (relative to max |A|)."""
    A = sp.coo_matrix(A)
    if A.nnz == 0:
        return True
    rng = np.random.default_rng(seed)
    pick = rng.choice(A.nnz, size=min(n_samples, A.nnz), replace=False)
    Acsr = A.tocsr()
    scale = np.abs(A.data).max()
    a = np.asarray(Acsr[A.row[pick], A.col[pick]]).ravel()
    b = np.asarray(Acsr[A.col[pick], A.row[pick]]).ravel()
    return bool(np.all(np.abs(a - b) <= tol * scale))


def _dense_pivot(K):
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        lu, piv = sla.lu_factor(K.toarray() if sp.issparse(K) else K, check_finite=False)
    d = np.abs(np.diag(lu))
    bad = np.flatnonzero(d <= 1e-14 * max(d.max(), 1e-300))
    return int(bad[0]) if bad.size else None


def solve_linear(system, context="", check=True, extended_steps=0):
    """Solve a :class:`SparseSystem` (or a ``(matrix, rhs)`` pair) by sparse LU.

    ``extended_steps`` adds iterative refinement sweeps whose residuals are
    evaluated in extended precision (``np.longdouble``); this recovers
    digits lost to cancellation when parts of the solution are much larger
    than the quantities of interest.

    Returns the solution without the constraint multipliers and, if the
    system is bordered, the multipliers as a second value.
    """
    if not isinstance(system, SparseSystem):
        system = SparseSystem(*system)
    if system.kernel is not None and system.constraints is not None \
            and system.constraints.shape[0] == 1:
        return _solve_pinned(system, context, check, extended_steps)
    K, b = system.bordered()
    K = sp.csc_matrix(K)
    n = system.matrix.shape[0]
    try:
        lu = spla.splu(K, permc_spec="COLAMD")
    except RuntimeError as exc:
        pivot = _dense_pivot(K) if K.shape[0] <= 3000 else None
        raise SingularSystemError(f"singular system{': ' + context if context else ''}: {exc}",
                                  pivot) from None
    udiag = np.abs(lu.U.diagonal())
    small = np.flatnonzero(udiag <= 1e-13 * udiag.max())
    if small.size:
        raise SingularSystemError(f"numerically singular system{': ' + context if context else ''}",
                                  int(lu.perm_c[small[0]]))
    x = lu.solve(b)
    if check:
        res = K @ x - b
        nb = np.linalg.norm(b)
        rel = np.linalg.norm(res) / nb if nb > 0 else np.linalg.norm(res)
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            # one step of iterative refinement before giving up
            x = x - lu.solve(res)
            res = K @ x - b
            rel = np.linalg.norm(res) / nb if nb > 0 else np.linalg.norm(res)
            if not np.isfinite(rel) or rel > RESIDUAL_TOL:
                raise SingularSystemError(
                    f"linear solve residual {rel:.3e} above tolerance{': ' + context if context else ''}")
    if extended_steps:
        x = _extended_refinement(K, b, x, lu, extended_steps)
    if system.constraints is None:
        return x
    return x[:n], x[n:]


def _solve_pinned(system, context, check, extended_steps):
    """Bordered solve for a symmetric matrix with known kernel ``e``.

    With ``[[A, c], [c^T, 0]] [x; l] = [b; g]`` the multiplier is
    ``l = e.b / e.c``; ``A x = b - c l`` is then consistent and solved with
    the dof of largest ``|e_j|`` pinned to zero, and ``x`` is shifted along
    ``e`` to satisfy the constraint.
    """
    A = system.matrix
    e = np.asarray(system.kernel, dtype=float)
    c = np.asarray(system.constraints.todense()).ravel()
    g = np.asarray(system.constraint_rhs, dtype=float).reshape((1,) + system.rhs.shape[1:])[0]
    ec = float(e @ c)
    if abs(ec) <= 1e-14 * np.linalg.norm(e) * np.linalg.norm(c):
        raise SingularSystemError(f"constraint does not fix the kernel{': ' + context if context else ''}")
    b = system.rhs
    lam = np.tensordot(e, b, axes=(0, 0)) / ec
    rhs = b - np.multiply.outer(c, lam)
    j = int(np.argmax(np.abs(e)))
    keep = np.r_[0:j, j + 1:A.shape[0]]
    Ar = A[keep][:, keep]
    xr = solve_linear(SparseSystem(Ar, rhs[keep]), context, check, extended_steps)
    x = np.zeros_like(rhs)
    x[keep] = xr
    alpha = (g - np.tensordot(c, x, axes=(0, 0))) / ec
    x = x + np.multiply.outer(e, alpha)
    if check:
        res = A @ x - rhs
        nb = np.linalg.norm(b)
        rel = np.linalg.norm(res) / nb if nb > 0 else np.linalg.norm(res)
        if not np.isfinite(rel) or rel > RESIDUAL_TOL:
            raise SingularSystemError(
                f"linear solve residual {rel:.3e} above tolerance{': ' + context if context else ''}")
    return x, np.atleast_1d(lam)


def _extended_refinement(K, b, x, lu, steps):
    Kl = K.astype(np.longdouble)
    bl = np.asarray(b, dtype=np.longdouble)
    xl = np.asarray(x, dtype=np.longdouble)
    for _ in range(steps):
        r = bl - Kl @ xl
        dx = lu.solve(np.asarray(r, dtype=float))
        xl += dx
        if np.abs(dx).max() <= 1e-18 * np.abs(xl).max():
            break
    return np.asarray(xl, dtype=float)
