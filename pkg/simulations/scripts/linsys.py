"""Sparse linear systems with a residual guarantee.

Small systems (n <= direct_limit) go through a SuperLU factorization that is cached on
the shared operator, so every Picard iteration of a step reuses one factorization.
Larger systems use ILU-preconditioned BiCGSTAB with a GMRES retry. Whatever the path,
the relative residual ||Ax - b|| / max(||b||, 1e-30) is recomputed and must be <= tol.
"""
from __future__ import annotations
import logging
from dataclasses import dataclass, field
from typing import Optional
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

RESIDUAL_FLOOR = 1e-30
DEFAULT_TOL = 1e-10
DIRECT_LIMIT = 60000


class LinearSolverError(RuntimeError):
    def __init__(self, msg: str, residual: float = float('nan')):
        super().__init__(msg)
        self.residual = residual


class SingularSystemError(LinearSolverError):
    pass


@dataclass
class _Operator:
    matrix: sp.csr_matrix
    lu: Optional[object] = None
    ilu: Optional[object] = None


@dataclass(frozen=True)
class SparseSystem:
    n_unknowns: int
    operator: _Operator = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    symmetric: bool = False

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.operator.matrix

    def with_rhs(self, rhs) -> 'SparseSystem':
        """Same (sealed) matrix, new right-hand side; shares any cached factorization."""
        rhs = np.asarray(rhs, dtype=float).ravel()
        if rhs.shape != (self.n_unknowns,):
            raise ValueError(f'rhs length {rhs.size} != {self.n_unknowns}')
        return SparseSystem(self.n_unknowns, self.operator, rhs, self.symmetric)


def seal(matrix, rhs, symmetric: bool = False) -> SparseSystem:
    A = sp.csr_matrix(matrix, dtype=float)
    A.sum_duplicates()
    A.eliminate_zeros()
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f'matrix must be square, got {A.shape}')
    rhs = np.asarray(rhs, dtype=float).ravel()
    if rhs.shape != (n,):
        raise ValueError(f'rhs length {rhs.size} != {n}')
    zero_diag = np.flatnonzero(A.diagonal() == 0.0)
    if zero_diag.size:
        raise SingularSystemError(f'{zero_diag.size} row(s) with zero diagonal, first at {zero_diag[0]}')
    return SparseSystem(n, _Operator(A), rhs, symmetric)


def assemble(n: int, rows, cols, vals, rhs, symmetric: bool = False) -> SparseSystem:
    """Build from coordinate entries; duplicates are summed."""
    rows, cols = np.asarray(rows), np.asarray(cols)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise ValueError(f'entry index out of range for n = {n}')
    return seal(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)), rhs, symmetric)


def relative_residual(sys: SparseSystem, x: np.ndarray) -> float:
    b = sys.rhs
    return float(np.linalg.norm(sys.matrix @ x - b) / max(np.linalg.norm(b), RESIDUAL_FLOOR))


@dataclass
class SolveResult:
    x: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def solve(sys: SparseSystem, tol: float = DEFAULT_TOL, max_iter: Optional[int] = None,
          direct_limit: int = DIRECT_LIMIT) -> SolveResult:
    if not tol > 0:
        raise ValueError(f'tol must be positive, got {tol}')
    n = sys.n_unknowns
    if not np.any(sys.rhs):
        return SolveResult(np.zeros(n), 0.0, 'trivial')
    max_iter = 10 * n if max_iter is None else int(max_iter)
    op = sys.operator
    if n <= direct_limit:
        if op.lu is None:
            try:
                op.lu = spla.splu(op.matrix.tocsc())
            except RuntimeError as exc:
                raise SingularSystemError(f'factorization failed: {exc}') from exc
        x = op.lu.solve(sys.rhs)
        if not np.all(np.isfinite(x)):
            raise SingularSystemError('direct solve produced non-finite values')
        method, its = 'splu', 1
    else:
        x, its, method = _krylov(sys, tol, max_iter)
    res = relative_residual(sys, x)
    if not res <= tol:
        raise LinearSolverError(f'{method}: relative residual {res:.3e} > tol {tol:.1e} (n = {n})', res)
    log.debug('solve n=%d method=%s residual=%.2e', n, method, res)
    return SolveResult(x, res, method, its)


def _krylov(sys: SparseSystem, tol: float, max_iter: int):
    op = sys.operator
    if op.ilu is None:
        try:
            op.ilu = spla.spilu(op.matrix.tocsc(), drop_tol=1e-5, fill_factor=20)
        except RuntimeError as exc:
            raise SingularSystemError(f'incomplete factorization failed: {exc}') from exc
    M = spla.LinearOperator(op.matrix.shape, op.ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    # the solver tolerance is tightened so the recomputed residual lands under tol
    x, info = spla.bicgstab(op.matrix, sys.rhs, rtol=0.1 * tol, atol=0.0, maxiter=max_iter, M=M, callback=cb)
    if info == 0 and relative_residual(sys, x) <= tol:
        return x, count[0], 'bicgstab'
    log.debug('bicgstab info=%d, retrying with gmres', info)
    count[0] = 0
    x, info = spla.gmres(op.matrix, sys.rhs, x0=x, rtol=0.1 * tol, atol=0.0, restart=60, maxiter=max_iter,
                         M=M, callback=cb, callback_type='pr_norm')
    if info != 0 and relative_residual(sys, x) > tol:
        raise LinearSolverError(f'gmres did not converge in {max_iter} iterations', relative_residual(sys, x))
    return x, count[0], 'gmres'
