"""Sparse solves for the Newton systems.

Matrices are stored as :class:`scipy.sparse.csr_matrix`.  The bordered solve
eliminates the scalar unknown through a Schur complement so the Jacobian of
the nonlocal problem is never densified.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix",
    "BorderedSystem",
    "ConvergenceError",
    "SingularSchurError",
    "as_csr",
    "matvec",
    "solve_spd",
    "direct_solver",
    "solve_bordered",
]

SparseMatrix = sp.csr_matrix


class ConvergenceError(RuntimeError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SingularSchurError(ArithmeticError):
    pass


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"cannot multiply {A.shape} matrix by vector of length {x.shape[0]}")
    return np.asarray(A @ x, dtype=float)


def solve_spd(A, rhs, tol: float = 1e-14, max_iter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||r|| <= tol * ||rhs||`` (with a floor of ``1e-300`` so a zero
    right-hand side returns immediately).
    """
    rhs = np.asarray(rhs, dtype=float)
    n = rhs.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    if max_iter is None:
        max_iter = 10 * n + 100
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix has a nonpositive diagonal entry; not SPD")
    inv_diag = 1.0 / diag

    target = max(tol * np.linalg.norm(rhs), 1e-300)
    x = np.zeros(n)
    r = rhs.copy()
    res = np.linalg.norm(r)
    if res <= target:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ap = A @ p
        step = rz / (p @ Ap)
        x += step * p
        r -= step * Ap
        res = np.linalg.norm(r)
        if res <= target:
            return x
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    # recurrence residual drifts at tight tolerances; accept if the true one is fine
    true_res = np.linalg.norm(rhs - A @ x)
    if true_res <= target:
        return x
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (residual {true_res:.3e}, target {target:.3e})",
        residual=true_res,
    )


def direct_solver(A) -> Callable[[np.ndarray], np.ndarray]:
    """Factorize ``A`` once and return a solve callable.

    Tridiagonal matrices use banded elimination; anything else a sparse LU.
    """
    A = as_csr(A)
    n = A.shape[0]
    offsets = A.indices - np.repeat(np.arange(n), np.diff(A.indptr))
    if n > 0 and np.all(np.abs(offsets) <= 1):
        from scipy.linalg import solve_banded

        ab = np.zeros((3, n))
        ab[0, 1:] = A.diagonal(1)
        ab[1] = A.diagonal()
        ab[2, :-1] = A.diagonal(-1)
        return lambda b: solve_banded((1, 1), ab, b)
    lu = spla.splu(A.tocsc())
    return lu.solve


@dataclass
class BorderedSystem:
    """The block matrix ``[[A, b_col], [c_row, corner]]`` kept in sparse form."""

    A: sp.csr_matrix
    b_col: np.ndarray
    c_row: np.ndarray
    corner: float = -1.0

    def __post_init__(self):
        m = self.A.shape[0]
        if self.A.shape != (m, m) or self.b_col.shape != (m,) or self.c_row.shape != (m,):
            raise ValueError("bordered system blocks have inconsistent sizes")

    def apply(self, x, d):
        """Multiply the full bordered matrix by ``(x, d)``."""
        top = self.A @ x + self.b_col * d
        bot = self.c_row @ x + self.corner * d
        return top, float(bot)


def solve_bordered(sys: BorderedSystem, rhs_top, rhs_bot: float, solve=None):
    """Solve the bordered system by block elimination.

    ``solve`` is a callable applying ``A^{-1}``; by default ``A`` is
    factorized once and reused for both right-hand sides.

    Returns ``(x, d)``.
    """
    if solve is None:
        solve = direct_solver(sys.A)
    rhs_top = np.asarray(rhs_top, dtype=float)
    y1 = solve(rhs_top)
    if np.any(sys.b_col):
        y2 = solve(sys.b_col)
    else:
        y2 = np.zeros_like(y1)
    # corner is -1 in the Newton system; keep the general form
    schur = sys.c_row @ y2 - sys.corner
    scale = 1.0 + np.linalg.norm(sys.c_row) * np.linalg.norm(y2)
    if abs(schur) < 1e-14 * scale:
        raise SingularSchurError(f"Schur complement {schur:.3e} is numerically zero")
    d = (sys.c_row @ y1 - rhs_bot) / schur
    x = y1 - d * y2
    return x, float(d)
