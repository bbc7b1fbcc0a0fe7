"""Evans functions for separated and periodic boundary conditions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import odeint
from .errors import UserError
from .problem import FloquetPeriodic, Periodic, Separated, orthonormalize_rows


@dataclass(frozen=True)
class EvansValue:
    """``E(lambda)``; ``W`` and ``bound = |E|/W`` once a weight is attached."""

    lam: complex
    E: complex
    W: float | None = None
    bound: float | None = None

    def with_weight(self, W: float) -> "EvansValue":
        return EvansValue(self.lam, self.E, W, abs(self.E) / W)


def nullspace_basis(B) -> np.ndarray:
    """Orthonormal basis of ker ``B`` as the columns of an ``n x (n-k)`` matrix.

    Deterministic: the columns of ``I - Q^H Q`` (``Q`` the orthonormalized
    rows) are reduced by Gram-Schmidt, always taking next the column with the
    largest remaining norm (lowest index on ties).
    """
    Q = orthonormalize_rows(B)
    k, n = Q.shape
    cols = np.eye(n, dtype=complex) - Q.conj().T @ Q
    basis = []
    for _ in range(n - k):
        norms = np.linalg.norm(cols, axis=0)
        j = int(np.argmax(norms))
        v = cols[:, j] / norms[j]
        basis.append(v)
        cols = cols - np.outer(v, v.conj() @ cols)
    return np.array(basis).T.reshape(n, n - k)


def det(A) -> complex:
    """Determinant via LU with partial pivoting."""
    A = np.asarray(A)
    return complex(np.linalg.det(A)) if A.size else 1.0 + 0j


def adjugate(A) -> np.ndarray:
    """Transpose of the cofactor matrix, so ``A adj(A) = det(A) I`` even for singular A."""
    A = np.asarray(A, dtype=complex)
    d = A.shape[0]
    if d == 1:
        return np.ones((1, 1), dtype=complex)
    out = np.empty_like(A)
    rows = np.arange(d)
    for i in range(d):
        for j in range(d):
            minor = A[np.ix_(rows != i, rows != j)]
            out[j, i] = (-1) ** (i + j) * np.linalg.det(minor)
    return out


def _finish(problem, lam, E) -> complex | float:
    # real problems at real lambda: E is real up to rounding; drop the residue
    if problem.is_real and complex(lam).imag == 0:
        return float(E.real)
    return E


def evans_separated(problem, lam: complex, tol: float | None = None, fund=None,
                    N_L=None) -> EvansValue:
    """``E = det(B_R M N_L)``."""
    bc = problem.boundary
    if not isinstance(bc, Separated):
        raise UserError("evans_separated needs separated boundary conditions")
    tol = problem.numerics.tol if tol is None else tol
    if fund is None:
        fund = odeint.fundamental_grid(odeint.companion_system(problem), lam, None, tol)
    N_L = nullspace_basis(bc.B_L) if N_L is None else N_L
    E = det(bc.B_R @ fund.monodromy @ N_L)
    return EvansValue(complex(lam), _finish(problem, lam, E))


def evans_periodic(problem, lam: complex, tol: float | None = None, fund=None) -> EvansValue:
    """``E = det(M - I)`` for the (possibly Floquet-shifted) system."""
    if not isinstance(problem.boundary, (Periodic, FloquetPeriodic)):
        raise UserError("evans_periodic needs periodic boundary conditions")
    tol = problem.numerics.tol if tol is None else tol
    if fund is None:
        fund = odeint.fundamental_grid(odeint.companion_system(problem), lam, None, tol)
    M = fund.monodromy
    E = det(M - np.eye(M.shape[0]))
    return EvansValue(complex(lam), _finish(problem, lam, E))


def evans(problem, lam: complex, tol: float | None = None, fund=None) -> EvansValue:
    if problem.is_periodic:
        return evans_periodic(problem, lam, tol, fund)
    return evans_separated(problem, lam, tol, fund)
