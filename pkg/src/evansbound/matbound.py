"""Hilbert-Schmidt norms and the inverse-norm inequality.

For nonsingular ``A`` of size ``d``::

    ||A^-1||_HS <= ||A||_HS^(d-1) / (|det A| d^((d-2)/2))

with equality at the identity. It follows from the AM-HM inequality applied
to the squared singular values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


def hs_norm(A) -> float:
    """Frobenius norm, sqrt(sum |a_ij|^2)."""
    A = np.asarray(A)
    if A.size == 0:
        return 0.0
    return float(np.linalg.norm(A.reshape(A.shape[0], -1), "fro"))


def hs_inverse_bound_value(hs: float, absdet: float, d: int) -> float:
    return hs ** (d - 1) / (absdet * d ** ((d - 2) / 2))


@dataclass(frozen=True)
class HSReport:
    d: int
    hs: float
    absdet: float
    bound: float
    inverse_hs: float | None
    singular_values: np.ndarray | None

    @property
    def slack(self) -> float | None:
        return None if self.inverse_hs is None else self.bound - self.inverse_hs


def hs_inverse_bound(A, direct: bool = True) -> HSReport:
    """Bound on ``||A^-1||_HS`` plus, for d <= 64, the value computed directly."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("square matrix required")
    d = A.shape[0]
    absdet = abs(np.linalg.det(A))
    if absdet == 0 or not math.isfinite(absdet):
        raise DomainError("matrix is singular")
    hs = hs_norm(A)
    bound = hs_inverse_bound_value(hs, absdet, d)
    inv_hs = sv = None
    if direct and d <= 64:
        sv = singular_values(A)
        inv_hs = float(np.sqrt(np.sum(1.0 / sv**2)))
    return HSReport(d, hs, absdet, bound, inv_hs, sv)


def singular_values(A) -> np.ndarray:
    """sqrt of the eigenvalues of ``A^H A``, ascending."""
    A = np.asarray(A, dtype=complex)
    ev = np.linalg.eigvalsh(A.conj().T @ A)
    return np.sqrt(np.clip(ev, 0.0, None))


def am_hm_product(v) -> float:
    """``mean(v) * mean(1/v)`` for positive ``v``; at least 1 by AM-HM."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("entries must be positive")
    return float(np.mean(v) * np.mean(1.0 / v))


def system_resolvent_bound(fund, P, E, quad=None) -> float:
    """Upper bound on the resolvent of the full system (vector forcing).

    The matrix kernel ``U(x) C U(y)^-1`` (``C = E I - P`` below the diagonal,
    ``-P`` above) is bounded entrywise in HS norm by
    ``||U(x) C||_HS ||U(y)^-1||_HS`` and the second factor by the inverse
    inequality; the squared bound is integrated over the square. Returns
    ``inf`` when ``E = 0``. ``fund`` must contain the nodes of the rule.
    """
    from .greens import QuadratureSpec, triangle_rule

    if E == 0:
        return math.inf
    quad = quad or QuadratureSpec()
    L = float(fund.nodes[-1])
    rule = triangle_rule(L, quad.nodes)
    idx = np.searchsorted(fund.nodes, rule.grid)
    if np.any(idx >= len(fund.nodes)) or np.any(fund.nodes[np.minimum(idx, len(fund.nodes) - 1)] != rule.grid):
        raise DomainError("fundamental solution lacks the quadrature nodes")
    U = fund.U[idx]
    d = U.shape[1]
    P = np.asarray(P, dtype=complex)
    C_below = E * np.eye(d) - P
    C_above = -P
    hs_u = np.linalg.norm(U.reshape(len(U), -1), axis=1)
    absdet = np.abs(np.linalg.det(U))
    inv_bound = hs_u ** (d - 1) / (absdet * d ** ((d - 2) / 2))
    left_below = np.linalg.norm((U @ C_below).reshape(len(U), -1), axis=1)
    left_above = np.linalg.norm((U @ C_above).reshape(len(U), -1), axis=1)
    # below: x = outer, y = inner; above: y = outer, x = inner
    below = (left_below[rule.outer][:, None] * inv_bound[rule.inner]) ** 2
    above = (left_above[rule.inner] * inv_bound[rule.outer][:, None]) ** 2
    total = np.sum(rule.weights * below) + np.sum(rule.weights * above)
    return float(math.sqrt(total) / abs(E))
