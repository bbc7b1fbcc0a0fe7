"""Green's kernel of the companion system and the weight W(lambda).

For ``y < x`` the matrix kernel is ``U(x) (E I - P) U(y)^-1`` and for
``y > x`` it is ``-U(x) P U(y)^-1``; the scalar kernel is its (1, n) entry
divided by the leading coefficient ``a_n(y)``, so that
``(L - lambda)^-1 f = (1/E) int G(x, y) f(y) dy``. Nothing here divides by
``E``, which keeps every quantity finite at eigenvalues.

For separated conditions the same kernel is evaluated from solutions
adapted to each boundary (see ``_separated_factors``); the projector form
above loses about ``log10 cond(M)`` digits to cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import expr as _e
from . import odeint
from .errors import QuadratureError, UserError
from .evans import adjugate, det, nullspace_basis
from .problem import Separated


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre nodes per direction on each triangle of the square.

    With ``verify`` every weight is recomputed at twice the node count and a
    relative disagreement above ``rel_tol`` raises :class:`QuadratureError`.
    """

    nodes: int = 48
    verify: bool = False
    rel_tol: float = 1e-6


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """Duffy-mapped tensor rule on ``{y < x}`` of ``[0, L]^2``.

    Point ``(i, j)`` is ``x = L s_i``, ``y = L s_i s_j`` with weight
    ``L^2 s_i w_i w_j``; the lower triangle uses the same points with the
    roles of x and y swapped.
    """

    length: float
    n: int
    grid: np.ndarray      # sorted unique abscissae including 0 and L
    outer: np.ndarray     # (n,) indices of L s_i into grid
    inner: np.ndarray     # (n, n) indices of L s_i s_j into grid
    weights: np.ndarray   # (n, n)

    @property
    def x_outer(self) -> np.ndarray:
        return self.grid[self.outer]

    @property
    def x_inner(self) -> np.ndarray:
        return self.grid[self.inner]


@lru_cache(maxsize=32)
def triangle_rule(length: float, n: int) -> TriangleRule:
    s, w = np.polynomial.legendre.leggauss(n)
    s, w = 0.5 * (s + 1), 0.5 * w
    xo = length * s
    xi = length * s[:, None] * s[None, :]
    grid, inv = np.unique(np.concatenate([[0.0, length], xo, xi.ravel()]), return_inverse=True)
    outer = inv[2:2 + n]
    inner = inv[2 + n:].reshape(n, n)
    weights = length * length * (s * w)[:, None] * w[None, :]
    for a in (grid, outer, inner, weights):
        a.setflags(write=False)
    return TriangleRule(length, n, grid, outer, inner, weights)


def projection_matrix(M, N_L=None, B_R=None) -> np.ndarray:
    """``P = N_L adj(B_R M N_L) B_R M`` (separated) or ``adj(M - I) M`` (periodic)."""
    M = np.asarray(M, dtype=complex)
    if N_L is None:
        return adjugate(M - np.eye(M.shape[0])) @ M
    return N_L @ adjugate(B_R @ M @ N_L) @ B_R @ M


@dataclass(frozen=True, eq=False)
class KernelAssembly:
    """Everything needed to evaluate kernels at one ``lambda``.

    Each branch of the matrix kernel is stored in factored form
    ``rows(x) @ middle @ cols(y)``, sampled on ``rule.grid``; ``P`` is kept
    for callers that want the projector form.
    """

    problem: object
    lam: complex
    fund: odeint.FundamentalSolution
    E: complex
    P: np.ndarray
    periodic: bool
    rule: TriangleRule
    lead: np.ndarray          # a_n on rule.grid
    rows: tuple               # (below, above), each (grid, n, m)
    middle: tuple             # (below, above), each (m, m)
    cols: tuple               # (below, above), each (grid, m, n)
    point_factors: object = None

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @property
    def mu(self) -> float:
        return self.fund.system.mu

    def branch(self, below: bool) -> np.ndarray:
        """Projector-form middle factor: ``E I - P`` below, ``-P`` above."""
        return self.E * np.eye(self.n) - self.P if below else -self.P


def _ortho_det(Q: np.ndarray) -> complex:
    return complex(np.linalg.det(Q))


def _separated_factors(problem, sys, lam, grid, tol, fund, N_L, E):
    """Factors of the kernel built from boundary-adapted solutions.

    Below the diagonal the kernel is ``Y_R(x) (E T^-1) Z_L(y)`` with
    ``Y_R = Phi(x, L) N_R`` and ``Z_L = B_L U(y)^-1``; above it is
    ``-Y_L(x) adj(S) Z_R(y)`` with ``Y_L = U(x) N_L``, ``Z_R = B_R Phi(L, y)``.
    Each factor is integrated from the end where its boundary condition
    holds, so no exponentially large terms cancel. ``E T^-1`` equals
    ``(-1)^(k(n+1)) det(X) adj(T)`` with ``X = Q_R M Q_L^H`` (complementary
    minors), which stays finite at eigenvalues.
    """
    bc = problem.boundary
    B_L, B_R = bc.B_L, bc.B_R
    N_R = nullspace_basis(B_R)
    n, k = problem.order, B_L.shape[0]
    adj_f = odeint.solve_on_grid(sys, lam, grid, tol, adjoint=True)
    back = odeint.solve_on_grid(sys, lam, grid, tol, backward=True)
    adj_b = odeint.solve_on_grid(sys, lam, grid, tol, adjoint=True, backward=True)
    S = B_R @ fund.monodromy @ N_L
    T = B_L @ back.values[0] @ N_R
    detM = np.exp(odeint.trace_integral(sys, lam, [0.0, problem.length])[-1])
    Q_L = np.vstack([B_L, N_L.conj().T])
    Q_R = np.vstack([B_R, N_R.conj().T])
    detX = _ortho_det(Q_R) * detM * np.conj(_ortho_det(Q_L))
    mid_b = (-1) ** (k * (n + 1)) * detX * adjugate(T)
    mid_a = -adjugate(S)
    rows = (back.values @ N_R, fund.U @ N_L)
    cols = (B_L @ np.transpose(adj_f.values, (0, 2, 1)),
            B_R @ np.transpose(adj_b.values, (0, 2, 1)))

    def at(x):
        return ((back.at(x) @ N_R, fund.at(x) @ N_L),
                (B_L @ adj_f.at(x).T, B_R @ adj_b.at(x).T))

    return rows, (mid_b, mid_a), cols, at


def assemble(problem, lam: complex, quad: QuadratureSpec | None = None,
             tol: float | None = None, N_L=None) -> KernelAssembly:
    """Integrate on the quadrature grid and build ``E``, ``P`` and kernel factors."""
    quad = quad or QuadratureSpec(problem.numerics.quad_nodes)
    tol = problem.numerics.tol if tol is None else tol
    rule = triangle_rule(problem.length, quad.nodes)
    sys = odeint.companion_system(problem)
    lam = complex(lam)
    fund = odeint.fundamental_grid(sys, lam, rule.grid, tol)
    M = fund.monodromy
    bc = problem.boundary
    if isinstance(bc, Separated):
        N_L = nullspace_basis(bc.B_L) if N_L is None else np.asarray(N_L, dtype=complex)
        E = det(bc.B_R @ M @ N_L)
        P = projection_matrix(M, N_L, bc.B_R)
        rows, middle, cols, at = _separated_factors(problem, sys, lam, rule.grid, tol,
                                                    fund, N_L, E)
        periodic = False
    else:
        I = np.eye(M.shape[0])
        E = det(M - I)
        P = projection_matrix(M)
        rows = (fund.U, fund.U)
        middle = (E * I - P, -P)
        cols = (fund.Uinv, fund.Uinv)

        def at(x):
            U = fund.at(x)
            Ui = fund.inverse_at(x)
            return (U, U), (Ui, Ui)

        periodic = True
    lead = _e.evaluate(problem.coefficients[problem.order], rule.grid) * np.ones(len(rule.grid))
    return KernelAssembly(problem, lam, fund, E, P, periodic, rule, lead,
                          rows, middle, cols, at)


def _check_point(asm: KernelAssembly, x: float):
    L = asm.problem.length
    if not (0.0 <= x <= L):
        raise UserError(f"point {x!r} outside [0, {L!r}]")


def matrix_kernel(asm: KernelAssembly, x: float, y: float) -> np.ndarray:
    """Full ``n x n`` kernel; on the diagonal the ``y < x`` branch is used."""
    _check_point(asm, x)
    _check_point(asm, y)
    b = 0 if y <= x else 1
    rx, _ = asm.point_factors(x)
    _, cy = asm.point_factors(y)
    return rx[b] @ asm.middle[b] @ cy[b]


def diagonal_jump(asm: KernelAssembly, x: float) -> np.ndarray:
    """``G(x+, x) - G(x-, x)`` for the matrix kernel; equals ``E I``."""
    _check_point(asm, x)
    r, c = asm.point_factors(x)
    return r[0] @ asm.middle[0] @ c[0] - r[1] @ asm.middle[1] @ c[1]


def _row_weights(j: int, mu: float) -> np.ndarray:
    # d^j = (D - i mu)^j = sum_k C(j, k) (-i mu)^(j-k) D^k
    return np.array([math.comb(j, k) * (-1j * mu) ** (j - k) for k in range(j + 1)])


def derivative_kernel(asm: KernelAssembly, j: int, x: float, y: float) -> complex:
    """Kernel of ``d^j/dx^j (L - lambda)^-1``, times ``E``."""
    if not 0 <= j < asm.n:
        raise UserError(f"derivative order {j} outside 0..{asm.n - 1}")
    G = matrix_kernel(asm, x, y)
    c = _row_weights(j, asm.mu)
    lead = complex(_e.evaluate(asm.problem.coefficients[asm.n], y))
    return complex(c @ G[: j + 1, asm.n - 1]) / lead


def kernel(asm: KernelAssembly, x: float, y: float) -> complex:
    """Scalar kernel ``G(x, y)``; the resolvent is ``(1/E) int G f``."""
    return derivative_kernel(asm, 0, x, y)


def kernel_samples(asm: KernelAssembly, j: int = 0):
    """``d^j G`` on both triangles of the rule: arrays ``(below, above)``.

    ``below[i, k]`` sits at ``x = L s_i, y = L s_i s_k``; ``above[i, k]`` at
    ``y = L s_i, x = L s_i s_k``.
    """
    if not 0 <= j < asm.n:
        raise UserError(f"derivative order {j} outside 0..{asm.n - 1}")
    r = asm.rule
    n = asm.n
    w = _row_weights(j, asm.mu)
    out = []
    for b, (xi, yi) in enumerate(((r.outer, r.inner), (r.inner, r.outer))):
        rows = np.tensordot(w, asm.rows[b][:, : j + 1, :], axes=(0, 1))   # (grid, m)
        cols = asm.cols[b][:, :, n - 1] / asm.lead[:, None]               # (grid, m)
        rm = rows @ asm.middle[b]
        if b == 0:
            out.append(np.einsum("ia,ika->ik", rm[xi], cols[yi]))
        else:
            out.append(np.einsum("ika,ia->ik", rm[xi], cols[yi]))
    return tuple(out)


def _weight_sq(asm, j):
    below, above = kernel_samples(asm, j)
    w = asm.rule.weights
    return float(np.sum(w * np.abs(below) ** 2) + np.sum(w * np.abs(above) ** 2))


def _verified(asm, quad, value_fn):
    value = value_fn(asm)
    if quad is not None and quad.verify:
        fine = assemble(asm.problem, asm.lam, QuadratureSpec(2 * quad.nodes), asm.fund.tol)
        ref = value_fn(fine)
        if abs(ref - value) > quad.rel_tol * max(abs(ref), 1e-300):
            raise QuadratureError(value, ref)
    return value


def weight_derivative(asm: KernelAssembly, j: int, quad: QuadratureSpec | None = None) -> float:
    """``W_j = (int int |d^j G|^2)^(1/2)``, so ``||d^j (L - lambda)^-1|| <= W_j/|E|``."""
    return _verified(asm, quad, lambda a: math.sqrt(_weight_sq(a, j)))


def weight(asm: KernelAssembly, quad: QuadratureSpec | None = None) -> float:
    """``W = (int int |G|^2)^(1/2)``."""
    return weight_derivative(asm, 0, quad)


def gram_matrices(asm: KernelAssembly) -> list:
    """``H_j[p, q] = int int a_p(x) conj(a_q(x)) |d^j G(x, y)|^2``, j = 0..n-1.

    For a multiplier ``b(x) = sum_p g_p a_p(x)`` this gives the exact
    Hilbert-Schmidt norm ``||b d^j (L - lambda)^-1||^2 = g^T H_j conj(g) / |E|^2``.
    """
    r = asm.rule
    coeffs = asm.problem.coefficients
    a = np.array([_e.evaluate(c, r.grid) * np.ones(len(r.grid)) for c in coeffs])
    a_below, a_above = a[:, r.outer], a[:, r.inner]
    out = []
    for j in range(asm.n):
        below, above = kernel_samples(asm, j)
        wb = r.weights * np.abs(below) ** 2
        wa = r.weights * np.abs(above) ** 2
        H = (np.einsum("pi,qi,ik->pq", a_below, a_below.conj(), wb)
             + np.einsum("pik,qik,ik->pq", a_above, a_above.conj(), wa))
        out.append(H)
    return out
