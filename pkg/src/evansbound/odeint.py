"""First-order systems and fundamental matrix solutions.

The companion system of ``sum_p a_p(x) D^p u = lambda u`` is integrated by
an adaptive Dormand-Prince 5(4) pair that stops exactly at every requested
node, so kernels can be read off without interpolation.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _backend, _pycore
from . import expr as _e
from .errors import DomainError, IntegrationError, UserError


@dataclass(frozen=True, eq=False)
class SystemMatrix:
    """``u' = A(x, lambda) u`` on ``[0, length]``.

    Companion systems carry compiled coefficient programs ``a_0 .. a_n``;
    general systems carry a Python callable ``func(x, lam)``.
    """

    order: int
    length: float
    mu: float = 0.0
    companion: bool = True
    coefficients: tuple = ()
    programs: tuple = ()
    func: Callable | None = None
    _cache: "SolutionCache" = field(default=None, repr=False)

    def __post_init__(self):
        if self._cache is None:
            object.__setattr__(self, "_cache", SolutionCache())

    def __call__(self, x: float, lam: complex) -> np.ndarray:
        if not self.companion:
            return np.array(self.func(x, lam), dtype=complex)
        return _pycore.companion_matrix_fn(self.programs, self.order, complex(lam), self.mu)(x)

    def trace(self, xs, lam: complex) -> np.ndarray:
        """``tr A(x, lambda)`` at an array of points."""
        xs = np.asarray(xs, dtype=float)
        if not self.companion:
            return np.array([np.trace(self(x, lam)) for x in xs])
        n = self.order
        lead = _e.evaluate(self.coefficients[n], xs) * np.ones_like(xs)
        sub = _e.evaluate(self.coefficients[n - 1], xs) * np.ones_like(xs)
        tr = -sub / lead - 1j * self.mu * n
        if n == 1:
            tr = tr + lam / lead
        return tr


def companion_system(problem) -> SystemMatrix:
    """Companion form over the state ``(u, Du, ..., D^(n-1) u)``.

    The system (and with it the solution cache) is memoised on the problem.
    """
    cached = problem.__dict__.get("_system")
    if cached is not None:
        return cached
    coeffs = problem.coefficients
    programs = tuple(_e.compile_program(a) for a in coeffs)
    sys = SystemMatrix(problem.order, problem.length, float(problem.mu), True, coeffs, programs)
    object.__setattr__(problem, "_system", sys)
    return sys


def matrix_system(func: Callable, order: int, length: float) -> SystemMatrix:
    """A general system from a callable ``func(x, lam) -> (n, n)``."""
    return SystemMatrix(order, float(length), 0.0, False, func=func)


def _check_nodes(nodes, length: float) -> np.ndarray:
    nodes = np.array(nodes, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2:
        raise UserError("need at least two nodes")
    if np.any(np.diff(nodes) <= 0):
        raise UserError("nodes must be strictly increasing")
    return nodes


def propagate(sys: SystemMatrix, lam: complex, nodes, U0=None, tol: float = 1e-10,
              fixed_steps: int = 0, backend=None, adjoint: bool = False):
    """Integrate from ``nodes[0]`` through ``nodes``; returns ``(U, stats)``.

    Decreasing ``nodes`` integrate backwards in x. With ``adjoint`` the
    system is ``U' = -A^T U`` (whose solution from ``I`` is ``U^-T``).
    ``fixed_steps > 0`` switches to that many equal steps per node interval
    (no error control), which is how the order of the method is checked.
    """
    nodes = np.array(nodes, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2:
        raise UserError("need at least two nodes")
    reverse = bool(nodes[1] < nodes[0])
    origin = float(nodes[0])
    svar = origin - nodes if reverse else nodes
    if np.any(np.diff(svar) <= 0):
        raise UserError("nodes must be strictly monotone")
    n = sys.order
    U0 = np.eye(n, dtype=complex) if U0 is None else np.asarray(U0, dtype=complex)
    kern = backend or _backend.kernels
    try:
        if sys.companion:
            return kern.integrate(list(sys.programs), n, complex(lam), sys.mu, svar, U0,
                                  tol, tol, fixed_steps, 0.0, adjoint, reverse, origin)
        sg = -1.0 if reverse else 1.0

        def fn(s):
            A = sys(origin - s if reverse else s, lam)
            return sg * (-A.T if adjoint else A)

        try:
            return _pycore.integrate_matrix(fn, svar, U0, tol, tol, fixed_steps)
        except FloatingPointError as exc:
            x = exc.args[0]
            raise FloatingPointError(origin - x if reverse else x) from None
    except FloatingPointError as exc:
        x = exc.args[0] if exc.args else float("nan")
        raise IntegrationError("step size underflow", float(x)) from None
    except (ValueError, ZeroDivisionError) as exc:
        raise DomainError(f"coefficient evaluation failed: {exc}") from None


def trace_integral(sys: SystemMatrix, lam: complex, nodes) -> np.ndarray:
    """``int_{nodes[0]}^{nodes[j]} tr A`` for every j (8-point Gauss per interval)."""
    nodes = np.asarray(nodes, dtype=float)
    gx, gw = np.polynomial.legendre.leggauss(8)
    a, b = nodes[:-1], nodes[1:]
    xs = 0.5 * (b - a)[:, None] * (gx + 1) + a[:, None]
    tr = sys.trace(xs.ravel(), lam).reshape(xs.shape)
    seg = 0.5 * (b - a) * (tr @ gw)
    return np.concatenate([[0.0], np.cumsum(seg)])


@dataclass(frozen=True, eq=False)
class SampledSolution:
    """Solution of ``Y' = A Y`` (or the adjoint system) started from ``I``.

    Forward solutions start at x = 0, backward ones at x = L; ``values`` is
    aligned with the increasing ``nodes`` either way.
    """

    system: SystemMatrix
    lam: complex
    nodes: np.ndarray
    values: np.ndarray
    tol: float
    adjoint: bool = False
    backward: bool = False

    def at(self, x: float) -> np.ndarray:
        if not (self.nodes[0] <= x <= self.nodes[-1]):
            raise UserError(f"x={x!r} outside the interval")
        if self.backward:
            j = int(np.searchsorted(self.nodes, x, side="left"))
        else:
            j = int(np.searchsorted(self.nodes, x, side="right")) - 1
        if self.nodes[j] == x:
            return self.values[j]
        Y, _ = propagate(self.system, self.lam, [self.nodes[j], x], self.values[j], self.tol,
                         adjoint=self.adjoint)
        return Y[-1]


def solve_on_grid(sys: SystemMatrix, lam: complex, nodes, tol: float = 1e-10,
                  adjoint: bool = False, backward: bool = False) -> SampledSolution:
    """Forward (from 0) or backward (from L) solution started at ``I``, cached."""
    nodes = _check_nodes(nodes, sys.length)
    lam = complex(lam)

    def build():
        if not backward:
            Y, _ = propagate(sys, lam, nodes, None, tol, adjoint=adjoint)
            return SampledSolution(sys, lam, nodes, Y, tol, adjoint, backward)
        # nodes closer than an ulp of L collapse once measured from L
        L = nodes[-1]
        s, inv = np.unique(L - nodes, return_inverse=True)
        Y, _ = propagate(sys, lam, L - s, None, tol, adjoint=adjoint)
        return SampledSolution(sys, lam, nodes, Y[inv], tol, adjoint, backward)

    key = ("sampled", lam, tol, len(nodes), hash(nodes.tobytes()), adjoint, backward)
    return sys._cache.get_or_create(key, build)


@dataclass(frozen=True, eq=False)
class FundamentalSolution:
    """``U(x_j; lambda)`` at grid nodes, with ``U(0) = I`` and stored inverses."""

    system: SystemMatrix
    lam: complex
    nodes: np.ndarray
    U: np.ndarray
    Uinv: np.ndarray
    tol: float
    stats: dict
    error_estimate: float | None = None

    @property
    def monodromy(self) -> np.ndarray:
        return self.U[-1]

    def index(self, x: float) -> int:
        """Index of node ``x``; raises KeyError if ``x`` is not a node."""
        j = int(np.searchsorted(self.nodes, x))
        if j < len(self.nodes) and self.nodes[j] == x:
            return j
        raise KeyError(x)

    def at(self, x: float) -> np.ndarray:
        """``U(x)`` anywhere in ``[0, L]``, re-propagating from the nearest lower node."""
        if not (self.nodes[0] <= x <= self.nodes[-1]):
            raise UserError(f"x={x!r} outside the interval")
        j = int(np.searchsorted(self.nodes, x, side="right")) - 1
        if self.nodes[j] == x:
            return self.U[j]
        U, _ = propagate(self.system, self.lam, [self.nodes[j], x], self.U[j], self.tol)
        return U[-1]

    def inverse_at(self, x: float) -> np.ndarray:
        try:
            return self.Uinv[self.index(x)]
        except KeyError:
            return np.linalg.inv(self.at(x))

    def abel_residual(self, scaled: bool = True) -> float:
        """max_j |det U(x_j) - exp(int_0^x_j tr A)|.

        With ``scaled`` each term is divided by ``max(1, prod_i |row_i|)``,
        the Hadamard bound on |det U|; that is the size the integrator's
        relative tolerance acts on, so growing solutions are not penalised for
        cancellation in the determinant.
        """
        expect = np.exp(trace_integral(self.system, self.lam, self.nodes))
        resid = np.abs(np.linalg.det(self.U) - expect)
        if scaled:
            resid = resid / np.maximum(1.0, np.prod(np.linalg.norm(self.U, axis=2), axis=1))
        return float(np.max(resid))

    def inverse_residual(self) -> float:
        eye = np.eye(self.system.order)
        return float(np.max(np.abs(self.U @ self.Uinv - eye)))


class SolutionCache:
    """Thread-safe LRU map ``(lambda, tol, grid) -> FundamentalSolution``."""

    def __init__(self, maxsize: int = 64):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()
        self._lock = threading.Lock()

    def get_or_create(self, key, factory):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        value = factory()
        with self._lock:
            # another thread may have inserted meanwhile; keep the first
            value = self._data.setdefault(key, value)
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def __len__(self):
        return len(self._data)


def fundamental_grid(sys: SystemMatrix, lam: complex, nodes=None, tol: float = 1e-10,
                     verify: bool = False, cache: bool = True) -> FundamentalSolution:
    """Fundamental matrix on ``nodes`` (default ``[0, L]``).

    With ``verify`` the solution is recomputed at ``tol / 32`` and the max
    entrywise difference is stored as ``error_estimate``.
    """
    if nodes is None:
        nodes = np.array([0.0, sys.length])
    nodes = _check_nodes(nodes, sys.length)
    if nodes[0] != 0.0 or abs(nodes[-1] - sys.length) > 1e-12 * sys.length:
        raise UserError("nodes must start at 0 and end at L")
    if not tol > 0:
        raise UserError("tol must be positive")
    lam = complex(lam)

    def build():
        U, stats = propagate(sys, lam, nodes, None, tol)
        err = None
        if verify:
            U2, _ = propagate(sys, lam, nodes, None, tol / 32)
            err = float(np.max(np.abs(U - U2)))
        return FundamentalSolution(sys, lam, nodes, U, np.linalg.inv(U), tol, stats, err)

    if not cache:
        return build()
    key = (lam, tol, len(nodes), hash(nodes.tobytes()), verify)
    return sys._cache.get_or_create(key, build)


def monodromy(sys: SystemMatrix, lam: complex, tol: float = 1e-10) -> np.ndarray:
    """``M = U(L)``."""
    return fundamental_grid(sys, lam, None, tol).monodromy
