"""Problem descriptions: operator terms, boundary conditions, numerics.

An operator of order ``n`` is a sum of terms ``D^outer (c(x) D^inner u)``
where ``D = d/dx + i*mu`` (``mu`` is the Floquet shift, zero otherwise).
Expanding by the Leibniz rule gives ``sum_p a_p(x) D^p u`` with coefficient
functions independent of ``mu``; those ``a_p`` drive everything downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import expr as _e
from .errors import ProblemError, RankDeficientError, UserError


@dataclass(frozen=True)
class Term:
    """One operator term ``D^outer (coeff * D^inner u)``."""

    coeff: str
    outer: int = 0
    inner: int = 0

    @property
    def order(self) -> int:
        return self.outer + self.inner


@dataclass(frozen=True)
class Separated:
    """Separated conditions ``B_L U(0) = 0``, ``B_R U(L) = 0`` on the state vector."""

    left: tuple
    right: tuple
    preset: str | None = None

    @property
    def B_L(self) -> np.ndarray:
        return np.array(self.left, dtype=complex)

    @property
    def B_R(self) -> np.ndarray:
        return np.array(self.right, dtype=complex)


@dataclass(frozen=True)
class Periodic:
    pass


@dataclass(frozen=True)
class FloquetPeriodic:
    mu: float = 0.0


@dataclass(frozen=True)
class Numerics:
    tol: float = 1e-10
    quad_nodes: int = 48


def orthonormalize_rows(B, path: str = "") -> np.ndarray:
    """Modified Gram-Schmidt over the rows of ``B``, in row order.

    Raises :class:`RankDeficientError` if a row is (numerically) in the span
    of the rows before it. Rows that are already orthonormal to rounding are
    returned unchanged, so saved problems reload bit for bit.
    """
    B = np.array(B, dtype=complex)
    if B.ndim != 2:
        raise ProblemError("boundary rows must form a matrix", path)
    if B.size and np.max(np.abs(B @ B.conj().T - np.eye(B.shape[0]))) <= 1e-13:
        return B
    scale = max(1.0, float(np.max(np.abs(B)))) if B.size else 1.0
    out = []
    for r in range(B.shape[0]):
        v = B[r].copy()
        for q in out:
            v = v - (q.conj() @ v) * q
        nv = np.linalg.norm(v)
        if nv <= 1e-12 * scale:
            raise RankDeficientError(f"{path or 'boundary'}: row {r} is linearly dependent")
        out.append(v / nv)
    return np.array(out).reshape(B.shape)


def _rows(B: np.ndarray) -> tuple:
    return tuple(tuple(complex(v) for v in row) for row in B)


_PRESETS = {
    "dirichlet": {2: ([[1, 0]], [[1, 0]])},
    "neumann": {2: ([[0, 1]], [[0, 1]])},
    "u-and-uxx-zero": {4: ([[1, 0, 0, 0], [0, 0, 1, 0]], [[1, 0, 0, 0], [0, 0, 1, 0]])},
}


def preset(name: str, order: int) -> Separated:
    """Expand a named separated-boundary preset for an operator of ``order``."""
    table = _PRESETS.get(name)
    if table is None:
        raise ProblemError(f"unknown boundary preset {name!r}", "boundary.type")
    if order not in table:
        raise ProblemError(f"preset {name!r} needs order in {sorted(table)}", "boundary.type")
    left, right = table[order]
    return separated(left, right, order, name)


def separated(left, right, order: int, name: str | None = None) -> Separated:
    BL = orthonormalize_rows(left, "boundary.left")
    BR = orthonormalize_rows(right, "boundary.right")
    for B, key in ((BL, "left"), (BR, "right")):
        if B.shape[1] != order:
            raise ProblemError(f"rows must have {order} entries", f"boundary.{key}")
    k = BL.shape[0]
    if not 0 < k < order or BR.shape[0] != order - k:
        raise ProblemError(
            f"need 0 < k < n left rows and n-k right rows, got {k} and {BR.shape[0]}",
            "boundary")
    return Separated(_rows(BL), _rows(BR), name)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A scalar eigenproblem ``L u = lambda u`` on ``[0, length]``."""

    order: int
    length: float
    terms: tuple
    boundary: object
    parameters: Mapping[str, complex] = field(default_factory=dict)
    numerics: Numerics = Numerics()
    length_expr: str | None = None
    name: str = ""

    def __post_init__(self):
        if self.order < 1 or self.order > 8:
            raise ProblemError(f"order {self.order} outside 1..8", "order")
        if not (self.length > 0 and math.isfinite(self.length)):
            raise ProblemError("interval length must be positive", "length")
        if not self.terms:
            raise ProblemError("operator has no terms", "operator")
        for i, t in enumerate(self.terms):
            if t.outer < 0 or t.inner < 0:
                raise ProblemError("derivative orders must be nonnegative", f"operator[{i}]")
            if t.order > self.order:
                raise ProblemError(
                    f"term of order {t.order} exceeds operator order {self.order}",
                    f"operator[{i}]")
        coeffs = self._expand()
        if _e.constant_value(coeffs[self.order]) == 0:
            raise ProblemError("leading coefficient vanishes", "operator")
        object.__setattr__(self, "_coeffs", coeffs)

    def _expand(self) -> tuple:
        n = self.order
        acc = [_e.ZERO] * (n + 1)
        for i, t in enumerate(self.terms):
            try:
                c = _e.substitute(_e.parse(t.coeff, tuple(self.parameters)), self.parameters)
            except UserError as exc:
                raise ProblemError(str(exc), f"operator[{i}].coeff") from exc
            # D^a (c D^b u) = sum_i C(a, i) c^(i) D^(a-i+b) u
            d = c
            for k in range(t.outer + 1):
                if k:
                    d = _e.derivative(d)
                p = t.outer - k + t.inner
                acc[p] = _e._add(acc[p], _e._mul(_e.Const(complex(math.comb(t.outer, k))), d))
        return tuple(acc)

    @property
    def coefficients(self) -> tuple:
        """Expression trees ``a_0 .. a_n`` of the expanded operator."""
        return self._coeffs

    @property
    def mu(self) -> float:
        return self.boundary.mu if isinstance(self.boundary, FloquetPeriodic) else 0.0

    @property
    def is_periodic(self) -> bool:
        return isinstance(self.boundary, (Periodic, FloquetPeriodic))

    @property
    def is_real(self) -> bool:
        """Real coefficients and no Floquet shift: E is real for real lambda."""
        if self.mu != 0:
            return False
        if isinstance(self.boundary, Separated):
            if np.any(self.boundary.B_L.imag) or np.any(self.boundary.B_R.imag):
                return False
        return all(_e.is_real(a) for a in self._coeffs)

    def with_mu(self, mu: float) -> "ProblemSpec":
        """Copy with the Floquet shift replaced."""
        if not self.is_periodic:
            raise ProblemError("Floquet shift needs periodic boundary conditions", "boundary")
        return ProblemSpec(self.order, self.length, self.terms, FloquetPeriodic(float(mu)),
                           self.parameters, self.numerics, self.length_expr, self.name)

    def with_boundary(self, boundary) -> "ProblemSpec":
        return ProblemSpec(self.order, self.length, self.terms, boundary,
                           self.parameters, self.numerics, self.length_expr, self.name)


def make_problem(order: int, length, terms, boundary="dirichlet", parameters=None,
                 tol: float = 1e-10, quad_nodes: int = 48, name: str = "") -> ProblemSpec:
    """Convenience constructor.

    ``length`` may be a number or an expression such as ``"2*pi"``; ``terms``
    are :class:`Term` objects or ``(coeff, outer, inner)`` tuples;
    ``boundary`` is a preset name, ``"periodic"``, a ``(B_L, B_R)`` pair, or a
    boundary object.
    """
    parameters = {k: complex(v) for k, v in (parameters or {}).items()}
    length_expr = None
    if isinstance(length, str):
        length_expr = length
        length = eval_length(length, parameters)
    terms = tuple(t if isinstance(t, Term) else Term(*t) for t in terms)
    if isinstance(boundary, str):
        if boundary == "periodic":
            boundary = Periodic()
        elif boundary == "floquet":
            boundary = FloquetPeriodic(0.0)
        else:
            boundary = preset(boundary, order)
    elif isinstance(boundary, tuple) and len(boundary) == 2:
        boundary = separated(boundary[0], boundary[1], order)
    return ProblemSpec(order, float(length), terms, boundary, parameters,
                       Numerics(float(tol), int(quad_nodes)), length_expr, name)


def eval_length(source: str, parameters: Mapping[str, complex] | None = None) -> float:
    parameters = parameters or {}
    node = _e.parse(source, tuple(parameters))
    if node.depends_on_x():
        raise ProblemError("interval length must not depend on x", "length")
    v = _e.evaluate(node, 0.0, parameters)
    if v.imag != 0:
        raise ProblemError("interval length must be real", "length")
    return float(v.real)
