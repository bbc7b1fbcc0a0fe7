"""Independent spectral oracles used to cross-check certified bounds.

``sturm_count`` and ``fd_spectrum`` share no code with the kernel and weight
machinery: one integrates a Pruefer angle with SciPy's DOP853, the other
bisects Sturm sequences of a finite-difference matrix. ``winding_count``
applies the argument principle to the Evans function itself.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh_tridiagonal

from . import expr as _e
from .errors import AmbiguousCountError, ContourError, UserError
from .evans import evans, nullspace_basis
from .problem import Separated


# --------------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class Rectangle:
    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_lo < self.re_hi and self.im_lo < self.im_hi):
            raise UserError("rectangle needs lo < hi on both axes")

    def point(self, t):
        """Counterclockwise from the lower-left corner, ``t`` in [0, 1]."""
        w, h = self.re_hi - self.re_lo, self.im_hi - self.im_lo
        s = np.asarray(t, dtype=float) % 1.0 * 2 * (w + h)
        z = np.where(
            s < w, self.re_lo + s + 1j * self.im_lo,
            np.where(s < w + h, self.re_hi + 1j * (self.im_lo + s - w),
                     np.where(s < 2 * w + h, self.re_hi - (s - w - h) + 1j * self.im_hi,
                              self.re_lo + 1j * (self.im_hi - (s - 2 * w - h)))))
        return z


@dataclass(frozen=True)
class Circle:
    center: complex
    radius: float

    def point(self, t):
        return self.center + self.radius * np.exp(2j * np.pi * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class Polyline:
    """Closed polygon through ``points`` (closing edge added if missing)."""

    points: tuple

    def __post_init__(self):
        pts = [complex(p) for p in self.points]
        if len(pts) < 3:
            raise UserError("polygon needs at least three vertices")
        if pts[0] != pts[-1]:
            pts.append(pts[0])
        object.__setattr__(self, "points", tuple(pts))

    def point(self, t):
        pts = np.array(self.points)
        seg = np.abs(np.diff(pts))
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        s = np.asarray(t, dtype=float) % 1.0 * cum[-1]
        k = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        frac = (s - cum[k]) / seg[k]
        return pts[k] + frac * (pts[k + 1] - pts[k])


def winding_count(problem, contour, samples: int = 64, max_samples: int = 2**16,
                  threshold: float = 1e-12, tol: float | None = None) -> int:
    """Number of zeros of ``E`` inside ``contour`` (counted with multiplicity).

    The phase of ``E`` is unwound along the contour, bisecting any sample
    interval whose phase increment is pi/2 or more.
    """
    def value(t):
        z = complex(contour.point(t))
        E = complex(evans(problem, z, tol).E)
        if abs(E) <= threshold:
            raise ContourError(
                f"|E| = {abs(E):.3e} at lambda = {z}; perturb the contour")
        return E

    ts = list(np.linspace(0.0, 1.0, samples + 1))
    vals = [value(t) for t in ts[:-1]]
    vals.append(vals[0])
    total = 0.0
    i = 0
    while i < len(ts) - 1:
        d = cmath.phase(vals[i + 1] / vals[i])
        if abs(d) >= math.pi / 2:
            if len(ts) >= max_samples:
                raise ContourError(f"phase not resolved with {max_samples} samples")
            tm = 0.5 * (ts[i] + ts[i + 1])
            ts.insert(i + 1, tm)
            vals.insert(i + 1, value(tm))
            continue
        total += d
        i += 1
    w = total / (2 * math.pi)
    n = round(w)
    if abs(w - n) > 1e-6:
        raise ContourError(f"winding number {w} not an integer")
    return int(n)


# --------------------------------------------------------------------------
# second-order real problems


def _second_order(problem):
    if problem.order != 2 or not problem.is_real:
        raise UserError("oracle needs a real second-order problem")
    if not isinstance(problem.boundary, Separated):
        raise UserError("oracle needs separated boundary conditions")
    a0, a1, a2 = (_e.to_callable(c) for c in problem.coefficients)
    xs = np.linspace(0, problem.length, 257)
    lead = np.array([complex(a2(x)).real for x in xs])
    if not np.all(lead < 0):
        raise UserError("leading coefficient must be negative (Sturm-Liouville sign)")
    return (lambda x: complex(a0(x)).real, lambda x: complex(a1(x)).real,
            lambda x: complex(a2(x)).real)


def sturm_count(problem, lam: float, rtol: float = 1e-12, margin: float = 1e-8) -> int:
    """Number of eigenvalues strictly below ``lam``.

    Integrates the Pruefer angle of ``(u, u') = r (sin t, cos t)`` for the
    solution satisfying the left condition; each crossing of the right
    condition's angle (mod pi) is one eigenvalue below ``lam``.
    """
    a0, a1, a2 = _second_order(problem)
    lam = float(lam)
    bc = problem.boundary
    n0 = nullspace_basis(bc.B_L)[:, 0].real
    theta0 = math.atan2(n0[0], n0[1]) % math.pi
    b = bc.B_R[0].real
    thetaR = math.atan2(-b[1], b[0]) % math.pi
    if thetaR == 0.0:
        thetaR = math.pi

    def rhs(x, th):
        s, c = math.sin(th[0]), math.cos(th[0])
        return [c * c + s * (a1(x) * c + (a0(x) - lam) * s) / a2(x)]

    sol = solve_ivp(rhs, (0.0, problem.length), [theta0], method="DOP853",
                    rtol=rtol, atol=rtol)
    if not sol.success:
        raise AmbiguousCountError(f"Pruefer integration failed: {sol.message}")
    thL = float(sol.y[0, -1])
    k = (thL - thetaR) / math.pi
    if abs(k - round(k)) * math.pi < margin:
        raise AmbiguousCountError(f"lambda={lam!r} is numerically an eigenvalue")
    return max(0, math.floor(k) + 1)


def _fd_eigs(problem, N: int, count: int, fns) -> np.ndarray:
    a0, a1, a2 = fns
    L = problem.length
    h = L / (N + 1)
    x = h * np.arange(1, N + 1)
    A0 = np.array([a0(t) for t in x])
    A1 = np.array([a1(t) for t in x])
    A2 = np.array([a2(t) for t in x])
    diag = A0 - 2 * A2 / h**2
    up = A2[:-1] / h**2 + A1[:-1] / (2 * h)
    lo = A2[1:] / h**2 - A1[1:] / (2 * h)
    prod = up * lo
    if np.any(prod <= 0):
        raise UserError("grid too coarse to symmetrize the difference operator")
    # diagonal similarity turns the tridiagonal matrix symmetric
    return eigh_tridiagonal(diag, np.sqrt(prod), eigvals_only=True,
                            select="i", select_range=(0, count - 1),
                            lapack_driver="stebz")


def fd_spectrum(problem, N: int = 1024, count: int = 10) -> np.ndarray:
    """Lowest ``count`` Dirichlet eigenvalues by central differences.

    Computed with ``N`` and ``2N + 1`` interior points (mesh width halves)
    and combined by Richardson extrapolation ``(4 fine - coarse) / 3``.
    """
    if N < 64:
        raise UserError("N must be at least 64")
    fns = _second_order(problem)
    bc = problem.boundary
    e1 = np.array([1, 0])
    for B in (bc.B_L, bc.B_R):
        if not np.allclose(np.abs(B[0]), e1):
            raise UserError("finite-difference oracle supports Dirichlet conditions only")
    coarse = _fd_eigs(problem, N, count, fns)
    fine = _fd_eigs(problem, 2 * N + 1, count, fns)
    return (4 * fine - coarse) / 3
