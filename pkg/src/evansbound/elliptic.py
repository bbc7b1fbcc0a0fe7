"""Jacobi elliptic functions and the complete elliptic integral K.

Parameter convention is the ``m`` (not modulus ``k``) one, so that
``cn(K(m), m) == 0``. Everything is computed from the arithmetic-geometric
mean and the descending Landen transformation; no special-function library
is involved.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError

_EPS = 2.0**-53
_MAXITER = 40


def _check_m(m: float) -> float:
    m = float(m)
    if not (0.0 <= m < 1.0):
        raise DomainError(f"elliptic parameter m={m!r} outside [0, 1)")
    return m


def agm(a: float, b: float) -> float:
    """Arithmetic-geometric mean of two positive numbers."""
    for _ in range(_MAXITER):
        if abs(a - b) <= _EPS * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk(m: float) -> float:
    """Complete elliptic integral of the first kind, K(m) = pi / (2 agm(1, sqrt(1-m)))."""
    m = _check_m(m)
    return math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - m)))


def _landen_table(m: float):
    a, b, c = 1.0, math.sqrt(1.0 - m), math.sqrt(m)
    table = [(a, c)]
    for _ in range(_MAXITER):
        if abs(c) <= _EPS * a:
            break
        a, b, c = 0.5 * (a + b), math.sqrt(a * b), 0.5 * (a - b)
        table.append((a, c))
    return table


def _amplitude(x, m: float, table):
    # descending Landen recursion, phi_N = 2^N a_N x
    nlev = len(table) - 1
    a_n = table[-1][0]
    phi = (2.0**nlev) * a_n * x
    for level in range(nlev, 0, -1):
        a, c = table[level]
        if isinstance(phi, np.ndarray):
            phi = 0.5 * (phi + np.arcsin(c / a * np.sin(phi)))
        else:
            phi = 0.5 * (phi + math.asin(c / a * math.sin(phi)))
    return phi


def jacobi(x, m: float):
    """Return ``(sn, cn, dn)`` at real ``x`` (scalar or array) for 0 <= m < 1.

    ``x`` is first reduced modulo the real period 4K so that the periodic
    extension holds to rounding error.
    """
    m = _check_m(m)
    table = _landen_table(m)
    period = 4.0 * math.pi / (2.0 * agm(1.0, math.sqrt(1.0 - m)))
    if np.ndim(x) == 0:
        x = float(x)
        xr = x - period * math.floor(x / period + 0.5)
        phi = _amplitude(xr, m, table)
        sn, cn = math.sin(phi), math.cos(phi)
        return sn, cn, math.sqrt(1.0 - m * sn * sn)
    x = np.asarray(x, dtype=float)
    xr = x - period * np.floor(x / period + 0.5)
    phi = _amplitude(xr, m, table)
    sn, cn = np.sin(phi), np.cos(phi)
    return sn, cn, np.sqrt(1.0 - m * sn * sn)


def sn(x, m):
    return jacobi(x, m)[0]


def cn(x, m):
    return jacobi(x, m)[1]


def dn(x, m):
    return jacobi(x, m)[2]
