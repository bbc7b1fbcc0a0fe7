"""Pure-Python kernels, used when the compiled ``_core`` extension is absent.

Mirrors ``_core.pyx`` step for step (same tableau, same step-size control) so
the two backends agree to integrator tolerance.
"""

from __future__ import annotations

import cmath

import numpy as np

from . import elliptic
from . import expr as _e

_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)

_UNARY = {
    _e.OP_SIN: cmath.sin, _e.OP_COS: cmath.cos, _e.OP_EXP: cmath.exp,
    _e.OP_SINH: cmath.sinh, _e.OP_COSH: cmath.cosh, _e.OP_SQRT: cmath.sqrt,
    _e.OP_LOG: cmath.log,
}


def evaluate(program, x: float) -> complex:
    stack = []
    push, pop = stack.append, stack.pop
    for op, arg in zip(program.ops, program.args):
        if op == _e.OP_CONST:
            push(program.consts[arg])
        elif op == _e.OP_X:
            push(complex(x))
        elif op == _e.OP_ADD:
            b = pop()
            stack[-1] += b
        elif op == _e.OP_SUB:
            b = pop()
            stack[-1] -= b
        elif op == _e.OP_MUL:
            b = pop()
            stack[-1] *= b
        elif op == _e.OP_DIV:
            b = pop()
            stack[-1] /= b
        elif op == _e.OP_POW:
            b = pop()
            stack[-1] = stack[-1] ** b
        elif op == _e.OP_IPOW:
            stack[-1] = stack[-1] ** arg
        elif op == _e.OP_NEG:
            stack[-1] = -stack[-1]
        elif op in _UNARY:
            stack[-1] = _UNARY[op](stack[-1])
        elif op in (_e.OP_SN, _e.OP_CN, _e.OP_DN):
            m = pop()
            u = stack[-1]
            if u.imag != 0 or m.imag != 0 or not (0.0 <= m.real < 1.0):
                raise ValueError("domain error in compiled expression")
            stack[-1] = complex(elliptic.jacobi(u.real, m.real)[op - _e.OP_SN])
        elif op == _e.OP_K:
            m = stack[-1]
            if m.imag != 0 or not (0.0 <= m.real < 1.0):
                raise ValueError("domain error in compiled expression")
            stack[-1] = complex(elliptic.ellipk(m.real))
    return stack[0]


def companion_matrix_fn(programs, n: int, lam: complex, mu: float):
    """Return ``A(x)`` for the companion system with coefficients a_0..a_n."""
    consts = [p.consts[0] if len(p.ops) == 1 and p.ops[0] == _e.OP_CONST else None
              for p in programs]
    imu = 1j * mu
    base = np.zeros((n, n), dtype=complex)
    for r in range(n - 1):
        base[r, r] = -imu
        base[r, r + 1] = 1.0

    def fn(x):
        a = [c if c is not None else evaluate(p, x) for c, p in zip(consts, programs)]
        A = base.copy()
        lead = a[n]
        for p in range(n):
            A[n - 1, p] = -a[p] / lead
        A[n - 1, 0] += lam / lead
        A[n - 1, n - 1] -= imu
        return A

    return fn


def _step(fn, x, h, Y, K1, rtol, atol, adaptive):
    ks = [K1]
    for s in range(1, 6):
        Ys = Y + h * sum(a * k for a, k in zip(_A[s], ks))
        ks.append(fn(x + _C[s] * h) @ Ys)
    Yn = Y + h * sum(b * k for b, k in zip(_B, ks))
    K7 = fn(x + h) @ Yn
    ks.append(K7)
    if not adaptive:
        return Yn, K7, 0.0
    err = np.abs(h * sum(e * k for e, k in zip(_E, ks)))
    scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Yn))
    return Yn, K7, float(np.max(err / scale))


def integrate_matrix(fn, nodes, U0, rtol, atol, fixed_steps=0, h0=0.0):
    """Propagate ``U' = fn(x) U`` through ``nodes``; returns ``(U, stats)``."""
    nodes = np.asarray(nodes, dtype=float)
    Y = np.array(U0, dtype=complex)
    out = np.zeros((len(nodes),) + Y.shape, dtype=complex)
    out[0] = Y
    x = float(nodes[0])
    K1 = fn(x) @ Y
    span = abs(nodes[-1] - nodes[0])
    h = h0 if h0 > 0 else (0.01 * span if span > 0 else 1.0)
    steps = rejected = 0
    for k in range(1, len(nodes)):
        target = float(nodes[k])
        if fixed_steps > 0:
            hfix = (target - x) / fixed_steps
            for s in range(fixed_steps):
                hs = target - x if s == fixed_steps - 1 else hfix
                Y, K1, _ = _step(fn, x, hs, Y, K1, rtol, atol, False)
                x = target if s == fixed_steps - 1 else x + hs
                steps += 1
        else:
            while x < target:
                hs, last = h, False
                if x + hs >= target or target - (x + hs) < 1e-3 * hs:
                    hs, last = target - x, True
                if hs < 1e-14 * (abs(x) + span) and not last:
                    raise FloatingPointError(x)
                Yn, K7, errn = _step(fn, x, hs, Y, K1, rtol, atol, True)
                if errn <= 1.0:
                    x = target if last else x + hs
                    Y, K1 = Yn, K7
                    steps += 1
                    fac = 5.0 if errn == 0.0 else min(5.0, max(0.2, 0.9 * errn ** -0.2))
                    if not (last and hs < h and fac >= 1.0):
                        h = hs * fac
                else:
                    rejected += 1
                    h = hs * max(0.2, 0.9 * errn ** -0.2)
        out[k] = Y
    return out, {"steps": steps, "rejected": rejected}


def integrate(programs, n, lam, mu, nodes, U0, rtol, atol, fixed_steps=0, h0=0.0,
              adjoint=False, reverse=False, origin=0.0):
    """Same contract as ``_core.integrate``."""
    if len(programs) != n + 1:
        raise ValueError("need n+1 coefficient programs")
    base = companion_matrix_fn(programs, n, complex(lam), float(mu))
    sign = -1.0 if reverse else 1.0

    def fn(s):
        A = base(origin - s if reverse else s)
        return sign * (-A.T if adjoint else A)

    try:
        return integrate_matrix(fn, nodes, U0, rtol, atol, fixed_steps, h0)
    except FloatingPointError as exc:
        if reverse:
            raise FloatingPointError(origin - exc.args[0]) from None
        raise
