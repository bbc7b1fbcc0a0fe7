# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: coefficient stack machine and the Dormand-Prince 5(4)
integrator for companion-form matrix ODEs.

The pure-Python twin lives in ``_pycore.py``; both expose ``integrate`` and
``evaluate`` with identical signatures.
"""

import numpy as np

from libc.math cimport sin, cos, sqrt, asin, fabs, floor, pow, M_PI, ldexp
from libc.stdlib cimport malloc, free

cdef extern from "complex.h" nogil:
    double complex csin(double complex)
    double complex ccos(double complex)
    double complex cexp(double complex)
    double complex csinh(double complex)
    double complex ccosh(double complex)
    double complex csqrt(double complex)
    double complex clog(double complex)
    double complex cpow(double complex, double complex)
    double creal(double complex)
    double cimag(double complex)
    double cabs(double complex)

DEF MAXN = 8
DEF MAXSTACK = 64
DEF MAXLANDEN = 40

cdef enum:
    OP_CONST, OP_X, OP_ADD, OP_SUB, OP_MUL, OP_DIV, OP_POW, OP_NEG,
    OP_SIN, OP_COS, OP_EXP, OP_SINH, OP_COSH, OP_SQRT, OP_LOG,
    OP_SN, OP_CN, OP_DN, OP_K, OP_IPOW

cdef enum:
    ERR_NONE = 0
    ERR_DOMAIN = 1
    ERR_UNDERFLOW = 2
    ERR_STACK = 3

cdef double EPS = 1.1102230246251565e-16


cdef double _agm(double a, double b) noexcept nogil:
    cdef int it
    for it in range(MAXLANDEN):
        if fabs(a - b) <= EPS * a:
            break
        a, b = 0.5 * (a + b), sqrt(a * b)
    return 0.5 * (a + b)


cdef int _jacobi(double x, double m, double* sn, double* cn, double* dn) noexcept nogil:
    cdef double a[MAXLANDEN + 1]
    cdef double c[MAXLANDEN + 1]
    cdef double b, anew, period, phi
    cdef int lev = 0, k
    if not (m >= 0.0 and m < 1.0):
        return ERR_DOMAIN
    a[0] = 1.0
    b = sqrt(1.0 - m)
    c[0] = sqrt(m)
    while lev < MAXLANDEN and fabs(c[lev]) > EPS * a[lev]:
        anew = 0.5 * (a[lev] + b)
        c[lev + 1] = 0.5 * (a[lev] - b)
        b = sqrt(a[lev] * b)
        a[lev + 1] = anew
        lev += 1
    period = 4.0 * M_PI / (2.0 * _agm(1.0, sqrt(1.0 - m)))
    x = x - period * floor(x / period + 0.5)
    phi = ldexp(a[lev] * x, lev)
    for k in range(lev, 0, -1):
        phi = 0.5 * (phi + asin(c[k] / a[k] * sin(phi)))
    sn[0] = sin(phi)
    cn[0] = cos(phi)
    dn[0] = sqrt(1.0 - m * sn[0] * sn[0])
    return ERR_NONE


cdef double complex _ipow(double complex z, int k) noexcept nogil:
    cdef double complex r = 1.0
    cdef int neg = k < 0
    if neg:
        k = -k
    while k:
        if k & 1:
            r = r * z
        z = z * z
        k >>= 1
    if neg:
        return 1.0 / r
    return r


cdef struct Prog:
    const int* ops
    const int* args
    const double complex* consts
    int nops


cdef double complex _run(Prog* p, double x, int* err) noexcept nogil:
    cdef double complex stack[MAXSTACK]
    cdef int sp = 0, i, op
    cdef double complex u, m
    cdef double s, c, d
    for i in range(p.nops):
        op = p.ops[i]
        if op == OP_CONST:
            stack[sp] = p.consts[p.args[i]]
            sp += 1
        elif op == OP_X:
            stack[sp] = x
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_POW:
            sp -= 1
            stack[sp - 1] = cpow(stack[sp - 1], stack[sp])
        elif op == OP_IPOW:
            stack[sp - 1] = _ipow(stack[sp - 1], p.args[i])
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_SIN:
            stack[sp - 1] = csin(stack[sp - 1])
        elif op == OP_COS:
            stack[sp - 1] = ccos(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = cexp(stack[sp - 1])
        elif op == OP_SINH:
            stack[sp - 1] = csinh(stack[sp - 1])
        elif op == OP_COSH:
            stack[sp - 1] = ccosh(stack[sp - 1])
        elif op == OP_SQRT:
            stack[sp - 1] = csqrt(stack[sp - 1])
        elif op == OP_LOG:
            stack[sp - 1] = clog(stack[sp - 1])
        elif op == OP_SN or op == OP_CN or op == OP_DN:
            sp -= 1
            m = stack[sp]
            u = stack[sp - 1]
            if cimag(u) != 0.0 or cimag(m) != 0.0:
                err[0] = ERR_DOMAIN
                return 0.0
            if _jacobi(creal(u), creal(m), &s, &c, &d) != ERR_NONE:
                err[0] = ERR_DOMAIN
                return 0.0
            if op == OP_SN:
                stack[sp - 1] = s
            elif op == OP_CN:
                stack[sp - 1] = c
            else:
                stack[sp - 1] = d
        elif op == OP_K:
            m = stack[sp - 1]
            if cimag(m) != 0.0 or not (creal(m) >= 0.0 and creal(m) < 1.0):
                err[0] = ERR_DOMAIN
                return 0.0
            stack[sp - 1] = M_PI / (2.0 * _agm(1.0, sqrt(1.0 - creal(m))))
    return stack[0]


cdef class _Programs:
    """Coefficient programs a_0..a_n packed into contiguous buffers."""
    cdef int count
    cdef Prog* progs
    cdef int[::1] ops
    cdef int[::1] args
    cdef double complex[::1] consts
    cdef int[::1] is_const
    cdef double complex[::1] const_val

    def __cinit__(self, programs):
        cdef int k, off_o = 0, off_c = 0
        self.count = len(programs)
        tot_o = sum(len(p.ops) for p in programs)
        tot_c = sum(len(p.consts) for p in programs)
        self.ops = np.array([o for p in programs for o in p.ops] or [0], dtype=np.intc)
        self.args = np.array([a for p in programs for a in p.args] or [0], dtype=np.intc)
        self.consts = np.array([c for p in programs for c in p.consts] or [0j], dtype=complex)
        self.is_const = np.zeros(self.count, dtype=np.intc)
        self.const_val = np.zeros(self.count, dtype=complex)
        self.progs = <Prog*> malloc(self.count * sizeof(Prog))
        for k, p in enumerate(programs):
            if p.depth > MAXSTACK:
                raise ValueError("expression too deep for the compiled evaluator")
            self.progs[k].ops = &self.ops[off_o]
            self.progs[k].args = &self.args[off_o]
            self.progs[k].consts = &self.consts[off_c] if len(p.consts) else &self.consts[0]
            self.progs[k].nops = len(p.ops)
            if len(p.ops) == 1 and p.ops[0] == OP_CONST:
                self.is_const[k] = 1
                self.const_val[k] = p.consts[0]
            off_o += len(p.ops)
            off_c += len(p.consts)

    def __dealloc__(self):
        if self.progs != NULL:
            free(self.progs)


def evaluate(program, double x):
    """Evaluate one compiled program at ``x`` (testing hook)."""
    cdef _Programs ps = _Programs([program])
    cdef int err = 0
    cdef double complex v = _run(&ps.progs[0], x, &err)
    if err:
        raise ValueError("domain error in compiled expression")
    return complex(v)


cdef int _companion(_Programs ps, int n, double complex lam, double complex imu,
                    double x, double complex* last) noexcept nogil:
    """Fill the last row of the companion matrix at x; returns error code."""
    cdef int p, err = 0
    cdef double complex a[MAXN + 1]
    for p in range(n + 1):
        if ps.is_const[p]:
            a[p] = ps.const_val[p]
        else:
            a[p] = _run(&ps.progs[p], x, &err)
            if err:
                return err
    for p in range(n):
        last[p] = -a[p] / a[n]
    last[0] = last[0] + lam / a[n]
    last[n - 1] = last[n - 1] - imu
    return ERR_NONE


cdef struct Mode:
    int adjoint      # integrate Y' = -A^T Y instead of Y' = A Y
    int reverse      # integration variable s runs backwards: x = origin - s
    double origin


cdef inline int _lastrow(_Programs ps, int n, double complex lam, double complex imu,
                         Mode* md, double s, double complex* last) noexcept nogil:
    return _companion(ps, n, lam, imu, md.origin - s if md.reverse else s, last)


cdef inline void _rhs(int n, double complex imu, Mode* md, double complex* last,
                      double complex* Y, double complex* K) noexcept nogil:
    # K = +-A Y (or +-(-A^T) Y) for the companion matrix: shifted identity
    # rows plus the coefficient row
    cdef int r, c, p
    cdef double complex acc
    cdef double sg = -1.0 if md.reverse else 1.0
    if not md.adjoint:
        for r in range(n - 1):
            for c in range(n):
                K[r * n + c] = sg * (Y[(r + 1) * n + c] - imu * Y[r * n + c])
        for c in range(n):
            acc = 0.0
            for p in range(n):
                acc = acc + last[p] * Y[p * n + c]
            K[(n - 1) * n + c] = sg * acc
        return
    # (A^T Y)[r] = -i mu Y[r] (r < n-1) + Y[r-1] (r >= 1) + last[r] Y[n-1]
    for r in range(n):
        for c in range(n):
            acc = last[r] * Y[(n - 1) * n + c]
            if r < n - 1:
                acc = acc - imu * Y[r * n + c]
            if r >= 1:
                acc = acc + Y[(r - 1) * n + c]
            K[r * n + c] = -sg * acc


# Dormand-Prince 5(4) tableau
cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40


cdef int _step(_Programs ps, int n, double complex lam, double complex imu, Mode* md,
               double x, double hs, double complex* Y, double complex* K1,
               double complex* Yn, double complex* K7, double complex* L7,
               double rtol, double atol, int adaptive, double* errn) noexcept nogil:
    """One Dormand-Prince step of size hs from (x, Y) with FSAL derivative K1."""
    cdef int nn = n * n, i, err
    cdef double complex Ys[MAXN * MAXN]
    cdef double complex K2[MAXN * MAXN]
    cdef double complex K3[MAXN * MAXN]
    cdef double complex K4[MAXN * MAXN]
    cdef double complex K5[MAXN * MAXN]
    cdef double complex K6[MAXN * MAXN]
    cdef double complex Lt[MAXN]
    cdef double e, sc, worst = 0.0
    for i in range(nn):
        Ys[i] = Y[i] + hs * A21 * K1[i]
    err = _lastrow(ps, n, lam, imu, md, x + C2 * hs, Lt)
    if err:
        return err
    _rhs(n, imu, md, Lt, Ys, K2)
    for i in range(nn):
        Ys[i] = Y[i] + hs * (A31 * K1[i] + A32 * K2[i])
    err = _lastrow(ps, n, lam, imu, md, x + C3 * hs, Lt)
    if err:
        return err
    _rhs(n, imu, md, Lt, Ys, K3)
    for i in range(nn):
        Ys[i] = Y[i] + hs * (A41 * K1[i] + A42 * K2[i] + A43 * K3[i])
    err = _lastrow(ps, n, lam, imu, md, x + C4 * hs, Lt)
    if err:
        return err
    _rhs(n, imu, md, Lt, Ys, K4)
    for i in range(nn):
        Ys[i] = Y[i] + hs * (A51 * K1[i] + A52 * K2[i] + A53 * K3[i] + A54 * K4[i])
    err = _lastrow(ps, n, lam, imu, md, x + C5 * hs, Lt)
    if err:
        return err
    _rhs(n, imu, md, Lt, Ys, K5)
    for i in range(nn):
        Ys[i] = Y[i] + hs * (A61 * K1[i] + A62 * K2[i] + A63 * K3[i] + A64 * K4[i] + A65 * K5[i])
    err = _lastrow(ps, n, lam, imu, md, x + hs, Lt)
    if err:
        return err
    _rhs(n, imu, md, Lt, Ys, K6)
    for i in range(nn):
        Yn[i] = Y[i] + hs * (B1 * K1[i] + B3 * K3[i] + B4 * K4[i] + B5 * K5[i] + B6 * K6[i])
    err = _lastrow(ps, n, lam, imu, md, x + hs, L7)
    if err:
        return err
    _rhs(n, imu, md, L7, Yn, K7)
    if adaptive:
        for i in range(nn):
            e = cabs(hs * (E1 * K1[i] + E3 * K3[i] + E4 * K4[i] + E5 * K5[i] + E6 * K6[i] + E7 * K7[i]))
            sc = atol + rtol * max(cabs(Y[i]), cabs(Yn[i]))
            if e / sc > worst:
                worst = e / sc
    errn[0] = worst
    return ERR_NONE


cdef int _integrate(_Programs ps, int n, double complex lam, double complex imu, Mode* md,
                    double* nodes, int nnodes, double complex* out,
                    double rtol, double atol, int fixed_steps, double h,
                    double* fail_x, long* nsteps, long* nrej) noexcept nogil:
    cdef int nn = n * n, i, k, s, err, last
    cdef double complex Y[MAXN * MAXN]
    cdef double complex Yn[MAXN * MAXN]
    cdef double complex K1[MAXN * MAXN]
    cdef double complex K7[MAXN * MAXN]
    cdef double complex L7[MAXN]
    cdef double x = nodes[0], target, hs, hfix, errn, fac, span, hmin
    for i in range(nn):
        Y[i] = out[i]
    err = _lastrow(ps, n, lam, imu, md, x, L7)
    if err:
        fail_x[0] = x
        return err
    _rhs(n, imu, md, L7, Y, K1)
    span = fabs(nodes[nnodes - 1] - nodes[0])
    if h <= 0.0:
        h = 0.01 * span if span > 0 else 1.0
    for k in range(1, nnodes):
        target = nodes[k]
        if fixed_steps > 0:
            hfix = (target - x) / fixed_steps
            for s in range(fixed_steps):
                hs = target - x if s == fixed_steps - 1 else hfix
                err = _step(ps, n, lam, imu, md, x, hs, Y, K1, Yn, K7, L7, rtol, atol, 0, &errn)
                if err:
                    fail_x[0] = x
                    return err
                x = target if s == fixed_steps - 1 else x + hs
                for i in range(nn):
                    Y[i] = Yn[i]
                    K1[i] = K7[i]
                nsteps[0] += 1
        else:
            while x < target:
                hs = h
                last = 0
                if x + hs >= target or target - (x + hs) < 1e-3 * hs:
                    hs = target - x
                    last = 1
                hmin = 1e-14 * (fabs(x) + span)
                if hs < hmin and not last:
                    fail_x[0] = x
                    return ERR_UNDERFLOW
                err = _step(ps, n, lam, imu, md, x, hs, Y, K1, Yn, K7, L7, rtol, atol, 1, &errn)
                if err:
                    fail_x[0] = x
                    return err
                if errn <= 1.0:
                    x = target if last else x + hs
                    for i in range(nn):
                        Y[i] = Yn[i]
                        K1[i] = K7[i]
                    nsteps[0] += 1
                    fac = 5.0 if errn == 0.0 else min(5.0, max(0.2, 0.9 * pow(errn, -0.2)))
                    # a step clipped to land on a node does not shrink the proposal
                    if not (last and hs < h and fac >= 1.0):
                        h = hs * fac
                else:
                    nrej[0] += 1
                    h = hs * max(0.2, 0.9 * pow(errn, -0.2))
        for i in range(nn):
            out[k * nn + i] = Y[i]
    return ERR_NONE


def integrate(programs, int n, lam, double mu, nodes, U0, double rtol, double atol,
              int fixed_steps=0, double h0=0.0, bint adjoint=False, bint reverse=False,
              double origin=0.0):
    """Propagate ``U' = A(x, lam) U`` through ``nodes`` starting from ``U0``.

    ``programs`` are the companion coefficients a_0..a_n. Returns
    ``(U, stats)`` where ``U[k]`` is the solution at ``nodes[k]``. With
    ``adjoint`` the system is ``U' = -A^T U``; with ``reverse`` the nodes are
    values of ``s = origin - x`` (increasing), so x runs backwards.
    """
    if n < 1 or n > MAXN:
        raise ValueError(f"order {n} outside 1..{MAXN}")
    if len(programs) != n + 1:
        raise ValueError("need n+1 coefficient programs")
    cdef _Programs ps = _Programs(programs)
    cdef double[::1] xs = np.ascontiguousarray(nodes, dtype=float)
    cdef int nnodes = xs.shape[0]
    out_arr = np.zeros((nnodes, n, n), dtype=complex)
    out_arr[0] = U0
    cdef double complex[:, :, ::1] out = out_arr
    cdef double complex clam = lam
    cdef double complex imu = 1j * mu
    cdef double fail_x = 0.0
    cdef long nsteps = 0, nrej = 0
    cdef int code
    cdef Mode md
    md.adjoint = adjoint
    md.reverse = reverse
    md.origin = origin
    with nogil:
        code = _integrate(ps, n, clam, imu, &md, &xs[0], nnodes, &out[0, 0, 0],
                          rtol, atol, fixed_steps, h0, &fail_x, &nsteps, &nrej)
    if reverse:
        fail_x = origin - fail_x
    if code == ERR_DOMAIN:
        raise ValueError(f"domain error evaluating coefficients at x={fail_x!r}")
    if code == ERR_UNDERFLOW:
        raise FloatingPointError(fail_x)
    return out_arr, {"steps": nsteps, "rejected": nrej}
