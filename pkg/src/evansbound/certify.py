"""Certified eigenvalue-free regions from weighted Evans values.

``|E(lambda)| / W(lambda)`` is a lower bound on the distance from ``lambda``
to the spectrum. This module turns it into exclusion disks, monotone
quasi-Newton sweeps towards the nearest eigenvalue on either side, and
eigenvalue-free regions in the joint (Floquet exponent, lambda) plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import evans as _ev
from . import greens
from .errors import CoverageGapError, SignChangeError, UserError
from .evans import EvansValue
from .problem import FloquetPeriodic


@dataclass(frozen=True)
class ExclusionDisk:
    center: complex
    radius: float

    def contains(self, lam: complex) -> bool:
        return abs(lam - self.center) < self.radius


def bound(problem, lam: complex, tol: float | None = None,
          quad: greens.QuadratureSpec | None = None) -> EvansValue:
    """``E``, ``W`` and the certified distance bound ``|E|/W`` at ``lam``."""
    asm = greens.assemble(problem, lam, quad, tol)
    W = greens.weight(asm, quad)
    E = _ev._finish(problem, lam, asm.E)
    return EvansValue(complex(lam), E, W, abs(E) / W)


def disk(problem, lam: complex, tol: float | None = None, quad=None) -> ExclusionDisk:
    v = bound(problem, lam, tol, quad)
    return ExclusionDisk(complex(lam), v.bound)


@dataclass
class SweepTrace:
    direction: int
    iterates: list = field(default_factory=list)
    bounds: list = field(default_factory=list)
    values: list = field(default_factory=list)
    reason: str = ""

    @property
    def limit(self) -> float:
        return self.iterates[-1]


def qnewton_sweep(problem, lam0: float, direction: int = 1, stop_tol: float = 1e-10,
                  max_iter: int = 100, tol: float | None = None, quad=None) -> SweepTrace:
    """Iterate ``lam_{i+1} = lam_i + direction * |E|/W`` from a real ``lam0``.

    Every step stays inside the disk certified at the previous iterate, so
    the sequence increases (or decreases) monotonically towards the nearest
    eigenvalue on that side without passing it.
    """
    if direction not in (1, -1):
        raise UserError("direction must be +1 or -1")
    if not problem.is_real:
        raise UserError("sweeps need a real problem")
    lam = float(lam0)
    trace = SweepTrace(direction)
    sign0 = None
    for it in range(max_iter + 1):
        v = bound(problem, lam, tol, quad)
        E = float(v.E)
        trace.iterates.append(lam)
        trace.bounds.append(v.bound)
        trace.values.append(E)
        s = math.copysign(1.0, E)
        if sign0 is None:
            sign0 = s
        elif s != sign0 and E != 0.0:
            # crossing a simple root is impossible; tolerate it only in the noise
            if v.bound > 1e3 * stop_tol:
                raise SignChangeError(
                    f"Evans function changed sign at lambda={lam!r} "
                    f"(bound {v.bound:.3e}); a double root was probably stepped over")
            trace.reason = "converged"
            return trace
        if v.bound < stop_tol:
            trace.reason = "converged"
            return trace
        if len(trace.bounds) > 1 and v.bound >= trace.bounds[-2] and v.bound < 1e-6:
            trace.reason = "bound-stall"
            return trace
        if it == max_iter:
            break
        nxt = lam + direction * v.bound
        if nxt == lam:
            trace.reason = "bound-stall"
            return trace
        lam = nxt
    trace.reason = "max-iter"
    return trace


def slope_at_eigenvalue(problem, lam_star: float, h: float = 1e-4, tol=None, quad=None) -> float:
    """Central difference of the signed ratio ``E/W`` at ``lam_star``.

    For second-order separated problems the magnitude is 1 at a simple
    eigenvalue; for higher order the value is only reported.
    """
    if not problem.is_real:
        raise UserError("slope needs a real problem")
    hi = bound(problem, lam_star + h, tol, quad)
    lo = bound(problem, lam_star - h, tol, quad)
    return (float(hi.E) / hi.W - float(lo.E) / lo.W) / (2 * h)


# --------------------------------------------------------------------------
# Floquet parameter extension


def perturbation_coefficients(order: int, mu: float, dmu: float) -> np.ndarray:
    """``g[j, p]`` with ``L[mu+dmu] - L[mu] = sum_j (sum_p g[j, p] a_p(x)) d^j``.

    From ``(d + i(mu+dmu))^p - (d + i mu)^p
    = sum_{j<p} C(p, j) ((i(mu+dmu))^(p-j) - (i mu)^(p-j)) d^j``.
    """
    g = np.zeros((order, order + 1), dtype=complex)
    a, b = 1j * (mu + dmu), 1j * mu
    for p in range(order + 1):
        for j in range(min(p, order)):
            g[j, p] = math.comb(p, j) * (a ** (p - j) - b ** (p - j))
    return g


@dataclass(frozen=True, eq=False)
class ExtensionRegion:
    """Eigenvalue-free set ``{(mu + dmu, lam + dlam): |dlam| < radius(dmu)}``.

    ``radius(dmu) = (1 - sum_j ||b_j d^j R||) |E| / W_0`` where ``R`` is the
    resolvent at the base point and ``b_j`` the perturbation multipliers.
    """

    mu: float
    lam: complex
    order: int
    E_abs: float
    W: tuple
    gram: tuple
    support: tuple        # (dmu_lo, dmu_hi) where radius >= 0
    polyline: np.ndarray  # closed boundary, columns (mu, Re dlam extent)

    @property
    def disk_radius(self) -> float:
        return self.E_abs / self.W[0]

    def norm_bounds(self) -> tuple:
        """``W_j / |E|`` for j = 0..n-1."""
        return tuple(w / self.E_abs for w in self.W)

    def perturbation_norm(self, dmu: float) -> float:
        if self.E_abs == 0:
            return math.inf
        g = perturbation_coefficients(self.order, self.mu, dmu)
        total = 0.0
        for j, H in enumerate(self.gram):
            q = (g[j] @ H @ g[j].conj()).real
            total += math.sqrt(max(q, 0.0))
        return total / self.E_abs

    def radius(self, dmu: float) -> float:
        """Largest certified ``|dlam|`` at shift ``dmu`` (negative outside the region)."""
        if dmu == 0:
            return self.disk_radius
        return (1.0 - self.perturbation_norm(dmu)) * self.E_abs / self.W[0]

    def interval_above(self, h: float) -> tuple | None:
        """``dmu`` interval around 0 where the polyline is at least ``h`` high."""
        pts = self.polyline
        half = (len(pts) - 1) // 2
        upper = pts[: half + 1]
        xs, ys = upper[:, 0] - self.mu, upper[:, 1]
        k0 = int(np.argmin(np.abs(xs)))
        if ys[k0] < h:
            return None

        def walk(step):
            k = k0
            while 0 <= k + step < len(xs) and ys[k + step] >= h:
                k += step
            if not 0 <= k + step < len(xs):
                return xs[k]
            x0, y0, x1, y1 = xs[k], ys[k], xs[k + step], ys[k + step]
            return x0 + (h - y0) * (x1 - x0) / (y1 - y0) if y1 != y0 else x0

        return walk(-1), walk(1)


def _edge(region_fn, direction: int, start: float) -> float:
    # first zero of radius(direction * t), t > 0
    t = start
    for _ in range(200):
        if region_fn(direction * t) <= 0:
            break
        t *= 2
    else:
        return direction * t
    lo, hi = 0.0, t
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if region_fn(direction * mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return direction * lo


def extension_region(problem, lam: complex, dmu_grid=None, quad=None, tol=None,
                     samples: int = 64) -> ExtensionRegion:
    """Certified (dmu, dlam) region around the problem's Floquet exponent.

    The boundary is sampled at ``samples`` points per side; ``dmu_grid``, if
    given, replaces the automatic sampling of the support.
    """
    if not isinstance(problem.boundary, FloquetPeriodic):
        raise UserError("extension regions need a Floquet-periodic problem")
    asm = greens.assemble(problem, lam, quad, tol)
    n = problem.order
    W = tuple(greens.weight_derivative(asm, j, quad) for j in range(n))
    gram = tuple(greens.gram_matrices(asm))
    base = ExtensionRegion(problem.mu, complex(lam), n, abs(asm.E), W, gram, (0.0, 0.0),
                           np.zeros((0, 2)))
    if base.E_abs == 0:
        support = (0.0, 0.0)
    else:
        start = 1e-3 * 2 * math.pi / problem.length
        support = (_edge(base.radius, -1, start), _edge(base.radius, 1, start))
    if dmu_grid is None:
        left = np.linspace(support[0], 0.0, samples + 1)
        right = np.linspace(0.0, support[1], samples + 1)[1:]
        dmu_grid = np.concatenate([left, right])
    dmu_grid = np.asarray(dmu_grid, dtype=float)
    r = np.array([max(base.radius(d), 0.0) for d in dmu_grid])
    xs = problem.mu + dmu_grid
    upper = np.column_stack([xs, r])
    lower = np.column_stack([xs[::-1], -r[::-1]])
    poly = np.vstack([upper, lower[1:], upper[:1]])
    return ExtensionRegion(base.mu, base.lam, n, base.E_abs, W, gram, support, poly)


@dataclass(frozen=True)
class CertifiedRectangle:
    """``[mu_lo, mu_hi] x {|dlam| <= h}`` around the base ``lam``."""

    lam: complex
    h: float
    mu_lo: float
    mu_hi: float


def _covers(intervals, period: float) -> tuple | None:
    """First uncovered gap of the circle ``[0, period)`` by the intervals, or None."""
    segs = []
    for a, b in intervals:
        if b - a >= period:
            return None
        a0 = a % period
        b0 = a0 + (b - a)
        if b0 > period:
            segs += [(a0, period), (0.0, b0 - period)]
        else:
            segs.append((a0, b0))
    if not segs:
        return (0.0, period)
    segs.sort()
    reach = 0.0
    for a, b in segs:
        if a > reach:
            return (reach, a)
        reach = max(reach, b)
    if reach < period:
        return (reach, period)
    return None


def rectangle_from_diamonds(regions, period: float | None = None,
                            rel_tol: float = 1e-12) -> CertifiedRectangle:
    """Tallest full-width rectangle inside the union of the regions.

    The regions' polylines are taken as the boundary (piecewise linear), so
    the answer is exact for them; ``h`` is found by bisection on the height
    with a coverage test of the ``mu`` circle of length ``period``.
    """
    if not regions:
        raise UserError("no regions given")
    if period is None:
        raise UserError("period of the mu domain required")
    lam = regions[0].lam

    def intervals(h):
        out = []
        for reg in regions:
            iv = reg.interval_above(h)
            if iv is not None:
                out.append((reg.mu + iv[0], reg.mu + iv[1]))
        return out

    gap = _covers(intervals(0.0), period)
    if gap is not None:
        raise CoverageGapError(*gap)
    lo, hi = 0.0, max(reg.disk_radius for reg in regions)
    if _covers(intervals(hi), period) is None:
        lo = hi
    while hi - lo > rel_tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if _covers(intervals(mid), period) is None:
            lo = mid
        else:
            hi = mid
    return CertifiedRectangle(lam, lo, 0.0, period)


def extension_grid(problem, lam: complex, mus, quad=None, tol=None, samples: int = 64,
                   threads: int = 1) -> list:
    """One :class:`ExtensionRegion` per Floquet exponent in ``mus``, in order."""
    def one(mu):
        return extension_region(problem.with_mu(float(mu)), lam, None, quad, tol, samples)

    mus = [float(m) for m in mus]
    if threads <= 1:
        return [one(m) for m in mus]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(one, mus))


def mu_period(problem) -> float:
    """Length of the Floquet exponent's fundamental domain, ``2 pi / L``."""
    return 2 * math.pi / problem.length
