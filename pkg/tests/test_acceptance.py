"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the lines are also
collected into an "acceptance criteria" section at the end of any run.
"""

import dataclasses
import math
import time

import numpy as np
from scipy.stats import unitary_group

from evansbound import certify, greens, matbound, odeint, oracle
from evansbound.evans import nullspace_basis

# reference spectral parameters per shipped problem
REFERENCE = {"mathieu": 3.0, "fourth_order": 11.0, "mkdv": 0.1 + 0.5j}


def test_c1_mathieu_exclusion(criterion, mathieu):
    with criterion(1, "Mathieu exclusion at lambda=3") as c:
        t0 = time.perf_counter()
        v = certify.bound(mathieu, 3.0)
        eps = 0.05
        n = oracle.winding_count(mathieu, oracle.Rectangle(3 - v.bound, 3 + v.bound, -eps, eps))
        elapsed = time.perf_counter() - t0
        c.note(f"bound={v.bound:.6f} winding={n} time={elapsed:.2f}s")
        assert 0.45 <= v.bound <= 0.57, f"bound {v.bound} outside [0.45, 0.57]"
        assert n == 0, f"winding count {n} over the certified interval"
        assert elapsed < 10, f"runtime {elapsed:.1f}s"


def test_c2_mathieu_eigenvalues(criterion, mathieu):
    with criterion(2, "Mathieu eigenvalues by sweeps") as c:
        eigs = oracle.fd_spectrum(mathieu, 1024, 6)
        up = certify.qnewton_sweep(mathieu, 3.0, 1)
        down = certify.qnewton_sweep(mathieu, 3.0, -1)
        hi_ref = eigs[np.argmin(np.abs(eigs - up.limit))]
        lo_ref = eigs[np.argmin(np.abs(eigs - down.limit))]
        c.note(f"limits={down.limit:.10f},{up.limit:.10f} "
               f"oracle diffs={abs(down.limit - lo_ref):.1e},{abs(up.limit - hi_ref):.1e}")
        assert up.reason == down.reason == "converged", (up.reason, down.reason)
        assert abs(up.limit - hi_ref) < 1e-6 and abs(down.limit - lo_ref) < 1e-6
        assert 2.2 <= down.limit <= 2.4 and 3.9 <= up.limit <= 4.1


def test_c3_exact_weight(criterion, laplacian):
    with criterion(3, "free Laplacian W/|E| = sqrt(pi^4/90)") as c:
        asm = greens.assemble(laplacian, 0.0)
        ratio = greens.weight(asm) / abs(asm.E)
        exact = math.sqrt(math.pi**4 / 90)
        c.note(f"W/|E|={ratio:.12f} exact={exact:.12f} diff={abs(ratio - exact):.1e}")
        assert abs(ratio - exact) < 1e-6


def test_c4_soundness_sweep(criterion, mathieu):
    with criterion(4, "soundness at 100 points of [0, 20]") as c:
        eigs = oracle.fd_spectrum(mathieu, 2048, 14)
        assert eigs[-1] > 21
        rng = np.random.default_rng(2024)
        pts = []
        while len(pts) < 100:
            lam = float(rng.uniform(0, 20))
            if np.min(np.abs(eigs - lam)) > 1e-3:
                pts.append(lam)
        worst = math.inf
        violations = 0
        for lam in pts:
            slack = np.min(np.abs(eigs - lam)) - certify.bound(mathieu, lam).bound
            worst = min(worst, slack)
            violations += slack < -1e-8
        c.note(f"violations={violations} min slack={worst:.3e}")
        assert violations == 0


def test_c5_slope_and_quadratic_convergence(criterion, mathieu):
    with criterion(5, "slope |d(E/W)/dlambda| = 1 and quadratic convergence") as c:
        eigs = oracle.fd_spectrum(mathieu, 4096, 6)
        slopes = []
        ratios = []
        for d in (-1, 1):
            tr = certify.qnewton_sweep(mathieu, 3.0, d)
            slopes.append(certify.slope_at_eigenvalue(mathieu, tr.limit, 1e-4))
            star = eigs[np.argmin(np.abs(eigs - tr.limit))]
            e = np.abs(np.array(tr.iterates) - star)
            # errors below 1e-9 are at the oracle's own resolution
            e = e[e > 1e-9][-3:]
            ratios.extend(e[1:] / e[:-1] ** 2)
        C = 10.0
        c.note("slopes=" + ",".join(f"{s:+.6f}" for s in slopes)
               + " ratios=" + ",".join(f"{r:.3g}" for r in ratios))
        assert all(abs(abs(s) - 1) < 1e-3 for s in slopes)
        assert max(ratios) <= C


def test_c6_fourth_order(criterion, fourth_order):
    with criterion(6, "fourth-order problem near 5 and expansion from 11") as c:
        t0 = time.perf_counter()
        grid = np.linspace(4.0, 6.0, 201)
        E = np.array([float(certify._ev.evans(fourth_order, lam).E) for lam in grid])
        changes = int(np.sum(np.sign(E[1:]) != np.sign(E[:-1])))
        around5 = oracle.winding_count(fourth_order, oracle.Rectangle(4.0, 6.0, -0.5, 0.5))
        up = certify.qnewton_sweep(fourth_order, 11.0, 1, max_iter=3)
        down = certify.qnewton_sweep(fourth_order, 11.0, -1, max_iter=3)
        lo, hi = down.iterates[-1], up.iterates[-1]
        inside = oracle.winding_count(fourth_order, oracle.Rectangle(lo, hi, -0.01, 0.01))
        elapsed = time.perf_counter() - t0
        c.note(f"sign changes={changes} winding near 5={around5} "
               f"interval=[{lo:.6f}, {hi:.6f}] winding={inside} time={elapsed:.1f}s")
        assert changes == around5 >= 1
        assert inside == 0
        assert elapsed < 30


def test_c7_hs_lemma(criterion):
    with criterion(7, "Hilbert-Schmidt inverse bound") as c:
        rng = np.random.default_rng(7)
        violations = 0
        for _ in range(10_000):
            d = int(rng.integers(2, 7))
            A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            r = matbound.hs_inverse_bound(A)
            violations += r.inverse_hs > r.bound * (1 + 1e-12)
        eq = max(abs(matbound.hs_inverse_bound(np.eye(d)).slack) for d in range(2, 9))
        amhm = min(matbound.am_hm_product(rng.uniform(1e-3, 1e3, int(rng.integers(1, 20))))
                   for _ in range(10_000))
        c.note(f"violations={violations} identity gap={eq:.1e} min AM*HM={amhm:.6f}")
        assert violations == 0
        assert eq <= 1e-13
        assert amhm >= 1 - 1e-12


def test_c8_mkdv_extension(criterion, mkdv):
    with criterion(8, "mKdV rectangle height h ~ 0.01947") as c:
        t0 = time.perf_counter()
        lam = 0.1 + 0.5j
        period = certify.mu_period(mkdv)
        mus = mkdv.mu + period * np.arange(256) / 256
        regions = certify.extension_grid(mkdv, lam, mus)
        rect = certify.rectangle_from_diamonds(regions, period)
        worst = 0.0
        for reg in regions:
            disk = certify.bound(mkdv.with_mu(reg.mu), lam).bound
            at0 = reg.polyline[np.argmin(np.abs(reg.polyline[:, 0] - reg.mu)), 1]
            worst = max(worst, abs(reg.radius(0.0) - disk), abs(at0 - disk))
        elapsed = time.perf_counter() - t0
        rel = abs(rect.h - 0.01947) / 0.01947
        c.note(f"h={rect.h:.5f} (rel. diff {rel:.1%}) extent-vs-disk={worst:.1e} "
               f"time={elapsed:.0f}s")
        assert rel <= 0.25
        assert worst <= 1e-10
        assert elapsed < 180


def _frame_rotated_weight(problem, lam, Q):
    # periodic problems: start the fundamental matrix at a unitary Q instead of I,
    # so U = V Q^-1 and the monodromy seen in the new frame is Q^-1 V(L)
    asm = greens.assemble(problem, lam)
    sys = odeint.companion_system(problem)
    V, _ = odeint.propagate(sys, lam, asm.rule.grid, Q, problem.numerics.tol)
    Qi = np.linalg.inv(Q)
    M = Qi @ V[-1]
    I = np.eye(len(Q))
    E = np.linalg.det(M - I)
    P = greens.projection_matrix(M)
    rows = V
    cols = np.linalg.inv(V)
    rot = dataclasses.replace(asm, E=E, P=P, rows=(rows, rows), cols=(cols, cols),
                              middle=(E * I - P, -P))
    return abs(E) / greens.weight(rot)


def test_c9_structural_invariants(criterion, request):
    with criterion(9, "structural invariants on the shipped problems") as c:
        failures = []
        for name, lam in REFERENCE.items():
            p = request.getfixturevalue(name)
            tol = p.numerics.tol
            asm = greens.assemble(p, lam)
            E = asm.E
            # diagonal jump
            jump = max(np.max(np.abs(greens.diagonal_jump(asm, x) - E * np.eye(p.order)))
                       for x in np.linspace(0, p.length, 9)[1:-1])
            # unitary-basis invariance of |E|/W
            base = abs(E) / greens.weight(asm)
            if p.is_periodic:
                other = _frame_rotated_weight(p, lam, unitary_group.rvs(p.order, random_state=3))
            else:
                N = nullspace_basis(p.boundary.B_L)
                V = unitary_group.rvs(N.shape[1], random_state=3) if N.shape[1] > 1 \
                    else np.array([[np.exp(0.7j)]])
                b = greens.assemble(p, lam, N_L=N @ V)
                other = abs(b.E) / greens.weight(b)
            inv = abs(other - base) / base
            # Abel identity
            abel = asm.fund.abel_residual(scaled=False)
            abel_scaled = asm.fund.abel_residual(scaled=True)
            # quadrature refinement
            w1 = greens.weight(asm)
            w2 = greens.weight(greens.assemble(p, lam, greens.QuadratureSpec(2 * p.numerics.quad_nodes)))
            quad = abs(w1 - w2) / w2
            c.note(f"{name}@{lam}: jump={jump:.1e} (rel {jump / abs(E):.1e}) "
                   f"basis={inv:.1e} abel={abel:.1e} (scaled {abel_scaled:.1e}) quad={quad:.1e}")
            for label, value, limit in (("jump", jump, 1e-8), ("basis", inv, 1e-10),
                                        ("abel", abel, 10 * tol), ("quad", quad, 1e-6)):
                if not value <= limit:
                    failures.append(f"{name} {label} {value:.1e} > {limit:.0e}")
        assert not failures, "failed: " + ", ".join(failures)
