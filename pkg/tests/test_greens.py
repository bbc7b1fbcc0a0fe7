import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad as scipy_quad

from evansbound import greens, oracle
from evansbound.errors import QuadratureError, UserError

PROBLEMS = [("mathieu", 3.0), ("fourth_order", 5 + 0.3j), ("mkdv", 0.1 + 0.5j)]


def test_free_laplacian_weight(laplacian):
    asm = greens.assemble(laplacian, 0.0)
    assert abs(greens.weight(asm) / abs(asm.E) - math.sqrt(math.pi**4 / 90)) < 1e-10


@given(st.floats(0.05, 3.1), st.floats(0.05, 3.1))
@settings(max_examples=25)
def test_free_laplacian_kernel(laplacian, x, y):
    asm = greens.assemble(laplacian, 0.0)
    lo, hi = min(x, y), max(x, y)
    want = lo * (math.pi - hi) / math.pi
    assert abs(greens.kernel(asm, x, y) / asm.E - want) < 1e-10
    dwant = (math.pi - y) / math.pi if y > x else -y / math.pi
    if abs(x - y) > 1e-9:
        assert abs(greens.derivative_kernel(asm, 1, x, y) / asm.E - dwant) < 1e-10


def test_kernel_solves_the_equation(laplacian):
    # -u'' = 1 on (0, pi), u(0) = u(pi) = 0  =>  u = x (pi - x) / 2
    asm = greens.assemble(laplacian, 0.0)
    for x in (0.4, 1.7):
        u = scipy_quad(lambda y: greens.kernel(asm, x, y).real, 0, math.pi, points=[x])[0]
        assert abs(u / asm.E - x * (math.pi - x) / 2) < 1e-8


def test_triangle_rule_exactness():
    r = greens.triangle_rule(2.0, 16)
    for a in range(4):
        for b in range(4):
            num = np.sum(r.weights * r.x_outer[:, None] ** a * r.x_inner ** b)
            # int_0^2 int_0^x x^a y^b dy dx
            exact = 2.0 ** (a + b + 2) / ((b + 1) * (a + b + 2))
            assert abs(num - exact) < 1e-12 * exact
    assert not r.grid.flags.writeable


@pytest.mark.parametrize("name,lam", PROBLEMS)
def test_diagonal_jump(request, name, lam):
    p = request.getfixturevalue(name)
    asm = greens.assemble(p, lam)
    for x in np.linspace(0, p.length, 9)[1:-1]:
        J = greens.diagonal_jump(asm, x)
        assert np.max(np.abs(J - asm.E * np.eye(p.order))) <= 1e-8 * max(1.0, abs(asm.E))


@pytest.mark.parametrize("name,lam", PROBLEMS)
def test_quadrature_refinement(request, name, lam):
    p = request.getfixturevalue(name)
    w1 = greens.weight(greens.assemble(p, lam, greens.QuadratureSpec(48)))
    w2 = greens.weight(greens.assemble(p, lam, greens.QuadratureSpec(96)))
    assert abs(w1 - w2) <= 1e-6 * w2


def test_verified_quadrature_raises(mathieu):
    asm = greens.assemble(mathieu, 3.0, greens.QuadratureSpec(4))
    with pytest.raises(QuadratureError):
        greens.weight(asm, greens.QuadratureSpec(4, verify=True, rel_tol=1e-12))
    ok = greens.assemble(mathieu, 3.0)
    greens.weight(ok, greens.QuadratureSpec(48, verify=True))


def test_split_form_matches_projector_form(mathieu):
    asm = greens.assemble(mathieu, 2.0 + 0.5j)
    for x, y in ((1.0, 3.0), (5.0, 2.0), (2.2, 2.2)):
        b = y <= x
        U, Ui = asm.fund.at(x), np.linalg.inv(asm.fund.at(y))
        want = U @ asm.branch(b) @ Ui
        got = greens.matrix_kernel(asm, x, y)
        assert np.allclose(got, want, atol=1e-9 * np.abs(want).max())


def test_samples_match_pointwise(mkdv):
    asm = greens.assemble(mkdv, 0.1 + 0.5j, greens.QuadratureSpec(6))
    r = asm.rule
    below, above = greens.kernel_samples(asm, 1)
    i, k = 4, 2
    x, y = r.grid[r.outer[i]], r.grid[r.inner[i, k]]
    assert np.isclose(below[i, k], greens.derivative_kernel(asm, 1, x, y), rtol=1e-12)
    assert np.isclose(above[i, k], greens.derivative_kernel(asm, 1, y, x), rtol=1e-12)


@pytest.mark.parametrize("lam", [0.5, 3.0, 7.5, 12.0])
def test_weight_dominates_resolvent_norm(mathieu, lam):
    eigs = oracle.fd_spectrum(mathieu, 512, 12)
    asm = greens.assemble(mathieu, lam)
    assert greens.weight(asm) / abs(asm.E) >= 1 / np.min(np.abs(eigs - lam))


def test_gram_matrices_reproduce_weights(mkdv):
    asm = greens.assemble(mkdv, 0.1 + 0.5j)
    H = greens.gram_matrices(asm)
    # a_n is constant (-1), so H_j[n, n] = W_j^2
    for j in range(3):
        assert np.isclose(H[j][3, 3].real, greens.weight_derivative(asm, j) ** 2, rtol=1e-12)
        assert np.allclose(H[j], H[j].conj().T, rtol=1e-12, atol=1e-12 * abs(H[j]).max())


def test_point_outside_interval(mathieu):
    asm = greens.assemble(mathieu, 1.0)
    with pytest.raises(UserError):
        greens.kernel(asm, -0.1, 1.0)
    with pytest.raises(UserError):
        greens.derivative_kernel(asm, 2, 1.0, 1.0)
