import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from evansbound import odeint
from evansbound._backend import native, python as pycore
from evansbound.errors import IntegrationError, UserError
from evansbound.problem import make_problem

lams = st.complex_numbers(max_magnitude=20, allow_nan=False, allow_infinity=False)


def test_zero_field():
    sys = odeint.matrix_system(lambda x, lam: np.zeros((3, 3)), 3, 2.0)
    fund = odeint.fundamental_grid(sys, 1.0, np.linspace(0, 2, 5))
    assert np.array_equal(fund.U, np.broadcast_to(np.eye(3), (5, 3, 3)))
    assert np.array_equal(odeint.monodromy(sys, 0.3), np.eye(3))


def test_free_laplacian_closed_forms(laplacian):
    sys = odeint.companion_system(laplacian)
    xs = np.linspace(0, np.pi, 7)
    fund = odeint.fundamental_grid(sys, 0.0, xs)
    for x, U in zip(xs, fund.U):
        assert np.allclose(U, [[1, x], [0, 1]], atol=1e-12)
    M = odeint.monodromy(sys, 1.0)
    assert np.allclose(M, -np.eye(2), atol=1e-9)


def test_companion_matrix_mathieu(mathieu):
    sys = odeint.companion_system(mathieu)
    A = sys(0.7, 3.0)
    assert np.allclose(A, [[0, 1], [np.cos(0.7) - 3.0, 0]], atol=1e-15)
    assert np.allclose(sys.trace(np.linspace(0, 1, 5), 3.0), 0)


def test_companion_matrix_floquet_trace(mkdv):
    sys = odeint.companion_system(mkdv)
    x = 0.4
    A = sys(x, 0.1 + 0.5j)
    assert np.isclose(np.trace(A), sys.trace([x], 0.1 + 0.5j)[0])
    assert np.isclose(np.trace(A), -3j * mkdv.mu)


def test_mathieu_half_step_recomputation(mathieu):
    sys = odeint.companion_system(mathieu)
    M = odeint.fundamental_grid(sys, 3.0, None, 1e-10, cache=False).monodromy
    M2 = odeint.fundamental_grid(sys, 3.0, None, 1e-10 / 32, cache=False).monodromy
    assert np.max(np.abs(M - M2)) < 1e-9


def test_mathieu_unit_determinant(mathieu):
    M = odeint.monodromy(odeint.companion_system(mathieu), 3.0, tol=1e-11)
    assert abs(np.linalg.det(M) - 1) < 1e-10


def test_constant_coefficients_match_expm():
    A = np.array([[0.1, 1.0, 0.0], [0.0, -0.2, 1.0], [-0.5, 0.3, 0.1]])
    sys = odeint.matrix_system(lambda x, lam: A + lam * np.eye(3), 3, 1.5)
    M = odeint.monodromy(sys, 0.25j, tol=1e-12)
    assert np.allclose(M, expm(1.5 * (A + 0.25j * np.eye(3))), atol=1e-11)


@settings(max_examples=15)
@given(lams)
def test_abel_and_inverse_mathieu(mathieu, lam):
    tol = 1e-10
    fund = odeint.fundamental_grid(odeint.companion_system(mathieu), lam,
                                   np.linspace(0, mathieu.length, 9), tol)
    # |det U| itself is not small here; scale by the Hadamard bound
    assert fund.abel_residual(scaled=True) <= 10 * tol
    assert fund.inverse_residual() <= 10 * tol * max(1.0, np.max(np.abs(fund.U)) ** 2)


@settings(max_examples=10)
@given(st.floats(0, 1), st.floats(0.3, 0.7))
def test_abel_strict_small_solutions(mkdv, re, im):
    tol = 1e-10
    fund = odeint.fundamental_grid(odeint.companion_system(mkdv), complex(re, im),
                                   np.linspace(0, mkdv.length, 5), tol)
    assert fund.abel_residual(scaled=False) <= 10 * tol


@settings(max_examples=10)
@given(lams, st.floats(0.1, 0.45), st.floats(0.55, 0.95))
def test_cocycle(mathieu, lam, f1, f2):
    tol = 1e-10
    L = mathieu.length
    sys = odeint.companion_system(mathieu)
    x1, x2 = f1 * L, f2 * L
    U1, _ = odeint.propagate(sys, lam, [0.0, x1], None, tol)
    U12, _ = odeint.propagate(sys, lam, [x1, x2], U1[-1], tol)
    U2, _ = odeint.propagate(sys, lam, [0.0, x2], None, tol)
    scale = max(1.0, np.max(np.abs(U2[-1])))
    assert np.max(np.abs(U12[-1] - U2[-1])) <= 10 * tol * scale


def test_order_verification_by_step_halving(mathieu):
    sys = odeint.companion_system(mathieu)
    nodes = [0.0, mathieu.length]
    ref, _ = odeint.propagate(sys, 3.0, nodes, None, 1e-13)
    errs = []
    for steps in (40, 80, 160):
        U, _ = odeint.propagate(sys, 3.0, nodes, None, 1.0, fixed_steps=steps)
        errs.append(np.max(np.abs(U[-1] - ref[-1])))
    assert errs[0] / errs[1] >= 4
    assert errs[1] / errs[2] >= 4


def test_adjoint_and_backward(fourth_order):
    sys = odeint.companion_system(fourth_order)
    lam = 5 + 0.3j
    L = fourth_order.length
    nodes = np.linspace(0, L, 6)
    fund = odeint.fundamental_grid(sys, lam, nodes, 1e-11)
    adj = odeint.solve_on_grid(sys, lam, nodes, 1e-11, adjoint=True)
    back = odeint.solve_on_grid(sys, lam, nodes, 1e-11, backward=True)
    for j in range(len(nodes)):
        inv = np.linalg.inv(fund.U[j])
        assert np.allclose(adj.values[j].T, inv, rtol=1e-7, atol=1e-8 * np.max(np.abs(inv)))
        phi = fund.U[j] @ np.linalg.inv(fund.U[-1])
        assert np.allclose(back.values[j], phi, rtol=1e-6, atol=1e-7 * np.max(np.abs(phi)))


@pytest.mark.skipif(native is None, reason="compiled extension not built")
@pytest.mark.parametrize("adjoint", [False, True])
@pytest.mark.parametrize("reverse", [False, True])
def test_backend_parity(mkdv, adjoint, reverse):
    sys = odeint.companion_system(mkdv)
    nodes = np.linspace(0, mkdv.length, 4)
    if reverse:
        nodes = nodes[::-1].copy()
    a, _ = odeint.propagate(sys, 0.1 + 0.5j, nodes, backend=native, adjoint=adjoint)
    b, _ = odeint.propagate(sys, 0.1 + 0.5j, nodes, backend=pycore, adjoint=adjoint)
    assert np.max(np.abs(a - b)) < 1e-12 * max(1, np.max(np.abs(a)))


def test_integration_failure_reports_location():
    p = make_problem(2, 2.0, [("-1", 2, 0), ("1/(x-1)^3", 0, 0)])
    with pytest.raises(IntegrationError) as info:
        odeint.monodromy(odeint.companion_system(p), 0.0)
    assert abs(info.value.x - 1.0) < 1e-3


def test_bad_nodes(mathieu):
    sys = odeint.companion_system(mathieu)
    with pytest.raises(UserError):
        odeint.fundamental_grid(sys, 1.0, [0.0, 1.0])
    with pytest.raises(UserError):
        odeint.fundamental_grid(sys, 1.0, [0.0, 2.0, 1.0, mathieu.length])


def test_off_node_values(mathieu):
    sys = odeint.companion_system(mathieu)
    coarse = odeint.fundamental_grid(sys, 2.0, np.linspace(0, mathieu.length, 3))
    x = 1.234
    fine = odeint.fundamental_grid(sys, 2.0, [0.0, x, mathieu.length])
    assert np.allclose(coarse.at(x), fine.U[1], atol=1e-9)
    assert np.allclose(coarse.inverse_at(x) @ coarse.at(x), np.eye(2), atol=1e-12)


def test_cache_concurrent_insert(mathieu):
    sys = odeint.companion_system(mathieu)
    out = []

    def work():
        out.append(odeint.fundamental_grid(sys, 1.75 + 0.5j, None, 1e-9))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(f is out[0] for f in out)


def test_cache_is_bounded():
    cache = odeint.SolutionCache(maxsize=3)
    for k in range(10):
        cache.get_or_create(k, lambda: object())
    assert len(cache) == 3
