import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evansbound import certify, oracle
from evansbound.errors import CoverageGapError, SignChangeError, UserError


@pytest.fixture(scope="module")
def mathieu_eigs(mathieu):
    return oracle.fd_spectrum(mathieu, 2048, 12)


@settings(max_examples=20)
@given(st.floats(-2, 15), st.floats(-3, 3))
def test_bound_below_distance(mathieu, mathieu_eigs, re, im):
    lam = complex(re, im)
    dist = np.min(np.abs(mathieu_eigs - lam))
    if dist < 1e-3:
        return
    assert certify.bound(mathieu, lam).bound <= dist + 1e-8


def test_disk(mathieu):
    d = certify.disk(mathieu, 3.0)
    assert d.contains(3.2) and not d.contains(3.6)
    assert d.radius == pytest.approx(0.54511157, abs=1e-8)


@pytest.mark.parametrize("direction,target", [(1, 4.0319219881), (-1, 2.2851569344)])
def test_sweep_converges_monotonically(mathieu, mathieu_eigs, direction, target):
    tr = certify.qnewton_sweep(mathieu, 3.0, direction)
    assert tr.reason == "converged"
    steps = np.diff(tr.iterates) * direction
    assert np.all(steps >= 0)
    nearest = min(e for e in mathieu_eigs if (e - 3.0) * direction > 0) if direction > 0 else \
        max(e for e in mathieu_eigs if e < 3.0)
    assert all((nearest - lam) * direction >= -1e-9 for lam in tr.iterates)
    assert abs(tr.limit - target) < 1e-8


def test_sweep_max_iter(mathieu):
    tr = certify.qnewton_sweep(mathieu, 3.0, 1, max_iter=2)
    assert tr.reason == "max-iter" and len(tr.iterates) == 3


def test_sweep_rejects_bad_input(mathieu, mkdv):
    with pytest.raises(UserError):
        certify.qnewton_sweep(mathieu, 3.0, 0)
    with pytest.raises(UserError):
        certify.qnewton_sweep(mkdv, 0.5, 1)
    with pytest.raises(UserError):
        certify.slope_at_eigenvalue(mkdv, 0.5)


def test_sweep_sign_change_aborts(mathieu, monkeypatch):
    from evansbound.evans import EvansValue
    values = iter([1.0, 0.5, -0.5])

    def fake(problem, lam, tol=None, quad=None):
        E = next(values)
        return EvansValue(lam, E, 1.0, abs(E))

    monkeypatch.setattr(certify, "bound", fake)
    with pytest.raises(SignChangeError):
        certify.qnewton_sweep(mathieu, 0.0, 1)


def test_slopes(mathieu):
    assert certify.slope_at_eigenvalue(mathieu, 2.2851569344) == pytest.approx(-1, abs=1e-3)
    assert certify.slope_at_eigenvalue(mathieu, 4.0319219881) == pytest.approx(1, abs=1e-3)


@given(st.integers(1, 5), st.floats(-2, 2), st.floats(-1, 1))
def test_perturbation_coefficients(order, mu, dmu):
    g0 = certify.perturbation_coefficients(order, mu, 0.0)
    assert not np.any(g0)
    g = certify.perturbation_coefficients(order, mu, dmu)
    # the shift of D^p applied to exp(i k x) is (i(k + mu + dmu))^p - (i(k + mu))^p
    k = 0.7
    for p in range(order + 1):
        lhs = (1j * (k + mu + dmu)) ** p - (1j * (k + mu)) ** p
        rhs = sum(g[j, p] * (1j * k) ** j for j in range(min(p, order)))
        if p == order:
            continue  # the leading power has no shift term below order
        assert abs(lhs - rhs) <= 1e-9 * max(1, abs(lhs))


@pytest.fixture(scope="module")
def region(mkdv):
    return certify.extension_region(mkdv, 0.1 + 0.5j)


def test_region_extent_at_zero_equals_disk(mkdv, region):
    b = certify.bound(mkdv, 0.1 + 0.5j)
    assert abs(region.radius(0.0) - b.bound) <= 1e-10 * b.bound
    assert region.polyline.shape[1] == 2
    assert np.allclose(region.polyline[0], region.polyline[-1])
    lo, hi = region.interval_above(0.0)
    assert lo < 0 < hi
    assert region.support[0] < 0 < region.support[1]
    assert abs(region.radius(region.support[1])) < 1e-9 * region.disk_radius
    assert region.interval_above(2 * region.disk_radius) is None


def test_region_needs_floquet(mathieu):
    with pytest.raises(UserError):
        certify.extension_region(mathieu, 1.0)


intervals = st.lists(st.tuples(st.floats(-3, 3), st.floats(0, 1.5)), max_size=8)


@given(intervals)
def test_covers_matches_dense_check(ivs):
    period = 2.0
    ivs = [(a, a + w) for a, w in ivs]
    gap = certify._covers(ivs, period)
    t = np.linspace(0, period, 2001)[:-1]
    covered = np.zeros_like(t, dtype=bool)
    for a, b in ivs:
        d = (t - a) % period
        covered |= d <= (b - a) + 1e-12
        if b - a >= period:
            covered[:] = True
    if gap is None:
        assert covered.all()
    else:
        mid = 0.5 * (gap[0] + gap[1])
        assert not any((mid - a) % period < b - a for a, b in ivs)


def test_extension_grid_order_and_gap(mkdv):
    mus = [0.1, 0.3, 0.5, 0.7]
    serial = certify.extension_grid(mkdv, 0.1 + 0.5j, mus)
    par = certify.extension_grid(mkdv, 0.1 + 0.5j, mus, threads=3)
    assert [r.mu for r in par] == mus
    assert [r.disk_radius for r in par] == [r.disk_radius for r in serial]
    with pytest.raises(CoverageGapError):
        certify.rectangle_from_diamonds(serial, certify.mu_period(mkdv))


def test_rectangle_height_is_covered(mkdv):
    period = certify.mu_period(mkdv)
    mus = mkdv.mu + period * np.arange(128) / 128
    regions = certify.extension_grid(mkdv, 0.1 + 0.5j, mus)
    rect = certify.rectangle_from_diamonds(regions, period)
    assert 0 < rect.h <= max(r.disk_radius for r in regions)
    ivs = [(r.mu + iv[0], r.mu + iv[1]) for r in regions
           for iv in [r.interval_above(rect.h * (1 - 1e-9))] if iv is not None]
    assert certify._covers(ivs, period) is None
    higher = [(r.mu + iv[0], r.mu + iv[1]) for r in regions
              for iv in [r.interval_above(rect.h * 1.01)] if iv is not None]
    assert certify._covers(higher, period) is not None
