import math

import mpmath
import numpy as np
import pytest
from numpy.testing import assert_allclose

from speclab.bounds import (BoundReport, constants_table, neumann_bound_check, sharp_constant,
                            steklov_bound_check, unit_ball_steklov_check)
from speclab.disk import FourierDensity, concentrating_density, steklov_eigenvalues
from speclab.errors import UnsupportedIndex
from speclab.geometry import RadialWeight, ball_volume, equator_energy, sphere_area
from speclab.radial import GridSpec, ball_weighted_neumann

INV = RadialWeight.inv_square()


def mp_sharp_constant(d, k):
    mpmath.mp.dps = 40
    omega = 2 * mpmath.pi ** (mpmath.mpf(d) / 2) / mpmath.gamma(mpmath.mpf(d) / 2)
    vol = k * omega / d
    return float(mpmath.mpf(d - 1) / (d - 2) * k * omega * vol ** (mpmath.mpf(2 - d) / d))


@pytest.mark.parametrize("d", range(3, 21))
def test_sharp_constant_high_precision(d):
    for k in (1, 2):
        assert_allclose(sharp_constant(d, k), mp_sharp_constant(d, k), rtol=1e-13)


def test_sharp_constant_closed_forms():
    assert_allclose(sharp_constant(3, 1), 2 * (4 * math.pi) ** (2 / 3) * 3 ** (1 / 3), rtol=1e-14)
    # without the volume normalization factor d^{(d-2)/d} the d = 7 value is 3.2608...
    omega6 = 16 * math.pi**3 / 15
    bare = 6 / 5 * omega6 ** (2 / 7)
    assert_allclose(bare, 3.2615, rtol=3e-4)
    assert_allclose(sharp_constant(7, 1), bare * 7 ** (5 / 7), rtol=1e-14)


@pytest.mark.parametrize("d", range(3, 21))
def test_sharp_constant_ratio(d):
    assert_allclose(sharp_constant(d, 2) / sharp_constant(d, 1), 2 ** (2 / d), rtol=1e-12)


def test_sharp_constant_errors():
    with pytest.raises(UnsupportedIndex):
        sharp_constant(5, 3)
    with pytest.raises(Exception):
        sharp_constant(2, 1)


def test_constants_table():
    rows = constants_table(3, 5)
    assert [(d, k) for d, k, _ in rows] == [(3, 1), (3, 2), (4, 1), (4, 2), (5, 1), (5, 2)]


def test_report_fields():
    r = BoundReport.make(1.0, 2.0, False, 1, 3, "neumann")
    assert r.margin == 1.0 and not r.equality and r.holds
    r = BoundReport.make(2.0 * (1 + 1e-7), 2.0, True, 1, 7, "neumann")
    assert r.equality and r.holds
    assert BoundReport.make(2.1, 2.0, True, 1, 7, "neumann").holds is False


def test_neumann_d7_equality():
    spec = ball_weighted_neumann(7, INV, 1, GridSpec(2048, 1e-6), 4)
    rep = neumann_bound_check(7, spec, 1)
    assert_allclose(rep.quantity, equator_energy(7), rtol=1e-3)
    assert_allclose(rep.quantity, 6 / 5 * sphere_area(7), rtol=1e-3)
    assert rep.sharp and rep.equality


def test_neumann_d4_gap():
    spec = ball_weighted_neumann(4, INV, 1, GridSpec(2048, 1e-12), 2)
    rep = neumann_bound_check(4, spec, 1)
    assert_allclose(spec.mass, sphere_area(4) / 2, rtol=1e-14)
    assert not rep.sharp
    assert rep.margin > 0
    # lambda_1 tends to 1 from above, so the margin tends to 2/3 of the bound from below
    assert 0.6 * rep.bound < rep.margin < 2 / 3 * rep.bound


def test_neumann_two_balls():
    spec = ball_weighted_neumann(8, INV, 1, GridSpec(1024, 1e-6), 4)
    two = spec.disjoint_union(spec)
    rep = neumann_bound_check(8, two, 2)
    assert_allclose(rep.quantity, 2 * equator_energy(8), rtol=1e-3)
    # the closed form with the doubled sphere area
    assert_allclose(rep.bound, (8 - 1) / (8 - 2) * 2 * sphere_area(8), rtol=1e-14)


@pytest.mark.parametrize("d", range(3, 13))
def test_neumann_margin_nonnegative(d):
    delta = 1e-12 if d < 7 else 1e-6
    spec = ball_weighted_neumann(d, INV, 1, GridSpec(512, delta), 4)
    rep = neumann_bound_check(d, spec, 1)
    assert rep.margin >= -1e-6 * rep.bound


@pytest.mark.parametrize("d", [7, 9, 12])
def test_neumann_margin_vanishes_under_refinement(d):
    margins = []
    for n in (256, 512, 1024, 2048):
        rep = neumann_bound_check(d, ball_weighted_neumann(d, INV, 1, GridSpec(n, 1e-6), 4), 1)
        margins.append(abs(rep.margin))
    floor = 1e-9 * rep.bound
    assert all(b <= max(a, floor) for a, b in zip(margins, margins[1:]))
    assert margins[-1] <= floor


def test_steklov_disk_equality():
    rep = steklov_bound_check(1, steklov_eigenvalues(FourierDensity.constant(), 2, 16))
    assert_allclose(rep.quantity, 2 * math.pi, rtol=1e-14)
    assert abs(rep.margin) < 1e-12 and rep.equality and rep.d == 2


def test_steklov_two_bump_margins_shrink():
    margins = []
    for eps in (0.4, 0.2, 0.1, 0.05):
        spec = steklov_eigenvalues(concentrating_density([0, math.pi], [1, 1], eps), 2, 512)
        margins.append(steklov_bound_check(2, spec).margin)
    assert all(m > 0 for m in margins)
    assert all(b < a for a, b in zip(margins, margins[1:]))
    assert margins[-1] < 0.02 * 4 * math.pi


def linear_eigenfunction_identity(d, rng):
    """x_i is harmonic and its normal derivative on the unit sphere equals x_i."""
    x = rng.standard_normal((20, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    h = 1e-6
    i = 0
    dn = ((x * (1 + h))[:, i] - (x * (1 - h))[:, i]) / (2 * h)
    return np.max(np.abs(dn - x[:, i]))


@pytest.mark.parametrize("d", [3, 7, 12])
def test_unit_ball_steklov_triple(d):
    assert linear_eigenfunction_identity(d, np.random.default_rng(d)) < 1e-9
    rep = unit_ball_steklov_check(d)
    expected = sphere_area(d) * ball_volume(d) ** ((2 - d) / d)
    assert_allclose(rep.quantity, expected, rtol=1e-14)
    assert rep.quantity < rep.bound * (1 + 1e-9)
    assert_allclose(rep.quantity / rep.bound, (d - 2) / (d - 1), rtol=1e-12)
    assert rep.sharp == (d >= 7)


def test_steklov_requires_inputs():
    with pytest.raises(Exception):
        steklov_bound_check(1, d=5, sigma=1.0)
