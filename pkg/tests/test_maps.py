import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from speclab.errors import InvalidParameter, NoConvergence, SingularEvaluation, SingularPoint
from speclab.geometry import (PointMeasure, RadialWeight, equator_energy, fibonacci_sphere,
                              sample_balls, sphere_area)
from speclab.maps import (CenteringProblem, HalfSpaceParams, centering_fold_map, centering_map,
                          coordinate_quotient_bound, damped_newton, doubled_ball_samples,
                          equator_energy_density, equator_energy_density_exact, equator_map,
                          fold, reflection, solve_centering, solve_centering_fold,
                          two_ball_comparison, two_ball_samples)
from speclab.radial import GridSpec, ball_weighted_neumann


def test_equator_map_examples():
    assert_allclose(equator_map([2.0, 0, 0]), [1, 0, 0], rtol=0)
    x = np.random.default_rng(0).standard_normal((100, 5))
    assert_allclose(np.linalg.norm(equator_map(x), axis=1), 1, atol=1e-15)
    with pytest.raises(SingularPoint):
        equator_map([0.0, 0.0, 0.0])


@pytest.mark.parametrize("d", [3, 4, 7])
def test_equator_energy_density_at_half(d):
    x = np.zeros(d)
    x[0] = 0.5
    assert_allclose(equator_energy_density(x), (d - 1) / 0.25, rtol=1e-5)
    assert equator_energy_density_exact(x) == (d - 1) / 0.25


def test_half_space_params():
    hp = HalfSpaceParams([0, 2.0, 0], 0.5)
    assert_allclose(hp.normal, [0, 1, 0])
    assert hp.contains([0, 0.4, 9]) and not hp.contains([0, 0.6, 0])
    with pytest.raises(InvalidParameter):
        HalfSpaceParams([0.0, 0.0], 1.0)
    with pytest.raises(InvalidParameter):
        HalfSpaceParams([1.0, 0.0], -1.0)
    assert HalfSpaceParams.from_ball([0.0, 0.0], 1.0) is None
    assert HalfSpaceParams.from_ball([0.3, 0.4], 1.0).t == pytest.approx(0.5)
    with pytest.raises(InvalidParameter):
        HalfSpaceParams.from_ball([1.0, 1.0], 1.0)


def test_reflection_examples():
    rng = np.random.default_rng(1)
    hp = HalfSpaceParams(rng.standard_normal(4), 0.7)
    on_plane = rng.standard_normal((10, 4))
    on_plane += (0.7 - on_plane @ hp.normal)[:, None] * hp.normal
    assert_allclose(reflection(hp, on_plane), on_plane, atol=1e-14)
    y = rng.standard_normal((50, 4))
    assert_allclose(reflection(hp, reflection(hp, y)), y, atol=1e-13)
    linear = HalfSpaceParams(hp.p, 0.0)
    assert_allclose(np.linalg.norm(reflection(linear, y), axis=1), np.linalg.norm(y, axis=1), rtol=1e-13)


def test_fold_examples():
    rng = np.random.default_rng(2)
    hp = HalfSpaceParams(rng.standard_normal(3), 0.2)
    y = rng.standard_normal((200, 3))
    inside = hp.contains(y)
    out = fold(hp, y)
    assert_allclose(out[inside], y[inside], rtol=0)
    assert_allclose(out[~inside], reflection(hp, y[~inside]), rtol=0)
    assert np.all(out @ hp.normal <= hp.t + 1e-14)
    assert_allclose(fold(hp, y[0]), out[0])


def test_centering_map_examples():
    mu = PointMeasure([[0.2, -0.1, 0.3]], [2.0])
    c = np.array([0.5, 0.5, -0.2])
    expected = (c - mu.positions[0]) / np.linalg.norm(c - mu.positions[0])
    assert_allclose(centering_map(mu, c), expected, rtol=1e-15)
    with pytest.raises(SingularEvaluation):
        centering_map(mu, mu.positions[0] + 1e-13)
    pts = fibonacci_sphere(500) * 0.5
    sym = PointMeasure(np.vstack([pts, -pts]), np.ones(1000))
    assert_allclose(centering_map(sym, np.zeros(3)), 0, atol=1e-14)
    rng = np.random.default_rng(3)
    c = rng.standard_normal(3)
    assert np.linalg.norm(centering_map(sym, c)) <= 1 + 1e-15


def test_solve_centering_symmetric_two_atoms():
    for d in (2, 3, 5):
        a = np.zeros(d)
        a[0] = 0.4
        res = solve_centering(PointMeasure([a, -a], [1.0, 1.0]), 1.0)
        assert res.converged
        assert np.linalg.norm(res.x) <= 1e-8


def test_solve_centering_translation_equivariance():
    pts = fibonacci_sphere(3000) * 0.4
    sphere = np.vstack([pts, -pts])
    v = np.array([0.2, -0.1, 0.25])
    mu = PointMeasure(sphere + v, np.ones(sphere.shape[0]))
    res = solve_centering(mu, 1.0)
    assert_allclose(res.x, v, atol=1e-4)
    # every component of the root condition vanishes, recomputed term by term
    u = (res.x - mu.positions) / np.linalg.norm(res.x - mu.positions, axis=1)[:, None]
    assert np.all(np.abs(u.mean(axis=0)) <= 1e-8)


def test_solve_centering_random_measures_independent_residual():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.uniform(-0.5, 0.5, (300, 3))
        m = rng.uniform(0.1, 1.0, 300)
        mu = PointMeasure(x, m)
        res = solve_centering(mu, 1.0)
        assert res.residual <= 1e-8
        # reversed summation order with compensated sums
        terms = [(m[i] * (res.x - x[i]) / np.linalg.norm(res.x - x[i])) for i in reversed(range(300))]
        independent = np.array([math.fsum(t[j] for t in terms) for j in range(3)]) / math.fsum(m)
        assert_allclose(np.linalg.norm(independent), res.residual, atol=1e-10)


def test_solve_centering_reports_failure():
    # a heavy atom at the geometric median: the root is an atom, which is rejected
    d = 3
    pts = [np.zeros(d)] + [s * 0.5 * e for e in np.eye(d) for s in (1, -1)]
    mu = PointMeasure(pts, [10.0] + [1.0] * 6)
    with pytest.raises(NoConvergence) as err:
        solve_centering(mu, 1.0)
    assert "residual" in err.value.diagnostics


def test_solve_centering_preconditions():
    with pytest.raises(InvalidParameter):
        solve_centering(PointMeasure([[1.0, 0.0]], [1.0]), 1.0)


def test_damped_newton_on_smooth_system():
    fun = lambda z: np.array([z[0] ** 2 + z[1] ** 2 - 1, z[0] - z[1]])
    res = damped_newton(fun, [2.0, 0.5], 1e-12, 1e-7)
    assert res.converged
    assert_allclose(res.x, [math.sqrt(0.5)] * 2, rtol=1e-10)


def random_problem(seed, n=200, phi=True):
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    x = g * rng.random(n)[:, None] ** (1 / 3) * 0.999
    m = rng.uniform(0.5, 1.5, n)
    phi1 = x[:, 0] - (m @ x[:, 0]) / m.sum() if phi else None
    return CenteringProblem(PointMeasure(x, m, 1.0), 1.0, phi1)


def test_centering_fold_map_reductions():
    prob = random_problem(0, phi=False)
    c = np.array([0.1, 0.2, -0.1])
    p = np.array([0.3, -0.2, 0.4])
    out = centering_fold_map(prob, c, p)
    assert np.all(out[3:] == 0)
    params = HalfSpaceParams.from_ball(p, 1.0)
    folded = PointMeasure(fold(params, prob.mu.positions), prob.mu.masses)
    assert_allclose(out[:3], centering_map(folded, c), rtol=1e-14)
    assert_allclose(centering_fold_map(prob, c, np.zeros(3))[:3], centering_map(prob.mu, c), rtol=1e-14)


def test_centering_problem_validation():
    mu = PointMeasure([[0.5, 0.0]], [1.0])
    with pytest.raises(InvalidParameter):
        CenteringProblem(mu, 0.4)
    with pytest.raises(InvalidParameter):
        CenteringProblem(mu, 1.0, np.ones(3))


def test_solve_centering_fold_symmetric_odd_phi():
    pts = fibonacci_sphere(400) * 0.6
    x = np.vstack([pts, -pts])
    prob = CenteringProblem(PointMeasure(x, np.ones(800), 1.0), 1.0, x[:, 2])
    res = solve_centering_fold(prob)
    assert res.residual <= 1e-6
    assert np.linalg.norm(centering_fold_map(prob, res.x[:3], res.x[3:])) <= 1e-6
    # the symmetry axis carries a root of the first block at c = 0 for any |p| >= R - 0.6
    axis_val = centering_fold_map(prob, np.zeros(3), np.array([0, 0, 0.3]))
    assert_allclose(axis_val[:2], 0, atol=1e-12)


def test_solve_centering_fold_without_phi():
    pts = fibonacci_sphere(300) * 0.5
    x = np.vstack([pts, -pts])
    prob = CenteringProblem(PointMeasure(x, np.ones(600), 1.0), 1.0)
    res = solve_centering_fold(prob)
    assert res.residual <= 1e-6


def test_solve_centering_fold_random_measures():
    for seed in range(4):
        prob = random_problem(100 + seed)
        res = solve_centering_fold(prob)
        c, p = res.x[:3], res.x[3:]
        assert np.linalg.norm(c) <= 1 + 1e-12 and np.linalg.norm(p) <= 1 + 1e-12
        params = HalfSpaceParams.from_ball(p, 1.0)
        F = fold(params, prob.mu.positions)
        u = (c - F) / np.linalg.norm(c - F, axis=1)[:, None]
        m = prob.mu.masses
        assert np.linalg.norm(m @ u) <= 1e-6 * m.sum()
        assert np.linalg.norm((m * prob.phi1) @ u) <= 1e-6 * m.sum()


@pytest.mark.parametrize("d, lam, expect_equal", [(7, 6.0, True), (4, 1.0, False)])
def test_coordinate_quotient_bound(d, lam, expect_equal):
    weight = RadialWeight.inv_square()
    mu = PointMeasure.from_radial_weight(d, weight, 2000, seed=3)
    pts, w = sample_balls(np.zeros((1, d)), 1.0, 20000, seed=4, radial_power=d - 3)
    spec = ball_weighted_neumann(d, weight, 1, GridSpec(1024, 1e-12 if d < 7 else 1e-6), 4)
    lam_bar = spec.normalized(1)
    report = coordinate_quotient_bound(mu, lam_bar, pts, w)
    assert report.holds
    target = equator_energy(d)
    assert_allclose(report.energy, target, rtol=1e-2)
    if expect_equal:
        assert_allclose(report.lambda_bar, target, rtol=1e-2)
    else:
        assert report.energy - report.lambda_bar >= 0.5 * report.energy
    scaled = ball_weighted_neumann(d, weight.scaled(3.0), 1, GridSpec(1024, 1e-12 if d < 7 else 1e-6), 4)
    again = coordinate_quotient_bound(mu.scaled(3.0), scaled.normalized(1), pts, w)
    assert_allclose(again.lambda_bar, report.lambda_bar, rtol=1e-10)
    assert again.energy == report.energy


def test_coordinate_quotient_needs_centered_measure():
    mu = PointMeasure([[0.5, 0, 0]], [1.0])
    pts, w = sample_balls(np.zeros((1, 3)), 1.0, 100)
    with pytest.raises(InvalidParameter):
        coordinate_quotient_bound(mu, 1.0, pts, w)


def cap_energy_oracle(d, radius, t):
    """Folded equator energy of a centered ball for the half-space <y, e1> < t, by quadrature.

    The part inside H is the full-ball energy minus the cap {s >= t}; the cap is
    reflected to s' = 2t - s. With transverse radius u, the integrand is
    (d-1)/(b^2 + u^2) against omega_{d-2} u^{d-2} du ds.
    """
    omega = sphere_area(d - 1)

    def slab(b, U):
        if d == 3:
            return 0.5 * math.log1p(U * U / (b * b)) if b else math.inf
        val, _ = integrate.quad(lambda u: u ** (d - 2) / (b * b + u * u), 0, U, epsabs=1e-13, epsrel=1e-12)
        return val

    def cap(shift):
        f = lambda s: slab(abs(shift - s) if shift else s, math.sqrt(max(radius**2 - s * s, 0.0)))
        pts = [2 * t] if t < 2 * t < radius and shift else None
        val, _ = integrate.quad(f, t, radius, points=pts, epsabs=1e-12, epsrel=1e-11, limit=400)
        return (d - 1) * omega * val

    full = (d - 1) * sphere_area(d) * radius ** (d - 2) / (d - 2)
    return full - cap(0.0) + cap(2 * t)


@pytest.mark.parametrize("d", [3, 7])
def test_two_ball_equality_configuration(d):
    pts, w, params = two_ball_samples(d, 3.0, 200_000, seed=9)
    cmp = two_ball_comparison(pts, w, params)
    assert_allclose(cmp.rhs, 2 * (d - 1) / (d - 2) * sphere_area(d), rtol=1e-14)
    assert_allclose(cmp.lhs, cmp.rhs, rtol=0.02)


def test_two_ball_equality_with_plain_volume_sampling():
    d = 7
    centers = np.zeros((2, d))
    centers[1, 0] = 3.0
    pts, w = sample_balls(centers, 1.0, 400_000, seed=5)
    cmp = two_ball_comparison(pts, w, HalfSpaceParams(np.eye(d)[0], 1.5))
    assert abs(cmp.lhs - cmp.rhs) <= max(0.02 * cmp.rhs, 4 * cmp.stderr)


@pytest.mark.parametrize("d, pnorm", [(3, 0.3), (3, 0.6), (7, 0.4), (7, 0.9)])
def test_two_ball_generic_against_quadrature_oracle(d, pnorm):
    radius = 2.0 ** (1.0 / d)
    rng = np.random.default_rng(int(10 * pnorm) + d)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    params = HalfSpaceParams.from_ball(pnorm * direction, radius)
    pts, w = doubled_ball_samples(d, 400_000, seed=12)
    cmp = two_ball_comparison(pts, w, params)
    oracle = cap_energy_oracle(d, radius, params.t)
    assert oracle < cmp.rhs
    assert abs(cmp.lhs - oracle) <= max(5 * cmp.stderr, 0.02 * oracle)
    assert cmp.holds()


def test_two_ball_identity_fold():
    d = 5
    pts, w = doubled_ball_samples(d, 10_000, seed=1)
    cmp = two_ball_comparison(pts, w, None)
    radius = 2.0 ** (1.0 / d)
    assert_allclose(cmp.lhs, (d - 1) * sphere_area(d) * radius ** (d - 2) / (d - 2), rtol=1e-12)
