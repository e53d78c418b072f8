"""Trial maps: equator map, reflections and folds, centering maps and their roots.

The equator map u0(x) = x/|x| supplies coordinate trial functions for the
weighted Neumann problem; composing it with a fold across a hyperplane and
recentering gives trial functions orthogonal to constants and to a first
eigenfunction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameter, NoConvergence, SingularEvaluation, SingularPoint
from .geometry import DEFAULT_SEED, PointMeasure, equator_energy, sample_balls

COLLISION_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HalfSpaceParams:
    """Half-space H = {y : <y, p> < t |p|} with reflection across its boundary."""

    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        p = np.array(self.p, dtype=float).reshape(-1)
        if not np.linalg.norm(p) > 0:
            raise InvalidParameter("half-space normal p must be nonzero")
        if self.t < 0:
            raise InvalidParameter(f"half-space offset t must be >= 0, got {self.t}")
        p.flags.writeable = False
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))

    @property
    def normal(self):
        return self.p / np.linalg.norm(self.p)

    @classmethod
    def from_ball(cls, p, R):
        """Fold parameters for the point p of the ball of radius R, t = R - |p|.

        Returns None at p = 0, where the fold is the identity on the ball.
        """
        p = np.asarray(p, dtype=float)
        norm = float(np.linalg.norm(p))
        if norm > R * (1 + 1e-12):
            raise InvalidParameter(f"|p| = {norm} exceeds the radius {R}")
        if norm == 0:
            return None
        return cls(p, max(R - norm, 0.0))

    def contains(self, y):
        return np.asarray(y, dtype=float) @ self.normal < self.t


def equator_map(x):
    """u0(x) = x/|x| along the last axis."""
    x = np.asarray(x, dtype=float)
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise SingularPoint("equator map is undefined at the origin")
    return x / norm


def equator_energy_density(x, h=1e-5):
    """|du0|^2 at a single point by central differences, sum of squared partials."""
    x = np.asarray(x, dtype=float)
    d = x.size
    total = 0.0
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        col = (equator_map(x + e) - equator_map(x - e)) / (2 * h)
        total += float(col @ col)
    return total


def equator_energy_density_exact(x):
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    if np.any(r2 == 0):
        raise SingularPoint("equator energy density is infinite at the origin")
    return (x.shape[-1] - 1) / r2


def reflection(params: HalfSpaceParams, y):
    """Mirror image of y across the hyperplane <y, p/|p|> = t."""
    y = np.asarray(y, dtype=float)
    n = params.normal
    s = y @ n
    return y + 2 * np.multiply.outer(params.t - s, n)


def fold(params: HalfSpaceParams, y):
    """Identity on H, reflection across its boundary elsewhere."""
    y = np.asarray(y, dtype=float)
    inside = params.contains(y)
    return np.where(np.expand_dims(inside, -1), y, reflection(params, y))


def _unit_field(c, points):
    diff = c - points
    dist = np.linalg.norm(diff, axis=1)
    k = int(np.argmin(dist))
    if dist[k] <= COLLISION_TOL:
        raise SingularEvaluation(f"evaluation point collides with atom {k}", atom=k)
    return diff / dist[:, None]


def centering_map(mu: PointMeasure, c):
    """Phi(c): mu-average of the unit vectors (c - x)/|c - x|."""
    c = np.asarray(c, dtype=float)
    return mu.masses @ _unit_field(c, mu.positions) / mu.total_mass


@dataclass
class NewtonResult:
    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    start_index: int = -1


def damped_newton(fun: Callable[[np.ndarray], np.ndarray], x0, tol, h,
                  project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                  max_iter=60, armijo=1e-4, min_step=1e-8) -> NewtonResult:
    """Newton iteration with central-difference Jacobian and Armijo backtracking.

    Trial points where ``fun`` raises :class:`SingularEvaluation` are treated as
    rejected steps. ``project`` maps iterates back into the admissible set.
    """
    project = project or (lambda z: z)
    x = project(np.array(x0, dtype=float))
    r = fun(x)
    norm = float(np.linalg.norm(r))
    n = x.size
    for it in range(max_iter):
        if norm <= tol:
            return NewtonResult(x, norm, it, True)
        J = np.empty((r.size, n))
        for j in range(n):
            e = np.zeros(n)
            e[j] = h
            try:
                J[:, j] = (fun(x + e) - fun(x - e)) / (2 * h)
            except SingularEvaluation:
                J[:, j] = (fun(x + e) - r) / h
        step = np.linalg.lstsq(J, -r, rcond=None)[0]
        alpha = 1.0
        while alpha >= min_step:
            trial = project(x + alpha * step)
            try:
                rt = fun(trial)
            except SingularEvaluation:
                alpha *= 0.5
                continue
            nt = float(np.linalg.norm(rt))
            if nt * nt <= (1 - 2 * armijo * alpha) * norm * norm:
                break
            alpha *= 0.5
        else:
            return NewtonResult(x, norm, it, False)
        x, r, norm = trial, rt, nt
    return NewtonResult(x, norm, max_iter, norm <= tol)


def _multi_start(fun, starts: Sequence[np.ndarray], tol, h, project, exhaustive=False):
    """Run Newton from each start in order; best residual wins, ties go to the earlier start."""
    best = None
    for i, x0 in enumerate(starts):
        try:
            res = damped_newton(fun, x0, tol, h, project)
        except SingularEvaluation:
            continue
        res.start_index = i
        if best is None or res.residual < best.residual:
            best = res
        if res.converged and not exhaustive:
            break
    if best is None or not best.converged:
        residual = math.inf if best is None else best.residual
        raise NoConvergence(f"no root found from {len(starts)} starts (best residual {residual:.3e})",
                            residual=residual)
    return best


def _ball_projector(R, slices):
    def project(z):
        z = z.copy()
        for sl in slices:
            norm = np.linalg.norm(z[sl])
            if norm > R:
                z[sl] *= R / norm
        return z
    return project


def _axis_starts(d, R):
    starts = [np.zeros(d)]
    for i in range(d):
        for sgn in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = sgn * R / 2
            starts.append(e)
    return starts


def solve_centering(mu: PointMeasure, R, tol=1e-8) -> NewtonResult:
    """Point c in the ball of radius R with Phi(c) = 0.

    Starts are the origin followed by the points +-R/2 e_i; later starts are
    only tried when earlier ones fail.
    """
    if not R > 0:
        raise InvalidParameter("radius must be positive")
    if np.any(np.linalg.norm(mu.positions, axis=1) >= R):
        raise InvalidParameter("atoms must lie in the open ball of radius R")
    d = mu.dim
    project = _ball_projector(R, [slice(0, d)])
    return _multi_start(lambda c: centering_map(mu, c), _axis_starts(d, R), tol, 1e-6 * R, project)


@dataclass(frozen=True, eq=False)
class CenteringProblem:
    """Measure on the ball of radius R, optionally with a first eigenfunction phi1 sampled on its atoms."""

    mu: PointMeasure
    radius: float
    phi1: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.radius > 0:
            raise InvalidParameter("radius must be positive")
        if np.any(np.linalg.norm(self.mu.positions, axis=1) > self.radius):
            raise InvalidParameter("atoms must lie in the closed ball of radius R")
        if self.phi1 is not None:
            phi = np.array(self.phi1, dtype=float).reshape(-1)
            if phi.size != len(self.mu):
                raise InvalidParameter("phi1 needs one value per atom")
            phi.flags.writeable = False
            object.__setattr__(self, "phi1", phi)

    @property
    def dim(self):
        return self.mu.dim


def centering_fold_map(problem: CenteringProblem, c, p):
    """Phi(c, p) in R^{2d}: averages of u = (c - F(x))/|c - F(x)| and of phi1 * u,
    with F the fold for p (identity at p = 0)."""
    c = np.asarray(c, dtype=float)
    params = HalfSpaceParams.from_ball(p, problem.radius)
    pts = problem.mu.positions if params is None else fold(params, problem.mu.positions)
    u = _unit_field(c, pts)
    w = problem.mu.masses / problem.mu.total_mass
    first = w @ u
    second = np.zeros_like(first) if problem.phi1 is None else (w * problem.phi1) @ u
    return np.concatenate([first, second])


def _fold_starts(d, R):
    starts = []
    for c0 in _axis_starts(d, R):
        for p0 in _axis_starts(d, R)[1:]:
            starts.append(np.concatenate([c0, p0]))
    return starts


def solve_centering_fold(problem: CenteringProblem, tol=1e-6) -> NewtonResult:
    """Pair (c, p) with Phi(c, p) = 0, returned stacked in ``x``.

    The p-Jacobian vanishes wherever the fold does not touch the atoms (e.g.
    p = 0), so starts use p = +-R/2 e_i combined with the centering starts for c.
    The map is extended outside |c|, |p| <= R by radial projection so that
    difference quotients at the boundary stay defined.
    """
    d, R = problem.dim, problem.radius
    project = _ball_projector(R, [slice(0, d), slice(d, 2 * d)])

    def fun(z):
        z = project(z)
        return centering_fold_map(problem, z[:d], z[d:])

    return _multi_start(fun, _fold_starts(d, R), tol, 1e-6 * R, project)


@dataclass(frozen=True)
class QuotientReport:
    lambda_bar: float
    energy: float
    energy_stderr: float
    centering_residual: float
    holds: bool


def coordinate_quotient_bound(mu: PointMeasure, lambda_bar, omega_points, omega_weights,
                              tolerance=None) -> QuotientReport:
    """Compare lambda_bar with the summed energies of the coordinates of x/|x| over Omega.

    ``omega_points``/``omega_weights`` is a volume quadrature of Omega. The
    inequality holds if lambda_bar <= energy + tolerance, where the tolerance
    defaults to three standard errors of the quadrature.
    """
    residual = float(np.linalg.norm(centering_map(mu, np.zeros(mu.dim))))
    if residual > 1e-6:
        raise InvalidParameter(f"measure is not centered (residual {residual:.3e})")
    energy, stderr = _weighted_sum(equator_energy_density_exact(omega_points), omega_weights)
    tol = 3 * stderr if tolerance is None else tolerance
    return QuotientReport(float(lambda_bar), energy, stderr, residual, bool(lambda_bar <= energy + tol))


def _weighted_sum(values, weights):
    terms = values * weights
    total = float(terms.sum())
    n = terms.size
    stderr = float(np.std(terms, ddof=1) * math.sqrt(n)) if n > 1 else 0.0
    return total, stderr


@dataclass(frozen=True)
class FoldComparison:
    lhs: float
    rhs: float
    stderr: float

    def holds(self, sigmas=3.0):
        return self.lhs <= self.rhs + sigmas * self.stderr


def two_ball_comparison(points, weights, params: Optional[HalfSpaceParams]) -> FoldComparison:
    """Energy of the folded equator map over Omega against twice its energy on the unit ball.

    lhs = sum_j w_j (d - 1)/|F(x_j)|^2 estimates the integrals over Omega n H
    and over the reflected complement; ``params=None`` means the identity fold.
    The standard error assumes independent strata.
    """
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = pts.shape[1]
    folded = pts if params is None else fold(params, pts)
    lhs, stderr = _weighted_sum(equator_energy_density_exact(folded), w)
    return FoldComparison(lhs, 2 * equator_energy(d), stderr)


def two_ball_samples(d, separation=3.0, n=1_000_000, seed=DEFAULT_SEED):
    """Two unit balls centered at 0 and separation*e1, sampled with a 1/rho^2-adapted radial law.

    With the fold across the bisecting hyperplane the second ball maps onto
    the first, which is the equality configuration.
    """
    if separation < 2:
        raise InvalidParameter("balls must be disjoint (separation >= 2)")
    centers = np.zeros((2, d))
    centers[1, 0] = separation
    pts, w = sample_balls(centers, 1.0, n, seed, radial_power=d - 3)
    params = HalfSpaceParams(np.eye(d)[0], separation / 2)
    return pts, w, params


def doubled_ball_samples(d, n=1_000_000, seed=DEFAULT_SEED, radial_power=None):
    """Ball of volume 2|B^d| centered at the origin."""
    radius = 2.0 ** (1.0 / d)
    q = d - 3 if radial_power is None else radial_power
    return sample_balls(np.zeros((1, d)), radius, n, seed, radial_power=q)
