"""Weighted Neumann spectrum of the unit ball with a radial weight.

Separating variables in spherical harmonics reduces the problem to one radial
Sturm-Liouville pencil per degree l:

    int phi' psi' r^{d-1} dr + nu_l int phi psi r^{d-3} dr  =  lam int phi psi f(r) r^{d-1} dr

with nu_l = l(d-2+l). The interval (0, 1] is truncated to [delta, 1] with natural
boundary conditions at both ends and discretized by piecewise-linear elements.
For f = c/r^2 the angular term is nu_l/c times the mass form, so each sector
is the l = 0 sector shifted by nu_l/c.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy import integrate

from .errors import DegenerateWeight, InvalidParameter, NumericBreakdown, TruncationError
from .geometry import RadialWeight, WeightKind, check_dimension

NEGATIVE_FLOOR = 1e-9
LOCALIZATION_THRESHOLD = 0.5


def harmonic_eigenvalue(d, ell):
    d = check_dimension(d, 3)
    if ell < 0:
        raise InvalidParameter("harmonic degree must be >= 0")
    return ell * (d - 2 + ell)


def harmonic_multiplicity(d, ell):
    """Dimension of the degree-``ell`` spherical harmonics on S^{d-1}."""
    d = check_dimension(d, 3)
    if ell < 0:
        raise InvalidParameter("harmonic degree must be >= 0")
    return math.comb(ell + d - 1, d - 1) - math.comb(ell + d - 3, d - 1)


def essential_bottom(d):
    d = check_dimension(d, 3)
    return ((d - 2) / 2) ** 2


def lambda1_theory(d):
    """First nonzero eigenvalue of the ball with weight 1/|x|^2: min(d-1, ((d-2)/2)^2)."""
    d = check_dimension(d, 3)
    return min(d - 1.0, essential_bottom(d))


def beta_plus(d, lam):
    """Larger exponent beta of r^beta solving -r^{3-d}(r^{d-1} phi')' = lam phi."""
    a = (check_dimension(d, 3) - 2) / 2
    return complex(-a + cmath.sqrt(a * a - lam))


@dataclass(frozen=True)
class GridSpec:
    """Graded mesh r_i = delta + (1 - delta) (i/n)^gamma, i = 0..n."""

    n: int
    delta: float = 1e-6
    gamma: float = 2.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise InvalidParameter(f"grid needs n >= 16 nodes, got {self.n}")
        if not 0 < self.delta <= 0.1:
            raise InvalidParameter(f"inner cutoff must lie in (0, 0.1], got {self.delta}")
        if not self.gamma >= 1:
            raise InvalidParameter(f"grading exponent must be >= 1, got {self.gamma}")

    def nodes(self):
        r = self.delta + (1 - self.delta) * (np.arange(self.n + 1) / self.n) ** self.gamma
        r[-1] = 1.0
        return r

    def refined(self):
        return GridSpec(2 * self.n, self.delta, self.gamma)


@dataclass(frozen=True)
class SectorProblem:
    d: int
    ell: int
    weight: RadialWeight
    grid: GridSpec

    def __post_init__(self):
        check_dimension(self.d, 3)
        if self.ell < 0:
            raise InvalidParameter("harmonic degree must be >= 0")

    @property
    def nu(self):
        return harmonic_eigenvalue(self.d, self.ell)


class SectorMatrices(NamedTuple):
    """Tridiagonal finite-element matrices of one sector.

    ``angular`` is the r^{d-3} mass form multiplying nu_l; it is None when it
    coincides with ``mass / weight.scale`` (the inverse-square weight). The
    ``element_mass`` array holds the (00, 01, 11) entries of every element
    mass matrix, used for localization diagnostics.
    """

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    angular: Optional[sp.csr_matrix]
    nodes: np.ndarray
    element_mass: np.ndarray


def _gauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


def _element_points(a, b, order):
    x, w = _gauss(order)
    h = b - a
    pts = 0.5 * (a + b)[:, None] + 0.5 * h[:, None] * x[None, :]
    wts = 0.5 * h[:, None] * w[None, :]
    s = (pts - a[:, None]) / h[:, None]
    return pts, wts, s


def _hat_moments(a, b, density, order):
    """Integrals of density * (1-s)^2, (1-s)s, s^2 over each element."""
    pts, wts, s = _element_points(a, b, order)
    f = wts * density(pts)
    return np.stack([(f * (1 - s) ** 2).sum(1), (f * (1 - s) * s).sum(1), (f * s * s).sum(1)], axis=1)


def _monomial_moments(a, b, power):
    order = max(6, (int(power) + 4) // 2 + 1)
    return _hat_moments(a, b, lambda r: r**power, order)


def _adaptive_moments(a, b, density, rtol=1e-12):
    """Element moments for a general density, doubling the Gauss order until stable."""
    prev = _hat_moments(a, b, density, 8)
    for order in (16, 32, 64, 128):
        cur = _hat_moments(a, b, density, order)
        scale = np.abs(cur).max(axis=1, keepdims=True)
        if np.all(np.abs(cur - prev) <= rtol * np.maximum(scale, np.finfo(float).tiny)):
            return cur
        prev = cur
    bad = np.any(np.abs(cur - prev) > rtol * np.abs(cur).max(axis=1, keepdims=True), axis=1)
    # stubborn elements fall back to scipy's adaptive quadrature
    for e in np.flatnonzero(bad):
        lo, hi = a[e], b[e]
        h = hi - lo
        funcs = (lambda r: (hi - r) ** 2, lambda r: (hi - r) * (r - lo), lambda r: (r - lo) ** 2)
        cur[e] = [integrate.quad(lambda r, g=g: float(density(np.array(r))) * g(r) / h**2,
                                 lo, hi, epsrel=rtol, epsabs=0.0, limit=200)[0] for g in funcs]
    return cur


def _tridiag(diag_blocks, n_nodes):
    """Assemble a symmetric tridiagonal matrix from per-element 2x2 blocks (00, 01, 11)."""
    main = np.zeros(n_nodes)
    main[:-1] += diag_blocks[:, 0]
    main[1:] += diag_blocks[:, 2]
    off = diag_blocks[:, 1]
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def assemble_sector(problem: SectorProblem) -> SectorMatrices:
    """Piecewise-linear stiffness and mass matrices for one harmonic sector.

    Stiffness is int phi' psi' r^{d-1} dr, mass is int phi psi f(r) r^{d-1} dr;
    both use natural boundary conditions at delta and at 1. Monomial densities
    are integrated exactly by Gauss-Legendre rules of sufficient order.
    """
    d, w = problem.d, problem.weight
    r = problem.grid.nodes()
    a, b = r[:-1], r[1:]
    h = b - a
    n_nodes = r.size

    mom = _monomial_moments(a, b, d - 1)
    grad = (mom[:, 0] + 2 * mom[:, 1] + mom[:, 2]) / h**2  # int r^{d-1} over the element / h^2
    k_blocks = np.stack([grad, -grad, grad], axis=1)
    stiffness = _tridiag(k_blocks, n_nodes)

    p = w.monomial_power(d)
    if p is not None:
        m_blocks = w.scale * _monomial_moments(a, b, p)
    else:
        m_blocks = _adaptive_moments(a, b, lambda x: w(x) * x ** (d - 1))
    if not np.all(np.isfinite(m_blocks)) or np.all(m_blocks[:, 0] + m_blocks[:, 2] <= 0):
        raise DegenerateWeight("weight vanishes on the whole grid")
    mass = _tridiag(m_blocks, n_nodes)
    diag = mass.diagonal()
    if np.any(diag <= 0):
        raise DegenerateWeight("mass matrix has a zero row; weight vanishes on an element pair")

    angular = None
    if w.kind is not WeightKind.INV_SQUARE:
        angular = _tridiag(_monomial_moments(a, b, d - 3), n_nodes)
    return SectorMatrices(stiffness, mass, angular, r, m_blocks)


def _lowest_pairs(K, M, count, shift=-1.0):
    """Lowest ``count`` eigenpairs of the symmetric tridiagonal pencil (K, M)."""
    n = K.shape[0]
    dscale = 1.0 / np.sqrt(M.diagonal())
    D = sp.diags(dscale)
    Ks = (D @ K @ D).tocsc()
    Ms = (D @ M @ D).tocsc()
    count = min(count, n)
    try:
        # dense eigh loses absolute accuracy ~ eps * |K| near zero; shift-invert does not
        if count >= n - 1:
            vals, vecs = la.eigh(Ks.toarray(), Ms.toarray(), subset_by_index=[0, count - 1])
        else:
            v0 = np.random.default_rng(n).random(n) + 0.5
            vals, vecs = spla.eigsh(Ks, k=count, M=Ms, sigma=shift, which="LM", v0=v0, tol=0.0)
    except (la.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence) as exc:
        raise NumericBreakdown(f"generalized eigensolve failed: {exc}", size=n, count=count) from exc
    order = np.argsort(vals, kind="stable")
    return vals[order], dscale[:, None] * vecs[:, order]


def localization_fraction(mats: SectorMatrices, vec, radius):
    """Share of the weighted L^2 mass of a nodal vector carried by elements inside ``radius``."""
    e = mats.element_mass
    v0, v1 = vec[:-1], vec[1:]
    per_elem = e[:, 0] * v0**2 + 2 * e[:, 1] * v0 * v1 + e[:, 2] * v1**2
    total = per_elem.sum()
    if total <= 0:
        return 0.0
    inside = mats.nodes[1:] <= radius
    return float(per_elem[inside].sum() / total)


def localization_radius(grid: GridSpec):
    """Radius bounding the inner three quarters of the mesh's logarithmic range.

    Approximate essential-spectrum modes spread their weighted mass evenly in
    log r down to the innermost node r_1, so roughly 3/4 of it lies below
    r_1^{1/4}; genuine eigenfunctions concentrate near r = 1 and put almost
    nothing there.
    """
    return grid.nodes()[1] ** 0.25


def _sector_solve(problem, count, mats=None):
    mats = mats if mats is not None else assemble_sector(problem)
    K, M = mats.stiffness, mats.mass
    nu = problem.nu
    if mats.angular is None:
        vals, vecs = _lowest_pairs(K, M, count)
        vals = vals + nu / problem.weight.scale
    else:
        vals, vecs = _lowest_pairs(K + nu * mats.angular, M, count)
    floor = -NEGATIVE_FLOOR * max(1.0, float(np.max(np.abs(vals))))
    if np.any(vals < floor):
        raise NumericBreakdown("negative eigenvalue below the numerical floor",
                               smallest=float(vals.min()), ell=problem.ell)
    return np.maximum(vals, 0.0), vecs, mats


def sector_eigenvalues(problem: SectorProblem, count: int):
    """Lowest ``count`` eigenvalues of one sector, already shifted by the angular term."""
    if count < 1:
        raise InvalidParameter("count must be >= 1")
    vals, _, _ = _sector_solve(problem, count)
    return vals


@dataclass(frozen=True)
class SpectrumEntry:
    value: float
    sector_ell: int
    multiplicity: int
    radial_index: int = 0
    localized: bool = False


@dataclass(frozen=True)
class Spectrum:
    """Merged eigenvalue list; each entry is one (sector, radial) eigenvalue with its multiplicity."""

    entries: tuple
    mass: float
    essential_flag: bool = False
    essential_estimate: Optional[float] = None
    d: Optional[int] = None

    def values(self, k_max=None):
        """Eigenvalues repeated by multiplicity, lambda_0, lambda_1, ..."""
        out = np.repeat([e.value for e in self.entries], [e.multiplicity for e in self.entries])
        return out if k_max is None else out[: k_max + 1]

    def value(self, k):
        vals = self.values()
        if not 0 <= k < vals.size:
            raise InvalidParameter(f"eigenvalue index {k} not computed (have {vals.size})")
        return float(vals[k])

    def normalized(self, k):
        return self.mass * self.value(k)

    def start_indices(self):
        return np.concatenate([[0], np.cumsum([e.multiplicity for e in self.entries])[:-1]]).astype(int)

    def disjoint_union(self, other: "Spectrum"):
        """Spectrum of a disjoint union: merged values, added masses."""
        merged = sorted(self.entries + other.entries,
                        key=lambda e: (e.value, e.sector_ell, e.radial_index))
        out = []
        for e in merged:
            if out and out[-1].value == e.value and out[-1].sector_ell == e.sector_ell \
                    and out[-1].radial_index == e.radial_index:
                last = out.pop()
                e = SpectrumEntry(e.value, e.sector_ell, last.multiplicity + e.multiplicity,
                                  e.radial_index, e.localized or last.localized)
            out.append(e)
        return Spectrum(tuple(out), self.mass + other.mass,
                        self.essential_flag or other.essential_flag,
                        self.essential_estimate, self.d)

    def rows(self):
        for k, e in zip(self.start_indices(), self.entries):
            yield int(k), e


def ball_weighted_neumann(d, weight: RadialWeight, k_max: int, grid: GridSpec, ell_max: int) -> Spectrum:
    """Lowest weighted Neumann eigenvalues lambda_0..lambda_{k_max} of the unit ball.

    Raises :class:`TruncationError` when harmonic degrees above ``ell_max``
    could still contribute to the first k_max + 1 eigenvalues.
    """
    d = check_dimension(d, 3)
    if k_max < 0 or ell_max < 0:
        raise InvalidParameter("k_max and ell_max must be >= 0")
    count = k_max + 1
    r_loc = localization_radius(grid)

    base = None
    candidates = []
    for ell in range(ell_max + 1):
        prob = SectorProblem(d, ell, weight, grid)
        if weight.kind is WeightKind.INV_SQUARE:
            if base is None:
                base = _sector_solve(SectorProblem(d, 0, weight, grid), count)
            vals0, vecs, mats = base
            vals = vals0 + prob.nu / weight.scale
        else:
            vals, vecs, mats = _sector_solve(prob, count)
        mult = harmonic_multiplicity(d, ell)
        for j, v in enumerate(vals):
            frac = localization_fraction(mats, vecs[:, j], r_loc)
            candidates.append(SpectrumEntry(float(v), ell, mult, j, frac >= LOCALIZATION_THRESHOLD))

    candidates.sort(key=lambda e: (e.value, e.sector_ell, e.radial_index))
    entries, total = [], 0
    for e in candidates:
        if total > k_max:
            break
        entries.append(e)
        total += e.multiplicity

    kappa = _angular_lower_bound(weight, grid)
    next_sector = kappa * harmonic_eigenvalue(d, ell_max + 1)
    if entries[-1].value >= next_sector:
        raise TruncationError(
            f"sector l={ell_max + 1} may contribute below {entries[-1].value:.6g}; raise ell_max",
            needed_below=float(next_sector))

    essential = weight.kind is WeightKind.INV_SQUARE and d < 7
    estimate = essential_bottom(d) / weight.scale if weight.kind is WeightKind.INV_SQUARE else None
    return Spectrum(tuple(entries), weight.total_mass(d), essential, estimate, d)


def _angular_lower_bound(weight, grid):
    """kappa with nu * int phi^2 r^{d-3} >= kappa * nu * int phi^2 f r^{d-1}."""
    if weight.kind is WeightKind.INV_SQUARE:
        return 1.0 / weight.scale
    if weight.kind is WeightKind.CONSTANT:
        return 1.0 / weight.scale
    r = grid.nodes()
    return float(np.min(1.0 / (r**2 * weight(r))))


def richardson_limit(values):
    """Extrapolate a sequence computed on successively doubled grids.

    Uses the last three values: the observed contraction of successive
    differences fixes the convergence order, and the geometric tail is summed.
    Returns ``(limit, ratio)``; with non-contracting differences the last value
    is returned unchanged.
    """
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        raise InvalidParameter("need at least three refinement levels")
    d1, d2 = v[-2] - v[-3], v[-1] - v[-2]
    if d1 == 0 or d2 == 0:
        return float(v[-1]), 0.0
    q = d2 / d1
    if not 0 < q < 1:
        return float(v[-1]), float(q)
    return float(v[-1] + d2 * q / (1 - q)), float(q)
