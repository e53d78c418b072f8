"""Dimensional constants, radial weights, discrete measures and volume samplers."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import DivergentEnergy, InvalidDimension, InvalidParameter

DEFAULT_SEED = 0x5EED


def check_dimension(d, minimum=2):
    if int(d) != d or d < minimum:
        raise InvalidDimension(f"dimension must be an integer >= {minimum}, got {d}")
    return int(d)


def sphere_area(d):
    """Area of the unit sphere S^{d-1} in R^d, i.e. 2 pi^{d/2} / Gamma(d/2)."""
    d = check_dimension(d)
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d):
    """Volume of the unit ball in R^d."""
    return sphere_area(d) / check_dimension(d)


def equator_energy(d):
    """Dirichlet energy of x -> x/|x| on the unit ball: (d-1)/(d-2) * |S^{d-1}|.

    The integrand (d-1)/r^2 against r^{d-1} dr is not integrable at 0 for d = 2,
    so that case raises :class:`DivergentEnergy`.
    """
    d = check_dimension(d)
    if d <= 2:
        raise DivergentEnergy("energy of x/|x| diverges at the origin for d <= 2")
    return (d - 1) / (d - 2) * sphere_area(d)


def equator_energy_quadrature(d, radius=1.0):
    """Same energy computed by adaptive quadrature of the radial integral."""
    d = check_dimension(d)
    if d <= 2:
        raise DivergentEnergy("energy of x/|x| diverges at the origin for d <= 2")
    val, _ = integrate.quad(lambda r: (d - 1) / r**2 * r ** (d - 1), 0.0, radius,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return sphere_area(d) * val


class WeightKind(enum.Enum):
    INV_SQUARE = "inv-square"
    CONSTANT = "constant"
    CUSTOM = "custom"


@dataclass(frozen=True)
class RadialWeight:
    """Radial density f(|x|) on the closed unit ball, d(mu) = f(|x|) dx.

    ``scale`` multiplies the built-in profiles: INV_SQUARE is scale/r^2 and
    CONSTANT is scale. CUSTOM weights supply ``evaluator`` and the exponent s
    with f(r) ~ r^{-s} near 0.
    """

    kind: WeightKind
    scale: float = 1.0
    evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    singularity_order: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidParameter(f"weight scale must be positive, got {self.scale}")
        if self.kind is WeightKind.INV_SQUARE:
            object.__setattr__(self, "singularity_order", 2.0)
        elif self.kind is WeightKind.CONSTANT:
            object.__setattr__(self, "singularity_order", 0.0)
        elif self.evaluator is None:
            raise InvalidParameter("custom weights need an evaluator")

    @classmethod
    def inv_square(cls, scale=1.0):
        return cls(WeightKind.INV_SQUARE, scale)

    @classmethod
    def constant(cls, scale=1.0):
        return cls(WeightKind.CONSTANT, scale)

    @classmethod
    def custom(cls, fn, singularity_order=0.0, scale=1.0):
        return cls(WeightKind.CUSTOM, scale, fn, float(singularity_order))

    @classmethod
    def from_name(cls, name, scale=1.0):
        try:
            kind = WeightKind(name)
        except ValueError:
            raise InvalidParameter(f"unknown weight {name!r}") from None
        if kind is WeightKind.CUSTOM:
            raise InvalidParameter("custom weights cannot be built from a name")
        return cls(kind, scale)

    def scaled(self, c):
        return RadialWeight(self.kind, self.scale * c, self.evaluator, self.singularity_order)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind is WeightKind.INV_SQUARE:
            return self.scale / r**2
        if self.kind is WeightKind.CONSTANT:
            return np.full_like(r, self.scale)
        return self.scale * np.asarray(self.evaluator(r), dtype=float)

    def monomial_power(self, d):
        """Exponent p with f(r) r^{d-1} = scale * r^p, or None for custom weights."""
        if self.kind is WeightKind.INV_SQUARE:
            return d - 3
        if self.kind is WeightKind.CONSTANT:
            return d - 1
        return None

    def total_mass(self, d):
        """mu(closed unit ball) = |S^{d-1}| * int_0^1 f(r) r^{d-1} dr."""
        d = check_dimension(d)
        if self.singularity_order >= d:
            raise InvalidParameter(f"weight with r^-{self.singularity_order} has infinite mass in d={d}")
        p = self.monomial_power(d)
        if p is not None:
            return self.scale * sphere_area(d) / (p + 1)
        val, _ = integrate.quad(lambda r: float(self(np.array(r))) * r ** (d - 1), 0.0, 1.0,
                                epsrel=1e-12, limit=200)
        return sphere_area(d) * val


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite atomic measure: ``positions`` (n, d) with positive ``masses``."""

    positions: np.ndarray
    masses: np.ndarray
    radius: Optional[float] = None

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.positions, dtype=float))
        m = np.asarray(self.masses, dtype=float).reshape(-1)
        if pos.shape[0] != m.shape[0]:
            raise InvalidParameter("positions and masses have different lengths")
        if pos.shape[0] == 0 or np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise InvalidParameter("atom masses must be positive and finite")
        if self.radius is not None:
            if not np.all(np.linalg.norm(pos, axis=1) <= self.radius):
                raise InvalidParameter(f"atoms must lie in the ball of radius {self.radius}")
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "masses", _frozen(m))

    @property
    def dim(self):
        return self.positions.shape[1]

    @property
    def total_mass(self):
        return float(self.masses.sum())

    def __len__(self):
        return self.masses.shape[0]

    def scaled(self, c):
        return PointMeasure(self.positions, self.masses * c, self.radius)

    def translated(self, v):
        radius = None if self.radius is None else self.radius + float(np.linalg.norm(v))
        return PointMeasure(self.positions + np.asarray(v, dtype=float), self.masses, radius)

    def with_radius(self, radius):
        return PointMeasure(self.positions, self.masses, radius)

    def to_csv(self, path):
        d = self.dim
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(d)] + ["mass"])
            for x, m in zip(self.positions, self.masses):
                w.writerow([repr(float(v)) for v in x] + [repr(float(m))])

    @classmethod
    def from_csv(cls, path, radius=None):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise InvalidParameter(f"{path}: empty measure file")
        header = [h.strip() for h in rows[0]]
        d = len(header) - 1
        if d < 1 or header != [f"x{i + 1}" for i in range(d)] + ["mass"]:
            raise InvalidParameter(f"{path}: header must be x1,...,xd,mass")
        try:
            data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
        except ValueError as exc:
            raise InvalidParameter(f"{path}: {exc}") from None
        if data.ndim != 2 or data.shape[1] != d + 1:
            raise InvalidParameter(f"{path}: ragged rows")
        return cls(data[:, :d], data[:, d], radius)

    @classmethod
    def from_radial_weight(cls, d, weight, n, seed=DEFAULT_SEED, inner=1e-3):
        """Antipodally symmetric atom cloud discretizing f(|x|)dx on the unit ball.

        For monomial weights f(r) r^{d-1} ~ r^p the radii are stratified in the
        radial mass distribution r^{p+1}, each atom carrying an equal share of
        the exact total mass; custom weights are stratified in volume on
        [inner, 1]. Every atom x is paired with -x, so the centering field
        vanishes at the origin exactly.
        """
        d = check_dimension(d)
        rng = np.random.default_rng(seed)
        half = max(n // 2, 1)
        u = (np.arange(half) + rng.random(half)) / half
        p = weight.monomial_power(d)
        if p is not None:
            r = u ** (1.0 / (p + 1))
            m = np.full(half, weight.total_mass(d) / (2 * half))
        else:
            r = (inner**d + u * (1 - inner**d)) ** (1.0 / d)
            m = weight(r) * (1 - inner**d) * ball_volume(d) / (2 * half)
        pts = random_directions(rng, half, d) * r[:, None]
        return cls(np.vstack([pts, -pts]), np.concatenate([m, m]), 1.0)


def random_directions(rng, n, d):
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def fibonacci_sphere(n):
    """Quasi-uniform points on S^2 (golden-angle spiral)."""
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z**2)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


def sample_balls(centers, radius, n, seed=DEFAULT_SEED, radial_power=None):
    """Stratified volume samples of a union of disjoint balls of equal radius.

    Radii are drawn with density proportional to rho^q on each ball, where rho
    is the distance to that ball's center (q = d-1 is plain volume sampling;
    q = d-3 matches a 1/rho^2 singularity). Returns ``(points, weights)`` with
    ``sum(w * g(x))`` an unbiased estimate of the integral of g over the union.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    k, d = centers.shape
    q = d - 1 if radial_power is None else radial_power
    if q <= -1:
        raise InvalidParameter("radial_power must exceed -1")
    for i in range(k):
        for j in range(i + 1, k):
            if np.linalg.norm(centers[i] - centers[j]) < 2 * radius * (1 - 1e-12):
                raise InvalidParameter("sample_balls needs pairwise disjoint balls")
    rng = np.random.default_rng(seed)
    per = n // k
    pts, wts = [], []
    area = sphere_area(d)
    for c in centers:
        u = (np.arange(per) + rng.random(per)) / per
        rho = radius * u ** (1.0 / (q + 1))
        dirs = random_directions(rng, per, d)
        pts.append(c + dirs * rho[:, None])
        # volume element / sampling density, split over `per` strata
        wts.append(area * rho ** (d - 1 - q) * radius ** (q + 1) / ((q + 1) * per))
    return np.vstack(pts), np.concatenate(wts)
