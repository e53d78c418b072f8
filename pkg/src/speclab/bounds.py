"""Sharp constants and margin reports for the normalized eigenvalue inequalities."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

from .disk import SteklovSpectrum
from .errors import InvalidParameter, UnsupportedIndex
from .geometry import ball_volume, check_dimension, equator_energy, sphere_area
from .radial import Spectrum

EQUALITY_RTOL = 1e-6


def sharp_constant(d, k):
    """Supremum of sigma_k |dOmega| |Omega|^{(2-d)/d} over domains in R^d, k in {1, 2}.

    Equals k times the equator-map energy of the unit ball, rescaled to unit
    volume: (d-1)/(d-2) * k*omega * (k|B|)^{(2-d)/d}, where omega = |S^{d-1}|.
    """
    d = check_dimension(d, minimum=3)
    if k not in (1, 2):
        raise UnsupportedIndex(f"sharp constant is known only for k = 1, 2 (got {k})")
    return k * equator_energy(d) * (k * ball_volume(d)) ** ((2 - d) / d)


def constants_table(dmin, dmax):
    """Rows (d, k, constant) for dmin <= d <= dmax and k = 1, 2."""
    return [(d, k, sharp_constant(d, k)) for d in range(dmin, dmax + 1) for k in (1, 2)]


@dataclass(frozen=True)
class BoundReport:
    quantity: float
    bound: float
    margin: float
    sharp: bool
    equality: bool
    k: int
    d: int
    kind: str

    @classmethod
    def make(cls, quantity, bound, sharp, k, d, kind):
        margin = bound - quantity
        equality = abs(margin) <= EQUALITY_RTOL * abs(bound)
        return cls(float(quantity), float(bound), float(margin), bool(sharp), bool(equality), int(k), int(d), kind)

    @property
    def holds(self):
        """Inequality satisfied; inside the equality band the sign is not asserted."""
        return self.equality or self.margin > -1e-8 * abs(self.bound)

    def to_dict(self):
        return asdict(self)


def neumann_bound_check(d, spectrum: Spectrum, k) -> BoundReport:
    """Compare mass * lambda_k with k times the equator energy of the unit ball.

    The spectrum should come from a measure on a domain of volume k|B^d|
    (for k = 2, e.g. the disjoint union of two balls).
    """
    d = check_dimension(d, minimum=3)
    if k not in (1, 2):
        raise UnsupportedIndex(f"Neumann bound is stated for k = 1, 2 (got {k})")
    return BoundReport.make(spectrum.normalized(k), k * equator_energy(d), d >= 7, k, d, "neumann")


def steklov_bound_check(k, spectrum: Optional[SteklovSpectrum] = None, *, d=2, sigma=None,
                        boundary_area=None, volume=None) -> BoundReport:
    """Margin report for a Steklov eigenvalue.

    Planar case: pass the disk spectrum; the bound is 2 pi k. For d >= 3 pass
    the triple (sigma_k, |dOmega|, |Omega|); the bound is ``sharp_constant(d, k)``.
    """
    if spectrum is not None:
        if d != 2:
            raise InvalidParameter("a disk spectrum only supports d = 2")
        if k < 1 or k >= len(spectrum.entries):
            raise UnsupportedIndex(f"spectrum has no entry {k}")
        quantity = spectrum.entries[k] * spectrum.mass
        return BoundReport.make(quantity, 2 * math.pi * k, True, k, 2, "steklov")
    d = check_dimension(d, minimum=3)
    if sigma is None or boundary_area is None or volume is None:
        raise InvalidParameter("d >= 3 needs sigma, boundary_area and volume")
    if not (sigma >= 0 and boundary_area > 0 and volume > 0):
        raise InvalidParameter("need sigma >= 0 and positive area and volume")
    quantity = sigma * boundary_area * volume ** ((2 - d) / d)
    return BoundReport.make(quantity, sharp_constant(d, k), d >= 7, k, d, "steklov")


def unit_ball_steklov_check(d) -> BoundReport:
    """sigma_1 of the unit ball is 1 (the coordinates satisfy d_nu x_i = x_i)."""
    d = check_dimension(d, minimum=3)
    return steklov_bound_check(1, d=d, sigma=1.0, boundary_area=sphere_area(d), volume=ball_volume(d))
