"""Weighted Steklov eigenvalues of the unit disk, sigma_k(D, rho).

A simply connected planar domain with rectifiable boundary is reduced to the
disk with boundary density rho = |f'(e^{i theta})| for a conformal map f. On
the disk the harmonic extension is explicit: in the real trigonometric basis
{1, cos n theta, sin n theta} the Dirichlet energy is diagonal with entries
pi*n, and only the boundary mass form depends on rho.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .errors import InvalidDensity, InvalidParameter, NumericBreakdown

NEGATIVITY_TOL = 1e-9
INDEFINITE_FLOOR = 1e-8
TAIL_CUTOFF = 1e-17


class OverlapWarning(UserWarning):
    """Bump centers closer than 4 epsilon; the bumps are not well separated."""


def _fft_size(M):
    size = 4 * (2 * M + 1)
    return 1 << (size - 1).bit_length()


@dataclass(frozen=True, eq=False)
class FourierDensity:
    """Real boundary density held as its Fourier coefficients rho_hat_m, m = 0..M.

    rho(theta) = sum_m rho_hat_m e^{i m theta} with rho_hat_{-m} = conj(rho_hat_m);
    total mass is 2 pi rho_hat_0. Construction checks nonnegativity on an FFT
    grid of ``sample_count`` points.
    """

    coefficients: np.ndarray
    sample_count: int = 0

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex).reshape(-1)
        if c.size == 0:
            raise InvalidDensity("density needs at least the mean coefficient")
        if abs(c[0].imag) > 1e-12 * max(abs(c[0].real), 1.0):
            raise InvalidDensity("mean coefficient must be real")
        c[0] = c[0].real
        if not c[0].real > 0:
            raise InvalidDensity("density must have positive total mass")
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)
        M = c.size - 1
        S = self.sample_count or _fft_size(M)
        if S < 2 * M + 1:
            raise InvalidDensity(f"{S} samples cannot resolve {M} modes")
        object.__setattr__(self, "sample_count", int(S))
        vals = self.samples()
        if vals.min() < -NEGATIVITY_TOL * vals.max():
            raise InvalidDensity(f"density is negative on the sample grid (min {vals.min():.3e})")

    @property
    def M(self):
        return self.coefficients.size - 1

    @property
    def mass(self):
        return 2 * math.pi * float(self.coefficients[0].real)

    def coefficient(self, m):
        """rho_hat_m for any integer m, zero beyond the truncation order."""
        m = np.asarray(m)
        out = np.zeros(m.shape, dtype=complex)
        inside = np.abs(m) <= self.M
        c = self.coefficients[np.abs(m[inside])]
        out[inside] = np.where(m[inside] >= 0, c, np.conj(c))
        return out

    def samples(self, count=None):
        S = count or self.sample_count
        spec = np.zeros(S // 2 + 1, dtype=complex)
        k = min(self.M, S // 2)
        spec[: k + 1] = self.coefficients[: k + 1] * S
        return np.fft.irfft(spec, n=S)

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        m = np.arange(1, self.M + 1)
        waves = np.exp(1j * np.multiply.outer(theta, m))
        return self.coefficients[0].real + 2 * np.real(waves @ self.coefficients[1:])

    def scaled(self, c):
        return FourierDensity(self.coefficients * c, self.sample_count)

    def rotated(self, alpha):
        """Density theta -> rho(theta - alpha)."""
        m = np.arange(self.M + 1)
        return FourierDensity(self.coefficients * np.exp(-1j * m * alpha), self.sample_count)

    @classmethod
    def constant(cls, value=1.0):
        return cls(np.array([value], dtype=complex))

    @classmethod
    def from_samples(cls, values, M=None):
        """Ingest uniform samples rho(2 pi j / S), j = 0..S-1."""
        values = np.asarray(values, dtype=float)
        S = values.size
        M = (S // 8) if M is None else M
        if M > S // 2:
            raise InvalidDensity(f"{S} samples cannot resolve {M} modes")
        spec = np.fft.rfft(values) / S
        return cls(spec[: M + 1], S)

    @classmethod
    def from_function(cls, fn, M):
        S = _fft_size(M)
        theta = 2 * math.pi * np.arange(S) / S
        return cls.from_samples(fn(theta), M)

    def to_json(self):
        modes = [[m, float(c.real), float(c.imag)] for m, c in enumerate(self.coefficients)]
        return json.dumps({"M": self.M, "modes": modes})

    @classmethod
    def from_json(cls, text):
        try:
            data = json.loads(text)
            M = int(data["M"])
            coeffs = np.zeros(M + 1, dtype=complex)
            for m, re, im in data["modes"]:
                m = int(m)
                if not 0 <= m <= M:
                    raise InvalidDensity(f"mode {m} outside 0..{M}")
                coeffs[m] = complex(re, im)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidDensity):
                raise
            raise InvalidDensity(f"malformed density JSON: {exc}") from None
        return cls(coeffs)


def dtn_energy_matrix(N):
    """Dirichlet energy of harmonic extensions in the basis 1, cos t, sin t, ..., cos Nt, sin Nt."""
    return np.diag(_energy_diagonal(N))


def _energy_diagonal(N):
    if N < 1:
        raise InvalidParameter("need N >= 1 Fourier modes")
    n = np.repeat(np.arange(1, N + 1), 2)
    return np.concatenate([[0.0], math.pi * n])


def boundary_mass_matrix(rho: FourierDensity, N):
    """Gram matrix of the trigonometric basis in L^2(rho d theta).

    With c_m = int rho cos(m t) and s_m = int rho sin(m t), products of basis
    functions reduce to c and s at index sums and differences up to 2N.
    """
    if N < 1:
        raise InvalidParameter("need N >= 1 Fourier modes")
    m = np.arange(2 * N + 1)
    rh = rho.coefficient(m)
    c = 2 * math.pi * rh.real
    s = -2 * math.pi * rh.imag  # s_{-m} = -s_m

    n = np.arange(1, N + 1)
    J, K = np.meshgrid(n, n, indexing="ij")
    diff = np.abs(J - K)
    cc = 0.5 * (c[diff] + c[J + K])
    ss = 0.5 * (c[diff] - c[J + K])
    cs = 0.5 * (s[J + K] + np.sign(K - J) * s[diff])  # <cos j, sin k>

    dim = 2 * N + 1
    B = np.empty((dim, dim))
    cos_idx = 2 * n - 1
    sin_idx = 2 * n
    B[0, 0] = c[0]
    B[0, cos_idx] = B[cos_idx, 0] = c[n]
    B[0, sin_idx] = B[sin_idx, 0] = s[n]
    B[np.ix_(cos_idx, cos_idx)] = cc
    B[np.ix_(sin_idx, sin_idx)] = ss
    B[np.ix_(cos_idx, sin_idx)] = cs
    B[np.ix_(sin_idx, cos_idx)] = cs.T
    return B


@dataclass(frozen=True)
class SteklovSpectrum:
    entries: np.ndarray
    mass: float
    truncation: int

    def normalized(self):
        return self.entries * self.mass


def steklov_eigenvalues(rho: FourierDensity, k_max, N) -> SteklovSpectrum:
    """sigma_0..sigma_{k_max} of the disk with boundary density rho, using modes up to N.

    Solves B v = mu (E + B) v for the largest mu and returns sigma = 1/mu - 1;
    E + B is uniformly positive definite even when rho nearly vanishes on
    part of the circle, which keeps concentrated densities well conditioned.
    """
    if k_max < 0:
        raise InvalidParameter("k_max must be >= 0")
    if N < k_max + 2:
        raise InvalidParameter(f"need N >= k_max + 2 modes (N={N}, k_max={k_max})")
    E = _energy_diagonal(N)
    B = boundary_mass_matrix(rho, N)
    dim = B.shape[0]
    A = B + np.diag(E)
    subset = [dim - k_max - 1, dim - 1]
    try:
        mu = la.eigh(B, A, eigvals_only=True, subset_by_index=subset)
    except la.LinAlgError:
        low = la.eigvalsh(B)
        if low[0] < -INDEFINITE_FLOOR * abs(low[-1]):
            raise InvalidDensity("boundary mass matrix is indefinite", min_eig=float(low[0])) from None
        jitter = 1e-12 * np.trace(A) / dim
        try:
            mu = la.eigh(B, A + jitter * np.eye(dim), eigvals_only=True, subset_by_index=subset)
        except la.LinAlgError as exc:
            raise NumericBreakdown(f"eigensolve failed after jitter: {exc}") from exc
    mu = np.sort(mu)[::-1]
    if mu[-1] <= 0:
        raise NumericBreakdown("nonpositive Rayleigh quotient in the pencil", mu=float(mu[-1]))
    sigma = 1.0 / mu - 1.0
    if sigma[0] < -NEGATIVITY_TOL:
        raise NumericBreakdown("sigma_0 is negative", sigma0=float(sigma[0]))
    sigma = np.maximum(sigma, 0.0)
    return SteklovSpectrum(np.sort(sigma), rho.mass, N)


def normalized_spectrum(spec: SteklovSpectrum):
    return list(spec.normalized())


def density_from_mobius(a, M):
    """rho = |f'| on the circle for the disk automorphism f(z) = (z - a)/(1 - conj(a) z)."""
    a = complex(a)
    if not abs(a) < 1:
        raise InvalidParameter(f"Mobius parameter must satisfy |a| < 1, got {a}")
    if M < 1:
        raise InvalidParameter("need M >= 1")

    def modulus(theta):
        z = np.exp(1j * theta)
        return np.abs((1 - abs(a) ** 2) / (1 - np.conj(a) * z) ** 2)

    return FourierDensity.from_function(modulus, M)


def bumps_overlap(centers, epsilon):
    c = np.asarray(centers, dtype=float)
    for i in range(c.size):
        for j in range(i + 1, c.size):
            gap = abs((c[i] - c[j] + math.pi) % (2 * math.pi) - math.pi)
            if gap < 4 * epsilon:
                return True
    return False


def concentrating_density(centers: Sequence[float], masses: Sequence[float], epsilon,
                          profile="poisson") -> FourierDensity:
    """Mixture of bumps of width epsilon around the given angles, total mass 2 pi.

    ``profile="poisson"`` uses wrapped Cauchy bumps (1 - r^2)/|e^{it} - r e^{ic}|^2
    with r = e^{-epsilon}, each one a Mobius image of the uniform density;
    ``profile="gaussian"`` uses periodized Gaussians of standard deviation epsilon.
    Fourier coefficients are exact and truncated where the tail drops below 1e-17.
    """
    centers = np.asarray(centers, dtype=float).reshape(-1)
    masses = np.asarray(masses, dtype=float).reshape(-1)
    if centers.size == 0 or centers.size != masses.size:
        raise InvalidParameter("need matching, nonempty centers and masses")
    if np.any(masses <= 0):
        raise InvalidParameter("bump masses must be positive")
    if not 0 < epsilon <= 0.5:
        raise InvalidParameter(f"epsilon must lie in (0, 0.5], got {epsilon}")
    wrapped = np.mod(centers, 2 * math.pi)
    if np.unique(np.round(wrapped, 12)).size != wrapped.size:
        raise InvalidParameter("bump centers must be distinct")
    if bumps_overlap(centers, epsilon):
        warnings.warn(f"bump centers closer than 4*epsilon={4 * epsilon:g}", OverlapWarning, stacklevel=2)

    share = masses / masses.sum()
    log_tail = math.log(TAIL_CUTOFF)
    if profile == "poisson":
        M = math.ceil(-log_tail / epsilon)
        envelope = np.exp(-epsilon * np.arange(M + 1))
    elif profile == "gaussian":
        M = math.ceil(math.sqrt(-2 * log_tail) / epsilon)
        envelope = np.exp(-0.5 * (epsilon * np.arange(M + 1)) ** 2)
    else:
        raise InvalidParameter(f"unknown bump profile {profile!r}")
    m = np.arange(M + 1)
    phases = np.exp(-1j * np.outer(m, centers)) @ share
    return FourierDensity(envelope * phases)


def random_smooth_density(rng, order=6, floor=0.05) -> FourierDensity:
    """Random low-order trigonometric density, lifted to be positive.

    Modes 1..order get complex normal coefficients decaying like 1/m; the mean
    is then raised until min rho >= floor * (max rho - min rho).
    """
    m = np.arange(1, order + 1)
    c = (rng.standard_normal(order) + 1j * rng.standard_normal(order)) / m
    S = _fft_size(order)
    spec = np.zeros(S // 2 + 1, dtype=complex)
    spec[1: order + 1] = c * S
    vals = np.fft.irfft(spec, n=S)
    spread = vals.max() - vals.min()
    mean = max(1e-3, floor * spread - vals.min())
    return FourierDensity(np.concatenate([[mean], c]))
