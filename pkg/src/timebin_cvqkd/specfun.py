"""Special functions and post-selection integrals.

Everything downstream (channel statistics, decoy estimation, tomography
kernels) is built on the functions in this module: physicists' Hermite and
generalized Laguerre polynomials, Poisson weights, the binary entropy, the
position-representation Fock wavefunctions, and the threshold-region
acceptance integrals evaluated by adaptive Gauss-Legendre quadrature.

All functions are pure and deterministic; repeated calls with identical
arguments return bit-identical results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, NumericError, OrderOverflowError

#: Highest polynomial order supported by the recurrences.  Covers the photon
#: cutoff used anywhere in the package (10) plus tomography kernels with
#: comfortable margin.
MAX_POLY_ORDER = 24

#: Half-width beyond the threshold after which the Gaussian-weighted
#: integrands are below 1e-30 and the outer region integral is truncated.
OUTER_TAIL = 12.0


def hermite(n: int, x: float) -> float:
    """Physicists' Hermite polynomial H_n(x) by the three-term recurrence.

    Raises:
        OrderOverflowError: if ``n`` exceeds :data:`MAX_POLY_ORDER`.
    """
    if n < 0 or n > MAX_POLY_ORDER:
        raise OrderOverflowError(f"Hermite order {n} outside [0, {MAX_POLY_ORDER}]")
    h_prev, h = 0.0, 1.0
    for k in range(n):
        h_prev, h = h, 2.0 * x * h - 2.0 * k * h_prev
    return h


def generalized_laguerre(n: int, d: int, x: float) -> float:
    """Generalized Laguerre polynomial L_n^d(x) by recurrence.

    Raises:
        OrderOverflowError: if ``n`` or ``d`` exceeds :data:`MAX_POLY_ORDER`.
    """
    if n < 0 or n > MAX_POLY_ORDER or d < 0 or d > MAX_POLY_ORDER:
        raise OrderOverflowError(f"Laguerre order ({n},{d}) outside [0, {MAX_POLY_ORDER}]")
    if n == 0:
        return 1.0
    l_prev, l_cur = 1.0, 1.0 + d - x
    for k in range(1, n):
        l_prev, l_cur = l_cur, ((2 * k + 1 + d - x) * l_cur - (k + d) * l_prev) / (k + 1)
    return l_cur


def poisson(mu: float, m: int) -> float:
    """Poisson probability e^(-mu) mu^m / m!, evaluated in log space.

    Raises:
        DomainError: if ``mu`` is negative or ``m`` is negative.
    """
    if mu < 0.0:
        raise DomainError(f"Poisson mean must be non-negative, got {mu}")
    if m < 0:
        raise DomainError(f"photon number must be non-negative, got {m}")
    if mu == 0.0:
        return 1.0 if m == 0 else 0.0
    return math.exp(-mu + m * math.log(mu) - math.lgamma(m + 1))


def poisson_tail(mu: float, m_max: int) -> float:
    """Probability of drawing more than ``m_max`` from a Poisson of mean ``mu``."""
    head = sum(poisson(mu, m) for m in range(m_max + 1))
    return max(0.0, 1.0 - head)


def binary_entropy(p: float) -> float:
    """Binary entropy in bits, with h(0) = h(1) = 0.

    Raises:
        DomainError: if ``p`` is outside [0, 1].
    """
    if p < 0.0 or p > 1.0:
        raise DomainError(f"probability must lie in [0,1], got {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def fock_wavefunction(n: int, q) -> np.ndarray | float:
    """Position representation of the n-photon Fock state.

    The convention is psi_n(q) = H_n(q/sqrt(2)) exp(-q^2/4) / sqrt(2^n n! sqrt(2 pi)),
    normalized so that psi_0^2 is a standard normal density (vacuum quadrature
    variance 1).
    """
    if n < 0 or n > MAX_POLY_ORDER:
        raise OrderOverflowError(f"Fock order {n} outside [0, {MAX_POLY_ORDER}]")
    qa = np.asarray(q, dtype=float)
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    h = np.polynomial.hermite.hermval(qa / math.sqrt(2.0), coeffs)
    lognorm = -0.5 * (n * math.log(2.0) + math.lgamma(n + 1) + 0.5 * math.log(2.0 * math.pi))
    out = h * np.exp(-qa * qa / 4.0 + lognorm)
    return out if np.ndim(q) else float(out)


def gauss_legendre_panels(f, a: float, b: float, rel_tol: float = 1e-12,
                          abs_tol: float = 1e-15, order: int = 40,
                          max_panels: int = 4096) -> float:
    """Integrate a smooth function on [a, b] with panel-doubling Gauss-Legendre.

    The panel count doubles until two successive estimates agree to
    ``rel_tol`` relative or ``abs_tol`` absolute (whichever is looser; the
    absolute floor matters for integrals that vanish identically).

    Raises:
        NumericError: if the estimates fail to settle within ``max_panels``.
    """
    xs, ws = _leggauss(order)
    prev = None
    npan = 1
    while npan <= max_panels:
        edges = np.linspace(a, b, npan + 1)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = (mid[:, None] + half[:, None] * xs[None, :]).ravel()
        wts = (half[:, None] * ws[None, :]).ravel()
        val = float(np.sum(wts * f(pts)))
        if prev is not None and abs(val - prev) <= max(abs_tol, rel_tol * abs(val)):
            return val
        prev = val
        npan *= 2
    raise NumericError(f"quadrature on [{a},{b}] did not converge at {max_panels} panels")


@lru_cache(maxsize=None)
def _leggauss(order: int):
    xs, ws = np.polynomial.legendre.leggauss(order)
    return xs, ws


@lru_cache(maxsize=4096)
def band_probability(n: int, tau: float) -> float:
    """Probability that the quadrature of Fock state |n> falls inside |q| < tau."""
    if tau <= 0.0:
        raise DomainError(f"threshold must be positive, got {tau}")
    f = lambda q: fock_wavefunction(n, q) ** 2
    return 2.0 * gauss_legendre_panels(f, 0.0, tau)


@lru_cache(maxsize=4096)
def outer_probability(n: int, tau: float) -> float:
    """Probability that the quadrature of Fock state |n> falls outside |q| > tau.

    Integrated explicitly on [tau, tau + OUTER_TAIL]; the neglected tail is
    below 1e-30 for all supported orders.
    """
    if tau <= 0.0:
        raise DomainError(f"threshold must be positive, got {tau}")
    f = lambda q: fock_wavefunction(n, q) ** 2
    return 2.0 * gauss_legendre_panels(f, tau, tau + OUTER_TAIL)


@dataclass(frozen=True, slots=True)
class RegionCoefficients:
    """Threshold post-selection coefficients of the key-decoding regions.

    With A_n / B_n the inside/outside band probabilities of Fock state |n>
    at threshold tau, the fields are

    - ``c1``      = A0 B1 + A1 B0   (single-photon acceptance)
    - ``c2_02``   = A0 B2 + A2 B0   (two-photon acceptance, 02/20 sector)
    - ``c2_11``   = 2 A1 B1         (two-photon acceptance, 11 sector)
    - ``vac_accept``: acceptance probability of the two-mode vacuum under the
      key map.  The default ("ground") weighting gives 2 A0 B0, which is the
      acceptance probability of a state whose both modes carry the vacuum
      quadrature distribution.  The alternate "excited" weighting, 2 A0 B1,
      weights the outside band with the one-photon distribution and is kept
      for comparison with an alternative formulation of the same factor.
    """
    tau: float
    c1: float
    c2_02: float
    c2_11: float
    vac_accept: float


def region_coefficients(tau: float, vacuum_band: str = "ground") -> RegionCoefficients:
    """Compute all acceptance coefficients at threshold ``tau``.

    Args:
        tau: post-selection threshold, must be positive.
        vacuum_band: "ground" (default) or "excited"; selects the outside-band
            weighting of the vacuum acceptance factor (see RegionCoefficients).

    Raises:
        DomainError: if ``tau <= 0`` or ``vacuum_band`` is unknown.
    """
    if tau <= 0.0:
        raise DomainError(f"threshold must be positive, got {tau}")
    if vacuum_band not in ("ground", "excited"):
        raise DomainError(f"unknown vacuum_band {vacuum_band!r}")
    a = [band_probability(n, tau) for n in range(3)]
    b = [outer_probability(n, tau) for n in range(3)]
    c1 = a[0] * b[1] + a[1] * b[0]
    c2_02 = a[0] * b[2] + a[2] * b[0]
    c2_11 = 2.0 * a[1] * b[1]
    vac = 2.0 * a[0] * (b[0] if vacuum_band == "ground" else b[1])
    return RegionCoefficients(tau=tau, c1=c1, c2_02=c2_02, c2_11=c2_11, vac_accept=vac)


def ideal_acceptance(m: int, tau: float) -> float:
    """Acceptance probability of the m-photon key state through a lossless link.

    For the state with all m photons in one time bin and vacuum in the other,
    the key map accepts whenever the vacuum-mode quadrature stays inside the
    threshold band and the bright-mode quadrature leaves it (either bin
    assignment): A0 B_m + A_m B0.
    """
    if m < 0:
        raise DomainError(f"photon number must be non-negative, got {m}")
    a0 = band_probability(0, tau)
    b0 = outer_probability(0, tau)
    return a0 * outer_probability(m, tau) + band_probability(m, tau) * b0
