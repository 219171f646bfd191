"""Secret key rates assembled from tagged statistics.

Reverse reconciliation credits rounds in which the receiver accepts a vacuum
state (the q_star_0 term); forward reconciliation does not.  Rates are
returned raw (possibly negative); callers clamp for human-readable output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from . import channel as chan
from . import specfun
from .errors import ConfigurationError, DomainError

#: Tagged contributions above this photon number are dropped.  The truncation
#: remainder is reported alongside results where it can be computed.
MAX_TAG = 6


@dataclass(frozen=True, slots=True)
class KeyRateInput:
    """Tagged statistics plus reconciliation efficiency.

    ``max_m`` truncates the secure-tag sum; tags beyond it contribute nothing.
    """
    stats: chan.TagStats
    f: float = 1.0
    max_m: int = MAX_TAG

    def __post_init__(self):
        if self.f < 1.0:
            raise DomainError("reconciliation efficiency f must be >= 1")
        if self.max_m < 0:
            raise DomainError("max_m must be non-negative")


def _tag_sum(inp: KeyRateInput) -> float:
    total = 0.0
    for m, q in inp.stats.q_mm.items():
        if m < 1 or m > inp.max_m:
            continue
        e = inp.stats.e_x_mm.get(m, 0.0)
        total += q * (1.0 - specfun.binary_entropy(min(e, 0.5)))
    return total


def key_rate_reverse(inp: KeyRateInput) -> tuple:
    """Reverse-reconciliation rate per channel use.

    Returns:
        (raw, clamped): the raw value of
        q_star_0 + sum_m q_mm [1 - h(e_x_mm)] - f q_z h(e_z), and the same
        clamped below at zero for reporting.
    """
    raw = (inp.stats.q_star_0 + _tag_sum(inp)
           - inp.f * inp.stats.q_z * specfun.binary_entropy(inp.stats.e_z))
    return raw, max(0.0, raw)


def key_rate_forward(inp: KeyRateInput) -> tuple:
    """Forward-reconciliation rate: as reverse, without the vacuum credit."""
    raw = _tag_sum(inp) - inp.f * inp.stats.q_z * specfun.binary_entropy(inp.stats.e_z)
    return raw, max(0.0, raw)


def plob_bound(eta: float) -> float:
    """Repeaterless secret-key capacity -log2(1 - eta) of the lossy channel.

    Raises:
        DomainError: unless eta lies strictly inside (0, 1).
    """
    if not 0.0 < eta < 1.0:
        raise DomainError("PLOB bound requires eta in (0, 1)")
    return -math.log2(1.0 - eta)


def ideal_tag_stats(mu: float, tau: float, eta: float, max_m: int) -> chan.TagStats:
    """Exact tagged statistics of the noiseless (xi = 0, delta = 0) channel.

    Pure loss keeps every tagged group in its own photon-number sector, so
    Q_{m,m} = Pr(m|mu) eta^m (A0 B_m + A_m B0) and all phase-error rates
    vanish.
    """
    q_mm = {m: specfun.poisson(mu, m) * eta ** m * specfun.ideal_acceptance(m, tau)
            for m in range(1, max_m + 1)}
    q_z, e_z = chan.z_gain_and_error(mu, eta, 0.0, tau)
    coeff = specfun.region_coefficients(tau)
    return chan.TagStats(
        q_star_0=chan.vacuum_receive_prob(mu, eta, 0.0) * coeff.vac_accept,
        q_mm=q_mm,
        e_x_mm={m: 0.0 for m in q_mm},
        q_z=q_z, e_z=e_z)


def i_photon_key_rate(i: int, mu: float, tau: float, channel: chan.ChannelParams,
                      f: float = 1.0) -> float:
    """Asymptotic rate of the i-photon protocol assuming perfect decoy estimation.

    Secure keys are extracted from tags m <= i only.  Noise (xi > 0 or
    delta != 0) is supported for i <= 2, where closed forms for the tagged
    quantities exist; larger i requires the noiseless channel.

    Raises:
        DomainError: if i is outside {1, ..., MAX_TAG}.
        ConfigurationError: for a noisy channel with i > 2.
    """
    if not 1 <= i <= MAX_TAG:
        raise DomainError(f"i must lie in [1, {MAX_TAG}]")
    noisy = channel.excess_noise_xi > 0.0 or channel.misalignment_delta != 0.0
    if noisy and i > 2:
        raise ConfigurationError("tagged closed forms exist only up to two photons; "
                                 "noisy channels support i <= 2")
    if noisy:
        if channel.eta >= chan.ETA_UNITY_GUARD:
            stats = chan.exact_tagged_stats(mu, tau, channel.eta,
                                            channel.excess_noise_xi,
                                            channel.misalignment_delta)
        else:
            stats = chan.closed_form_tag_stats(mu, tau, channel)
        if i == 1:
            stats = chan.TagStats(q_star_0=stats.q_star_0,
                                  q_mm={1: stats.q_mm[1]},
                                  e_x_mm={1: stats.e_x_mm[1]},
                                  q_z=stats.q_z, e_z=stats.e_z)
    else:
        stats = ideal_tag_stats(mu, tau, channel.eta, max_m=i)
    raw, _ = key_rate_reverse(KeyRateInput(stats=stats, f=f, max_m=i))
    return raw


def tag_truncation_remainder(mu: float, tau: float, eta: float,
                             max_m: int = MAX_TAG, extra: int = 4) -> float:
    """Dropped ideal-channel gain between max_m and max_m + extra.

    Quantifies what the MAX_TAG truncation leaves on the table at a given
    operating point (noiseless channel; noisy tagged gains beyond two photons
    have no closed form).
    """
    return sum(specfun.poisson(mu, m) * eta ** m * specfun.ideal_acceptance(m, tau)
               for m in range(max_m + 1, max_m + extra + 1))
