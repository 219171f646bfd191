"""Closed-form statistics of the time-bin protocol over a thermal-noise channel.

The channel acts identically and independently on the two time-bin modes,
scaling amplitudes by sqrt(eta) and adding excess quadrature noise xi at the
output (vacuum variance 1 -> 1 + xi).  Three complementary computational
routes live here:

1. ``z_gain_and_error``: the Gaussian quadrature law of the key-generation
   rounds, phase-averaged numerically.
2. ``tagged_gain_*`` / ``tagged_error_*``: the tagged gains and phase-error
   rates as finite mixtures over injected thermal noise photons, evaluated
   exactly as printed in their source formulas.  These require eta < 1
   whenever xi > 0 (the thermal decomposition mean kbar = xi/(2(1-eta))
   diverges otherwise).
3. ``fock_transfer_tensor`` / ``exact_tagged_stats``: the exact Fock-basis
   action of the channel, obtained from its attenuator-amplifier
   decomposition.  Valid for every eta in (0, 1], including the eta = 1,
   xi > 0 corner where route 2 is undefined, and used as the
   infinite-decoy reference.

Misalignment between the two mode references enters only the phase-error
rates, as an additive sin^2(m*delta/2) term on the m-photon error numerator
(the correlation between misalignment and thermal noise is dropped as a
second-order effect).  Yields and gains are misalignment-free.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc

from . import specfun
from .errors import ConfigurationError, DomainError, NumericError, UndefinedRateError
from .observables import CONFIG_PHASE, TAGGED_SECTORS, projector

#: eta at or above this value together with xi > 0 makes the thermal
#: decomposition of routes 2 ill-defined.
ETA_UNITY_GUARD = 1.0 - 1e-12

#: Phase-average resolution of the Z-basis statistics; the Richardson check
#: compares against half this resolution.
PHASE_AVERAGE_POINTS = 512


@dataclass(frozen=True, slots=True)
class ChannelParams:
    """Physical description of the link.

    Args:
        distance_km: fiber length (km).
        attenuation_db_per_km: fiber loss (dB/km).
        detector_efficiency: homodyne detector efficiency, folded into the
            channel transmittance.
        excess_noise_xi: excess quadrature noise referred to channel output.
        misalignment_delta: phase-reference mismatch between the two modes
            (radians).
        cutoff_nc: thermal photon-number cutoff of the closed-form route.
    """
    distance_km: float
    attenuation_db_per_km: float = 0.2
    detector_efficiency: float = 1.0
    excess_noise_xi: float = 0.0
    misalignment_delta: float = 0.0
    cutoff_nc: int = 3

    def __post_init__(self):
        if self.distance_km < 0.0:
            raise ConfigurationError("distance_km must be non-negative")
        if not 0.0 < self.detector_efficiency <= 1.0:
            raise ConfigurationError("detector_efficiency must lie in (0, 1]")
        if self.excess_noise_xi < 0.0:
            raise ConfigurationError("excess_noise_xi must be non-negative")
        if self.cutoff_nc < 0:
            raise ConfigurationError("cutoff_nc must be non-negative")

    @property
    def eta(self) -> float:
        """Total transmittance including detector efficiency."""
        return self.detector_efficiency * 10.0 ** (
            -self.attenuation_db_per_km * self.distance_km / 10.0)

    @property
    def kbar(self) -> float:
        """Mean photon number of the equivalent injected thermal noise."""
        return thermal_mean(self.eta, self.excess_noise_xi)


@dataclass(frozen=True, slots=True)
class TagStats:
    """Tagged quantities feeding the key-rate formula.

    ``q_mm`` and ``e_x_mm`` map the tagged photon number m to the gain and
    phase-error rate of the (m sent, m accepted) group.
    """
    q_star_0: float
    q_mm: dict = field(default_factory=dict)
    e_x_mm: dict = field(default_factory=dict)
    q_z: float = 0.0
    e_z: float = 0.0

    def __post_init__(self):
        for name, v in (("q_star_0", self.q_star_0), ("q_z", self.q_z), ("e_z", self.e_z)):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} = {v} outside [0,1]")
        for m, v in self.q_mm.items():
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"q_mm[{m}] = {v} outside [0,1]")
        for m, v in self.e_x_mm.items():
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"e_x_mm[{m}] = {v} outside [0,1]")


def compose_channels(c1: tuple, c2: tuple) -> tuple:
    """Concatenate two thermal channels (eta, xi) -> (eta', xi') into one.

    Returns (eta*eta', eta'*xi + xi').
    """
    eta1, xi1 = c1
    eta2, xi2 = c2
    return (eta1 * eta2, eta2 * xi1 + xi2)


def thermal_mean(eta: float, xi: float) -> float:
    """Mean photon number kbar = xi / (2 (1 - eta)) of the injected noise.

    Raises:
        ConfigurationError: if eta is at unity while xi > 0.
    """
    if xi == 0.0:
        return 0.0
    if eta >= ETA_UNITY_GUARD:
        raise ConfigurationError(
            "thermal decomposition undefined at unit transmittance with excess noise; "
            "use the exact Fock-transfer route instead")
    return xi / (2.0 * (1.0 - eta))


def thermal_weight(k: int, kbar: float) -> float:
    """Thermal photon-number probability kbar^k / (kbar + 1)^(k+1)."""
    if k < 0:
        raise DomainError("photon number must be non-negative")
    if kbar == 0.0:
        return 1.0 if k == 0 else 0.0
    return math.exp(k * math.log(kbar) - (k + 1) * math.log(kbar + 1.0))


def _wrapped_normal_inside(mean, tau, sigma):
    """P(|N(mean, sigma^2)| < tau), vectorized over mean."""
    s = math.sqrt(2.0) * sigma
    return 0.5 * (erfc((mean - tau) / s) - erfc((mean + tau) / s))


def z_gain_and_error(mu: float, eta: float, xi: float, tau: float,
                     phase_points: int = PHASE_AVERAGE_POINTS) -> tuple:
    """Z-basis gain and bit-error rate of the key map.

    Conditioned on the uniformly random phase difference theta, the bright
    mode quadrature is N(2 sqrt(eta mu) cos(theta), 1 + xi) and the vacuum
    mode quadrature is N(0, 1 + xi).  The phase average uses a trapezoid rule
    on [0, 2 pi) with a Richardson consistency check at half resolution.

    Returns:
        (Q_Z, e_Z): acceptance probability and conditional bit-error rate.

    Raises:
        NumericError: if the two-resolution estimates disagree beyond 1e-9.
    """
    if mu < 0.0:
        raise DomainError("intensity must be non-negative")
    if tau <= 0.0:
        raise DomainError("threshold must be positive")

    def estimate(npts):
        sigma = math.sqrt(1.0 + xi)
        theta = np.linspace(0.0, 2.0 * math.pi, npts, endpoint=False)
        s = 2.0 * math.sqrt(eta * mu) * np.cos(theta)
        pin0 = _wrapped_normal_inside(0.0, tau, sigma)
        pin_s = _wrapped_normal_inside(s, tau, sigma)
        ok = float(np.mean(pin0 * (1.0 - pin_s)))
        err = float(np.mean((1.0 - pin0) * pin_s))
        return ok + err, err

    q_full, err_full = estimate(phase_points)
    q_half, err_half = estimate(phase_points // 2)
    if abs(q_full - q_half) > 1e-9 * max(1e-12, q_full) + 1e-15:
        raise NumericError("phase average did not converge; increase phase_points")
    e_z = err_full / q_full
    return q_full, e_z


def vacuum_receive_prob(mu: float, eta: float, xi: float) -> float:
    """Probability that both output modes are projected onto the vacuum.

    Closed form (2/(2+xi))^2 exp(-2 eta mu / (2+xi)) for a key-generation
    input of total intensity mu.
    """
    if mu < 0.0:
        raise DomainError("intensity must be non-negative")
    kappa = 2.0 / (2.0 + xi)
    return kappa * kappa * math.exp(-kappa * eta * mu)


def _require_thermal_route(eta: float, xi: float) -> float:
    if xi > 0.0 and eta >= ETA_UNITY_GUARD:
        raise ConfigurationError(
            "closed-form tagged statistics need eta < 1 when xi > 0")
    return thermal_mean(eta, xi)


def tagged_gain_Q11(mu: float, eta: float, xi: float, tau: float, nc: int = 3) -> float:
    """Gain of the (1 sent, 1 accepted) group, mixed over injected noise photons."""
    kbar = _require_thermal_route(eta, xi)
    c = specfun.region_coefficients(tau)
    p1 = specfun.poisson(mu, 1)
    total = 0.0
    for k in range(nc + 1):
        wk = thermal_weight(k, kbar)
        for l in range(nc + 1):
            w = wk * thermal_weight(l, kbar)
            term = eta ** (k + l - 1) * (((k + 1) * eta - k) ** 2
                                         + l * (k + 1) * (1.0 - eta) ** 2)
            total += w * c.c1 * p1 * term
    return total


def tagged_error_e11(mu: float, eta: float, xi: float, delta: float,
                     tau: float, nc: int = 3) -> float:
    """Phase-error rate of the (1,1) group, including the misalignment term.

    The additive c1 sin^2(delta/2) term sits inside every noise-photon term,
    and the mixture is normalized by the full Q_{1,1}; at xi = 0 this yields
    sin^2(delta/2)/eta.
    """
    kbar = _require_thermal_route(eta, xi)
    c = specfun.region_coefficients(tau)
    q11 = tagged_gain_Q11(mu, eta, xi, tau, nc)
    if q11 <= 0.0:
        raise UndefinedRateError("Q_{1,1} vanishes; e_X_{1,1} undefined")
    p1 = specfun.poisson(mu, 1)
    sin2 = math.sin(delta / 2.0) ** 2
    num = 0.0
    for k in range(nc + 1):
        wk = thermal_weight(k, kbar)
        for l in range(nc + 1):
            w = wk * thermal_weight(l, kbar)
            num += w * (0.25 * c.c1 * eta ** (k + l - 1) * (1.0 - eta) ** 2
                        * (k * k + l * l + k + l)
                        + c.c1 * sin2)
    return p1 * num / q11


def _q22_terms(k: int, l: int, eta: float, c02: float, c11: float, p2: float) -> float:
    def sector02(k, l):
        core = (eta * eta - 2.0 * k * eta * (1.0 - eta)
                + 0.5 * k * (k - 1) * (1.0 - eta) ** 2)
        return 0.5 * c02 * p2 * eta ** (k + l - 2) * (
            core * core + 0.25 * l * l * (l - 1) ** 2 * (1.0 - eta) ** 4)

    def sector11(k, l):
        amp = (math.sqrt(2.0 * (k + 1) * l) * eta * (1.0 - eta)
               - math.sqrt(0.5 * k * l * (k + 1)) * (1.0 - eta) ** 2)
        return 0.5 * c11 * p2 * eta ** (k + l - 2) * amp * amp

    return sector02(k, l) + sector02(l, k) + sector11(k, l) + sector11(l, k)


def tagged_gain_Q22(mu: float, eta: float, xi: float, tau: float, nc: int = 3) -> float:
    """Gain of the (2 sent, 2 accepted) group, mixed over injected noise photons."""
    kbar = _require_thermal_route(eta, xi)
    c = specfun.region_coefficients(tau)
    p2 = specfun.poisson(mu, 2)
    total = 0.0
    for k in range(nc + 1):
        wk = thermal_weight(k, kbar)
        for l in range(nc + 1):
            total += wk * thermal_weight(l, kbar) * _q22_terms(k, l, eta, c.c2_02, c.c2_11, p2)
    return total


def tagged_error_e22(mu: float, eta: float, xi: float, delta: float,
                     tau: float, nc: int = 3) -> float:
    """Phase-error rate of the (2,2) group, including the sin^2(delta) term."""
    kbar = _require_thermal_route(eta, xi)
    c = specfun.region_coefficients(tau)
    q22 = tagged_gain_Q22(mu, eta, xi, tau, nc)
    if q22 <= 0.0:
        raise UndefinedRateError("Q_{2,2} vanishes; e_X_{2,2} undefined")
    p2 = specfun.poisson(mu, 2)
    sin2 = math.sin(delta) ** 2
    num = 0.0
    for k in range(nc + 1):
        wk = thermal_weight(k, kbar)
        for l in range(nc + 1):
            w = wk * thermal_weight(l, kbar)
            mis = (2.0 * (k - l) * (1.0 - eta) * eta
                   + (k * k - k - l * l - l) * (1.0 - eta) ** 2)
            e02 = 0.25 * c.c2_02 * eta ** (k + l - 2) * mis * mis + c.c2_02 * sin2
            e11 = c.c2_11 * eta ** (k + l - 2) * (1.0 - eta) ** 2 * (
                l * (k + 1) * (eta - 0.5 * k * (1.0 - eta)) ** 2
                + k * (l + 1) * (eta - 0.5 * l * (1.0 - eta)) ** 2)
            num += w * (e02 + e11)
    return p2 * num / q22


# ---------------------------------------------------------------------------
# Coherent-state output matrix elements and observable yields
# ---------------------------------------------------------------------------

_SUPPORTED_ELEMENTS = {(0, 0), (1, 1), (2, 2), (0, 1), (0, 2)}


def coherent_output_fock_element(alpha: complex, xi: float, m: int, n: int) -> complex:
    """Fock matrix element <m| rho |n> of the channel output for coherent input.

    ``alpha`` is the amplitude already scaled by the channel loss (the output
    displacement).  With kappa = 2/(2+xi):

        <0|rho|0> = kappa exp(-kappa |a|^2)
        <1|rho|1> = kappa (kappa^2 |a|^2 + 1 - kappa) exp(...)
        <2|rho|2> = kappa (kappa^4 |a|^4 / 2 + 2(kappa^2-kappa^3)|a|^2
                           + (1-kappa)^2) exp(...)
        <0|rho|1> = kappa^2 conj(a) exp(...)
        <0|rho|2> = kappa^3 conj(a)^2 / sqrt(2) exp(...)

    and <m|rho|n> = conj(<n|rho|m>).  Only the pairs above (and their
    conjugates) are supported.

    Raises:
        DomainError: for an unsupported (m, n) pair.
    """
    if (m, n) not in _SUPPORTED_ELEMENTS:
        if (n, m) in _SUPPORTED_ELEMENTS:
            return complex(coherent_output_fock_element(alpha, xi, n, m)).conjugate()
        raise DomainError(f"unsupported Fock element ({m},{n})")
    kappa = 2.0 / (2.0 + xi)
    a2 = abs(alpha) ** 2
    damp = math.exp(-kappa * a2)
    if (m, n) == (0, 0):
        return kappa * damp
    if (m, n) == (1, 1):
        return kappa * (kappa * kappa * a2 + 1.0 - kappa) * damp
    if (m, n) == (2, 2):
        return kappa * (0.5 * kappa ** 4 * a2 * a2
                        + 2.0 * (kappa ** 2 - kappa ** 3) * a2
                        + (1.0 - kappa) ** 2) * damp
    if (m, n) == (0, 1):
        return kappa * kappa * complex(alpha).conjugate() * damp
    # (0, 2)
    return kappa ** 3 * complex(alpha).conjugate() ** 2 / math.sqrt(2.0) * damp


def observed_yield(source_config: tuple, observable: str, eta: float, xi: float) -> float:
    """Expectation of a projector observable on the channel output.

    Args:
        source_config: ("Z", mu) for the key-generation mixture of intensity
            mu, or (config, mu) with config in {"phi0","phi90","phi180",
            "phi270"} for the estimation state of announced relative phase.
        observable: an observable id from :mod:`timebin_cvqkd.observables`.
        eta, xi: channel transmittance and excess noise.

    The source phase randomization is carried out analytically: key-generation
    outputs are mode-wise Fock-diagonal, and estimation-state cross terms
    depend only on the announced relative phase.
    """
    config, mu = source_config
    if mu < 0.0:
        raise DomainError("intensity must be non-negative")
    op = projector(observable)
    if config == "Z":
        bright = math.sqrt(eta * mu)
        total = 0.0
        for amps in ((0.0, bright), (bright, 0.0)):
            branch = 0.0
            for ((b1, b2), (k1, k2)), w in op.items():
                if b1 != k1 or b2 != k2:
                    continue  # phase randomization kills single-mode coherences
                branch += (w
                           * coherent_output_fock_element(amps[0], xi, k1, b1).real
                           * coherent_output_fock_element(amps[1], xi, k2, b2).real)
            total += 0.5 * branch
        return total
    phase = CONFIG_PHASE.get(config)
    if phase is None:
        raise DomainError(f"unknown source configuration {config!r}")
    a1 = math.sqrt(eta * mu / 2.0)
    a2 = a1 * complex(math.cos(phase), math.sin(phase))
    total = 0.0 + 0.0j
    for ((b1, b2), (k1, k2)), w in op.items():
        total += (w
                  * coherent_output_fock_element(a1, xi, k1, b1)
                  * coherent_output_fock_element(a2, xi, k2, b2))
    return float(total.real)


# ---------------------------------------------------------------------------
# Exact Fock-basis channel action (attenuator-amplifier decomposition)
# ---------------------------------------------------------------------------

def fock_transfer_tensor(eta: float, xi: float, in_max: int = 2,
                         out_max: int = 2, amp_terms: int = 60) -> np.ndarray:
    """Exact single-mode transfer tensor T[a, b, m, n] = <a| N(|m><n|) |b>.

    The thermal channel factorizes as a quantum-limited amplifier of gain
    1/kappa after a pure-loss stage of transmittance kappa*eta, with
    kappa = 2/(2+xi).  Both stages have elementary Fock-basis Kraus
    operators, so the composition is exact for any eta in (0, 1], xi >= 0.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError("transmittance must lie in (0, 1]")
    if xi < 0.0:
        raise DomainError("excess noise must be non-negative")
    kappa = 2.0 / (2.0 + xi)
    eta0 = kappa * eta
    gain = 1.0 / kappa
    lam = 1.0 - kappa  # amplifier emission weight (1 - 1/G)
    T = np.zeros((out_max + 1, out_max + 1, in_max + 1, in_max + 1))
    for m in range(in_max + 1):
        for n in range(in_max + 1):
            # pure loss: may only remove the same number j from bra and ket
            for j in range(min(m, n) + 1):
                w_loss = math.sqrt(
                    math.comb(m, j) * math.comb(n, j)
                    * eta0 ** (m + n - 2 * j) * (1.0 - eta0) ** (2 * j))
                p, q = m - j, n - j
                # amplifier: adds the same number i to bra and ket
                for i in range(amp_terms + 1):
                    if p + i > out_max or q + i > out_max:
                        break
                    w_amp = math.sqrt(
                        math.comb(p + i, i) * math.comb(q + i, i)
                        * (1.0 / gain) ** (p + q + 2) * lam ** (2 * i))
                    T[p + i, q + i, m, n] += w_loss * w_amp
    return T


def sector_yield(tensor: np.ndarray, input_op: dict, output_op: dict,
                 delta: float = 0.0) -> float:
    """Tr[(N x N)(input_op) output_op] from the single-mode transfer tensor.

    ``delta`` applies a relative phase rotation exp(i delta n) to the second
    mode at the channel output (used only by validation code; the production
    misalignment model is the additive penalty).
    """
    total = 0.0 + 0.0j
    for ((m1, m2), (n1, n2)), w_in in input_op.items():
        for ((a1, a2), (b1, b2)), w_out in output_op.items():
            val = tensor[b1, a1, m1, n1] * tensor[b2, a2, m2, n2]
            if delta != 0.0:
                val = val * complex(math.cos(delta * (b2 - a2)),
                                    math.sin(delta * (b2 - a2)))
            total += w_in * w_out * val
    return float(total.real)


def exact_tagged_stats(mu: float, tau: float, eta: float, xi: float,
                       delta: float = 0.0, f_unused: None = None,
                       vacuum_band: str = "ground") -> TagStats:
    """Tagged statistics of the two-photon protocol from the exact channel action.

    This is the infinite-decoy reference: per-photon-number yields are taken
    exact (no estimation) and assembled with the same region coefficients and
    additive misalignment penalty as the estimation pipeline.  Valid at any
    eta in (0, 1], including unit transmittance with excess noise.
    """
    c = specfun.region_coefficients(tau, vacuum_band=vacuum_band)
    tensor = fock_transfer_tensor(eta, xi)
    p1, p2 = specfun.poisson(mu, 1), specfun.poisson(mu, 2)
    psi1p, psi1m = projector("psi1p"), projector("psi1m")
    psi2p, psi2m = projector("psi2p"), projector("psi2m")
    q11 = c.c1 * p1 * (sector_yield(tensor, TAGGED_SECTORS[1], projector("n01"))
                       + sector_yield(tensor, TAGGED_SECTORS[1], projector("n10")))
    q22 = p2 * (c.c2_02 * (sector_yield(tensor, TAGGED_SECTORS[2], projector("n02"))
                           + sector_yield(tensor, TAGGED_SECTORS[2], projector("n20")))
                + c.c2_11 * sector_yield(tensor, TAGGED_SECTORS[2], projector("n11")))
    e11_num = 0.5 * c.c1 * (sector_yield(tensor, psi1p, psi1m)
                            + sector_yield(tensor, psi1m, psi1p))
    e11_num += c.c1 * math.sin(delta / 2.0) ** 2
    e22_num = (0.5 * (c.c2_02 - c.c2_11) * sector_yield(tensor, psi2p, psi2m)
               + 0.5 * (c.c2_02 + c.c2_11) * sector_yield(tensor, psi2m, psi2p)
               + c.c2_11 * sector_yield(tensor, psi2m, projector("n11")))
    e22_num += c.c2_02 * math.sin(delta) ** 2
    if q11 <= 0.0 or q22 <= 0.0:
        raise UndefinedRateError("vanishing tagged gain")
    q_z, e_z = z_gain_and_error(mu, eta, xi, tau)
    q_star_0 = vacuum_receive_prob(mu, eta, xi) * c.vac_accept
    return TagStats(q_star_0=q_star_0,
                    q_mm={1: q11, 2: q22},
                    e_x_mm={1: min(1.0, p1 * e11_num / q11),
                            2: min(1.0, p2 * e22_num / q22)},
                    q_z=q_z, e_z=e_z)


def closed_form_tag_stats(mu: float, tau: float, channel: ChannelParams,
                          vacuum_band: str = "ground") -> TagStats:
    """Tagged statistics of the two-photon protocol from the printed mixtures.

    A self-check recomputes the gains at cutoff nc + 2 and warns when the
    relative change exceeds 1e-5 (the cutoff is then too low for the noise
    level).
    """
    eta, xi, delta, nc = (channel.eta, channel.excess_noise_xi,
                          channel.misalignment_delta, channel.cutoff_nc)
    c = specfun.region_coefficients(tau, vacuum_band=vacuum_band)
    q11 = tagged_gain_Q11(mu, eta, xi, tau, nc)
    q22 = tagged_gain_Q22(mu, eta, xi, tau, nc)
    for name, low, fn in (("Q11", q11, tagged_gain_Q11), ("Q22", q22, tagged_gain_Q22)):
        high = fn(mu, eta, xi, tau, nc + 2)
        if low > 0.0 and abs(high - low) > 1e-5 * low:
            warnings.warn(f"{name} changes by {abs(high - low) / low:.2e} when the "
                          f"thermal cutoff grows from {nc} to {nc + 2}; raise cutoff_nc",
                          stacklevel=2)
    e11 = tagged_error_e11(mu, eta, xi, delta, tau, nc)
    e22 = tagged_error_e22(mu, eta, xi, delta, tau, nc)
    q_z, e_z = z_gain_and_error(mu, eta, xi, tau)
    q_star_0 = vacuum_receive_prob(mu, eta, xi) * c.vac_accept
    return TagStats(q_star_0=q_star_0,
                    q_mm={1: q11, 2: q22},
                    e_x_mm={1: min(1.0, e11), 2: min(1.0, e22)},
                    q_z=q_z, e_z=e_z)
