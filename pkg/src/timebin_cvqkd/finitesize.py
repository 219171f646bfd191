"""Martingale-based finite-size estimation and key-length computation.

Counter variables over the protocol rounds form martingales whose sums
concentrate by Azuma's inequality.  The single-photon gain estimator chains
two concentration steps around a channel-free decoy certificate:

1. test rounds (source basis Z, receiver tomography) accumulate kernel sums
   per intensity and observable; Azuma with difference bound 2 r (r the
   kernel maximum) converts each sum into a window on its conditional
   expectation;
2. the decoy certificate combines the windows linearly into bounds on the
   summed single-photon yields, hence on the summed per-round gains;
3. a second Azuma step with difference bound 1 transports the bound from
   conditional expectations to the realized count of tagged key rounds.

The machinery never assumes i.i.d. rounds; the honest-channel simulation
used in tests happens to be i.i.d., which is what makes closed-form oracles
available.  The total failure probability is split uniformly over all
one-sided concentration steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from .decoy import BoundPair, DecoyCertificate, ProtocolParams
from .errors import DomainError
from .rounds import RoundBatch, SettingProbabilities
from .tomography import KernelSpec, kernel_value_bulk

#: Observables feeding the single-photon gain estimate.
Q11_OBSERVABLES = ("n01", "n10")

#: One-sided Azuma applications per certified side of the Q11 estimate:
#: four intensities times two observables, plus the final transport step.
_APPLICATIONS_PER_SIDE = 4 * len(Q11_OBSERVABLES) + 1


@dataclass(frozen=True, slots=True)
class AzumaQuery:
    """Deviation query: n rounds, per-round difference bound c, failure eps."""
    n: int
    c: float
    epsilon: float

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.c <= 0.0:
            raise DomainError("difference bound c must be positive")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")


def azuma_deviation(query: AzumaQuery) -> float:
    """One-sided deviation delta with P(X_n - X_0 >= delta) <= epsilon.

    With uniform difference bounds c the tail bound exp(-2 delta^2 / (n c^2))
    equals epsilon at delta = c sqrt(n ln(1/epsilon) / 2).
    """
    return query.c * math.sqrt(query.n * math.log(1.0 / query.epsilon) / 2.0)


@dataclass
class TestRoundTally:
    """Accumulated statistics of the estimation rounds.

    ``kernel_sums[(intensity_index, observable)]`` carries the running sum of
    the two-mode kernel values over rounds where the source chose basis Z at
    that intensity and the receiver ran tomography.  ``n_total`` counts all
    rounds, ``n_zz_signal`` the signal-intensity key-generation rounds.
    """
    kernel_sums: dict = field(default_factory=dict)
    n_total: int = 0
    n_zz_signal: int = 0

    def add_batch(self, batch: RoundBatch, eta_det: float = 1.0) -> None:
        self.n_total += len(batch)
        self.n_zz_signal += int(((batch.alice_basis == 0) & (batch.bob_basis == 0)
                                 & (batch.intensity_index == 0)).sum())
        test = (batch.alice_basis == 0) & (batch.bob_basis == 1)
        if not test.any():
            return
        idx = batch.intensity_index[test]
        q1, phi1 = batch.q1[test], batch.phi_b1[test]
        q2, phi2 = batch.q2[test], batch.phi_b2[test]
        values = {}
        for obs in Q11_OBSERVABLES:
            n1, n2 = (0, 1) if obs == "n01" else (1, 0)
            v1 = kernel_value_bulk(KernelSpec(n=n1, d=0, eta_det=eta_det), q1, phi1).real
            v2 = kernel_value_bulk(KernelSpec(n=n2, d=0, eta_det=eta_det), q2, phi2).real
            values[obs] = v1 * v2
        for a_idx in range(4):
            mask = idx == a_idx
            if not mask.any():
                continue
            for obs in Q11_OBSERVABLES:
                key = (a_idx, obs)
                self.kernel_sums[key] = self.kernel_sums.get(key, 0.0) + float(
                    values[obs][mask].sum())


def tally_rounds(batches, eta_det: float = 1.0) -> TestRoundTally:
    tally = TestRoundTally()
    for batch in batches:
        tally.add_batch(batch, eta_det=eta_det)
    return tally


@dataclass(frozen=True, slots=True)
class FiniteQ11Result:
    """Certified bounds on the tagged single-photon count and frequency."""
    count: BoundPair           # bounds on N * p_mu * p_zz * av Q11 (tag count)
    normalized: BoundPair      # count bounds / (N p_mu p_zz)
    n_zz_signal: int
    epsilon: float


def estimate_Q11_finite(tally: TestRoundTally, protocol: ProtocolParams,
                        settings: SettingProbabilities,
                        certificates: dict, kernel_bounds: dict,
                        epsilon: float, tau: float = None) -> FiniteQ11Result:
    """Two-sided Azuma/decoy chain for the single-photon tagged count.

    Args:
        tally: accumulated test-round kernel sums.
        protocol: source settings (intensities, threshold).
        settings: per-round setting probabilities.
        certificates: {"upper": DecoyCertificate, "lower": DecoyCertificate}
            for the single-photon yield of each observable:
            certificates[sense][observable].
        kernel_bounds: observable -> numeric maximum r of the two-mode kernel.
        epsilon: total failure-probability budget for both sides.
        tau: post-selection threshold (defaults to the protocol's).

    Raises:
        DomainError: when a setting or certificate is missing, or the budget
            is exhausted (epsilon split reaches zero).
    """
    tau = protocol.tau if tau is None else tau
    if not 0.0 < epsilon < 1.0:
        raise DomainError("epsilon budget must lie in (0, 1)")
    eps_i = epsilon / (2 * _APPLICATIONS_PER_SIDE)
    if eps_i <= 0.0:
        raise DomainError("epsilon budget exhausted")
    n = tally.n_total
    if n < 1:
        raise DomainError("no rounds tallied")
    p_zx = settings.alice_z * (1.0 - settings.bob_z)
    p_zz = settings.alice_z * settings.bob_z
    p_mu = settings.intensity_weights[0]
    coeff = specfun.region_coefficients(tau)
    p1 = specfun.poisson(protocol.mu, 1)
    intensities = protocol.intensities

    def yield_windows(obs):
        """Azuma windows on the round-averaged conditional yields per intensity."""
        r = kernel_bounds[obs]
        lower, upper = {}, {}
        for a_idx, mu_a in enumerate(intensities):
            s = tally.kernel_sums.get((a_idx, obs))
            if s is None:
                raise DomainError(f"no test rounds for intensity index {a_idx}")
            delta = azuma_deviation(AzumaQuery(n=n, c=2.0 * r, epsilon=eps_i))
            p_a = settings.intensity_weights[a_idx]
            scale = n * p_a * p_zx
            lower[mu_a] = (s - delta) / scale
            upper[mu_a] = (s + delta) / scale
        return lower, upper

    def certified_sum(sense):
        """Bound on sum_i y1^{(i)}[obs] per round-count, combined over observables."""
        total = 0.0
        for obs in Q11_OBSERVABLES:
            cert = certificates[sense][obs]
            lower, upper = yield_windows(obs)
            lower_ends, upper_ends = {}, {}
            for mu_a in cert.intensities:
                tail = max(0.0, 1.0 - sum(specfun.poisson(mu_a, k)
                                          for k in range(cert.nc + 1)))
                upper_ends[mu_a] = upper[mu_a]
                lower_ends[mu_a] = lower[mu_a] - tail
            total += cert.evaluate(lower_ends, upper_ends)
        return total  # per-round average of y1[n01] + y1[n10]

    y_sum_upper = certified_sum("upper")
    y_sum_lower = max(0.0, certified_sum("lower"))
    q_sum_upper = coeff.c1 * p1 * min(2.0, y_sum_upper)
    q_sum_lower = coeff.c1 * p1 * y_sum_lower
    transport = azuma_deviation(AzumaQuery(n=n, c=1.0, epsilon=eps_i))
    count_upper = p_mu * p_zz * n * q_sum_upper + transport
    count_lower = max(0.0, p_mu * p_zz * n * q_sum_lower - transport)
    scale = n * p_mu * p_zz
    return FiniteQ11Result(
        count=BoundPair(count_lower, count_upper, epsilon=epsilon),
        normalized=BoundPair(count_lower / scale, min(1.0, count_upper / scale),
                             epsilon=epsilon),
        n_zz_signal=tally.n_zz_signal,
        epsilon=epsilon)


def finite_key_length(n_zz: int, q_star_0_lower: float, q_mm_lower: dict,
                      e_x_upper: dict, epsilon_pa: dict, f: float,
                      q_z: float, e_z: float) -> float:
    """Total key bits distillable from n_zz key rounds.

    n_zz [ qbar_*0^L + sum_m ( qbar_mm^L (1 - h(ebar_mm^U))
                               + log2(eps_pa_mm)/n_zz ) - f q_z h(e_z) ].
    """
    if n_zz < 1:
        raise DomainError("n_zz must be positive")
    per_round = q_star_0_lower - f * q_z * specfun.binary_entropy(min(e_z, 0.5))
    for m, q_lower in q_mm_lower.items():
        e_upper = min(e_x_upper.get(m, 0.0), 0.5)
        per_round += q_lower * (1.0 - specfun.binary_entropy(e_upper))
        eps = epsilon_pa.get(m, 1.0)
        if not 0.0 < eps <= 1.0:
            raise DomainError("privacy-amplification epsilon must lie in (0, 1]")
        per_round += math.log2(eps) / n_zz
    return n_zz * per_round
