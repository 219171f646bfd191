"""Extended decoy-state estimation via linear programming.

Observed per-intensity expectations of Fock-projector observables (yields)
constrain the per-photon-number conditional yields y_k through the Poisson
mixture of the phase-randomized source.  Small linear programs certify lower
and upper bounds on individual y_m; interval arithmetic on the published
cat-state combinations then turns those into bounds on the tagged gains and
phase-error rates, and finally a worst-case key rate.

Yield tables serialize to CSV with header ``intensity,config,observable,
value,halfwidth``.  Observable ids are the projector names from
:mod:`timebin_cvqkd.observables`; two additional ids, ``qz`` and ``ez``,
carry the directly measured key-map gain and bit-error rate under config
``Z`` at the signal intensity.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import simplex, specfun
from .errors import DomainError, InconsistentStatisticsError, UndefinedRateError
from .observables import CONFIGS, PROJECTORS

#: Default photon-number cutoff of the estimation programs.
LP_CUTOFF = 10

#: Absolute widening of every yield constraint; covers floating-point
#: rounding of simulated expectations.  Statistical half-widths add on top.
NUMERIC_MARGIN = 1e-14

_DIRECT_IDS = ("qz", "ez")


@dataclass(frozen=True, slots=True)
class ProtocolParams:
    """Source settings of the decoy protocol."""
    mu: float
    nu1: float
    nu2: float
    tau: float
    max_m: int = 2
    f: float = 1.0

    def __post_init__(self):
        if not (self.mu > self.nu1 > self.nu2 >= 0.0):
            raise DomainError("intensities must satisfy mu > nu1 > nu2 >= 0")
        if self.tau <= 0.0:
            raise DomainError("threshold must be positive")
        if self.max_m not in (1, 2):
            raise DomainError("decoy estimation supports max_m in {1, 2}")
        if self.f < 1.0:
            raise DomainError("reconciliation efficiency f must be >= 1")

    @property
    def intensities(self) -> tuple:
        return (self.mu, self.nu1, self.nu2, 0.0)


@dataclass(frozen=True, slots=True)
class BoundPair:
    """Certified lower/upper bounds with the failure probability they consume."""
    lower: float
    upper: float
    epsilon: float = 0.0

    def __post_init__(self):
        if self.lower > self.upper + 1e-12:
            raise DomainError(f"inverted interval [{self.lower}, {self.upper}]")

    def clamp(self, lo: float = 0.0, hi: float = 1.0) -> "BoundPair":
        lower = min(max(self.lower, lo), hi)
        upper = max(min(self.upper, hi), lo)
        return BoundPair(lower=lower, upper=upper, epsilon=self.epsilon)

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _interval_scale(b: BoundPair, w: float) -> BoundPair:
    if w >= 0.0:
        return BoundPair(w * b.lower, w * b.upper, b.epsilon)
    return BoundPair(w * b.upper, w * b.lower, b.epsilon)


def _interval_add(*bs: BoundPair) -> BoundPair:
    return BoundPair(sum(b.lower for b in bs), sum(b.upper for b in bs),
                     sum(b.epsilon for b in bs))


@dataclass
class YieldTable:
    """Observed expectations keyed by (intensity, config, observable)."""
    entries: dict = field(default_factory=dict)

    def add(self, intensity: float, config: str, observable: str,
            value: float, halfwidth: float = 0.0) -> None:
        if config not in CONFIGS:
            raise DomainError(f"unknown config {config!r}")
        if observable not in PROJECTORS and observable not in _DIRECT_IDS:
            raise DomainError(f"unknown observable {observable!r}")
        if halfwidth < 0.0:
            raise DomainError("halfwidth must be non-negative")
        self.entries[(float(intensity), config, observable)] = (float(value), float(halfwidth))

    def get(self, intensity: float, config: str, observable: str) -> tuple:
        try:
            return self.entries[(float(intensity), config, observable)]
        except KeyError:
            raise DomainError(
                f"yield table lacks ({intensity}, {config}, {observable})") from None

    def intensities(self, config: str, observable: str) -> list:
        out = sorted({i for (i, cfg, obs) in self.entries
                      if cfg == config and obs == observable})
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["intensity", "config", "observable", "value", "halfwidth"])
        for (i, cfg, obs) in sorted(self.entries):
            v, w = self.entries[(i, cfg, obs)]
            writer.writerow([repr(i), cfg, obs, repr(v), repr(w)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "YieldTable":
        table = cls()
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["intensity", "config", "observable", "value", "halfwidth"]:
            raise DomainError(f"unexpected yield CSV header {header}")
        for row in reader:
            if not row:
                continue
            intensity, cfg, obs, value, halfwidth = row
            table.add(float(intensity), cfg, obs, float(value), float(halfwidth))
        return table


def build_yield_table(protocol: ProtocolParams, eta: float, xi: float) -> YieldTable:
    """Exact (asymptotic) yield table of the honest thermal channel.

    Fills every entry the estimation pipeline consumes, including the direct
    key-map statistics qz/ez at the signal intensity.  All half-widths are
    zero (infinite-data mode).
    """
    table = YieldTable()
    z_observables = ("n00", "n01", "n10", "n11", "n02", "n20", "psi2p", "psi2m")
    phi_observables = ("psi1p", "psi1m", "psi2p", "psi2m", "n11")
    for intensity in protocol.intensities:
        for obs in z_observables:
            table.add(intensity, "Z", obs,
                      chan.observed_yield(("Z", intensity), obs, eta, xi))
        for config in ("phi0", "phi90", "phi180", "phi270"):
            for obs in phi_observables:
                table.add(intensity, config, obs,
                          chan.observed_yield((config, intensity), obs, eta, xi))
    q_z, e_z = chan.z_gain_and_error(protocol.mu, eta, xi, protocol.tau)
    table.add(protocol.mu, "Z", "qz", q_z)
    table.add(protocol.mu, "Z", "ez", e_z)
    return table


# ---------------------------------------------------------------------------
# Linear programs on per-photon-number yields
# ---------------------------------------------------------------------------

def _lp_rows(table: YieldTable, config: str, observable: str, nc: int,
             margin: float):
    """Constraint rows (A x <= b) for the yield decomposition at one config."""
    intensities = table.intensities(config, observable)
    if not intensities:
        raise DomainError(f"no entries for ({config}, {observable})")
    nv = nc + 1
    rows, rhs = [], []
    for mu_a in intensities:
        value, halfwidth = table.get(mu_a, config, observable)
        prow = np.array([specfun.poisson(mu_a, k) for k in range(nv)])
        tail = max(0.0, 1.0 - prow.sum())
        rows.append(prow)
        rhs.append(value + halfwidth + margin)
        rows.append(-prow)
        rhs.append(-(value - halfwidth - tail - margin))
    for k in range(nv):
        unit = np.zeros(nv)
        unit[k] = 1.0
        rows.append(unit)
        rhs.append(1.0)
    return np.array(rows), np.array(rhs), intensities


def lp_yield_bounds(table: YieldTable, config: str, observable: str, m: int,
                    nc: int = LP_CUTOFF, margin: float = NUMERIC_MARGIN) -> BoundPair:
    """Certified bounds on the m-photon conditional yield of one observable.

    Solves min/max y_m over 0 <= y_k <= 1 (k <= nc) subject to, for every
    intensity in the table, the Poisson-mixture window

        Y - halfwidth - tail - margin <= sum_k Pr(k|mu_a) y_k
                                      <= Y + halfwidth + margin.

    Raises:
        InconsistentStatisticsError: if the program is infeasible, which
            signals data inconsistent with any photon-number model.
    """
    if not 0 <= m <= nc:
        raise DomainError(f"target photon number {m} outside [0, {nc}]")
    rows, rhs, _ = _lp_rows(table, config, observable, nc, margin)
    cvec = np.zeros(nc + 1)
    cvec[m] = 1.0
    try:
        lo = simplex.solve(cvec, rows, rhs).objective
        hi = simplex.solve(cvec, rows, rhs, maximize=True).objective
    except simplex.LPInfeasible as exc:
        raise InconsistentStatisticsError(
            f"yield constraints infeasible for ({config}, {observable}): {exc}") from exc
    return BoundPair(lower=lo, upper=hi).clamp()


@dataclass(frozen=True, slots=True)
class DecoyCertificate:
    """Channel-free linear certificate y_m <=/>= sum_a d_a . window_a + constant.

    ``coeff_hi[a]`` multiplies the upper end of intensity a's yield window and
    ``coeff_lo[a]`` its lower end (after tail subtraction); both entries are
    non-negative.  For sense "upper" the certificate states

        y_m <= sum_a (coeff_hi[a] * upper_a - coeff_lo[a] * lower_a) + constant

    and for sense "lower" the same expression bounds y_m from below with the
    window ends swapped.  Validity isverified against the Poisson rows at
    construction, so a certificate remains sound when applied to perturbed
    (e.g. concentration-corrected) windows.
    """
    sense: str
    m: int
    nc: int
    intensities: tuple
    coeff_hi: tuple
    coeff_lo: tuple
    constant: float

    def evaluate(self, lower_by_intensity: dict, upper_by_intensity: dict) -> float:
        # the certified inequality is (sign * y_m) <= inner with the +P rows
        # at their upper ends and the -P rows at (minus) their lower ends;
        # worst case over a window plugs the upper/lower ends accordingly
        inner = self.constant
        for a, chi, clo in zip(self.intensities, self.coeff_hi, self.coeff_lo):
            inner += chi * upper_by_intensity[a] - clo * lower_by_intensity[a]
        return inner if self.sense == "upper" else -inner


def yield_bound_certificate(table: YieldTable, config: str, observable: str,
                            m: int, sense: str, nc: int = LP_CUTOFF,
                            margin: float = NUMERIC_MARGIN) -> DecoyCertificate:
    """Extract a dual certificate for the m-photon yield bound.

    The certificate is rebuilt from the simplex duals and then repaired to
    exact dual feasibility (any residual deficiency is absorbed into the
    unit-bound multipliers), so the returned functional is valid by
    construction for arbitrary data sharing the constraint structure.
    """
    if sense not in ("upper", "lower"):
        raise DomainError("sense must be 'upper' or 'lower'")
    rows, rhs, intensities = _lp_rows(table, config, observable, nc, margin)
    nv = nc + 1
    cvec = np.zeros(nv)
    cvec[m] = 1.0
    objective_sign = 1.0 if sense == "upper" else -1.0
    try:
        sol = simplex.solve(objective_sign * cvec, rows, rhs, maximize=True)
    except simplex.LPInfeasible as exc:
        raise InconsistentStatisticsError(str(exc)) from exc
    lam = np.maximum(sol.duals, 0.0)
    # validity: rows^T lam >= objective_sign * e_m ; repair via unit rows
    deficiency = objective_sign * cvec - rows.T @ lam
    unit_extra = np.maximum(deficiency, 0.0)
    n_int = len(intensities)
    coeff_hi, coeff_lo = [], []
    for idx in range(n_int):
        coeff_hi.append(float(lam[2 * idx]))
        coeff_lo.append(float(lam[2 * idx + 1]))
    constant = float(np.sum(lam[2 * n_int:]) + np.sum(unit_extra))
    return DecoyCertificate(sense=sense, m=m, nc=nc, intensities=tuple(intensities),
                            coeff_hi=tuple(coeff_hi), coeff_lo=tuple(coeff_lo),
                            constant=constant)


# ---------------------------------------------------------------------------
# Cat-state combinations and assembly
# ---------------------------------------------------------------------------

def cat_state_combination(m: int, sign: str, bounds_by_config: dict) -> BoundPair:
    """Observable expectation on the channel output of the m-photon cat state.

    For m = 1 the symmetric (antisymmetric) cat is exactly the single-photon
    component of the relative-phase-0 (pi) estimation state, so the bound is
    the corresponding config's, clamped to [0, 1].  For m = 2 interval
    arithmetic evaluates

        y2[Z] +/- (y2[phi0] + y2[phi180])/2 -/+ (y2[phi90] + y2[phi270])/2.

    Args:
        m: 1 or 2.
        sign: "+" or "-".
        bounds_by_config: config id -> BoundPair of the m-photon conditional
            yield of one fixed observable.

    Raises:
        DomainError: for missing configs or unsupported m/sign.
    """
    if sign not in ("+", "-"):
        raise DomainError("sign must be '+' or '-'")
    if m == 1:
        needed = "phi0" if sign == "+" else "phi180"
        if needed not in bounds_by_config:
            raise DomainError(f"m=1 cat combination needs config {needed}")
        return bounds_by_config[needed].clamp()
    if m == 2:
        for cfg in ("Z", "phi0", "phi90", "phi180", "phi270"):
            if cfg not in bounds_by_config:
                raise DomainError(f"m=2 cat combination needs config {cfg}")
        z = bounds_by_config["Z"]
        axis = _interval_add(bounds_by_config["phi0"], bounds_by_config["phi180"])
        diag = _interval_add(bounds_by_config["phi90"], bounds_by_config["phi270"])
        s = 1.0 if sign == "+" else -1.0
        combo = _interval_add(z, _interval_scale(axis, 0.5 * s),
                              _interval_scale(diag, -0.5 * s))
        return combo.clamp()
    raise DomainError("cat-state combinations support m in {1, 2}")


def assemble_tagged_bounds(table: YieldTable, tau: float, mu: float,
                           nc: int = LP_CUTOFF, misalignment_delta: float = 0.0,
                           vacuum_band: str = "ground",
                           margin: float = NUMERIC_MARGIN) -> dict:
    """Bounds on the tagged quantities of the two-photon protocol.

    Returns a dict with BoundPair entries ``q_star_0``, ``q11``, ``q22``,
    ``e_x11``, ``e_x22``.  Phase-error upper bounds divide upper error-term
    bounds by lower gain bounds; the additive misalignment penalty
    c sin^2(m delta / 2) enters the error numerators exactly as in the
    closed-form route.

    Raises:
        UndefinedRateError: if a gain lower bound is zero while the error
            numerator upper bound is positive.
    """
    coeff = specfun.region_coefficients(tau, vacuum_band=vacuum_band)
    p1, p2 = specfun.poisson(mu, 1), specfun.poisson(mu, 2)

    def bounds(config, observable, m):
        return lp_yield_bounds(table, config, observable, m, nc=nc, margin=margin)

    vac_value, vac_halfwidth = table.get(mu, "Z", "n00")
    q_star_0 = BoundPair(max(0.0, (vac_value - vac_halfwidth)) * coeff.vac_accept,
                         min(1.0, vac_value + vac_halfwidth) * coeff.vac_accept)

    q11 = _interval_scale(_interval_add(bounds("Z", "n01", 1), bounds("Z", "n10", 1)),
                          coeff.c1 * p1).clamp()
    q22 = _interval_scale(
        _interval_add(
            _interval_scale(_interval_add(bounds("Z", "n02", 2), bounds("Z", "n20", 2)),
                            coeff.c2_02),
            _interval_scale(bounds("Z", "n11", 2), coeff.c2_11)),
        p2).clamp()

    # single-photon phase errors: cats against their orthogonal projectors
    psi1m_on_plus = cat_state_combination(1, "+", {"phi0": bounds("phi0", "psi1m", 1)})
    psi1p_on_minus = cat_state_combination(1, "-", {"phi180": bounds("phi180", "psi1p", 1)})
    pen1 = coeff.c1 * math.sin(misalignment_delta / 2.0) ** 2
    e11_num = _interval_add(
        _interval_scale(_interval_add(psi1m_on_plus, psi1p_on_minus), 0.5 * coeff.c1),
        BoundPair(pen1, pen1))

    def y2_by_config(observable):
        return {cfg: bounds(cfg, observable, 2)
                for cfg in ("Z", "phi0", "phi90", "phi180", "phi270")}

    psi2m_on_plus = cat_state_combination(2, "+", y2_by_config("psi2m"))
    psi2p_on_minus = cat_state_combination(2, "-", y2_by_config("psi2p"))
    n11_on_minus = cat_state_combination(2, "-", y2_by_config("n11"))
    pen2 = coeff.c2_02 * math.sin(misalignment_delta) ** 2
    e22_num = _interval_add(
        _interval_scale(psi2m_on_plus, 0.5 * (coeff.c2_02 - coeff.c2_11)),
        _interval_scale(psi2p_on_minus, 0.5 * (coeff.c2_02 + coeff.c2_11)),
        _interval_scale(n11_on_minus, coeff.c2_11),
        BoundPair(pen2, pen2))

    def error_rate(num: BoundPair, gain: BoundPair, prob: float) -> BoundPair:
        if gain.lower <= 0.0:
            if prob * num.upper <= 0.0:
                return BoundPair(0.0, 0.0)
            raise UndefinedRateError("gain lower bound vanishes under a positive "
                                     "error numerator")
        upper = prob * num.upper / gain.lower
        lower = prob * max(0.0, num.lower) / gain.upper if gain.upper > 0.0 else 0.0
        return BoundPair(min(lower, upper), upper).clamp()

    return {
        "q_star_0": q_star_0,
        "q11": q11,
        "q22": q22,
        "e_x11": error_rate(e11_num, q11, p1),
        "e_x22": error_rate(e22_num, q22, p2),
    }


def key_rate_with_decoy(table: YieldTable, protocol: ProtocolParams,
                        f: float | None = None, nc: int = LP_CUTOFF,
                        misalignment_delta: float = 0.0,
                        vacuum_band: str = "ground",
                        margin: float = NUMERIC_MARGIN) -> tuple:
    """Worst-case reverse-reconciliation rate over the certified bounds.

    Uses lower bounds of the gains, upper bounds of the phase-error rates,
    and the directly measured key-map statistics (``qz``/``ez`` entries at
    the signal intensity, widened by their half-widths).

    Returns:
        (rate, bounds): the certified rate and the assembled bound dict.
    """
    if f is None:
        f = protocol.f
    bounds = assemble_tagged_bounds(table, protocol.tau, protocol.mu, nc=nc,
                                    misalignment_delta=misalignment_delta,
                                    vacuum_band=vacuum_band, margin=margin)
    qz_value, qz_halfwidth = table.get(protocol.mu, "Z", "qz")
    ez_value, ez_halfwidth = table.get(protocol.mu, "Z", "ez")
    q_z = min(1.0, qz_value + qz_halfwidth)
    e_z = min(1.0, ez_value + ez_halfwidth)
    rate = (bounds["q_star_0"].lower
            - f * q_z * specfun.binary_entropy(min(e_z, 0.5)))
    rate += bounds["q11"].lower * (1.0 - specfun.binary_entropy(min(bounds["e_x11"].upper, 0.5)))
    if protocol.max_m >= 2:
        rate += bounds["q22"].lower * (1.0 - specfun.binary_entropy(min(bounds["e_x22"].upper, 0.5)))
    return rate, bounds
