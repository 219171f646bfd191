"""Grid search over protocol parameters maximizing the key rate.

Default grids mirror the granularity of the reference operating points:
thresholds step by about 0.204 and intensities advance by a factor of about
1.27 per step.  Pure grid evaluation is the default (exactly reproducible);
an optional bounded coordinate-descent refinement interleaves midpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import channel as chan
from . import decoy as decoy_mod
from . import keyrate
from .errors import DomainError

TAU_STEP = 0.2039
MU_RATIO = 1.2695


def default_tau_grid(lo: float = 1.029, count: int = 19) -> tuple:
    return tuple(round(lo + TAU_STEP * k, 6) for k in range(count))


def default_mu_grid(lo: float = 0.137, count: int = 15) -> tuple:
    return tuple(round(lo * MU_RATIO**k, 6) for k in range(count))


def default_nu_grid(lo: float = 1e-4, count: int = 12, ratio: float = 2.0) -> tuple:
    return tuple(lo * ratio**k for k in range(count))


@dataclass(frozen=True, slots=True)
class SearchSpace:
    """Grids plus the objective selector.

    objective "ideal" maximizes the i-photon perfect-decoy rate over
    (mu, tau); objective "decoy" maximizes the certified four-intensity rate
    over (mu, tau, nu1, nu2).
    """
    mu_grid: tuple
    tau_grid: tuple
    nu1_grid: tuple = ()
    nu2_grid: tuple = ()
    objective: str = "ideal"
    i_photons: int = 2
    f: float = 1.0

    def __post_init__(self):
        for name, grid in (("mu", self.mu_grid), ("tau", self.tau_grid)):
            if not grid:
                raise DomainError(f"{name} grid must be non-empty")
            if any(b <= a for a, b in zip(grid, grid[1:])):
                raise DomainError(f"{name} grid must be strictly increasing")
        if self.objective not in ("ideal", "decoy"):
            raise DomainError(f"unknown objective {self.objective!r}")
        if self.objective == "decoy" and (not self.nu1_grid or not self.nu2_grid):
            raise DomainError("decoy objective needs nu1 and nu2 grids")


@dataclass(frozen=True, slots=True)
class OptimizeResult:
    params: dict
    rate: float
    evaluations: int


def _objective(space: SearchSpace, channel: chan.ChannelParams):
    if space.objective == "ideal":
        def evaluate(mu, tau, nu1=None, nu2=None):
            return keyrate.i_photon_key_rate(space.i_photons, mu, tau, channel,
                                             f=space.f)
        return evaluate

    def evaluate(mu, tau, nu1, nu2):
        if not mu > nu1 > nu2 >= 0.0:
            return -np.inf
        protocol = decoy_mod.ProtocolParams(mu=mu, nu1=nu1, nu2=nu2, tau=tau,
                                            f=space.f)
        table = decoy_mod.build_yield_table(protocol, channel.eta,
                                            channel.excess_noise_xi)
        rate, _ = decoy_mod.key_rate_with_decoy(
            table, protocol, misalignment_delta=channel.misalignment_delta)
        return rate
    return evaluate


def optimize(space: SearchSpace, channel: chan.ChannelParams,
             refine_sweeps: int = 0) -> OptimizeResult:
    """Exhaustive grid evaluation with deterministic lexicographic tie-break.

    ``refine_sweeps`` > 0 adds up to that many coordinate-descent passes on
    midpoints between the best grid point and its neighbours (capped at 3).
    """
    evaluate = _objective(space, channel)
    nu1s = space.nu1_grid or (None,)
    nu2s = space.nu2_grid or (None,)
    best_rate = -np.inf
    best = None
    evals = 0
    for mu in space.mu_grid:
        for tau in space.tau_grid:
            for nu1 in nu1s:
                for nu2 in nu2s:
                    rate = evaluate(mu, tau, nu1, nu2)
                    evals += 1
                    if rate > best_rate:
                        best_rate = rate
                        best = (mu, tau, nu1, nu2)
    for _ in range(min(refine_sweeps, 3)):
        improved = False
        mu, tau, nu1, nu2 = best
        for dmu in (mu / MU_RATIO**0.5, mu, mu * MU_RATIO**0.5):
            for dtau in (tau - TAU_STEP / 2.0, tau, tau + TAU_STEP / 2.0):
                if dtau <= 0:
                    continue
                rate = evaluate(dmu, dtau, nu1, nu2)
                evals += 1
                if rate > best_rate:
                    best_rate = rate
                    best = (dmu, dtau, nu1, nu2)
                    improved = True
        if not improved:
            break
    params = {"mu": best[0], "tau": best[1]}
    if space.objective == "decoy":
        params.update({"nu1": best[2], "nu2": best[3]})
    return OptimizeResult(params=params, rate=float(best_rate), evaluations=evals)
