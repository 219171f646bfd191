"""Two-mode photon-number observables used throughout parameter estimation.

Each observable is a projector on the joint Fock space of the two time-bin
modes, stored as a sparse map ``{((b1, b2), (k1, k2)): weight}`` representing
``sum weight * |b1 b2><k1 k2|``.  The identifiers double as the observable
column in yield-table CSV files.
"""
from __future__ import annotations

import math

from .errors import DomainError

_S2 = 1.0 / math.sqrt(2.0)


def _projector(components) -> dict:
    """Projector onto the (unnormalized) vector sum of weighted Fock kets."""
    op: dict = {}
    for wa, ka in components:
        for wb, kb in components:
            key = (ka, kb)
            op[key] = op.get(key, 0.0) + wa * wb
    return op


#: Projectors keyed by observable id.  psiNp/psiNm are the symmetric and
#: antisymmetric N-photon cat projectors (|0N> +/- |N0>)/sqrt(2).
PROJECTORS: dict[str, dict] = {
    "n00": _projector([(1.0, (0, 0))]),
    "n01": _projector([(1.0, (0, 1))]),
    "n10": _projector([(1.0, (1, 0))]),
    "n11": _projector([(1.0, (1, 1))]),
    "n02": _projector([(1.0, (0, 2))]),
    "n20": _projector([(1.0, (2, 0))]),
    "psi1p": _projector([(_S2, (0, 1)), (_S2, (1, 0))]),
    "psi1m": _projector([(_S2, (0, 1)), (-_S2, (1, 0))]),
    "psi2p": _projector([(_S2, (0, 2)), (_S2, (2, 0))]),
    "psi2m": _projector([(_S2, (0, 2)), (-_S2, (2, 0))]),
}

#: Input density operators of the tagged photon-number sectors of the
#: key-generation source (conditioned on the emitted total photon number).
TAGGED_SECTORS: dict = {
    1: {((0, 1), (0, 1)): 0.5, ((1, 0), (1, 0)): 0.5},
    2: {((0, 2), (0, 2)): 0.5, ((2, 0), (2, 0)): 0.5},
}

#: Source configurations: the key-generation mixture plus the four announced
#: relative phases of the estimation basis.
CONFIGS = ("Z", "phi0", "phi90", "phi180", "phi270")

#: Relative phase (radians) of each estimation configuration.
CONFIG_PHASE = {
    "phi0": 0.0,
    "phi90": math.pi / 2.0,
    "phi180": math.pi,
    "phi270": 3.0 * math.pi / 2.0,
}


def projector(observable: str) -> dict:
    try:
        return PROJECTORS[observable]
    except KeyError:
        raise DomainError(f"unknown observable id {observable!r}") from None


def config_phase(config: str) -> float:
    if config == "Z":
        raise DomainError("the key-generation configuration carries no relative phase")
    try:
        return CONFIG_PHASE[config]
    except KeyError:
        raise DomainError(f"unknown source configuration {config!r}") from None
