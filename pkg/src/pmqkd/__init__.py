"""Numerical laboratory for phase-matching quantum key distribution.

Modules:
    fock      dense qudit / truncated-mode state vectors and gates
    circuit   source-replaced encoding circuit and photon-parity checks
    rates     closed-form yields, phase-error bounds and key rates
    protocol  Monte Carlo protocol rounds, honest or under beam splitting
    config, output, cli   the ``pmqkd`` command line
"""

from .errors import (
    DimensionMismatch,
    DomainError,
    NotAttackRun,
    OddD,
    PMQKDError,
    TooFewPoints,
    TruncationError,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatch",
    "DomainError",
    "NotAttackRun",
    "OddD",
    "PMQKDError",
    "TooFewPoints",
    "TruncationError",
]
