"""Closed-form yields, gains, phase-error bounds and key rates.

Symmetric case only: both senders use intensity ``mu`` and both arms have
transmittance ``eta``, so the pair emits Poisson(2 mu) photons in total.
Transmittances are per arm; ``eta_db`` is the per-arm loss in dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

FIBER_DB_PER_KM = 0.2


def eta_from_db(eta_db: float) -> float:
    if eta_db < 0:
        raise DomainError(f"attenuation must be >= 0 dB, got {eta_db}")
    return 10.0 ** (-eta_db / 10.0)


def db_from_eta(eta: float) -> float:
    _check_eta(eta)
    return -10.0 * math.log10(eta) + 0.0  # no negative zero at eta = 1


def distance_km(eta_db: float) -> float:
    """Alice-to-Bob fibre length for a per-arm loss of ``eta_db``."""
    return 2.0 * eta_db / FIBER_DB_PER_KM


@dataclass(frozen=True)
class ChannelPoint:
    mu: float
    eta: float
    eta_db: float
    f: float = 1.0
    e_bit: float = 0.0

    def __post_init__(self):
        _check_mu(self.mu)
        _check_eta(self.eta)
        if abs(eta_from_db(self.eta_db) - self.eta) > 1e-12 * max(1.0, self.eta):
            raise DomainError(f"eta={self.eta} inconsistent with eta_db={self.eta_db}")
        if self.f < 1.0:
            raise DomainError(f"error-correction efficiency must be >= 1, got {self.f}")
        if not 0.0 <= self.e_bit <= 0.5:
            raise DomainError(f"bit error rate {self.e_bit} outside [0, 0.5]")

    @classmethod
    def from_eta(cls, mu, eta, f=1.0, e_bit=0.0) -> "ChannelPoint":
        return cls(mu, eta, db_from_eta(eta), f, e_bit)

    @classmethod
    def from_db(cls, mu, eta_db, f=1.0, e_bit=0.0) -> "ChannelPoint":
        return cls(mu, eta_from_db(eta_db), eta_db, f, e_bit)


@dataclass(frozen=True)
class SweepRow:
    point: ChannelPoint
    q_gain: float
    ep_upper: float
    ep_lower: float
    p_usd: float
    gap_ratio: float
    rate_lower: float
    rate_upper: float


def _check_mu(mu):
    if not (mu >= 0.0 and math.isfinite(mu)):
        raise DomainError(f"intensity must be a finite value >= 0, got {mu}")


def _check_eta(eta):
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmittance must lie in (0, 1], got {eta}")


def yield_k(k: int, eta: float) -> float:
    """Detection probability of a k-photon pulse pair: 1 - (1 - eta)^k."""
    _check_eta(eta)
    if k < 0:
        raise DomainError(f"photon number must be >= 0, got {k}")
    if eta == 1.0:
        return 0.0 if k == 0 else 1.0
    return -math.expm1(k * math.log1p(-eta))


def gain(mu: float, eta: float) -> float:
    _check_mu(mu)
    _check_eta(eta)
    return -math.expm1(-2.0 * eta * mu)


def series_cutoff(mu: float) -> int:
    """Last photon number kept in truncated sums over Poisson(2 mu)."""
    return max(20, math.ceil(2 * mu + 10 * math.sqrt(2 * mu)))


def photon_fraction(k: int, mu: float, eta: float) -> float:
    """Share of detections caused by k photons in total: Y_k (2mu)^k e^-2mu / (k! Q)."""
    q = gain(mu, eta)
    if q == 0.0:
        raise DomainError("gain is zero; photon fractions undefined")
    y = yield_k(k, eta)
    if y == 0.0:
        return 0.0
    log_p = k * math.log(2 * mu) - 2 * mu - math.lgamma(k + 1.0)
    return y * math.exp(log_p) / q


def photon_fractions(mu: float, eta: float, kmax: int | None = None) -> np.ndarray:
    kmax = series_cutoff(mu) if kmax is None else kmax
    return np.array([photon_fraction(k, mu, eta) for k in range(kmax + 1)])


def phase_error_upper_series(mu: float, eta: float) -> float:
    """1 - sum over odd k of q_k, truncated by :func:`series_cutoff`."""
    q = photon_fractions(mu, eta)
    return 1.0 - math.fsum(q[1::2])


def phase_error_upper(mu: float, eta: float) -> float:
    """Even-photon share of detections, closed form.

    Sum over odd k of q_k is e^-2mu [sinh(2mu) - sinh(2mu(1-eta))] / Q; the
    sinh difference is rewritten as 2 cosh(mu(2-eta)) sinh(mu eta) so small
    eta and small mu do not cancel.
    """
    q = gain(mu, eta)
    if q == 0.0:
        raise DomainError("gain is zero; phase error bound undefined")
    odd = math.exp(-2 * mu) * 2 * math.cosh(mu * (2 - eta)) * math.sinh(mu * eta) / q
    return 1.0 - odd


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"binary entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def key_rate(point: ChannelPoint, e_p: float) -> float:
    """Q [1 - h(e_p) - f h(E)]; negative values are returned as-is."""
    if not 0.0 <= e_p <= 0.5:
        raise DomainError(f"phase error rate {e_p} outside [0, 0.5]")
    q = gain(point.mu, point.eta)
    return q * (1.0 - binary_entropy(e_p) - point.f * binary_entropy(point.e_bit))


def usd_probability(mu: float, eta: float) -> float:
    """Optimal unambiguous discrimination of the tapped states: 1 - e^{-4(1-eta)mu}."""
    _check_mu(mu)
    _check_eta(eta)
    return -math.expm1(-4.0 * (1.0 - eta) * mu)


def phase_error_lower(mu: float, eta: float) -> float:
    return 0.5 * usd_probability(mu, eta)


def gap_ratio(mu: float, eta: float) -> float:
    upper = phase_error_upper(mu, eta)
    if upper <= 0.0:
        raise DomainError("upper phase error bound is zero; gap ratio undefined")
    return (upper - phase_error_lower(mu, eta)) / upper


def evaluate(point: ChannelPoint) -> SweepRow:
    upper = phase_error_upper(point.mu, point.eta)
    lower = phase_error_lower(point.mu, point.eta)
    if upper <= 0.0:
        raise DomainError(f"upper phase error bound vanishes at mu={point.mu}")
    return SweepRow(
        point=point,
        q_gain=gain(point.mu, point.eta),
        ep_upper=upper,
        ep_lower=lower,
        p_usd=usd_probability(point.mu, point.eta),
        gap_ratio=(upper - lower) / upper,
        rate_lower=key_rate(point, upper),
        rate_upper=key_rate(point, lower),
    )


def sweep(points: Iterable[ChannelPoint]) -> tuple[list[SweepRow], list[tuple[int, DomainError]]]:
    """Evaluate every grid point; failures are collected as (index, error)."""
    rows, errors = [], []
    points = list(points)
    if not points:
        raise DomainError("empty sweep grid")
    for i, p in enumerate(points):
        try:
            rows.append(evaluate(p))
        except DomainError as exc:
            errors.append((i, exc))
    return rows, errors


def mu_grid(mu_values: Sequence[float], eta: float, f=1.0, e_bit=0.0) -> list[ChannelPoint]:
    return [ChannelPoint.from_eta(m, eta, f, e_bit) for m in mu_values]


def db_grid(eta_db_values: Sequence[float], mu: float, f=1.0, e_bit=0.0) -> list[ChannelPoint]:
    return [ChannelPoint.from_db(mu, x, f, e_bit) for x in eta_db_values]


def inclusive_range(start: float, stop: float, step: float) -> list[float]:
    """start, start+step, ..., stop (inclusive when stop lies on the lattice)."""
    if step <= 0:
        raise DomainError(f"grid step must be > 0, got {step}")
    if stop < start:
        raise DomainError(f"grid stop {stop} below start {start}")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [round(start + i * step, 12) for i in range(n + 1)]


def fig4a_points(f=1.0, e_bit=0.0) -> list[ChannelPoint]:
    """Intensity sweep 0.005..0.5 at eta = 0.01 (200 km Alice to Bob)."""
    return mu_grid(inclusive_range(0.005, 0.5, 0.005), 0.01, f, e_bit)


def fig4b_points(f=1.0, e_bit=0.0) -> list[ChannelPoint]:
    """Per-arm loss sweep 0..50 dB at mu = 0.05."""
    return db_grid(inclusive_range(0.0, 50.0, 0.5), 0.05, f, e_bit)
