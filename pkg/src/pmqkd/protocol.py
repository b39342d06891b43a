"""Monte Carlo rounds of the phase-matching protocol, honest or under beam splitting.

Randomness: the master seed is expanded with ``SeedSequence(seed,
spawn_key=(stream, chunk))`` into Philox generators, one per fixed-size chunk
of rounds and per purpose (protocol draws vs. Eve's discrimination draws).
Chunk boundaries do not depend on the worker count, so results are
bit-identical for any degree of parallelism, and the honest and attacked runs
of the same seed see exactly the same clicks.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Iterable, Optional, TextIO

import numpy as np

from . import rates
from .errors import DomainError, NotAttackRun, OddD

CHUNK = 1 << 16
_PROTOCOL_STREAM, _EVE_STREAM = 0, 1

NONE, LEFT, RIGHT, BOTH = 0, 1, 2, 3
CLICK_NAMES = ("none", "L", "R", "both")
EVE_ABSENT, EVE_BIT0, EVE_BIT1, EVE_INCONCLUSIVE = 0, 1, 2, 3
EVE_NAMES = ("absent", "bit0", "bit1", "inconclusive")

ADVERSARIES = ("none", "beamsplit")


@dataclass(frozen=True)
class ProtocolParams:
    mu_a: float = 0.05
    mu_b: float = 0.05
    eta: float = 0.1
    d: int = 16
    dark_count: float = 0.0
    misalignment: float = 0.0
    f: float = 1.0
    rounds: int = 1_000_000
    seed: int = 0

    def __post_init__(self):
        if self.mu_a < 0 or self.mu_b < 0:
            raise DomainError("intensities must be >= 0")
        if not 0.0 < self.eta <= 1.0:
            raise DomainError(f"transmittance must lie in (0, 1], got {self.eta}")
        if self.d < 2:
            raise DomainError(f"phase-slice count must be >= 2, got {self.d}")
        if self.d % 2:
            raise OddD(f"sifting needs an even phase-slice count, got d={self.d}")
        if not 0.0 <= self.dark_count <= 1.0:
            raise DomainError(f"dark count probability {self.dark_count} outside [0, 1]")
        if not 0.0 <= self.misalignment <= 0.5:
            raise DomainError(f"misalignment {self.misalignment} outside [0, 0.5]")
        if self.f < 1.0:
            raise DomainError(f"error-correction efficiency must be >= 1, got {self.f}")
        if self.rounds < 1:
            raise DomainError(f"rounds must be >= 1, got {self.rounds}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned value")


@dataclass(frozen=True)
class ClickProbabilities:
    p_L_only: float
    p_R_only: float
    p_both: float
    p_none: float


@dataclass
class RoundRecord:
    kappa_a: int
    kappa_b: int
    ja: int
    jb: int
    clicks: str
    sifted: bool = False
    flip_applied: bool = False
    key_a: Optional[int] = None
    key_b: Optional[int] = None
    eve_usd: str = "absent"


@dataclass(frozen=True)
class SimStats:
    adversary: str
    rounds: int
    detected: int
    double_clicks: int
    sifted: int
    bit_errors: int
    usd_successes: int
    gain_hat: float
    gain_se: float
    qber_hat: float
    qber_se: float
    usd_success_fraction: float
    usd_se: float
    ep_lower_hat: float

    def as_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _binomial_se(p: float, n: int) -> float:
    return math.sqrt(p * (1 - p) / n) if n else 0.0


def _click_rates(theta_a, theta_b, mu_a, mu_b, eta, dark):
    amp_a = np.sqrt(mu_a) * np.exp(1j * np.asarray(theta_a))
    amp_b = np.sqrt(mu_b) * np.exp(1j * np.asarray(theta_b))
    mean_l = 0.5 * eta * np.abs(amp_a + amp_b) ** 2
    mean_r = 0.5 * eta * np.abs(amp_a - amp_b) ** 2
    p_l = 1.0 - (1.0 - dark) * np.exp(-mean_l)
    p_r = 1.0 - (1.0 - dark) * np.exp(-mean_r)
    return p_l, p_r


def charlie_click_probabilities(
    theta_a: float, theta_b: float, mu_a: float, eta: float, dark_count: float = 0.0,
    mu_b: float | None = None,
) -> ClickProbabilities:
    """Outcome probabilities of a 50:50 interference with two threshold detectors.

    Detector means are (eta/2)|sqrt(mu_a) e^{i theta_a} +- sqrt(mu_b) e^{i theta_b}|^2.
    """
    mu_b = mu_a if mu_b is None else mu_b
    if mu_a < 0 or mu_b < 0 or not 0 < eta <= 1 or not 0 <= dark_count <= 1:
        raise DomainError("invalid click-model parameters")
    p_l, p_r = (float(x) for x in _click_rates(theta_a, theta_b, mu_a, mu_b, eta, dark_count))
    return ClickProbabilities(
        p_L_only=p_l * (1 - p_r),
        p_R_only=p_r * (1 - p_l),
        p_both=p_l * p_r,
        p_none=(1 - p_l) * (1 - p_r),
    )


def _sift_arrays(ja, jb, clicks, d):
    if d % 2:
        raise OddD(f"sifting needs an even phase-slice count, got d={d}")
    diff = (np.asarray(ja) - np.asarray(jb)) % d
    single = (clicks == LEFT) | (clicks == RIGHT)
    sifted = single & ((diff == 0) | (diff == d // 2))
    flip = sifted & ((clicks == RIGHT) ^ (diff == d // 2))
    return sifted, flip


def sift(record: RoundRecord, d: int) -> RoundRecord:
    """Keep single-click rounds whose phase slices agree or differ by pi.

    Bob flips on an R click and again on a pi difference.
    """
    click = np.array([CLICK_NAMES.index(record.clicks)])
    sifted, flip = _sift_arrays([record.ja], [record.jb], click, d)
    out = RoundRecord(**{f.name: getattr(record, f.name) for f in fields(record)})
    out.sifted = bool(sifted[0])
    out.flip_applied = bool(flip[0])
    if out.sifted:
        out.key_a = record.kappa_a
        out.key_b = record.kappa_b ^ int(out.flip_applied)
    else:
        out.key_a = out.key_b = None
    return out


def _rngs(seed: int, chunk: int):
    def make(stream):
        ss = np.random.SeedSequence(seed, spawn_key=(stream, chunk))
        return np.random.Generator(np.random.Philox(ss))
    return make(_PROTOCOL_STREAM), make(_EVE_STREAM)


def _run_chunk(params: ProtocolParams, adversary: str, chunk: int, n: int, keep_log: bool):
    rng, eve_rng = _rngs(params.seed, chunk)
    d = params.d
    kappa_a = rng.integers(0, 2, n, dtype=np.int8)
    kappa_b = rng.integers(0, 2, n, dtype=np.int8)
    ja = rng.integers(0, d, n, dtype=np.int32)
    jb = rng.integers(0, d, n, dtype=np.int32)
    u = rng.random((3, n))

    theta_a = np.pi * kappa_a + 2 * np.pi * ja / d
    theta_b = np.pi * kappa_b + 2 * np.pi * jb / d
    # the attacker's splitter transmits eta, so Charlie sees the honest channel
    p_l, p_r = _click_rates(theta_a, theta_b, params.mu_a, params.mu_b, params.eta, params.dark_count)
    click_l = u[0] < p_l
    click_r = u[1] < p_r
    swap = u[2] < params.misalignment
    click_l, click_r = np.where(swap, click_r, click_l), np.where(swap, click_l, click_r)
    clicks = (click_l * LEFT + click_r * RIGHT).astype(np.int8)

    sifted, flip = _sift_arrays(ja, jb, clicks, d)
    key_b = kappa_b ^ flip.astype(np.int8)
    errors = sifted & (kappa_a != key_b)

    eve = np.full(n, EVE_ABSENT, dtype=np.int8)
    usd_ok = np.zeros(n, dtype=bool)
    if adversary == "beamsplit":
        p_usd = -math.expm1(-2.0 * (1.0 - params.eta) * (params.mu_a + params.mu_b))
        usd_ok = sifted & (eve_rng.random(n) < p_usd)
        eve = np.where(sifted, EVE_INCONCLUSIVE, EVE_ABSENT).astype(np.int8)
        eve[usd_ok] = np.where(kappa_a[usd_ok] == 0, EVE_BIT0, EVE_BIT1)

    counts = np.array([
        int((clicks != NONE).sum()),
        int((clicks == BOTH).sum()),
        int(sifted.sum()),
        int(errors.sum()),
        int(usd_ok.sum()),
    ], dtype=np.int64)
    log = None
    if keep_log:
        log = (kappa_a, kappa_b, ja, jb, clicks, sifted, key_b, eve)
    return counts, log


def run_rounds(
    params: ProtocolParams, adversary: str = "none", *, keep_log: bool = False, workers: int = 1
) -> tuple[SimStats, Optional[list]]:
    """Simulate ``params.rounds`` rounds; returns stats and, optionally, per-chunk log arrays."""
    if adversary not in ADVERSARIES:
        raise DomainError(f"unknown adversary {adversary!r}")
    n_chunks = -(-params.rounds // CHUNK)
    sizes = [min(CHUNK, params.rounds - c * CHUNK) for c in range(n_chunks)]

    def job(c):
        return _run_chunk(params, adversary, c, sizes[c], keep_log)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_chunks)))
    else:
        results = [job(c) for c in range(n_chunks)]

    detected, doubles, sifted, errors, usd = (int(x) for x in sum(r[0] for r in results))
    n = params.rounds
    gain_hat = detected / n
    qber_hat = errors / sifted if sifted else 0.0
    usd_frac = usd / sifted if (sifted and adversary == "beamsplit") else 0.0
    stats = SimStats(
        adversary=adversary,
        rounds=n,
        detected=detected,
        double_clicks=doubles,
        sifted=sifted,
        bit_errors=errors,
        usd_successes=usd,
        gain_hat=gain_hat,
        gain_se=_binomial_se(gain_hat, n),
        qber_hat=qber_hat,
        qber_se=_binomial_se(qber_hat, sifted),
        usd_success_fraction=usd_frac,
        usd_se=_binomial_se(usd_frac, sifted),
        ep_lower_hat=0.5 * usd_frac,
    )
    return stats, ([r[1] for r in results] if keep_log else None)


def estimate_attack_phase_error(stats: SimStats) -> float:
    """Half the observed discrimination success rate."""
    if stats.adversary != "beamsplit":
        raise NotAttackRun("phase error lower estimate needs a beam-splitting run")
    return 0.5 * stats.usd_success_fraction


def analytic_expectations(params: ProtocolParams) -> dict[str, float]:
    """Closed-form counterparts of the Monte Carlo estimates (symmetric intensities)."""
    mu = 0.5 * (params.mu_a + params.mu_b)
    return {
        "gain": rates.gain(mu, params.eta),
        "p_usd": -math.expm1(-2.0 * (1.0 - params.eta) * (params.mu_a + params.mu_b)),
        "ep_lower": rates.phase_error_lower(mu, params.eta),
    }


LOG_COLUMNS = ("round", "kappa_a", "kappa_b", "ja", "jb", "click", "sifted", "key_a", "key_b", "eve_usd")


def iter_round_records(log: Iterable) -> Iterable[RoundRecord]:
    for kappa_a, kappa_b, ja, jb, clicks, sifted, key_b, eve in log:
        for i in range(len(kappa_a)):
            s = bool(sifted[i])
            yield RoundRecord(
                kappa_a=int(kappa_a[i]),
                kappa_b=int(kappa_b[i]),
                ja=int(ja[i]),
                jb=int(jb[i]),
                clicks=CLICK_NAMES[clicks[i]],
                sifted=s,
                flip_applied=s and int(key_b[i]) != int(kappa_b[i]),
                key_a=int(kappa_a[i]) if s else None,
                key_b=int(key_b[i]) if s else None,
                eve_usd=EVE_NAMES[eve[i]],
            )


def write_round_log(log: Iterable, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for i, r in enumerate(iter_round_records(log)):
        w.writerow([
            i, r.kappa_a, r.kappa_b, r.ja, r.jb, r.clicks, int(r.sifted),
            "" if r.key_a is None else r.key_a,
            "" if r.key_b is None else r.key_b,
            r.eve_usd,
        ])
