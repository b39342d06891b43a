"""Entanglement-based (source-replaced) encoding circuit and its parity checks.

Subsystem layout of the full circuit::

    0 A0  phase qudit (d)     3 B0  phase qudit (d)
    1 A1  key qubit           4 B1  key qubit
    2 A   optical mode        5 B   optical mode

Both phase qudits start in |+_d>, both key qubits in |+>.  The virtual block
(controlled minus A0 -> B0, then inverse QFT on A0) turns the A0/B0 readouts
into the total photon number residue k and the phase-slice difference j.
"""

from __future__ import annotations

import cmath
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import fock
from .errors import DomainError, LayoutError
from .fock import CompositeState, SubsystemSpec

A0, A1, A, B0, B1, B = range(6)

# Outcomes below this probability sit under the double-precision floor of the
# Fourier sums; conditional states there are numerically meaningless.
RESOLVABLE = 1e-18


@dataclass(frozen=True)
class CircuitParams:
    mu_a: float = 0.05
    mu_b: float = 0.05
    d: int = 16
    cutoff: int = 12
    alpha_phase: float = 0.0
    beta_phase: float = 0.0

    def __post_init__(self):
        if self.d < 2:
            raise DomainError(f"phase-slice count must be >= 2, got {self.d}")
        if self.mu_a < 0 or self.mu_b < 0:
            raise DomainError("intensities must be >= 0")
        if self.cutoff < 4 * max(self.mu_a, self.mu_b):
            raise DomainError(
                f"cutoff {self.cutoff} below 4 * max intensity {4 * max(self.mu_a, self.mu_b):g}"
            )

    @property
    def alpha(self) -> complex:
        return math.sqrt(self.mu_a) * cmath.exp(1j * self.alpha_phase)

    @property
    def beta(self) -> complex:
        return math.sqrt(self.mu_b) * cmath.exp(1j * self.beta_phase)


@dataclass(frozen=True)
class ParityRow:
    k: int
    j: int
    N: int
    weight: float
    p_xx_disagree: float


@dataclass
class ParityTable:
    rows: list[ParityRow]
    d: int
    dropped_weight: float = 0.0  # total weight of branches below ZERO_BRANCH
    off_support_weight: float = 0.0  # max weight of any (k, j, N) with N != k mod d
    meta: dict = field(default_factory=dict)

    @property
    def total_weight(self) -> float:
        return math.fsum(r.weight for r in self.rows)

    def max_parity_deviation(self) -> float:
        return max((abs(r.p_xx_disagree - (r.N % 2)) for r in self.rows), default=0.0)

    def weight_by_total(self) -> dict[int, float]:
        out: dict[int, float] = defaultdict(float)
        for r in self.rows:
            out[r.N] += r.weight
        return dict(out)


def layout(params: CircuitParams) -> tuple[SubsystemSpec, ...]:
    q = SubsystemSpec.qudit(params.d)
    m = SubsystemSpec.mode(params.cutoff)
    return (q, SubsystemSpec.qubit(), m, q, SubsystemSpec.qubit(), m)


def _check_layout(state: CompositeState) -> None:
    s = state.specs
    ok = (
        len(s) == 6
        and not s[A0].is_mode and s[A0] == s[B0]
        and s[A1].dimension == 2 and s[B1].dimension == 2
        and s[A].is_mode and s[A] == s[B]
    )
    if not ok:
        raise LayoutError("state does not have the (A0, A1, A, B0, B1, B) circuit layout")


def build_encoded_state(params: CircuitParams) -> CompositeState:
    """Ancillas in |+>, modes coherent, after the phase-slice and key-bit controls."""
    d = params.d
    state = fock.tensor([
        fock.plus_state(d),
        fock.plus_state(2),
        fock.coherent_state(params.alpha, params.cutoff),
        fock.plus_state(d),
        fock.plus_state(2),
        fock.coherent_state(params.beta, params.cutoff),
    ])
    for phase_q, key_q, mode in ((A0, A1, A), (B0, B1, B)):
        state = fock.controlled_phase(state, phase_q, mode, 2 * math.pi / d)
        state = fock.controlled_phase(state, key_q, mode, math.pi)
    return state


def apply_virtual_block(state: CompositeState) -> CompositeState:
    _check_layout(state)
    state = fock.controlled_minus(state, A0, B0)
    return fock.inverse_qft(state, A0)


def joint_readout_distribution(state: CompositeState) -> ParityTable:
    """Branch weights and X-basis disagreement for every (k, j, N).

    Equivalent to measuring A0 and B0 computationally, projecting (A, B) on
    each total photon number N and measuring A1, B1 in the X basis; done on
    the full probability tensor at once.
    """
    _check_layout(state)
    d = state.specs[A0].dimension
    n_dim = state.specs[A].dimension
    t = state.tensor_view() / math.sqrt(state.norm_sq)
    h = fock.fourier_matrix(2)
    t = np.moveaxis(np.tensordot(h.conj().T, t, axes=([1], [A1])), 0, A1)
    t = np.moveaxis(np.tensordot(h.conj().T, t, axes=([1], [B1])), 0, B1)
    # probs[k, j, xa, xb, na, nb]
    probs = np.abs(np.transpose(t, (A0, B0, A1, B1, A, B))) ** 2

    totals = np.add.outer(np.arange(n_dim), np.arange(n_dim))
    n_max = 2 * (n_dim - 1)
    by_total = np.zeros((d, d, 2, 2, n_max + 1))
    for n_total in range(n_max + 1):
        by_total[..., n_total] = probs[..., totals == n_total].sum(axis=-1)

    weight = by_total.sum(axis=(2, 3))  # (k, j, N)
    disagree = by_total[:, :, 0, 1, :] + by_total[:, :, 1, 0, :]

    residues = np.arange(n_max + 1)[None, :] % d == np.arange(d)[:, None]  # (k, N)
    off = float(np.max(np.where(residues[:, None, :], 0.0, weight), initial=0.0))

    rows, dropped = [], 0.0
    for k in range(d):
        for j in range(d):
            for n_total in range(n_max + 1):
                w = float(weight[k, j, n_total])
                if w < fock.ZERO_BRANCH:
                    dropped += w
                    continue
                rows.append(ParityRow(k, j, n_total, w, float(disagree[k, j, n_total] / w)))
    return ParityTable(rows, d, dropped_weight=dropped, off_support_weight=off)


def parity_table(params: CircuitParams) -> ParityTable:
    table = joint_readout_distribution(apply_virtual_block(build_encoded_state(params)))
    table.meta.update(mu_a=params.mu_a, mu_b=params.mu_b, d=params.d, cutoff=params.cutoff)
    return table


@dataclass(frozen=True)
class Observation1Result:
    k: int
    probability: float
    fidelity_pseudo_fock: float
    fidelity_fock: float


def conditional_mode_state(alpha: complex, d: int, k: int, cutoff: int) -> tuple[float, CompositeState]:
    """One-sided chain: |+_d>|alpha>, controlled phase 2 pi/d, inverse QFT, read k."""
    state = fock.tensor([fock.plus_state(d), fock.coherent_state(alpha, cutoff)])
    state = fock.controlled_phase(state, 0, 1, 2 * math.pi / d)
    state = fock.inverse_qft(state, 0)
    outcome = fock.measure(state, 0)[k]
    mode = CompositeState(
        (SubsystemSpec.mode(cutoff),),
        outcome.post_state.tensor_view()[k],
        normalized=outcome.post_state.normalized,
    )
    return outcome.probability, mode


def verify_observation1(alpha: complex, d: int, k: int, cutoff: int) -> Observation1Result:
    if not 0 <= k < d:
        raise IndexError(f"outcome {k} outside 0..{d - 1}")
    prob, mode = conditional_mode_state(alpha, d, k, cutoff)
    if not mode.normalized:
        return Observation1Result(k, prob, float("nan"), float("nan"))
    f_pf = fock.fidelity(mode, fock.pseudo_fock(alpha, d, k, cutoff))
    f_k = fock.fidelity(mode, fock.fock_state(k, cutoff)) if k <= cutoff else 0.0
    return Observation1Result(k, prob, f_pf, f_k)


def phase_error_rate_from_parity(table: ParityTable, yields: Mapping[int, float]) -> float:
    """Detection-weighted even-photon share: sum_N w_N [N even], w_N ~ weight(N) Y_N."""
    if not table.rows:
        raise DomainError("empty parity table")
    detected = defaultdict(float)
    for r in table.rows:
        detected[r.N] += r.weight * yields.get(r.N, 0.0)
    total = math.fsum(detected.values())
    if total <= 0.0:
        raise DomainError("no detection weight in parity table")
    return math.fsum(v for n, v in detected.items() if n % 2 == 0) / total


def classical_then_virtual_marginal(params: CircuitParams, eta_mix: float = 0.5) -> np.ndarray:
    """Distribution of (j, key_a, key_b, n_L, n_R) with A0, B0 read before encoding.

    Each (j_a, j_b, key_a, key_b) prepares a product of coherent states; the
    modes are mixed on a beam splitter and counted.  ``j = (j_b - j_a) mod d``.
    """
    d, c = params.d, params.cutoff
    out = np.zeros((d, 2, 2, c + 1, c + 1))
    for ja in range(d):
        for jb in range(d):
            for ka in range(2):
                for kb in range(2):
                    ta = math.pi * ka + 2 * math.pi * ja / d
                    tb = math.pi * kb + 2 * math.pi * jb / d
                    st = fock.tensor([
                        fock.coherent_state(params.alpha * cmath.exp(1j * ta), c),
                        fock.coherent_state(params.beta * cmath.exp(1j * tb), c),
                    ])
                    st = fock.beam_splitter(st, 0, 1, eta_mix)
                    out[(jb - ja) % d, ka, kb] += np.abs(st.tensor_view()) ** 2 / (4 * d * d)
    return out


def quantum_then_measured_marginal(params: CircuitParams, eta_mix: float = 0.5) -> np.ndarray:
    """Same distribution read from the entangled circuit after the virtual block."""
    state = apply_virtual_block(build_encoded_state(params))
    state = fock.beam_splitter(state, A, B, eta_mix)
    return fock.marginal(state, [B0, A1, B1, A, B])


def z_before_virtual_distance(params: CircuitParams, eta_mix: float = 0.5) -> float:
    """Total-variation distance between the classical and entangled pictures."""
    p = classical_then_virtual_marginal(params, eta_mix)
    q = quantum_then_measured_marginal(params, eta_mix)
    return 0.5 * float(np.abs(p - q).sum())
