"""Dense state-vector kernel for qudits and photon-number-truncated optical modes.

States are immutable: every gate and measurement returns a new
:class:`CompositeState`.  Amplitudes are stored flat in row-major order over
the ordered subsystem list, so subsystem 0 is the most significant digit.

Beam-splitter convention (creation operators)::

    a+ -> sqrt(eta) a+ + sqrt(1 - eta) b+
    b+ -> -sqrt(1 - eta) a+ + sqrt(eta) b+

which sends |alpha>|0> to |sqrt(eta) alpha>|sqrt(1 - eta) alpha>.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, TruncationError

# Tail mass below REPORT is negligible; at or above FAIL the cutoff is rejected.
TAIL_REPORT = 1e-12
TAIL_FAIL = 1e-9
ZERO_BRANCH = 1e-30

COMPUTATIONAL = "computational"
FOURIER = "fourier"


@dataclass(frozen=True)
class SubsystemSpec:
    kind: str  # "qudit" or "mode"
    size: int  # d for a qudit, photon cutoff for a mode

    def __post_init__(self):
        if self.kind == "qudit":
            if self.size < 2:
                raise ValueError(f"qudit dimension must be >= 2, got {self.size}")
        elif self.kind == "mode":
            if self.size < 0:
                raise ValueError(f"mode cutoff must be >= 0, got {self.size}")
        else:
            raise ValueError(f"unknown subsystem kind {self.kind!r}")

    @classmethod
    def qudit(cls, d: int) -> "SubsystemSpec":
        return cls("qudit", int(d))

    @classmethod
    def qubit(cls) -> "SubsystemSpec":
        return cls("qudit", 2)

    @classmethod
    def mode(cls, cutoff: int) -> "SubsystemSpec":
        return cls("mode", int(cutoff))

    @property
    def dimension(self) -> int:
        return self.size if self.kind == "qudit" else self.size + 1

    @property
    def is_mode(self) -> bool:
        return self.kind == "mode"

    @property
    def cutoff(self) -> int:
        if not self.is_mode:
            raise TypeError("qudits have no photon cutoff")
        return self.size


@dataclass(frozen=True, eq=False)
class CompositeState:
    """Amplitude vector over an ordered tensor product of subsystems.

    ``normalized`` is False only for post-selected branches that were not
    rescaled (e.g. a zero-probability projection).  ``tail_mass`` records the
    Poisson mass dropped by truncation when the state was constructed.
    """

    specs: tuple[SubsystemSpec, ...]
    amplitudes: np.ndarray
    normalized: bool = True
    tail_mass: float = 0.0
    norm_sq: float = field(init=False)

    def __post_init__(self):
        specs = tuple(self.specs)
        amps = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        expected = math.prod(s.dimension for s in specs)
        if amps.size != expected:
            raise DimensionMismatch(
                f"amplitude length {amps.size} does not match dimensions {self.dims}"
            )
        amps.flags.writeable = False
        object.__setattr__(self, "specs", specs)
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "norm_sq", float(np.vdot(amps, amps).real))

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dimension for s in self.specs)

    def tensor_view(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def _replace(self, amplitudes: np.ndarray, **kw) -> "CompositeState":
        kw.setdefault("normalized", self.normalized)
        kw.setdefault("tail_mass", self.tail_mass)
        return CompositeState(self.specs, amplitudes, **kw)


@dataclass(frozen=True)
class MeasurementOutcome:
    outcome_index: int
    probability: float
    post_state: CompositeState


def _check_index(state: CompositeState, index: int) -> SubsystemSpec:
    if not 0 <= index < len(state.specs):
        raise IndexError(f"subsystem index {index} out of range for {len(state.specs)} subsystems")
    return state.specs[index]


def _require_mode(state, index) -> SubsystemSpec:
    spec = _check_index(state, index)
    if not spec.is_mode:
        raise TypeError(f"subsystem {index} is a qudit, expected an optical mode")
    return spec


def _require_qudit(state, index) -> SubsystemSpec:
    spec = _check_index(state, index)
    if spec.is_mode:
        raise TypeError(f"subsystem {index} is an optical mode, expected a qudit")
    return spec


def _axis_vector(values: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = values.size
    return values.reshape(shape)


def _apply_matrix(state: CompositeState, index: int, matrix: np.ndarray) -> CompositeState:
    t = state.tensor_view()
    out = np.tensordot(matrix, t, axes=([1], [index]))
    out = np.moveaxis(out, 0, index)
    return state._replace(out)


# --- construction --------------------------------------------------------------


def _poisson_log_terms(log_mean: float, ns: np.ndarray) -> np.ndarray:
    """log of mean**n / n! for each n (mean given through its log)."""
    lg = np.array([math.lgamma(n + 1.0) for n in ns])
    return ns * log_mean - lg


def poisson_tail(mean: float, cutoff: int) -> float:
    """P(n > cutoff) for a Poisson distribution, summed directly (no 1 - cdf)."""
    if mean <= 0.0:
        return 0.0
    ns = np.arange(cutoff + 1, cutoff + 1 + 400, dtype=float)
    logs = _poisson_log_terms(math.log(mean), ns) - mean
    return float(np.exp(logs).sum())


def coherent_state(alpha: complex, cutoff: int) -> CompositeState:
    """Truncated coherent state |alpha>, renormalized over n = 0..cutoff."""
    alpha = complex(alpha)
    mean = abs(alpha) ** 2
    if cutoff < 0:
        raise ValueError("cutoff must be >= 0")
    if mean > cutoff / 4:
        raise TruncationError(f"|alpha|^2 = {mean:g} exceeds cutoff/4 = {cutoff / 4:g}")
    tail = poisson_tail(mean, cutoff)
    if tail >= TAIL_FAIL:
        raise TruncationError(f"Poisson tail mass {tail:.3g} beyond cutoff {cutoff}")
    amps = np.zeros(cutoff + 1, dtype=np.complex128)
    if mean == 0.0:
        amps[0] = 1.0
    else:
        ns = np.arange(cutoff + 1, dtype=float)
        log_mag = 0.5 * _poisson_log_terms(math.log(mean), ns)
        amps = np.exp(log_mag - log_mag.max()) * np.exp(1j * cmath.phase(alpha) * ns)
        amps /= np.linalg.norm(amps)
    return CompositeState((SubsystemSpec.mode(cutoff),), amps, tail_mass=tail)


def fock_state(k: int, cutoff: int) -> CompositeState:
    if not 0 <= k <= cutoff:
        raise IndexError(f"photon number {k} outside 0..{cutoff}")
    amps = np.zeros(cutoff + 1, dtype=np.complex128)
    amps[k] = 1.0
    return CompositeState((SubsystemSpec.mode(cutoff),), amps)


def basis_state(d: int, j: int) -> CompositeState:
    """Computational basis state |j> of a d-level qudit."""
    if not 0 <= j < d:
        raise IndexError(f"basis index {j} outside 0..{d - 1}")
    amps = np.zeros(d, dtype=np.complex128)
    amps[j] = 1.0
    return CompositeState((SubsystemSpec.qudit(d),), amps)


def plus_state(d: int) -> CompositeState:
    """Uniform superposition |+_d>."""
    return CompositeState((SubsystemSpec.qudit(d),), np.full(d, 1 / math.sqrt(d), dtype=np.complex128))


def pseudo_fock(alpha: complex, d: int, k: int, cutoff: int) -> CompositeState:
    """Coherent amplitudes kept only on photon numbers n = k, k+d, k+2d, ...

    As alpha -> 0 the state tends to |k>, which is what alpha == 0 returns.
    """
    if not 0 <= k < d:
        raise IndexError(f"residue {k} outside 0..{d - 1}")
    if cutoff < k:
        raise IndexError(f"cutoff {cutoff} below residue {k}")
    alpha = complex(alpha)
    if alpha == 0:
        return fock_state(k, cutoff)
    ns = np.arange(k, cutoff + 1, d, dtype=float)
    log_mag = 0.5 * _poisson_log_terms(math.log(abs(alpha) ** 2), ns)
    peak = log_mag.max()
    # relative mass of the dropped terms n = cutoff+1.. congruent to k
    first_out = k + d * ((cutoff - k) // d + 1)
    tail_ns = np.arange(first_out, first_out + 200 * d, d, dtype=float)
    tail_log = _poisson_log_terms(math.log(abs(alpha) ** 2), tail_ns)
    tail = float(np.exp(tail_log - 2 * peak).sum() / np.exp(2 * (log_mag - peak)).sum())
    if tail >= TAIL_FAIL:
        raise TruncationError(f"pseudo-Fock tail mass {tail:.3g} beyond cutoff {cutoff}")
    amps = np.zeros(cutoff + 1, dtype=np.complex128)
    amps[ns.astype(int)] = np.exp(log_mag - peak) * np.exp(1j * cmath.phase(alpha) * ns)
    amps /= np.linalg.norm(amps)
    return CompositeState((SubsystemSpec.mode(cutoff),), amps, tail_mass=tail)


def tensor(parts: Sequence[CompositeState]) -> CompositeState:
    parts = list(parts)
    if not parts:
        raise ValueError("tensor() needs at least one state")
    amps = parts[0].amplitudes
    for p in parts[1:]:
        amps = np.kron(amps, p.amplitudes)
    specs = tuple(s for p in parts for s in p.specs)
    return CompositeState(
        specs,
        amps,
        normalized=all(p.normalized for p in parts),
        tail_mass=sum(p.tail_mass for p in parts),
    )


# --- gates ---------------------------------------------------------------------


def phase_shift(state: CompositeState, mode_index: int, theta: float) -> CompositeState:
    """|n> -> exp(i n theta)|n> on one mode."""
    spec = _require_mode(state, mode_index)
    t = state.tensor_view()
    phases = np.exp(1j * theta * np.arange(spec.dimension))
    return state._replace(t * _axis_vector(phases, t.ndim, mode_index))


def controlled_phase(
    state: CompositeState, control_index: int, mode_index: int, unit_angle: float
) -> CompositeState:
    """Control value c rotates the mode by c * unit_angle."""
    ctrl = _require_qudit(state, control_index)
    mode = _require_mode(state, mode_index)
    t = state.tensor_view()
    c = np.arange(ctrl.dimension)[:, None]
    n = np.arange(mode.dimension)[None, :]
    table = np.exp(1j * unit_angle * c * n)
    shape = [1] * t.ndim
    shape[control_index] = ctrl.dimension
    shape[mode_index] = mode.dimension
    if control_index > mode_index:
        table = table.T
    return state._replace(t * table.reshape(shape))


def controlled_minus(state: CompositeState, control_index: int, target_index: int) -> CompositeState:
    """|a>|b> -> |a>|(b - a) mod d>."""
    ctrl = _require_qudit(state, control_index)
    targ = _require_qudit(state, target_index)
    if ctrl.dimension != targ.dimension:
        raise DimensionMismatch(
            f"control has d={ctrl.dimension}, target has d={targ.dimension}"
        )
    if control_index == target_index:
        raise DimensionMismatch("control and target must differ")
    d = ctrl.dimension
    t = np.moveaxis(state.tensor_view(), (control_index, target_index), (0, 1))
    a = np.arange(d)[:, None]
    x = np.arange(d)[None, :]
    # new[a, x] = old[a, x + a]
    out = t[a, (x + a) % d]
    out = np.moveaxis(out, (0, 1), (control_index, target_index))
    return state._replace(out)


def fourier_matrix(d: int) -> np.ndarray:
    """Columns are |~j> = d**-0.5 sum_k exp(2 pi i jk/d)|k> (the Fourier basis)."""
    j = np.arange(d)
    return np.exp(2j * np.pi * np.outer(j, j) / d) / math.sqrt(d)


def inverse_qft(state: CompositeState, qudit_index: int) -> CompositeState:
    """Inverse of the Fourier transform: |j> -> d**-0.5 sum_k exp(-2 pi i jk/d)|k>.

    Reading outcome k after this gate on a phase-randomizing control selects
    photon numbers congruent to k mod d.
    """
    spec = _require_qudit(state, qudit_index)
    return _apply_matrix(state, qudit_index, fourier_matrix(spec.dimension).conj())


def _beam_splitter_block(total: int, eta: float) -> np.ndarray:
    """Matrix from |n, total-n> to |p, total-p> under the fixed convention."""
    return _bs_block_cached(total, float(eta))


@lru_cache(maxsize=512)
def _bs_block_cached(total: int, eta: float) -> np.ndarray:
    t = math.sqrt(eta)
    r = math.sqrt(1.0 - eta)
    lf = [math.lgamma(i + 1.0) for i in range(total + 1)]
    out = np.zeros((total + 1, total + 1))
    for n in range(total + 1):
        m = total - n
        for i in range(n + 1):
            for l in range(m + 1):
                p = i + l
                coef = math.comb(n, i) * math.comb(m, l) * (-1.0) ** l
                coef *= t ** (i + m - l) * r ** (n - i + l)
                if coef == 0.0:
                    continue
                out[p, n] += coef * math.exp(0.5 * (lf[p] + lf[total - p] - lf[n] - lf[m]))
    out.flags.writeable = False
    return out


def beam_splitter(state: CompositeState, mode_a: int, mode_b: int, eta: float) -> CompositeState:
    """Two-mode beam splitter with power transmittance ``eta``.

    Components with n_a + n_b above the shared cutoff cannot be represented
    after mixing; they are dropped if their mass is below TAIL_FAIL and raise
    TruncationError otherwise.
    """
    sa = _require_mode(state, mode_a)
    sb = _require_mode(state, mode_b)
    if sa.dimension != sb.dimension or mode_a == mode_b:
        raise DimensionMismatch("beam splitter needs two distinct modes with equal cutoff")
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"transmittance {eta} outside [0, 1]")
    c = sa.cutoff
    t = np.moveaxis(state.tensor_view(), (mode_a, mode_b), (0, 1))
    n = np.arange(c + 1)
    totals = n[:, None] + n[None, :]
    overflow = float(np.sum(np.abs(t[totals > c]) ** 2))
    if overflow >= TAIL_FAIL:
        raise TruncationError(
            f"mass {overflow:.3g} in components with total photon number above cutoff {c}"
        )
    out = np.zeros_like(t)
    for total in range(c + 1):
        idx = np.arange(total + 1)
        block = _beam_splitter_block(total, eta)
        out[idx, total - idx] = np.tensordot(block, t[idx, total - idx], axes=([1], [0]))
    out = np.moveaxis(out, (0, 1), (mode_a, mode_b))
    return state._replace(out)


# --- measurement ---------------------------------------------------------------


def inner_product(a: CompositeState, b: CompositeState) -> complex:
    if a.specs != b.specs:
        raise DimensionMismatch("states have different subsystem layouts")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: CompositeState, b: CompositeState) -> float:
    """|<a|b>|^2 for pure states, normalized by both norms."""
    ov = inner_product(a, b)
    return abs(ov) ** 2 / (a.norm_sq * b.norm_sq)


def _branch(state: CompositeState, amps: np.ndarray) -> tuple[float, CompositeState]:
    prob = float(np.vdot(amps, amps).real) / state.norm_sq if state.norm_sq > 0 else 0.0
    if prob < ZERO_BRANCH:
        return prob, state._replace(np.zeros_like(amps), normalized=False)
    return prob, state._replace(amps / math.sqrt(prob * state.norm_sq), normalized=True)


def measure(state: CompositeState, subsystem_index: int, basis: str = COMPUTATIONAL) -> list[MeasurementOutcome]:
    """Projective measurement of one subsystem; returns every outcome in index order.

    ``fourier`` projects onto |~r> = d**-0.5 sum_k exp(2 pi i rk/d)|k>; on a
    qubit that is the X basis (outcome 0 = |+>, 1 = |->).  Outcomes with
    probability below ZERO_BRANCH carry an all-zero, unnormalized post state.
    """
    spec = _check_index(state, subsystem_index)
    if basis not in (COMPUTATIONAL, FOURIER):
        raise ValueError(f"unknown basis {basis!r}")
    dim = spec.dimension
    t = state.tensor_view()
    results = []
    if basis == COMPUTATIONAL:
        for r in range(dim):
            proj = np.zeros_like(t)
            sl = [slice(None)] * t.ndim
            sl[subsystem_index] = r
            proj[tuple(sl)] = t[tuple(sl)]
            p, post = _branch(state, proj.reshape(-1))
            results.append(MeasurementOutcome(r, p, post))
    else:
        fm = fourier_matrix(dim)
        for r in range(dim):
            vec = fm[:, r]
            coef = np.tensordot(vec.conj(), t, axes=([0], [subsystem_index]))
            proj = np.multiply.outer(coef, vec)
            proj = np.moveaxis(proj, -1, subsystem_index)
            p, post = _branch(state, proj.reshape(-1))
            results.append(MeasurementOutcome(r, p, post))
    return results


def total_photon_projector(
    state: CompositeState, mode_indices: Sequence[int], total: int
) -> tuple[float, CompositeState]:
    """Project the listed modes onto total photon number ``total``."""
    specs = [_check_index(state, i) for i in mode_indices]
    for i, s in zip(mode_indices, specs):
        if not s.is_mode:
            raise IndexError(f"subsystem {i} is not an optical mode")
    if total < 0 or total > sum(s.cutoff for s in specs):
        raise IndexError(f"total photon number {total} unreachable with these cutoffs")
    t = state.tensor_view()
    count = np.zeros([1] * t.ndim, dtype=int)
    for i, s in zip(mode_indices, specs):
        count = count + _axis_vector(np.arange(s.dimension), t.ndim, i)
    mask = np.broadcast_to(count == total, t.shape)
    return _branch(state, np.where(mask, t, 0).reshape(-1))


def marginal(state: CompositeState, indices: Sequence[int]) -> np.ndarray:
    """Joint computational-basis distribution of the listed subsystems."""
    for i in indices:
        _check_index(state, i)
    probs = np.abs(state.tensor_view()) ** 2 / state.norm_sq
    others = tuple(i for i in range(probs.ndim) if i not in indices)
    summed = probs.sum(axis=others)
    kept = [i for i in range(probs.ndim) if i in indices]
    return np.moveaxis(summed, [kept.index(i) for i in indices], range(len(indices)))


def iter_csv_rows(state: CompositeState) -> Iterator[tuple[int, str, float, float]]:
    """Debug dump: (basis index, subsystem digits, re, im) per amplitude."""
    for flat, digits in enumerate(np.ndindex(*state.dims)):
        z = state.amplitudes[flat]
        yield flat, "-".join(str(x) for x in digits), float(z.real), float(z.imag)
