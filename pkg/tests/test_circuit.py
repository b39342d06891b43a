import cmath
import math

import numpy as np
import pytest

from pmqkd import circuit, fock, rates
from pmqkd.circuit import A, A0, A1, B, B0, B1, CircuitParams
from pmqkd.errors import DomainError, LayoutError


def poisson(mean, n):
    return math.exp(-mean) * mean**n / math.factorial(n)


@pytest.fixture(scope="module")
def small():
    return CircuitParams(mu_a=0.1, mu_b=0.1, d=4, cutoff=8)


class TestParams:
    def test_defaults(self):
        p = CircuitParams()
        assert (p.mu_a, p.d, p.cutoff) == (0.05, 16, 12)
        assert p.alpha == pytest.approx(math.sqrt(0.05))

    @pytest.mark.parametrize("kw", [dict(d=1), dict(mu_a=-0.1), dict(mu_b=4.0, cutoff=12)])
    def test_domain(self, kw):
        with pytest.raises(DomainError):
            CircuitParams(**kw)


class TestEncodedState:
    def test_normalized(self, small):
        s = circuit.build_encoded_state(small)
        assert s.norm_sq == pytest.approx(1, abs=1e-12)
        assert [sp.dimension for sp in s.specs] == [4, 2, 9, 4, 2, 9]

    def test_ancilla_marginals_uniform(self, small):
        s = circuit.build_encoded_state(small)
        np.testing.assert_allclose(fock.marginal(s, [A0]), np.full(4, 0.25), atol=1e-12)
        np.testing.assert_allclose(fock.marginal(s, [B1]), np.full(2, 0.5), atol=1e-12)

    def test_photon_statistics_unchanged(self, small):
        s = circuit.build_encoded_state(small)
        m = fock.marginal(s, [A, B])
        totals = np.add.outer(np.arange(9), np.arange(9))
        for n in range(9):
            # sum of two independent Poisson(0.1) is Poisson(0.2)
            assert m[totals == n].sum() == pytest.approx(poisson(0.2, n), rel=1e-6, abs=1e-15)

    def test_branch_is_encoded_coherent_pair(self, small):
        s = circuit.build_encoded_state(small)
        d, c = small.d, small.cutoff
        ja, ka, jb, kb = 1, 1, 3, 0
        branch = s.tensor_view()[ja, ka, :, jb, kb, :].reshape(-1) * math.sqrt(4 * d * d)
        ta = math.pi * ka + 2 * math.pi * ja / d
        tb = math.pi * kb + 2 * math.pi * jb / d
        ref = fock.tensor([
            fock.coherent_state(small.alpha * cmath.exp(1j * ta), c),
            fock.coherent_state(small.beta * cmath.exp(1j * tb), c),
        ])
        np.testing.assert_allclose(branch, ref.amplitudes, atol=1e-13)

    def test_layout_check(self):
        with pytest.raises(LayoutError):
            circuit.apply_virtual_block(fock.tensor([fock.plus_state(4), fock.fock_state(0, 3)]))


def _term_by_term(params):
    """Virtual block expanded by hand: sum over (ja, jb) of phases and Fourier kernels."""
    d, c = params.d, params.cutoff
    out = np.zeros((d, 2, c + 1, d, 2, c + 1), dtype=complex)
    n = np.arange(c + 1)
    coh = lambda amp: fock.coherent_state(amp, c).amplitudes
    for ja in range(d):
        for jb in range(d):
            for ka in range(2):
                for kb in range(2):
                    ta = math.pi * ka + 2 * math.pi * ja / d
                    tb = math.pi * kb + 2 * math.pi * jb / d
                    pair = np.outer(coh(params.alpha * cmath.exp(1j * ta)), coh(params.beta * cmath.exp(1j * tb)))
                    for k in range(d):
                        kernel = cmath.exp(-2j * math.pi * ja * k / d) / math.sqrt(d)
                        out[k, ka, :, (jb - ja) % d, kb, :] += kernel * pair / (2 * d)
    return out.reshape(-1), n


class TestVirtualBlock:
    def test_matches_hand_expansion(self, small):
        state = circuit.apply_virtual_block(circuit.build_encoded_state(small))
        ref, _ = _term_by_term(small)
        np.testing.assert_allclose(state.amplitudes, ref, atol=1e-13)

    def test_norm_preserved(self, small):
        state = circuit.apply_virtual_block(circuit.build_encoded_state(small))
        assert state.norm_sq == pytest.approx(1, abs=1e-12)

    def test_readout_k_is_photon_residue(self, small):
        state = circuit.apply_virtual_block(circuit.build_encoded_state(small))
        t = np.transpose(np.abs(state.tensor_view()) ** 2, (A0, A1, B0, B1, A, B))
        c = small.cutoff
        totals = np.add.outer(np.arange(c + 1), np.arange(c + 1))
        for k in range(small.d):
            off = t[k][..., totals % small.d != k]
            assert off.sum() < 1e-25


class TestParityTable:
    def test_explicit_branch_route(self, small):
        """Rows agree with measure(A0) -> measure(B0) -> project N -> measure X on both key qubits."""
        state = circuit.apply_virtual_block(circuit.build_encoded_state(small))
        table = circuit.joint_readout_distribution(state)
        by_key = {(r.k, r.j, r.N): r for r in table.rows}
        for k in (0, 1, 2):
            rk = fock.measure(state, A0)[k]
            for j in (0, 2):
                rj = fock.measure(rk.post_state, B0)[j]
                for n_total in (k, k + small.d):
                    p_n, post = fock.total_photon_projector(rj.post_state, [A, B], n_total)
                    weight = rk.probability * rj.probability * p_n
                    if weight < fock.ZERO_BRANCH:
                        assert (k, j, n_total) not in by_key
                        continue
                    row = by_key[(k, j, n_total)]
                    assert row.weight == pytest.approx(weight, rel=1e-9)
                    xa = fock.measure(post, A1, fock.FOURIER)
                    disagree = 0.0
                    for a in range(2):
                        xb = fock.measure(xa[a].post_state, B1, fock.FOURIER)
                        disagree += xa[a].probability * xb[1 - a].probability
                    assert row.p_xx_disagree == pytest.approx(disagree, abs=1e-10)

    def test_parity_law_small(self, small):
        table = circuit.parity_table(small)
        assert table.max_parity_deviation() <= 1e-9
        assert table.off_support_weight < 1e-20
        assert table.total_weight + table.dropped_weight == pytest.approx(1, abs=1e-9)
        assert {r.N % small.d for r in table.rows if r.k == 1} == {1}

    def test_weights_follow_poisson_total(self, small):
        w = circuit.parity_table(small).weight_by_total()
        # truncation at 8 photons per mode renormalizes each mode separately
        norm = sum(poisson(0.1, n) for n in range(9)) ** 2
        for n in range(5):
            assert w[n] == pytest.approx(poisson(0.2, n) / norm, rel=1e-9)

    def test_asymmetric_intensities(self):
        table = circuit.parity_table(CircuitParams(mu_a=0.05, mu_b=0.2, d=8, cutoff=10, alpha_phase=0.3))
        assert table.max_parity_deviation() <= 1e-9

    def test_meta(self, small):
        assert circuit.parity_table(small).meta["d"] == 4


class TestPhaseErrorFromParity:
    def test_matches_closed_form(self):
        table = circuit.parity_table(CircuitParams(d=8, cutoff=12))
        for eta in (0.01, 0.1, 0.7):
            yields = {n: rates.yield_k(n, eta) for n in table.weight_by_total()}
            ep = circuit.phase_error_rate_from_parity(table, yields)
            assert ep == pytest.approx(rates.phase_error_upper(0.05, eta), abs=1e-9)

    def test_hand_table(self):
        rows = [circuit.ParityRow(0, 0, 0, 0.5, 0.0), circuit.ParityRow(1, 0, 1, 0.3, 1.0),
                circuit.ParityRow(0, 0, 2, 0.2, 0.0)]
        table = circuit.ParityTable(rows, d=2)
        # detected weights 0.3 * 1 (odd) and 0.2 * 0.5 (even)
        assert circuit.phase_error_rate_from_parity(table, {1: 1.0, 2: 0.5}) == pytest.approx(0.1 / 0.4)

    def test_errors(self):
        with pytest.raises(DomainError):
            circuit.phase_error_rate_from_parity(circuit.ParityTable([], d=2), {})
        table = circuit.ParityTable([circuit.ParityRow(0, 0, 0, 1.0, 0.0)], d=2)
        with pytest.raises(DomainError):
            circuit.phase_error_rate_from_parity(table, {0: 0.0})


class TestConditionalModeState:
    @pytest.mark.parametrize("k", range(4))
    def test_pseudo_fock(self, k):
        r = circuit.verify_observation1(math.sqrt(2.0), 4, k, 20)
        assert abs(1 - r.fidelity_pseudo_fock) <= 1e-12

    def test_probabilities(self):
        alpha, d, c = 0.8, 4, 16
        probs = [circuit.verify_observation1(alpha, d, k, c).probability for k in range(d)]
        assert sum(probs) == pytest.approx(1, abs=1e-12)
        norm = sum(poisson(alpha**2, n) for n in range(c + 1))
        for k in range(d):
            expected = sum(poisson(alpha**2, n) for n in range(k, c + 1, d)) / norm
            assert probs[k] == pytest.approx(expected, rel=1e-10)

    def test_near_fock_at_many_slices(self):
        for k in range(4):
            r = circuit.verify_observation1(math.sqrt(0.05), 16, k, 15)
            assert r.fidelity_fock >= 1 - 1e-10

    def test_bad_outcome(self):
        with pytest.raises(IndexError):
            circuit.verify_observation1(0.3, 4, 4, 8)


class TestZBeforeVirtual:
    def test_distance(self, small):
        assert circuit.z_before_virtual_distance(small) <= 1e-10

    def test_asymmetric_and_unbalanced_mixer(self):
        p = CircuitParams(mu_a=0.05, mu_b=0.15, d=4, cutoff=8, beta_phase=1.0)
        assert circuit.z_before_virtual_distance(p, eta_mix=0.3) <= 1e-10

    def test_marginals_are_distributions(self, small):
        p = circuit.classical_then_virtual_marginal(small)
        assert p.shape == (4, 2, 2, 9, 9)
        assert p.sum() == pytest.approx(1, abs=1e-9)
