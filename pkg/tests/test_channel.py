import math

import numpy as np
import pytest

from decoyfree.channel import (
    ChannelScenario,
    conditional_loss,
    expected_frequencies,
    simulated_state,
    thinned_photon_distribution,
    transmittance,
)
from decoyfree.measure import bob_squashed_povm
from decoyfree.numerics import poisson_pmf
from decoyfree.protocol import ProtocolSpec
from decoyfree.source import SourceConfig, for_basis_prob, reduced_alice_blocks

PROTO = ProtocolSpec("BB84", p_z=0.5)


class TestTransmittance:
    def test_values(self):
        assert transmittance(0.0) == 1.0
        assert abs(transmittance(10.0) - 0.1) < 1e-15
        assert abs(transmittance(3.0) - 10 ** (-0.3)) < 1e-15

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            transmittance(-1.0)


class TestConditionalLoss:
    def test_bernoulli(self):
        assert np.allclose(conditional_loss(1, 0.3), [0.7, 0.3])

    def test_lossless(self):
        assert np.allclose(conditional_loss(3, 1.0), [0, 0, 0, 1])

    def test_binomial(self):
        assert np.allclose(conditional_loss(2, 0.4), [0.36, 0.48, 0.16])


class TestThinnedDistribution:
    def test_eta_one(self):
        d = thinned_photon_distribution(0.5, 1.0, 3)
        for n in range(4):
            assert abs(d[n] - poisson_pmf(0.5, n)) < 1e-14

    def test_eta_zero(self):
        d = thinned_photon_distribution(0.5, 0.0, 3)
        assert d[0] == pytest.approx(1.0)

    def test_poisson_composition_identity(self):
        d = thinned_photon_distribution(0.5, 0.1, 4)
        assert abs(d[1] - 0.05 * math.exp(-0.05)) < 1e-14


class TestExpectedFrequencies:
    def test_normalized_with_perp(self):
        src = for_basis_prob(0.3, 3, 0.5)
        f = expected_frequencies(src, ChannelScenario(7.0, 0.1, 0.95), PROTO)
        assert abs(f.table.sum() - 1.0) < 1e-12
        assert f.table.min() > -1e-15

    def test_noiseless_zero_error(self):
        src = for_basis_prob(0.3, 1, 0.5)
        f = expected_frequencies(src, ChannelScenario(0.0, 0.0, 1.0), PROTO)
        qz, qx = f.basis_error_rates()
        # cos(pi/2)^2 ~ 4e-33 in floats; zero at any physical tolerance
        assert qz < 1e-30 and qx < 1e-30

    def test_single_photon_error_is_half_one_minus_v(self):
        v = 0.93
        src = SourceConfig(mu=1.0, cutoff=1, photon_distribution=(0.0, 1.0))
        f = expected_frequencies(src, ChannelScenario(0.0, 0.0, v), PROTO)
        qz, qx = f.basis_error_rates()
        assert abs(qz - (1 - v) / 2) < 1e-12
        assert abs(qx - (1 - v) / 2) < 1e-12

    def test_misalignment_born_rule(self):
        theta = math.pi / 8
        src = SourceConfig(mu=1.0, cutoff=1, photon_distribution=(0.0, 1.0))
        f = expected_frequencies(src, ChannelScenario(0.0, theta, 1.0), PROTO)
        qz, _ = f.basis_error_rates()
        assert abs(qz - math.sin(theta) ** 2) < 1e-12

    def test_plus_minus_branches_coincide_at_v1(self):
        src = for_basis_prob(0.3, 2, 0.5)
        ch = ChannelScenario(5.0, 0.2, 1.0)
        f = expected_frequencies(src, ch, PROTO)
        # with V=1 the +phi and -phi branches are identical, so the averaged
        # table equals a single-branch table
        f_single = expected_frequencies(
            for_basis_prob(0.3, 2, 0.5, alice_angle=0.0), ChannelScenario(5.0, 0.2, 1.0), PROTO
        )
        assert np.abs(f.table - f_single.table).max() < 1e-15

    def test_bitflip_symmetry_at_zero_misalignment(self):
        src = for_basis_prob(0.4, 2, 0.5)
        f = expected_frequencies(src, ChannelScenario(6.0, 0.0, 0.9), PROTO)
        t = f.table
        # simultaneous H<->V, D<->A, bit0<->bit1
        flipped = t[[1, 0, 3, 2]][:, :, [1, 0, 2]]
        assert np.abs(t - flipped).max() < 1e-12

    def test_detection_monotone_in_loss(self):
        src = for_basis_prob(0.3, 2, 0.5)
        dets = []
        for loss in (0.0, 5.0, 10.0, 20.0):
            f = expected_frequencies(src, ChannelScenario(loss, 0.0, 1.0), PROTO)
            dets.append(1.0 - f.p_perp)
        assert all(b <= a + 1e-12 for a, b in zip(dets, dets[1:]))

    def test_single_photon_conditioning_independent_of_cutoff(self):
        ch = ChannelScenario(5.0, 0.07, 0.96)
        tables = []
        for cutoff in (3, 6):
            src = for_basis_prob(0.1, cutoff, 0.5)  # tail < 1e-9 at K=6
            f = expected_frequencies(src, ch, PROTO)
            tables.append(f.by_block[1])
        assert np.abs(tables[0] - tables[1]).max() < 1e-12

    def test_csv_roundtrip_labels(self):
        src = for_basis_prob(0.2, 1, 0.5)
        f = expected_frequencies(src, ChannelScenario(3.0, 0.0, 1.0), PROTO)
        text = f.to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "signal,basis,outcome,probability"
        assert len(lines) == 1 + 4 * 2 * 3


class TestSimulatedState:
    def test_matches_classical_statistics(self):
        proto = ProtocolSpec("SARG04", p_z=0.5)
        src = for_basis_prob(0.3, 3, 0.5, alice_angle=0.1)
        ch = ChannelScenario(7.0, 0.05, 0.97)
        f = expected_frequencies(src, ch, proto)
        povm = bob_squashed_povm(proto.p_z)
        for label, w, block in simulated_state(src, ch):
            tb = f.by_block[label]
            for x in range(4):
                px = np.zeros((4, 4))
                px[x, x] = 1.0
                want = [tb[x, 0, 0], tb[x, 0, 1], tb[x, 1, 0], tb[x, 1, 1], tb[x, :, 2].sum()]
                for yi, g in enumerate(povm):
                    got = np.trace(np.kron(px, g) @ block).real
                    assert abs(got - want[yi]) < 1e-10

    def test_marginal_and_positivity(self):
        src = for_basis_prob(0.4, 2, 0.5)
        ch = ChannelScenario(4.0, 0.1, 0.9)
        sim = simulated_state(src, ch)
        for (label, w, block), (_, _, ab) in zip(sim, reduced_alice_blocks(src)):
            marg = np.einsum("aibi->ab", block.reshape(4, 3, 4, 3))
            assert np.abs(marg - ab).max() < 1e-12
            assert np.linalg.eigvalsh((block + block.conj().T) / 2).min() > -5e-11
