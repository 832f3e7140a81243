import math

import numpy as np
import pytest

from decoyfree.numerics import poisson_pmf
from decoyfree.source import (
    SIGNAL_ANGLES,
    TAG,
    SourceConfig,
    for_basis_prob,
    photon_blocks,
    reduced_alice_blocks,
    reduced_alice_state,
    reduced_alice_state_by_trace,
    signal_state,
    tagged_source_state,
)


class TestSignalState:
    def test_h_single_photon(self):
        st = signal_state(0, 1, 0.0)
        assert np.allclose(st.amplitudes, [1.0, 0.0])

    def test_d_single_photon(self):
        st = signal_state(2, 1, 0.0)
        assert np.allclose(st.amplitudes, [1 / math.sqrt(2)] * 2)

    def test_d_two_photon_binomial(self):
        # symbolic expansion of (a_H^+ + a_V^+)^2 / (2 sqrt(2!)) on vacuum
        st = signal_state(2, 2, 0.0)
        assert np.allclose(st.amplitudes, [0.5, 1 / math.sqrt(2), 0.5])

    def test_rejects_vacuum(self):
        with pytest.raises(ValueError):
            signal_state(0, 0)

    def test_normalized(self):
        for x in range(4):
            for n in (1, 2, 5):
                st = signal_state(x, n, 0.3)
                assert abs(np.vdot(st.amplitudes, st.amplitudes) - 1.0) < 1e-12


class TestTaggedSourceState:
    def test_zero_intensity_all_vacuum(self):
        cfg = SourceConfig(mu=0.0, cutoff=2)
        blocks = photon_blocks(cfg)
        assert blocks == [(0, 1.0)]

    def test_unit_norm(self):
        for mu in (0.05, 0.5, 2.0):
            psi, _ = tagged_source_state(SourceConfig(mu=mu, cutoff=3))
            assert abs(np.vdot(psi, psi).real - 1.0) < 1e-12

    def test_block_weights_match_poisson_tail(self):
        cfg = SourceConfig(mu=0.7, cutoff=2)
        blocks = dict(photon_blocks(cfg))
        for n in range(3):
            assert abs(blocks[n] - poisson_pmf(0.7, n)) < 1e-12
        tail = 1.0 - sum(poisson_pmf(0.7, n) for n in range(3))
        assert abs(blocks[TAG] - tail) < 1e-12

    def test_explicit_distribution_override(self):
        cfg = SourceConfig(mu=1.0, cutoff=1, photon_distribution=(0.0, 1.0))
        assert photon_blocks(cfg) == [(1, 1.0)]


class TestReducedAliceState:
    def test_zero_intensity_diagonal(self):
        cfg = SourceConfig(mu=0.0, cutoff=1, signal_probs=(0.3, 0.3, 0.2, 0.2))
        rho = reduced_alice_state(cfg)
        assert np.allclose(np.diag(rho)[:4].real, [0.3, 0.3, 0.2, 0.2])

    def test_unit_trace(self):
        rho = reduced_alice_state(SourceConfig(mu=0.4, cutoff=3))
        assert abs(np.trace(rho).real - 1.0) < 1e-12

    def test_matches_partial_trace_of_purification(self):
        cfg = SourceConfig(mu=0.37, cutoff=2, signal_probs=(0.3, 0.2, 0.25, 0.25), alice_angle=0.11)
        direct = reduced_alice_state(cfg)
        traced = reduced_alice_state_by_trace(cfg)
        assert np.abs(direct - traced).max() < 1e-12

    def test_overlaps_are_cos_powers(self):
        cfg = SourceConfig(mu=0.5, cutoff=3)
        for label, _, block in reduced_alice_blocks(cfg):
            if label == TAG or label == 0:
                continue
            n = label
            for x in range(4):
                for y in range(4):
                    want = 0.25 * math.cos(SIGNAL_ANGLES[x] - SIGNAL_ANGLES[y]) ** n
                    assert abs(block[x, y] - want) < 1e-12

    def test_tag_block_distinguishable(self):
        cfg = SourceConfig(mu=2.0, cutoff=1)
        label, _, block = reduced_alice_blocks(cfg)[-1]
        assert label == TAG
        assert np.abs(block - np.diag(np.diag(block))).max() < 1e-14

    def test_independent_of_channel_and_rotation(self):
        a = reduced_alice_state(SourceConfig(mu=0.4, cutoff=2, alice_angle=0.0))
        b = reduced_alice_state(SourceConfig(mu=0.4, cutoff=2, alice_angle=0.7))
        assert np.abs(a - b).max() < 1e-12


class TestConfigValidation:
    def test_bad_probs(self):
        with pytest.raises(ValueError):
            SourceConfig(mu=0.1, cutoff=1, signal_probs=(0.5, 0.5, 0.5, -0.5))

    def test_bad_mu(self):
        with pytest.raises(ValueError):
            SourceConfig(mu=-0.1, cutoff=1)

    def test_helper_probs(self):
        cfg = for_basis_prob(0.2, 3, p_z=0.8)
        assert np.allclose(cfg.signal_probs, (0.4, 0.4, 0.1, 0.1))
