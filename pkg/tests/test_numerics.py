import math

import numpy as np
import pytest

from decoyfree.numerics import (
    JointDistribution,
    RegisterShape,
    beta_quantile,
    binary_entropy,
    cond_entropy,
    herm_eig,
    kron,
    partial_trace,
    perturbed_log,
    poisson_pmf,
    reg_inc_beta,
    rel_entropy,
)
from oracles import (
    beta_quantile_quad,
    binary_entropy_highprec,
    kron_indexwise,
    partial_trace_indexsum,
    rel_entropy_eigenbasis,
)

rng = np.random.default_rng(20240817)


def rand_herm(d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def rand_psd(d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return a @ a.conj().T


def rand_density(d):
    m = rand_psd(d)
    return m / np.trace(m).real


class TestKron:
    def test_identity(self):
        assert np.allclose(kron(np.eye(2), np.eye(2)), np.eye(4))

    def test_basis_projectors(self):
        assert np.allclose(kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])), np.diag([0.0, 1.0, 0.0, 0.0]))

    def test_against_indexwise_oracle(self):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        assert np.abs(kron(a, b) - kron_indexwise(a, b)).max() < 1e-14


class TestPartialTrace:
    def test_product_state(self):
        rho = rand_density(3)
        sig = rand_psd(4)
        shape = RegisterShape(("A", "B"), (3, 4))
        out = partial_trace(kron(rho, sig), shape, keep={"A"})
        assert np.abs(out - rho * np.trace(sig)).max() < 1e-12

    def test_bell_state(self):
        phi = np.zeros(4)
        phi[0] = phi[3] = 1 / math.sqrt(2)
        rho = np.outer(phi, phi)
        out = partial_trace(rho, RegisterShape(("A", "B"), (2, 2)), keep={"A"})
        assert np.abs(out - np.eye(2) / 2).max() < 1e-12

    def test_against_indexsum_oracle(self):
        m = rand_psd(12)
        shape = RegisterShape(("A", "B"), (3, 4))
        got = partial_trace(m, shape, keep={"A"})
        want = partial_trace_indexsum(m, (3, 4), keep_idx=[0])
        assert np.abs(got - want).max() < 1e-12
        assert abs(np.trace(got) - np.trace(m)) < 1e-12 * abs(np.trace(m))

    def test_composition(self):
        m = rand_psd(24)
        shape = RegisterShape(("A_S", "A", "B"), (2, 3, 4))
        once = partial_trace(m, shape, keep={"A"})
        stage = partial_trace(m, shape, keep={"A_S", "A"})
        twice = partial_trace(stage, RegisterShape(("A_S", "A"), (2, 3)), keep={"A"})
        assert np.abs(once - twice).max() < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            partial_trace(np.eye(5), RegisterShape(("A", "B"), (2, 3)), keep={"A"})


class TestHermEig:
    def test_diagonal(self):
        w, _ = herm_eig(np.diag([3.0, 1.0, 2.0]).astype(complex))
        assert np.allclose(w, [1.0, 2.0, 3.0])

    def test_pauli_x(self):
        w, _ = herm_eig(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex))
        assert np.allclose(w, [-1.0, 1.0])

    def test_reconstruction(self):
        for d in (8, 32, 64):
            m = rand_herm(d)
            w, v = herm_eig(m)
            resid = np.abs((v * w) @ v.conj().T - m).max()
            assert resid < 1e-10 * np.abs(m).max()
            assert np.abs(v.conj().T @ v - np.eye(d)).max() < 1e-10

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            herm_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestPerturbedLog:
    def test_maximally_mixed(self):
        d = 4
        out = perturbed_log(np.eye(d) / d, eps=0.0)
        assert np.abs(out + math.log2(d) * np.eye(d)).max() < 1e-12

    def test_rank_one_projector(self):
        d = 3
        p = np.zeros((d, d), dtype=complex)
        p[0, 0] = 1.0
        out = perturbed_log(p, eps=1e-14)
        w = np.linalg.eigvalsh(out)
        assert abs(w.max() - math.log2(1 - 1e-14 + 1e-14 / d)) < 1e-9

    def test_matches_scalar_log(self):
        rho = rand_psd(5)
        rho /= np.trace(rho).real
        eps = 1e-12
        w, v = np.linalg.eigh(rho)
        wt = (1 - eps) * w + eps / 5
        want = (v * np.log2(wt)) @ v.conj().T
        assert np.abs(perturbed_log(rho, eps) - want).max() < 1e-9

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            perturbed_log(np.diag([1.0, -0.5]), eps=1e-12)


class TestRelEntropy:
    def test_self_is_zero(self):
        rho = rand_density(4)
        assert abs(rel_entropy(rho, rho)) < 1e-9

    def test_pure_vs_mixed(self):
        p = np.diag([1.0, 0.0]).astype(complex)
        assert abs(rel_entropy(p, np.eye(2) / 2) - 1.0) < 1e-9

    def test_against_eigenbasis_oracle(self):
        rho, sig = rand_density(4), rand_density(4)
        got = rel_entropy(rho, sig, eps=1e-12)
        want = rel_entropy_eigenbasis(rho, sig, eps=1e-12)
        assert abs(got - want) < 1e-8

    def test_nonnegative(self):
        for _ in range(50):
            d = int(rng.integers(2, 6))
            rho, sig = rand_density(d), rand_density(d)
            val = rel_entropy(rho, sig)
            assert val >= -1e-10
            if abs(val) < 1e-10:
                assert np.abs(rho - sig).max() < 1e-4

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            rel_entropy(np.eye(2) / 2, np.eye(3) / 3)


class TestPoisson:
    def test_zero_intensity(self):
        assert poisson_pmf(0.0, 0) == 1.0
        assert poisson_pmf(0.0, 3) == 0.0

    def test_closed_form(self):
        assert abs(poisson_pmf(0.1, 0) - math.exp(-0.1)) < 1e-15

    def test_normalization(self):
        assert abs(sum(poisson_pmf(2.0, n) for n in range(51)) - 1.0) < 1e-12

    def test_negative_mu(self):
        with pytest.raises(ValueError):
            poisson_pmf(-1.0, 0)


class TestBinaryEntropy:
    def test_endpoints(self):
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(1.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    def test_highprec_value(self):
        assert abs(binary_entropy(0.11) - binary_entropy_highprec(0.11)) < 1e-12

    def test_range(self):
        with pytest.raises(ValueError):
            binary_entropy(1.5)


class TestBetaQuantile:
    def test_uniform(self):
        assert abs(beta_quantile(0.5, 1.0, 1.0) - 0.5) < 1e-12
        for p in (0.1, 0.33, 0.9):
            assert abs(beta_quantile(p, 1.0, 1.0) - p) < 1e-12

    def test_against_quadrature_bisection(self):
        got = beta_quantile(0.975, 50.0, 51.0)
        want = beta_quantile_quad(0.975, 50.0, 51.0)
        assert abs(got - want) < 1e-8

    def test_inverse_property_grid(self):
        for p in (0.01, 0.3, 0.7, 0.99):
            for a in (0.5, 2.0, 40.0):
                for b in (1.0, 7.5, 120.0):
                    x = beta_quantile(p, a, b)
                    assert abs(reg_inc_beta(x, a, b) - p) < 1e-8

    def test_monotone_in_p(self):
        qs = [beta_quantile(p, 3.0, 5.0) for p in np.linspace(0.05, 0.95, 10)]
        assert all(b > a for a, b in zip(qs, qs[1:]))

    def test_invalid_shapes(self):
        with pytest.raises(ValueError):
            beta_quantile(0.5, 0.0, 1.0)


class TestCondEntropy:
    def test_perfectly_correlated(self):
        joint = JointDistribution(np.diag([0.5, 0.5]), ("a", "b"))
        assert abs(cond_entropy(joint, "b")) < 1e-12

    def test_independent_uniform(self):
        joint = JointDistribution(np.full((2, 3), 1 / 6), ("a", "b"))
        assert abs(cond_entropy(joint, "b") - 1.0) < 1e-12

    def test_binary_symmetric(self):
        q = 0.13
        t = np.array([[0.5 * (1 - q), 0.5 * q], [0.5 * q, 0.5 * (1 - q)]])
        joint = JointDistribution(t, ("a", "b"))
        assert abs(cond_entropy(joint, "b") - binary_entropy(q)) < 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            cond_entropy(JointDistribution(np.diag([0.25, 0.25]), ("a", "b"), 0.5), "b")
