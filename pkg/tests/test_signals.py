import math

import numpy as np
import pytest

from mechesc.signals import (
    DitherBank, SignalError, bank_from_samples, check_shaping, default_shaping, gram_matrix,
    lambda_matrix, make_harmonic_bank, period_mean, shaping_from_alpha,
)
from oracles import alpha as alpha_ref, gram_by_quad


def test_canonical_first_channel_at_zero():
    bank = make_harmonic_bank(2, "canonical")
    assert bank.u(0.0)[0] == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_fig1_first_antiderivative_at_zero():
    bank = make_harmonic_bank(2, "fig1")
    assert bank.U(0.0)[0] == pytest.approx(math.sqrt(2.0), abs=1e-12)


@pytest.mark.parametrize("variant,m", [("canonical", 1), ("canonical", 4), ("fig1", 2), ("fig2", 6)])
def test_dither_zero_mean(variant, m):
    bank = make_harmonic_bank(m, variant)
    assert np.max(np.abs(period_mean(bank, bank.u))) < 1e-10
    assert np.max(np.abs(period_mean(bank, bank.U))) < 1e-10


@pytest.mark.parametrize("variant,m", [("canonical", 3), ("fig1", 2), ("fig2", 6)])
def test_gram_identity_against_adaptive_quadrature(variant, m):
    bank = make_harmonic_bank(m, variant)
    G = gram_matrix(bank)
    assert np.max(np.abs(G - np.eye(m))) < 1e-8
    assert np.max(np.abs(gram_by_quad(bank.U, m) - G)) < 1e-8
    assert bank.is_orthonormal()


def test_u_is_derivative_of_U():
    bank = make_harmonic_bank(6, "fig2")
    tau = np.linspace(0.0, 7.0, 31)
    d = 1e-6
    fd = (bank.U(tau + d) - bank.U(tau - d)) / (2 * d)
    assert np.max(np.abs(fd - bank.u(tau))) < 1e-6


def test_duplicated_channel_breaks_orthonormality():
    base = make_harmonic_bank(1, "canonical")
    dup = DitherBank(base.period, 2, lambda t: np.concatenate([base.u(t)] * 2, axis=-1),
                     lambda t: np.concatenate([base.U(t)] * 2, axis=-1))
    G = gram_matrix(dup)
    assert G[0, 1] == pytest.approx(1.0, abs=1e-10)
    assert not dup.is_orthonormal()
    assert lambda_matrix(dup)[0, 1] == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("variant,m", [("canonical", 2), ("fig2", 6)])
def test_lambda_half_identity(variant, m):
    lam = lambda_matrix(make_harmonic_bank(m, variant))
    assert np.max(np.abs(lam - 0.5 * np.eye(m))) < 1e-8


@pytest.mark.parametrize("variant,m", [("fig1", 3), ("fig2", 2), ("bogus", 2), ("canonical", 0)])
def test_variant_mismatch_rejected(variant, m):
    with pytest.raises(SignalError):
        make_harmonic_bank(m, variant)


def test_broadcast_over_leading_axes():
    bank = make_harmonic_bank(2, "fig1")
    tau = np.zeros((4, 3))
    assert bank.u(tau).shape == (4, 3, 2)
    assert bank.U(tau).shape == (4, 3, 2)


def test_bank_from_samples_reproduces_harmonic_bank():
    ref = make_harmonic_bank(3, "canonical")
    tau = np.arange(64) * 2 * math.pi / 64
    custom = bank_from_samples(ref.u(tau))
    t = np.linspace(0.0, 10.0, 17)
    assert np.max(np.abs(custom.u(t) - ref.u(t))) < 1e-10
    assert np.max(np.abs(custom.U(t) - ref.U(t))) < 1e-10
    assert custom.is_orthonormal()


def test_bank_from_samples_rejects_short_grid():
    with pytest.raises(SignalError):
        bank_from_samples(np.ones((3, 1)))


def test_shaping_examples():
    sh = default_shaping()
    assert float(sh.alpha_alpha_prime(0.0)) == pytest.approx(0.5, abs=1e-15)
    assert float(sh.alpha(0.0)) == pytest.approx(math.sqrt(math.log(2.0)), abs=1e-12)
    assert float(sh.alpha(0.0)) == pytest.approx(0.832555, abs=1e-6)
    assert float(sh.beta(0.0)) == 0.0


def test_shaping_matches_reference_and_is_stable_for_large_arguments():
    sh = default_shaping()
    z = np.linspace(-30.0, 30.0, 121)
    assert np.allclose(sh.alpha(z), alpha_ref(z), rtol=1e-12, atol=1e-300)
    assert np.all(np.isfinite(sh.alpha(np.array([-800.0, 800.0]))))
    assert np.all(np.isfinite(sh.beta(np.array([-800.0, 800.0]))))


def test_shaping_derived_terms_consistent():
    sh = default_shaping()
    z = np.linspace(-4.0, 4.0, 41)
    d = 1e-6
    assert np.allclose((sh.alpha(z + d) - sh.alpha(z - d)) / (2 * d), sh.alpha_prime(z), atol=1e-8)
    assert np.allclose(sh.alpha(z) * sh.alpha_prime(z), sh.alpha_alpha_prime(z), atol=1e-14)
    assert np.allclose((sh.beta(z + d) - sh.beta(z - d)) / (2 * d), sh.beta_prime(z), atol=1e-8)
    assert np.allclose(sh.beta_prime(z), sh.alpha_alpha_prime(z) - 0.5, atol=1e-14)
    check_shaping(sh)


def test_shaping_from_alpha_agrees_with_default():
    sh = default_shaping()
    custom = shaping_from_alpha(lambda z: np.sqrt(np.logaddexp(0.0, 2 * np.asarray(z, float))))
    z = np.array([-2.0, -0.3, 0.0, 0.7, 2.5])
    assert np.allclose(custom.alpha_alpha_prime(z), sh.alpha_alpha_prime(z), atol=1e-8)
    assert np.allclose(custom.beta(z), sh.beta(z), atol=1e-7)


def test_check_shaping_rejects_decreasing_product():
    bad = shaping_from_alpha(lambda z: np.exp(-np.asarray(z, float)))
    with pytest.raises(SignalError):
        check_shaping(bad)
