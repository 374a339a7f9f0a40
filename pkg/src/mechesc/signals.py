"""Periodic dither banks and the output-shaping function.

A dither bank holds ``m`` periodic, zero-mean signals ``u`` together with
their zero-mean antiderivatives ``U``.  All signal callables take the phase
``tau`` (scalar or array) and return arrays of shape ``(..., m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

SQRT2 = math.sqrt(2.0)

BANK_VARIANTS = ("canonical", "fig1", "fig2", "custom")


class SignalError(ValueError):
    """Raised for inconsistent dither-bank or shaping-function input."""


@dataclass(frozen=True)
class DitherBank:
    """A bank of ``m`` periodic dither channels with antiderivatives.

    ``u(tau)`` and ``U(tau)`` return arrays of shape ``(..., m)``.
    """

    period: float
    m: int
    u: Callable[[np.ndarray], np.ndarray]
    U: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"

    def __post_init__(self):
        if not self.period > 0:
            raise SignalError(f"period must be positive, got {self.period}")
        if self.m < 1:
            raise SignalError(f"channel count must be >= 1, got {self.m}")

    def is_orthonormal(self, tol: float = 1e-8, quadrature_points: int = 1024) -> bool:
        gram = gram_matrix(self, quadrature_points)
        return bool(np.max(np.abs(gram - np.eye(self.m))) <= tol)


def _cosine_bank(freqs, period=2.0 * math.pi, name="custom"):
    """Bank with ``u^i = sqrt2 k_i cos(k_i tau)`` and ``U^i = sqrt2 sin(k_i tau)``."""
    k = np.asarray(freqs, dtype=float)

    def u(tau):
        tau = np.asarray(tau, dtype=float)[..., None]
        return SQRT2 * k * np.cos(k * tau)

    def U(tau):
        tau = np.asarray(tau, dtype=float)[..., None]
        return SQRT2 * np.sin(k * tau)

    return DitherBank(period, len(k), u, U, name)


def make_harmonic_bank(m: int, variant: str = "canonical") -> DitherBank:
    """Build one of the built-in harmonic dither banks (period ``2*pi``).

    ``canonical``: ``u^i = sqrt2 i cos(i tau)``, any ``m >= 1``.
    ``fig1``: ``u = (-sqrt2 sin, sqrt2 cos)``, requires ``m == 2``.
    ``fig2``: ``u^i = sqrt2 (7-i) cos((7-i) tau)``, requires ``m == 6``.
    """
    if m < 1:
        raise SignalError(f"channel count must be >= 1, got {m}")
    if variant == "canonical":
        return _cosine_bank(np.arange(1, m + 1), name="canonical")
    if variant == "fig1":
        if m != 2:
            raise SignalError(f"variant 'fig1' has 2 channels, got m={m}")

        def u(tau):
            tau = np.asarray(tau, dtype=float)
            return SQRT2 * np.stack([-np.sin(tau), np.cos(tau)], axis=-1)

        def U(tau):
            tau = np.asarray(tau, dtype=float)
            return SQRT2 * np.stack([np.cos(tau), np.sin(tau)], axis=-1)

        return DitherBank(2.0 * math.pi, 2, u, U, "fig1")
    if variant == "fig2":
        if m != 6:
            raise SignalError(f"variant 'fig2' has 6 channels, got m={m}")
        return _cosine_bank(7 - np.arange(1, 7), name="fig2")
    raise SignalError(f"unknown bank variant {variant!r}; expected one of {BANK_VARIANTS}")


def bank_from_samples(samples, period: float = 2.0 * math.pi) -> DitherBank:
    """Build a bank from ``u`` tabulated on a uniform grid over one period.

    ``samples`` has shape ``(N, m)``, row ``k`` taken at phase ``k*period/N``.
    The signals are represented by their truncated Fourier series, so the
    mean is removed and ``U`` is the exact zero-mean antiderivative.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    N, m = samples.shape
    if N < 4:
        raise SignalError("need at least 4 samples per period")
    coeffs = np.fft.rfft(samples, axis=0) / N
    harmonics = np.arange(coeffs.shape[0])
    keep = harmonics >= 1
    if N % 2 == 0:
        # Nyquist term has no well-defined antiderivative on the grid
        keep &= harmonics < N // 2
    k = harmonics[keep].astype(float)
    c = coeffs[keep]  # (K, m)
    w0 = 2.0 * math.pi / period

    def u(tau):
        tau = np.asarray(tau, dtype=float)
        phase = np.exp(1j * w0 * tau[..., None] * k)  # (..., K)
        return 2.0 * np.real(phase @ c)

    def U(tau):
        tau = np.asarray(tau, dtype=float)
        phase = np.exp(1j * w0 * tau[..., None] * k)
        return 2.0 * np.real(phase @ (c / (1j * w0 * k[:, None])))

    return DitherBank(period, m, u, U, "custom")


def _phase_grid(bank: DitherBank, quadrature_points: int) -> np.ndarray:
    n = quadrature_points + (quadrature_points % 2)  # Simpson needs an even count
    return np.linspace(0.0, bank.period, n + 1)


def period_mean(bank: DitherBank, fn, quadrature_points: int = 1024) -> np.ndarray:
    """Time average ``(1/T) int_0^T fn(tau) dtau`` by composite Simpson."""
    tau = _phase_grid(bank, quadrature_points)
    return integrate.simpson(fn(tau), x=tau, axis=0) / bank.period


def gram_matrix(bank: DitherBank, quadrature_points: int = 1024) -> np.ndarray:
    """Time-averaged Gram matrix ``(1/T) int U^i U^j``."""
    if quadrature_points < 256:
        raise SignalError("quadrature_points must be >= 256")
    return period_mean(
        bank, lambda tau: np.einsum("ti,tj->tij", bank.U(tau), bank.U(tau)), quadrature_points
    )


def lambda_matrix(bank: DitherBank, quadrature_points: int = 1024) -> np.ndarray:
    """Second-order averaging weights ``(1/(2T)) int U^i U^j``."""
    return 0.5 * gram_matrix(bank, quadrature_points)


@dataclass(frozen=True)
class ShapingFunction:
    """Output-shaping function ``alpha`` and the quantities derived from it.

    ``alpha_alpha_prime`` must be positive and strictly increasing.  ``beta``
    is the integral of ``alpha_alpha_prime - alpha_alpha_prime(0)`` from 0.
    """

    alpha: Callable
    alpha_prime: Callable
    alpha_sq: Callable
    alpha_alpha_prime: Callable
    beta: Callable
    beta_prime: Callable
    name: str = "custom"
    aap0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "aap0", float(self.alpha_alpha_prime(0.0)))


def _logcosh(z):
    a = np.abs(z)
    small = np.log1p(2.0 * np.sinh(0.5 * np.minimum(a, 20.0)) ** 2)
    large = a - math.log(2.0) + np.log1p(np.exp(-2.0 * a))
    return np.where(a < 20.0, small, large)


def _default_alpha_sq(z):
    # z + log(2 cosh z) = max(2z, 0) + log1p(exp(-2|z|)), free of cancellation
    return 2.0 * np.maximum(z, 0.0) + np.log1p(np.exp(-2.0 * np.abs(z)))


def default_shaping() -> ShapingFunction:
    """``alpha(z) = sqrt(z + log(2 cosh z))`` with closed-form derived terms."""

    def alpha(z):
        return np.sqrt(_default_alpha_sq(np.asarray(z, dtype=float)))

    def aap(z):
        return 0.5 * (1.0 + np.tanh(z))

    def alpha_prime(z):
        return aap(z) / alpha(z)

    def beta(z):
        return 0.5 * _logcosh(np.asarray(z, dtype=float))

    def beta_prime(z):
        return 0.5 * np.tanh(z)

    return ShapingFunction(
        alpha=alpha,
        alpha_prime=alpha_prime,
        alpha_sq=lambda z: _default_alpha_sq(np.asarray(z, dtype=float)),
        alpha_alpha_prime=aap,
        beta=beta,
        beta_prime=beta_prime,
        name="default",
    )


def shaping_from_alpha(alpha, alpha_prime=None, fd_step: float = 1e-6) -> ShapingFunction:
    """Wrap a user ``alpha``; ``beta`` falls back to adaptive quadrature."""
    if alpha_prime is None:

        def alpha_prime(z):
            z = np.asarray(z, dtype=float)
            return (alpha(z + fd_step) - alpha(z - fd_step)) / (2.0 * fd_step)

    def aap(z):
        return alpha(z) * alpha_prime(z)

    aap0 = float(aap(0.0))

    def beta_prime(z):
        return aap(z) - aap0

    def beta(z):
        z = np.asarray(z, dtype=float)
        flat = [integrate.quad(lambda s: float(beta_prime(s)), 0.0, float(zi))[0] for zi in z.ravel()]
        return np.reshape(flat, z.shape)

    return ShapingFunction(
        alpha=alpha,
        alpha_prime=alpha_prime,
        alpha_sq=lambda z: alpha(z) ** 2,
        alpha_alpha_prime=aap,
        beta=beta,
        beta_prime=beta_prime,
        name="custom",
    )


def check_shaping(shaping: ShapingFunction, grid=None) -> None:
    """Raise if ``alpha*alpha'`` is not positive and strictly increasing on ``grid``."""
    if grid is None:
        grid = np.linspace(-10.0, 10.0, 2001)
    vals = shaping.alpha_alpha_prime(grid)
    if np.any(vals <= 0):
        raise SignalError("alpha*alpha' must be positive")
    if np.any(np.diff(vals) <= 0):
        raise SignalError("alpha*alpha' must be strictly increasing")
