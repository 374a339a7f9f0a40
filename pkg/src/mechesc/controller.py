"""Extremum-seeking output feedback, compensator/filter and the closed loop.

Vector parts of the state are packed as ``z = [v (n), w (n), eta]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plant import PlantModel
from .signals import DitherBank, ShapingFunction


class GainError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    a: float
    lam: float
    b: float
    kappa: float
    h: float = 1.0
    omega: float = 30.0

    def __post_init__(self):
        bad = [k for k in ("a", "lam", "b", "kappa", "h", "omega") if not getattr(self, k) > 0]
        if bad:
            raise GainError(f"gains must be strictly positive: {', '.join(bad)}")
        if not self.a * self.lam - self.b * self.kappa > 0:
            raise GainError(
                f"gains violate a*lambda - b*kappa > 0 "
                f"(a*lambda - b*kappa = {self.a * self.lam - self.b * self.kappa:g})"
            )

    @property
    def margin(self) -> float:
        return self.a * self.lam - self.b * self.kappa

    def with_omega(self, omega: float) -> "ControllerGains":
        return ControllerGains(self.a, self.lam, self.b, self.kappa, self.h, omega)


@dataclass
class ControllerState:
    w: np.ndarray
    eta: float


@dataclass
class ClosedLoopState:
    """``(g, v, w, eta)``; ``v`` and ``w`` in frame coordinates."""

    g: np.ndarray
    v: np.ndarray
    w: np.ndarray
    eta: float | np.ndarray

    def pack(self):
        z = np.concatenate([np.asarray(self.v, float), np.asarray(self.w, float),
                            np.asarray(self.eta, float)[..., None]], axis=-1)
        return np.asarray(self.g, dtype=float), z

    @classmethod
    def unpack(cls, g, z, n: int) -> "ClosedLoopState":
        z = np.asarray(z, dtype=float)
        return cls(np.asarray(g, dtype=float), z[..., :n], z[..., n:2 * n], z[..., 2 * n])


def split_z(z, n):
    return z[..., :n], z[..., n:2 * n], z[..., 2 * n]


def pack_z(v, w, eta):
    return np.concatenate([v, w, np.asarray(eta, dtype=float)[..., None]], axis=-1)


def _check_bank(bank: DitherBank, n: int):
    if bank.m != n:
        raise ValueError(f"dither bank has {bank.m} channels but the plant has dimension {n}")


def control_input(gains: ControllerGains, shaping: ShapingFunction, bank: DitherBank, mu,
                  t: float, y, state: ControllerState) -> np.ndarray:
    """Output feedback ``u`` in frame coordinates."""
    tau = gains.omega * t
    s = np.asarray(y - state.eta, dtype=float)
    al = shaping.alpha(s)[..., None]
    U = bank.U(tau)
    u = bank.u(tau)
    return (-gains.b * (state.w - gains.kappa * al * U)
            + gains.lam * al * gains.omega * u
            + gains.lam ** 2 * shaping.alpha_sq(s)[..., None] * mu)


def controller_rhs(gains: ControllerGains, shaping: ShapingFunction, bank: DitherBank,
                   t: float, y, state: ControllerState):
    """Return ``(w', eta')`` of the phase-lead compensator and high-pass filter."""
    tau = gains.omega * t
    s = np.asarray(y - state.eta, dtype=float)
    al = shaping.alpha(s)[..., None]
    wdot = (-gains.a * (state.w - gains.kappa * al * bank.U(tau))
            + gains.kappa * al * gains.omega * bank.u(tau))
    etadot = -gains.h * state.eta + gains.h * y
    return wdot, etadot


class ClosedLoop:
    """Closed-loop vector field ``f(t, g, z) -> (raw body velocity, z')``."""

    def __init__(self, plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                 bank: DitherBank):
        _check_bank(bank, plant.n)
        self.plant = plant
        self.gains = gains
        self.shaping = shaping
        self.bank = bank
        self.model = plant.model
        self.n = plant.n
        self._flat = plant.conn.is_flat
        self._mu_zero = not np.any(plant.mu)

    def __call__(self, t, g, z):
        plant, gains, shaping, bank = self.plant, self.gains, self.shaping, self.bank
        n = self.n
        v, w, eta = z[..., :n], z[..., n:2 * n], z[..., 2 * n]
        y = plant.objective.value(g)
        tau = gains.omega * t
        U = bank.U(tau)
        u = bank.u(tau)
        s = y - eta
        al = shaping.alpha(s)[..., None]
        osc = al * u * gains.omega
        vdot = -gains.b * (w - gains.kappa * al * U) + gains.lam * osc - v @ plant.damping.T
        if not self._mu_zero:
            vdot = vdot + gains.lam ** 2 * shaping.alpha_sq(s)[..., None] * plant.mu
        if not self._flat:
            vdot = vdot - plant.drift(v)
        wdot = -gains.a * (w - gains.kappa * al * U) + gains.kappa * osc
        etadot = gains.h * s
        return plant.frame.E(v), np.concatenate([vdot, wdot, etadot[..., None]], axis=-1)

    def initial_state(self, g0, v0=None, w0=None, eta0=None):
        """Pack an initial state; ``eta0`` defaults to the output at ``g0``."""
        n = self.n
        g0 = np.asarray(g0, dtype=float)
        v0 = np.zeros(n) if v0 is None else np.asarray(v0, dtype=float)
        w0 = np.zeros(n) if w0 is None else np.asarray(w0, dtype=float)
        eta0 = self.plant.output(g0) if eta0 is None else eta0
        return g0, pack_z(v0, w0, eta0)


def closed_loop_rhs(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                    bank: DitherBank, t: float, state: ClosedLoopState) -> ClosedLoopState:
    """Time derivative of ``state``; the ``g`` entry holds the ambient velocity."""
    g, z = state.pack()
    xi, dz = ClosedLoop(plant, gains, shaping, bank)(t, g, z)
    return ClosedLoopState.unpack(plant.model.tangent_lift(g, xi), dz, plant.n)


def _shift(plant, gains, shaping, bank, t, g, z, sign):
    n = plant.n
    s = plant.objective.value(g) - z[..., 2 * n]
    al = shaping.alpha(s)[..., None]
    U = bank.U(gains.omega * t)
    out = np.array(z, dtype=float, copy=True)
    out[..., :n] += sign * gains.lam * al * U
    out[..., n:2 * n] += sign * gains.kappa * al * U
    return out


def to_tilde(plant, gains, shaping, bank, t, g, z):
    """Change of variables removing the dither-driven part of ``v`` and ``w``.

    Returns the transformed vector part; the group part is unchanged.
    """
    return _shift(plant, gains, shaping, bank, t, g, z, -1.0)


def from_tilde(plant, gains, shaping, bank, t, g, z_tilde):
    return _shift(plant, gains, shaping, bank, t, g, z_tilde, +1.0)


def dither_period(gains: ControllerGains, bank: DitherBank) -> float:
    return bank.period / gains.omega


class OpenLoop:
    """Unforced plant in the closed-loop packing; ``w`` and ``eta`` stay constant."""

    def __init__(self, plant: PlantModel):
        self.plant = plant
        self.model = plant.model
        self.n = plant.n

    def __call__(self, t, g, z):
        n = self.n
        v = z[..., :n]
        vdot = -v @ self.plant.damping.T
        if not self.plant.conn.is_flat:
            vdot = vdot - self.plant.drift(v)
        return self.plant.frame.E(v), np.concatenate([vdot, np.zeros_like(z[..., n:])], axis=-1)
