"""Averaged dynamics, symmetric-product identity and the approximation metric."""

from __future__ import annotations

import numpy as np

from .controller import ClosedLoop, ClosedLoopState, ControllerGains, to_tilde
from .plant import PlantModel
from .signals import DitherBank, ShapingFunction
from .sim import Trajectory, integrate, step_size_for

SYM_FD_STEP = 1e-5


class AveragedState(ClosedLoopState):
    """``(g, v, w, eta)`` of the averaged system; same packing as the closed loop."""


class AveragedFlow:
    """Autonomous averaged vector field ``f(t, g, z) -> (raw body velocity, z')``.

    ``t`` is accepted for a uniform integrator interface and ignored.
    """

    def __init__(self, plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction):
        self.plant = plant
        self.gains = gains
        self.shaping = shaping
        self.model = plant.model
        self.n = plant.n
        self._flat = plant.conn.is_flat

    def __call__(self, t, g, z):
        plant, gains = self.plant, self.gains
        n = self.n
        v, w, eta = z[..., :n], z[..., n:2 * n], z[..., 2 * n]
        y = plant.objective.value(g)
        s = y - eta
        force = self.shaping.alpha_alpha_prime(s)[..., None] * plant.gradient(g)
        vdot = -v @ plant.damping.T - gains.b * w - gains.lam ** 2 * force
        if not self._flat:
            vdot = vdot - plant.drift(v)
        wdot = -gains.a * w - gains.kappa * gains.lam * force
        etadot = gains.h * s
        return plant.frame.E(v), np.concatenate([vdot, wdot, etadot[..., None]], axis=-1)


def averaged_rhs(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                 state: AveragedState, t: float = 0.0) -> AveragedState:
    """Time derivative of ``state``; the ``g`` entry holds the ambient velocity."""
    g, z = state.pack()
    xi, dz = AveragedFlow(plant, gains, shaping)(t, g, z)
    return AveragedState.unpack(plant.model.tangent_lift(g, xi), dz, plant.n)


def symmetric_product_check(plant: PlantModel, shaping: ShapingFunction, g, eta,
                            lam: float = 1.0, fd_step: float = SYM_FD_STEP) -> float:
    """Residual of the averaged-force identity for ``Y_i = lam * alpha(psi - eta) e_i``.

    The left side ``-1/2 sum_i <Y_i : Y_i>`` is assembled from central-difference
    derivatives of the coefficient along each left-invariant field plus the
    connection terms; the right side uses the analytic shaping products, the
    body gradient and ``mu``.
    """
    g = np.asarray(g, dtype=float)
    model, frame = plant.model, plant.frame
    n = plant.n

    def coeff(x):
        return lam * shaping.alpha(plant.objective.value(x) - eta)

    f = coeff(g)
    step = fd_step * max(1.0, float(np.max(np.abs(g))))
    lhs = np.zeros(n)
    for i in range(n):
        e = frame.basis[:, i]
        df = (coeff(model.retract(g, e, step)) - coeff(model.retract(g, e, -step))) / (2.0 * step)
        unit = np.zeros(n)
        unit[i] = 1.0
        # <Y:Y> = 2 nabla_Y Y = 2 (f e_i(f) e_i + f^2 nabla_{e_i} e_i)
        lhs -= f * df * unit + f * f * plant.conn(unit, unit)
    s = plant.objective.value(g) - eta
    rhs = (-lam ** 2 * shaping.alpha_alpha_prime(s) * plant.gradient(g)
           - lam ** 2 * shaping.alpha_sq(s) * plant.mu)
    return float(np.linalg.norm(lhs - rhs))


def transformed_distance(plant, g_a, z_a, g_b, z_b) -> np.ndarray:
    """Ambient distance: embedded group part plus frame-coordinate vector part."""
    return np.sqrt(np.sum((g_a - g_b) ** 2, axis=-1) + np.sum((z_a - z_b) ** 2, axis=-1))


def tilde_series(plant, gains, shaping, bank, traj: Trajectory) -> np.ndarray:
    """Transformed vector part at every recorded time of a closed-loop trajectory."""
    t = traj.times.reshape((-1,) + (1,) * (traj.z.ndim - 2))
    return to_tilde(plant, gains, shaping, bank, t, traj.g, traj.z)


def approximation_error(closed_traj: Trajectory, avg_traj: Trajectory, plant: PlantModel,
                        gains: ControllerGains, shaping: ShapingFunction, bank: DitherBank) -> float:
    """Sup over the shared grid of the distance between the transformed closed loop
    and the averaged trajectory."""
    if closed_traj.times.shape != avg_traj.times.shape or not np.allclose(
            closed_traj.times, avg_traj.times, rtol=0.0, atol=1e-12):
        raise ValueError("trajectories must share the time grid")
    if closed_traj.any_fault or avg_traj.any_fault:
        return float("inf")
    zt = tilde_series(plant, gains, shaping, bank, closed_traj)
    dist = transformed_distance(plant, closed_traj.g, zt, avg_traj.g, avg_traj.z)
    return float(np.max(dist))


def compare_runs(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                 bank: DitherBank, g0, z0, t0: float, t_end: float,
                 steps_per_cycle: int = 200, thin: int = 1):
    """Integrate the closed loop from ``(g0, z0)`` and the averaged system from the
    transformed initial state on the same grid.

    Returns ``(closed, averaged, sup_error)``.
    """
    step = step_size_for(gains, steps_per_cycle, bank.period)
    closed = integrate(ClosedLoop(plant, gains, shaping, bank), plant.model, g0, z0, t0, t_end, step, thin)
    zt0 = to_tilde(plant, gains, shaping, bank, t0, np.asarray(g0, float), np.asarray(z0, float))
    averaged = integrate(AveragedFlow(plant, gains, shaping), plant.model, g0, zt0, t0, t_end, step, thin)
    return closed, averaged, approximation_error(closed, averaged, plant, gains, shaping, bank)


def omega_ladder_errors(plant, gains, shaping, bank, g0, z0, omegas, t_end: float,
                        t0: float = 0.0, steps_per_cycle: int = 200, thin: int = 1) -> list:
    """``[{"omega": w, "sup_error": e}, ...]`` for each dither frequency."""
    out = []
    for om in omegas:
        gw = gains.with_omega(float(om))
        _, _, err = compare_runs(plant, gw, shaping, bank, g0, z0, t0, t_end, steps_per_cycle, thin)
        out.append({"omega": float(om), "sup_error": err})
    return out
