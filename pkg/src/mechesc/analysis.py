"""Energy function, its derivative, linearization and the practical-stability harness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .averaging import AveragedFlow, tilde_series
from .controller import ClosedLoop, ControllerGains, from_tilde
from .linalg import eigvals, jacobi_eigh
from .plant import PlantModel
from .signals import DitherBank, ShapingFunction
from .sim import integrate, step_size_for


class AnalysisError(ValueError):
    pass


def _gz(x):
    if hasattr(x, "pack"):
        return x.pack()
    g, z = x
    return np.asarray(g, dtype=float), np.asarray(z, dtype=float)


# --------------------------------------------------------------------------
# energy


@dataclass(frozen=True)
class EnergyParams:
    Xi: np.ndarray
    shaping: ShapingFunction
    gains: ControllerGains
    g_star: np.ndarray
    psi_star: float


def xi_matrix(gains: ControllerGains, damping) -> np.ndarray:
    """``b kappa ((a lam - b kappa) I + lam R)^-1``."""
    damping = np.asarray(damping, dtype=float)
    n = damping.shape[0]
    return gains.b * gains.kappa * np.linalg.inv(gains.margin * np.eye(n) + gains.lam * damping)


def energy_params(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                  g_star=None) -> EnergyParams:
    g_star = plant.objective.minimizer if g_star is None else np.asarray(g_star, dtype=float)
    if g_star is None:
        raise AnalysisError("objective has no known minimizer; pass g_star")
    Xi = xi_matrix(gains, plant.damping)
    Xi = 0.5 * (Xi + Xi.T)
    if jacobi_eigh(Xi)[0][0] <= 0:
        raise AnalysisError("Xi is not positive definite")
    return EnergyParams(Xi, shaping, gains, np.asarray(g_star, float), float(plant.output(g_star)))


def _qf(mat, x, y=None):
    y = x if y is None else y
    return np.einsum("...i,ij,...j->...", x, mat, y)


def lyapunov_V(params: EnergyParams, plant: PlantModel, x) -> np.ndarray:
    """Kinetic plus potential energy of an averaged (or transformed) state."""
    g, z = _gz(x)
    gn, sh = params.gains, params.shaping
    n = plant.n
    v, w, eta = z[..., :n], z[..., n:2 * n], z[..., 2 * n]
    y = plant.output(g)
    d = v - (gn.lam / gn.kappa) * w
    return (0.5 * np.sum(v * v, axis=-1) + 0.5 * _qf(params.Xi, d)
            + gn.lam ** 2 * sh.aap0 * (y - params.psi_star)
            + gn.lam ** 2 * sh.beta(y - eta))


def lyapunov_Vdot(params: EnergyParams, plant: PlantModel, x) -> np.ndarray:
    """Closed-form derivative of :func:`lyapunov_V` along the averaged flow."""
    g, z = _gz(x)
    gn, sh = params.gains, params.shaping
    n = plant.n
    v, w, eta = z[..., :n], z[..., n:2 * n], z[..., 2 * n]
    s = plant.output(g) - eta
    R, Xi = plant.damping, params.Xi
    out = (-gn.h * gn.lam ** 2 * sh.beta_prime(s) * s
           - _qf(R, v) - _qf(R @ Xi, v)
           - (gn.lam / gn.kappa ** 2) * gn.margin * _qf(Xi, w))
    if not plant.conn.is_flat:
        out = out - _qf(Xi, plant.drift(v), v - (gn.lam / gn.kappa) * w)
    return out


def chetaev_V_eps(params: EnergyParams, plant: PlantModel, x, eps: float) -> np.ndarray:
    """Energy with the gradient cross terms weighted by ``eps``."""
    if eps < 0:
        raise AnalysisError("eps must be nonnegative")
    g, z = _gz(x)
    gn = params.gains
    n = plant.n
    v, w = z[..., :n], z[..., n:2 * n]
    grad = plant.gradient(g)
    return (lyapunov_V(params, plant, (g, z))
            - eps * (gn.b * gn.kappa / gn.lam) * np.sum(grad * v, axis=-1)
            + eps * (gn.a * gn.lam / gn.kappa) * np.sum(grad * w, axis=-1))


def sublevel_threshold(params: EnergyParams, y0: float) -> float:
    """``lam^2 (alpha alpha')(0) (y0 - psi(g*))``, the sublevel bound on ``V``."""
    return params.gains.lam ** 2 * params.shaping.aap0 * (y0 - params.psi_star)


# --------------------------------------------------------------------------
# linearization and pre-flight checks


def equilibrium_state(plant: PlantModel, g_star=None):
    g_star = plant.objective.minimizer if g_star is None else np.asarray(g_star, dtype=float)
    n = plant.n
    z = np.zeros(2 * n + 1)
    z[-1] = plant.output(g_star)
    return np.asarray(g_star, dtype=float), z


def chart_point(plant: PlantModel, g_star, xi):
    """``g* exp(E xi)`` for frame coordinates ``xi``."""
    return plant.model.compose(g_star, plant.model.exp(plant.frame.E(xi)))


def chart_coords(plant: PlantModel, g_star, g):
    """Inverse of :func:`chart_point` near ``g_star``."""
    m = plant.model
    return plant.frame.E_inv(m.log(m.compose(m.inverse(g_star), g)))


def _chart_field(plant, flow, g_star):
    n = plant.n
    frame, model = plant.frame, plant.model

    def f(x):
        xi = x[:n]
        g = chart_point(plant, g_star, xi)
        body, dz = flow(0.0, g, x[n:])
        v = frame.E_inv(body)
        if not model.abelian:
            # leading term of the inverse exponential differential
            v = v + 0.5 * frame.E_inv(model.bracket(frame.E(xi), body))
        return np.concatenate([v, dz])

    return f


def linearize_averaged(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                       g_star=None, step: float = 1e-5, tol: float = 1e-8):
    """Central-difference Jacobian of the averaged field in exponential-chart
    coordinates ``(xi, v, w, eta)`` about the equilibrium, and its eigenvalues."""
    g_star, z_star = equilibrium_state(plant, g_star)
    flow = AveragedFlow(plant, gains, shaping)
    body, dz = flow(0.0, g_star, z_star)
    res = math.sqrt(float(np.sum(body ** 2) + np.sum(dz ** 2)))
    if res > tol:
        raise AnalysisError(f"state is not an equilibrium of the averaged system (residual {res:.3g})")
    f = _chart_field(plant, flow, g_star)
    x0 = np.concatenate([np.zeros(plant.n), z_star])
    dim = x0.size
    jac = np.empty((dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = step
        jac[:, j] = (f(x0 + e) - f(x0 - e)) / (2.0 * step)
    return jac, eigvals(jac)


def max_imag_ratio(ev) -> float:
    ev = np.asarray(ev)
    return float(np.max(np.abs(ev.imag) / np.abs(ev.real)))


def hessian_check(plant: PlantModel, g_star=None, step: float = 1e-4) -> np.ndarray:
    """Eigenvalues of the central-difference Hessian of the objective in the
    exponential chart at ``g_star``; all positive means a nondegenerate minimum."""
    g_star = plant.objective.minimizer if g_star is None else np.asarray(g_star, dtype=float)
    n = plant.n

    def psi(xi):
        return float(plant.output(chart_point(plant, g_star, xi)))

    hess = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            hess[i, j] = hess[j, i] = (psi(ei + ej) - psi(ei - ej) - psi(ej - ei) + psi(-ei - ej)) / (4 * step * step)
    return jacobi_eigh(hess)[0]


def gradient_floor(plant: PlantModel, samples) -> float:
    """Smallest body-gradient norm over sampled group elements."""
    return float(np.min(np.linalg.norm(plant.gradient(np.asarray(samples, dtype=float)), axis=-1)))


# --------------------------------------------------------------------------
# practical-stability harness


@dataclass
class ScanCell:
    omega: float
    sample: int
    t0: float
    sup_deviation: float
    tail_deviation: float
    final_deviation: float
    entry_time: dict
    faulted: bool
    fault_time: Optional[float]

    def stable(self, eps: float) -> bool:
        return not self.faulted and self.sup_deviation <= eps

    def attractive(self, eps: float) -> bool:
        return not self.faulted and self.tail_deviation <= eps

    def passes(self, eps: float) -> bool:
        return self.attractive(eps)


@dataclass
class StabilityReport:
    flow: str
    delta: float
    horizon: float
    eps_grid: list
    omega_ladder: list
    cells: list = field(default_factory=list)

    def cells_for(self, omega: float) -> list:
        return [c for c in self.cells if c.omega == omega]

    def smallest_passing_eps(self, omega: float) -> Optional[float]:
        cells = self.cells_for(omega)
        for eps in sorted(self.eps_grid):
            if all(c.passes(eps) for c in cells):
                return float(eps)
        return None

    def all_pass(self, eps: float) -> bool:
        return all(c.passes(eps) for c in self.cells)

    def to_dict(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        return {
            "flow": self.flow,
            "delta": self.delta,
            "horizon": self.horizon,
            "eps_grid": [float(e) for e in self.eps_grid],
            "omega_ladder": [float(o) for o in self.omega_ladder],
            "smallest_passing_eps": {str(o): self.smallest_passing_eps(o) for o in self.omega_ladder},
            "cells": [
                {
                    "omega": c.omega,
                    "sample": c.sample,
                    "t0": c.t0,
                    "sup_deviation": num(c.sup_deviation),
                    "tail_deviation": num(c.tail_deviation),
                    "final_deviation": num(c.final_deviation),
                    "entry_time": {str(k): num(v) for k, v in c.entry_time.items()},
                    "stable": {str(e): c.stable(e) for e in self.eps_grid},
                    "attractive": {str(e): c.attractive(e) for e in self.eps_grid},
                    "faulted": c.faulted,
                    "fault_time": num(c.fault_time),
                }
                for c in self.cells
            ],
        }


def sample_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniform samples from the closed ``dim``-ball of the given radius."""
    d = rng.standard_normal((count, dim))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / dim)
    return d * r[:, None]


def deviation_from(plant: PlantModel, g_star, z_star, g, z) -> np.ndarray:
    """Chart distance of ``(g, z)`` from ``(g_star, z_star)``."""
    xi = chart_coords(plant, g_star, g)
    return np.sqrt(np.sum(xi * xi, axis=-1) + np.sum((z - z_star) ** 2, axis=-1))


def practical_stability_scan(plant: PlantModel, gains: ControllerGains, shaping: ShapingFunction,
                             bank: DitherBank, eps_grid, omega_ladder, init_samples: int = 8,
                             horizon: float = 40.0, delta: float = 0.1, n_phases: int = 4,
                             seed: int = 0, flow: str = "closed", steps_per_cycle: int = 50,
                             tail_fraction: float = 0.25, g_star=None) -> StabilityReport:
    """Sample initial transformed states in a ``delta``-ball around the equilibrium
    and record how the transformed trajectories deviate from it.

    Every (omega, sample, dither phase) combination is one cell.  With
    ``flow="averaged"`` the averaged system replaces the closed loop.
    Integration faults are recorded in the cell rather than raised.
    """
    if flow not in ("closed", "averaged"):
        raise AnalysisError(f"flow must be 'closed' or 'averaged', got {flow!r}")
    if not 0 < tail_fraction <= 1:
        raise AnalysisError("tail_fraction must lie in (0, 1]")
    eps_grid = sorted(float(e) for e in eps_grid)
    g_star, z_star = equilibrium_state(plant, g_star)
    n = plant.n
    rng = np.random.default_rng(seed)
    offsets = sample_ball(rng, init_samples, 3 * n + 1, delta)
    g0 = chart_point(plant, g_star, offsets[:, :n])
    zt0 = z_star + offsets[:, n:]
    report = StabilityReport(flow, float(delta), float(horizon), eps_grid, [float(o) for o in omega_ladder])

    for om in omega_ladder:
        gw = gains.with_omega(float(om))
        period = bank.period / gw.omega
        step = step_size_for(gw, steps_per_cycle, bank.period)
        for p in range(n_phases):
            t0 = p * period / n_phases
            if flow == "closed":
                z0 = from_tilde(plant, gw, shaping, bank, t0, g0, zt0)
                traj = integrate(ClosedLoop(plant, gw, shaping, bank), plant.model, g0, z0, t0, t0 + horizon, step)
                zt = tilde_series(plant, gw, shaping, bank, traj)
            else:
                # autonomous: a later start is the same trajectory shifted in time
                if p == 0:
                    base = integrate(AveragedFlow(plant, gw, shaping), plant.model, g0, zt0, 0.0, horizon, step)
                traj = replace(base, times=base.times + t0)
                zt = traj.z
            dev = deviation_from(plant, g_star, z_star, traj.g, zt)  # (T, samples)
            tail_start = t0 + (1.0 - tail_fraction) * horizon
            tail = traj.times >= tail_start - 1e-12
            # running max from the end gives the last exit time of each ball
            rev_max = np.maximum.accumulate(dev[::-1], axis=0)[::-1]
            for i in range(init_samples):
                faulted = bool(traj.faulted[i])
                entry = {}
                for eps in eps_grid:
                    inside = np.nonzero(rev_max[:, i] <= eps)[0]
                    entry[eps] = float(traj.times[inside[0]] - t0) if inside.size and not faulted else math.nan
                complete = len(traj.times) and traj.times[-1] >= t0 + horizon - 1e-9
                report.cells.append(ScanCell(
                    omega=float(om), sample=i, t0=float(t0),
                    sup_deviation=float(np.max(dev[:, i])),
                    tail_deviation=float(np.max(dev[tail, i])) if complete and tail.any() else math.inf,
                    final_deviation=float(dev[-1, i]),
                    entry_time=entry, faulted=faulted,
                    fault_time=float(traj.fault_time[i]) if faulted else None,
                ))
    return report


# --------------------------------------------------------------------------
# trajectory metrics


def smooth(times, signal, window: float) -> np.ndarray:
    """Centered moving average over ``window`` time units (uniform grid)."""
    signal = np.asarray(signal, dtype=float)
    if window <= 0 or len(times) < 2:
        return signal.copy()
    k = max(1, int(round(window / (times[1] - times[0]))))
    if k == 1:
        return signal.copy()
    kernel = np.ones(k) / k
    padded = np.pad(signal, (k // 2, k - 1 - k // 2), mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def crossing_times(times, signal, window: float = 0.0, deadband: float = 0.0) -> np.ndarray:
    """Times at which the smoothed signal changes sign.

    With a deadband the sign only flips once the signal has moved beyond
    ``+-deadband``; small wiggles around zero are ignored.
    """
    x = smooth(times, signal, window)
    out = []
    state = 0
    for t, val in zip(times, x):
        s = 1 if val > deadband else (-1 if val < -deadband else 0)
        if s == 0:
            continue
        if state != 0 and s != state:
            out.append(t)
        state = s
    return np.asarray(out)


def sign_changes(times, signal, window: float = 0.0, deadband: float = 0.0) -> int:
    return int(len(crossing_times(times, signal, window, deadband)))


def dominant_period(times, signal, window: float = 0.0, deadband: float = 0.0) -> float:
    """Twice the mean spacing of successive sign changes; NaN with fewer than two."""
    ct = crossing_times(times, signal, window, deadband)
    if len(ct) < 2:
        return math.nan
    return float(2.0 * np.mean(np.diff(ct)))
