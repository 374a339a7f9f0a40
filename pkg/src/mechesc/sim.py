"""Fixed-step geometric Runge-Kutta integration and trajectory records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import LieGroupModel

DEFECT_TOL = 1e-6
MIN_STEPS_PER_CYCLE = 50


@dataclass
class Trajectory:
    """Recorded states on a time grid.

    ``g`` has shape ``(T, ..., D)`` and ``z`` shape ``(T, ..., N)``; the
    ellipsis is the batch shape of the initial state.  ``faulted`` and
    ``fault_time`` carry the batch shape (``fault_time`` is NaN when fine).
    """

    times: np.ndarray
    g: np.ndarray
    z: np.ndarray
    defect: np.ndarray
    faulted: np.ndarray
    fault_time: np.ndarray
    fault_reason: list = field(default_factory=list)
    y: Optional[np.ndarray] = None
    energy: Optional[np.ndarray] = None

    @property
    def any_fault(self) -> bool:
        return bool(np.any(self.faulted))

    def __len__(self):
        return len(self.times)


def step_size_for(gains, periods_per_cycle: int = 200, period: float = 2.0 * math.pi) -> float:
    """Step that resolves one dither cycle ``period/omega`` with the given count."""
    if periods_per_cycle < MIN_STEPS_PER_CYCLE:
        raise ValueError(f"need at least {MIN_STEPS_PER_CYCLE} steps per dither cycle")
    return period / gains.omega / periods_per_cycle


def rkmk4_step(rhs, model: LieGroupModel, t, g, z, h):
    """One Runge-Kutta-Munthe-Kaas step of order four for ``g' = g xi``, ``z' = d``.

    Stage group points are reached by exponential flows from ``g``; the
    commutator terms are the leading ``dexp^{-1}`` corrections for left
    trivialization.
    """
    xi1, d1 = rhs(t, g, z)
    g2 = model.compose(g, model.exp(0.5 * h * xi1))
    xi2, d2 = rhs(t + 0.5 * h, g2, z + 0.5 * h * d1)
    th3 = 0.5 * h * xi2
    if not model.abelian:
        th3 = th3 + (h * h / 8.0) * model.bracket(xi1, xi2)
    g3 = model.compose(g, model.exp(th3))
    xi3, d3 = rhs(t + 0.5 * h, g3, z + 0.5 * h * d2)
    g4 = model.compose(g, model.exp(h * xi3))
    xi4, d4 = rhs(t + h, g4, z + h * d3)
    theta = (h / 6.0) * (xi1 + 2.0 * xi2 + 2.0 * xi3 + xi4)
    if not model.abelian:
        theta = theta + (h * h / 12.0) * model.bracket(xi1, xi4)
    g_new = model.compose(g, model.exp(theta))
    z_new = z + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    return g_new, z_new


def integrate(rhs: Callable, model: LieGroupModel, g0, z0, t0: float, t_end: float, step: float,
              thin: int = 1, defect_tol: float = DEFECT_TOL) -> Trajectory:
    """Integrate ``rhs(t, g, z) -> (xi, z')`` from ``t0`` to ``t_end``.

    The step is shrunk so that a whole number of steps covers the horizon.
    Batched initial states are advanced together; a sample whose state turns
    non-finite or leaves the manifold by more than ``defect_tol`` is frozen
    and marked faulted at that time.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if not t_end > t0:
        raise ValueError("t_end must exceed t0")
    if thin < 1:
        raise ValueError("thin must be >= 1")
    n_steps = max(1, math.ceil((t_end - t0) / step - 1e-9))
    h = (t_end - t0) / n_steps
    g = np.array(g0, dtype=float)
    z = np.array(z0, dtype=float)
    batch = np.broadcast_shapes(g.shape[:-1], z.shape[:-1])
    g = np.broadcast_to(g, batch + g.shape[-1:]).copy()
    z = np.broadcast_to(z, batch + z.shape[-1:]).copy()

    faulted = np.zeros(batch, dtype=bool)
    fault_time = np.full(batch, np.nan)
    reasons: list = []

    rec_idx = list(range(0, n_steps + 1, thin))
    if rec_idx[-1] != n_steps:
        rec_idx.append(n_steps)
    n_rec = len(rec_idx)
    times = np.empty(n_rec)
    gs = np.empty((n_rec,) + g.shape)
    zs = np.empty((n_rec,) + z.shape)
    defects = np.empty((n_rec,) + batch)

    d0 = model.defect(g)
    bad0 = ~(np.all(np.isfinite(g), axis=-1) & np.all(np.isfinite(z), axis=-1)) | (d0 > defect_tol)
    if np.any(bad0):
        raise ValueError("initial state is non-finite or off the manifold")
    times[0], gs[0], zs[0], defects[0] = t0, g, z, d0
    r = 1
    any_fault = False
    for k in range(1, n_steps + 1):
        t = t0 + (k - 1) * h
        with np.errstate(all="ignore"):
            g_new, z_new = rkmk4_step(rhs, model, t, g, z, h)
            d = model.defect(g_new)
        ok = np.isfinite(g_new).all(axis=-1) & np.isfinite(z_new).all(axis=-1) & (d <= defect_tol)
        if not ok.all() or any_fault:
            newly = ~ok & ~faulted
            if newly.any():
                fault_time[newly] = t0 + k * h
                faulted |= newly
                any_fault = True
                reasons.append((t0 + k * h, "non-finite state or manifold defect above tolerance"))
            keep = faulted[..., None]
            g_new = np.where(keep, g, g_new)
            z_new = np.where(keep, z, z_new)
            d = np.where(faulted, model.defect(g), d)
            if faulted.all():
                g, z = g_new, z_new
                times[r], gs[r], zs[r], defects[r] = t0 + k * h, g, z, d
                r += 1
                break
        g, z = g_new, z_new
        if rec_idx[r] == k:
            times[r] = t0 + k * h
            gs[r], zs[r], defects[r] = g, z, d
            r += 1
    if r < n_rec:
        times, gs, zs, defects = times[:r], gs[:r], zs[:r], defects[:r]
    return Trajectory(times, gs, zs, defects, faulted, fault_time, reasons)
