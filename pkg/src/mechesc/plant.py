"""Fully actuated Euler-Poincare plants and the built-in objectives."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    AlgebraFrame,
    ConnectionTable,
    EuclideanGroup,
    LieGroupModel,
    Objective,
    SE3Group,
    body_gradient,
    mu,
)
from .linalg import jacobi_eigh, spd_power


class PlantError(ValueError):
    pass


# --------------------------------------------------------------------------
# objectives


def plane_objective() -> Objective:
    """``-1 + g1**2 + g2**2/2`` on ``R^2``, minimized at the origin."""

    def value(g):
        g = np.asarray(g, dtype=float)
        return -1.0 + g[..., 0] ** 2 + 0.5 * g[..., 1] ** 2

    def grad(g):
        g = np.asarray(g, dtype=float)
        return np.stack([2.0 * g[..., 0], g[..., 1]], axis=-1)

    return Objective(value, grad, name="plane", minimizer=np.zeros(2))


def quadratic_objective(weights, offset: float = 0.0) -> Objective:
    """``offset + sum_i weights_i g_i**2 / 2`` on ``R^n``."""
    w = np.asarray(weights, dtype=float)

    def value(g):
        return offset + 0.5 * np.sum(w * np.asarray(g, dtype=float) ** 2, axis=-1)

    def grad(g):
        return w * np.asarray(g, dtype=float)

    return Objective(value, grad, name="quadratic", minimizer=np.zeros(len(w)))


def constant_objective(c: float, embed_dim: int) -> Objective:
    def value(g):
        return np.full(np.shape(g)[:-1], float(c))

    def grad(g):
        return np.zeros(np.shape(g))

    return Objective(value, grad, name="constant")


def se3_objective() -> Objective:
    """``|R - I|_F**2 / 4 + |r|**2 / 2`` on SE(3), minimized at the identity."""

    def value(g):
        g = np.asarray(g, dtype=float)
        d = g[..., :9] - np.eye(3).ravel()
        return 0.25 * np.sum(d * d, axis=-1) + 0.5 * np.sum(g[..., 9:] ** 2, axis=-1)

    def grad(g):
        g = np.asarray(g, dtype=float)
        return np.concatenate([0.5 * (g[..., :9] - np.eye(3).ravel()), g[..., 9:]], axis=-1)

    return Objective(value, grad, name="se3", minimizer=SE3Group().identity)


OBJECTIVES = {
    "plane": plane_objective,
    "se3": se3_objective,
}


# --------------------------------------------------------------------------
# plant


@dataclass(frozen=True)
class PlantModel:
    """Euler-Poincare dynamics ``v' + nabla_v v = -R v + u`` in frame coordinates."""

    model: LieGroupModel
    frame: AlgebraFrame
    conn: ConnectionTable
    damping: np.ndarray
    objective: Objective
    name: str = "custom"
    params: dict = field(default_factory=dict)
    mu_cached: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.model.n
        if self.frame.n != n or self.conn.n != n:
            raise PlantError("model, frame and connection dimensions differ")
        damping = np.array(self.damping, dtype=float)
        if damping.shape != (n, n):
            raise PlantError(f"damping must be {n}x{n}")
        if np.max(np.abs(damping - damping.T)) > 1e-12:
            raise PlantError("damping must be symmetric")
        if np.any(jacobi_eigh(damping)[0] < -1e-10):
            raise PlantError("damping must be positive semidefinite")
        object.__setattr__(self, "damping", damping)
        object.__setattr__(self, "mu_cached", mu(self.frame, self.conn))

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def mu(self) -> np.ndarray:
        return self.mu_cached

    def drift(self, v) -> np.ndarray:
        """``nabla_v v`` in frame coordinates."""
        return self.conn.quadratic(v)

    def output(self, g) -> np.ndarray:
        return self.objective.value(g)

    def gradient(self, g, use_analytic: bool = True) -> np.ndarray:
        return body_gradient(self.model, self.frame, self.objective, g, use_analytic)

    def body_velocity(self, v) -> np.ndarray:
        """Raw algebra velocity used to advance the group component."""
        return self.frame.E(v)


def euler_poincare_rhs(plant: PlantModel, g, v, u):
    """Return ``(raw body velocity, v')`` for the open-loop plant."""
    v = np.asarray(v, dtype=float)
    vdot = -plant.drift(v) - v @ plant.damping.T + u
    return plant.body_velocity(v), vdot


def measure_output(plant: PlantModel, g):
    return plant.output(g)


def flat_plant(n: int = 2, damping: float | np.ndarray = 0.0, objective: Objective | None = None,
               name: str = "flat") -> PlantModel:
    """Double-integrator point on ``R^n`` with Euclidean metric."""
    damping = np.asarray(damping, dtype=float)
    if damping.ndim == 0:
        damping = float(damping) * np.eye(n)
    if objective is None:
        objective = plane_objective() if n == 2 else quadratic_objective(np.ones(n))
    return PlantModel(EuclideanGroup(n), AlgebraFrame.standard(n), ConnectionTable.zero(n),
                      damping, objective, name)


def double_integrator_plant(damping: float = 0.0, objective: Objective | None = None) -> PlantModel:
    return flat_plant(2, damping, objective or plane_objective(), name="double-integrator")


def _check_spd(mat, label):
    mat = np.asarray(mat, dtype=float)
    if mat.shape != (3, 3):
        raise PlantError(f"{label} must be 3x3")
    if np.max(np.abs(mat - mat.T)) > 1e-12 * max(1.0, np.max(np.abs(mat))):
        raise PlantError(f"{label} must be symmetric")
    if np.min(jacobi_eigh(mat)[0]) <= 0:
        raise PlantError(f"{label} must be positive definite")
    return mat


def kirchhoff_drift_raw(J, M, omega, vel):
    """Bilinear terms of the Kirchhoff equations at ``(Omega, V)``.

    Returns ``(J^-1 (Omega x J Omega + V x M V), M^-1 (Omega x M V))``.
    """
    jw = np.einsum("ij,...j->...i", J, omega)
    mv = np.einsum("ij,...j->...i", M, vel)
    dw = np.einsum("ij,...j->...i", np.linalg.inv(J), np.cross(omega, jw) + np.cross(vel, mv))
    dv = np.einsum("ij,...j->...i", np.linalg.inv(M), np.cross(omega, mv))
    return dw, dv


def kirchhoff_plant(J, M, objective: Objective | None = None, damping=None) -> PlantModel:
    """Rigid body in an ideal fluid on SE(3).

    The frame is ``e_i = (J^{-1/2} eps_i, 0)``, ``e_{i+3} = (0, M^{-1/2} eps_i)``,
    orthonormal for the kinetic-energy metric ``diag(J, M)``.  Inputs in frame
    coordinates correspond to forces ``f_Omega = J u_Omega``, ``f_V = M u_V``.
    """
    J = _check_spd(J, "J")
    M = _check_spd(M, "M")
    basis = np.zeros((6, 6))
    basis[:3, :3] = spd_power(J, -0.5)
    basis[3:, 3:] = spd_power(M, -0.5)
    metric = np.zeros((6, 6))
    metric[:3, :3] = J
    metric[3:, 3:] = M
    frame = AlgebraFrame(basis, metric)
    jinv = np.linalg.inv(J)
    minv = np.linalg.inv(M)

    def quad(x):
        xi = frame.E(x)
        w, v = xi[:3], xi[3:]
        raw = np.concatenate([jinv @ (np.cross(w, J @ w) + np.cross(v, M @ v)), minv @ np.cross(w, M @ v)])
        return frame.E_inv(raw)

    conn = ConnectionTable.from_quadratic(quad, 6)
    return PlantModel(
        SE3Group(), frame, conn, np.zeros((6, 6)) if damping is None else damping,
        objective or se3_objective(), name="kirchhoff", params={"J": J, "M": M},
    )


def kirchhoff_forces(J, M, u_raw):
    """Force/torque pair realizing a raw algebra input ``(u_Omega, u_V)``."""
    u_raw = np.asarray(u_raw, dtype=float)
    return J @ u_raw[..., :3], M @ u_raw[..., 3:]


def kinetic_energy(plant: PlantModel, v) -> np.ndarray:
    """``0.5 * I(E v, E v)``; equals ``0.5 |v|^2`` for an orthonormal frame."""
    xi = plant.frame.E(v)
    return 0.5 * plant.frame.inner(xi, xi)


KIRCHHOFF_J = np.array([[5.0, 0.0, -2.0], [0.0, 7.0, 2.0], [-2.0, 2.0, 6.0]]) / 3.0
KIRCHHOFF_M = np.array([[7.0, 0.0, 2.0], [0.0, 5.0, -2.0], [2.0, -2.0, 6.0]]) / 3.0
FIG2_R0 = np.array([[-1.0, 2.0, -2.0], [-2.0, 1.0, 2.0], [2.0, 2.0, 1.0]]) / 3.0
FIG2_r0 = np.ones(3)
