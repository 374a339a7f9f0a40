"""Lie groups embedded in Euclidean space, algebra frames and connections.

Group elements are flat arrays of embedded coordinates, shape ``(..., D)``.
Algebra elements use the model's *raw* coordinates, shape ``(..., n)``
(for SE(3) that is ``(Omega, V)``).  An :class:`AlgebraFrame` maps between raw
coordinates and coordinates with respect to an orthonormal basis.  All
operations broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class GeometryError(ValueError):
    pass


# --------------------------------------------------------------------------
# so(3) helpers


def hat(omega) -> np.ndarray:
    """Skew matrix of a 3-vector: ``hat(a) @ b == cross(a, b)``."""
    omega = np.asarray(omega, dtype=float)
    out = np.zeros(omega.shape[:-1] + (3, 3))
    x, y, z = omega[..., 0], omega[..., 1], omega[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def cross(a, b) -> np.ndarray:
    """Broadcasting 3-vector cross product (cheaper than ``np.cross`` on small inputs)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[..., 0] = a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1]
    out[..., 1] = a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2]
    out[..., 2] = a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]
    return out


def unhat(m, tol: float = 1e-10) -> np.ndarray:
    """Inverse of :func:`hat`; rejects matrices that are not skew."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise GeometryError("unhat expects 3x3 matrices")
    if np.max(np.abs(m + np.swapaxes(m, -1, -2)), initial=0.0) > tol:
        raise GeometryError("matrix is not skew-symmetric")
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _so3_coeffs(theta):
    """``sin t/t``, ``(1-cos t)/t^2``, ``(t-sin t)/t^3`` with small-angle series."""
    small = theta < 1e-4
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    a = np.where(small, 1.0 - t2 / 6.0, np.sin(t) / t)
    b = np.where(small, 0.5 - t2 / 24.0, (1.0 - np.cos(t)) / (t * t))
    c = np.where(small, 1.0 / 6.0 - t2 / 120.0, (t - np.sin(t)) / (t * t * t))
    return a, b, c


def so3_exp(omega) -> np.ndarray:
    """Rodrigues formula."""
    omega = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(omega, axis=-1)
    a, b, _ = _so3_coeffs(theta)
    k = hat(omega)
    return np.eye(3) + a[..., None, None] * k + b[..., None, None] * (k @ k)


def so3_log(rot) -> np.ndarray:
    """Rotation vector of a rotation matrix, angle in ``[0, pi]``."""
    rot = np.asarray(rot, dtype=float)
    cos_t = np.clip((np.trace(rot, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    skew = 0.5 * np.stack(
        [rot[..., 2, 1] - rot[..., 1, 2], rot[..., 0, 2] - rot[..., 2, 0], rot[..., 1, 0] - rot[..., 0, 1]],
        axis=-1,
    )
    # atan2 stays well conditioned near 0 and pi, unlike arccos
    theta = np.arctan2(np.linalg.norm(skew, axis=-1), cos_t)
    sin_t = np.sin(theta)
    small = theta < 1e-6
    factor = np.where(small, 1.0 + theta**2 / 6.0, theta / np.where(small, 1.0, sin_t))
    out = factor[..., None] * skew
    near_pi = np.pi - theta < 1e-4
    if np.any(near_pi):
        # axis from (R + R^T)/2 - cos(theta) I = (1 - cos(theta)) n n^T
        sym = 0.5 * (rot + np.swapaxes(rot, -1, -2)) - cos_t[..., None, None] * np.eye(3)
        diag = np.diagonal(sym, axis1=-2, axis2=-1)
        idx = np.argmax(diag, axis=-1)
        col = np.take_along_axis(sym, idx[..., None, None], axis=-1)[..., 0]
        axis = col / np.linalg.norm(col, axis=-1, keepdims=True)
        # fix the sign with the (small) skew part
        sign = np.where(np.sum(axis * skew, axis=-1) < 0, -1.0, 1.0)
        alt = (theta * sign)[..., None] * axis
        out = np.where(near_pi[..., None], alt, out)
    return out


# --------------------------------------------------------------------------
# group models


def _scale(xi, dt):
    xi = np.asarray(xi, dtype=float)
    if np.ndim(dt):
        return np.asarray(dt, dtype=float)[..., None] * xi
    return dt * xi


class LieGroupModel:
    """Matrix Lie group embedded in ``R^D`` with left-invariant flows."""

    name = "abstract"
    abelian = False
    n: int
    embed_dim: int

    @property
    def identity(self) -> np.ndarray:
        raise NotImplementedError

    def exp(self, xi) -> np.ndarray:
        raise NotImplementedError

    def log(self, g) -> np.ndarray:
        raise NotImplementedError

    def compose(self, g, h) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, g) -> np.ndarray:
        raise NotImplementedError

    def tangent_lift(self, g, xi) -> np.ndarray:
        """Ambient image of ``T_e L_g (xi)``."""
        raise NotImplementedError

    def bracket(self, x, y) -> np.ndarray:
        raise NotImplementedError

    def defect(self, g) -> np.ndarray:
        raise NotImplementedError

    def retract(self, g, xi, dt=1.0) -> np.ndarray:
        """Flow from ``g`` along the left-invariant field of ``xi`` for ``dt``."""
        return self.compose(g, self.exp(_scale(xi, dt)))

    def distance(self, g, h) -> np.ndarray:
        return np.linalg.norm(np.asarray(g) - np.asarray(h), axis=-1)


class EuclideanGroup(LieGroupModel):
    """``R^n`` under addition."""

    name = "rn"
    abelian = True

    def __init__(self, n: int):
        if n < 1:
            raise GeometryError("dimension must be >= 1")
        self.n = self.embed_dim = int(n)

    @property
    def identity(self):
        return np.zeros(self.n)

    def exp(self, xi):
        return np.asarray(xi, dtype=float)

    def log(self, g):
        return np.asarray(g, dtype=float)

    def compose(self, g, h):
        return np.asarray(g, dtype=float) + h

    def inverse(self, g):
        return -np.asarray(g, dtype=float)

    def tangent_lift(self, g, xi):
        return np.broadcast_to(np.asarray(xi, dtype=float), np.broadcast_shapes(np.shape(g), np.shape(xi))).copy()

    def bracket(self, x, y):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))

    def defect(self, g):
        return np.zeros(np.shape(g)[:-1])

    def retract(self, g, xi, dt=1.0):
        return np.asarray(g, dtype=float) + _scale(xi, dt)


class SE3Group(LieGroupModel):
    """SE(3) embedded in ``R^12`` as ``[R (row-major), r]``.

    Algebra raw coordinates are ``(Omega, V)``; the element acts as
    ``R' = R hat(Omega)``, ``r' = R V``.
    """

    name = "se3"
    n = 6
    embed_dim = 12

    @staticmethod
    def split(g):
        g = np.asarray(g, dtype=float)
        return g[..., :9].reshape(g.shape[:-1] + (3, 3)), g[..., 9:]

    @staticmethod
    def join(rot, r):
        rot = np.asarray(rot, dtype=float)
        return np.concatenate([rot.reshape(rot.shape[:-2] + (9,)), np.asarray(r, dtype=float)], axis=-1)

    @property
    def identity(self):
        return self.join(np.eye(3), np.zeros(3))

    def exp(self, xi):
        xi = np.asarray(xi, dtype=float)
        omega, v = xi[..., :3], xi[..., 3:]
        theta = np.linalg.norm(omega, axis=-1)
        a, b, c = _so3_coeffs(theta)
        k = hat(omega)
        k2 = k @ k
        rot = np.eye(3) + a[..., None, None] * k + b[..., None, None] * k2
        left_jac = np.eye(3) + b[..., None, None] * k + c[..., None, None] * k2
        return self.join(rot, np.einsum("...ij,...j->...i", left_jac, v))

    def log(self, g):
        rot, r = self.split(g)
        omega = so3_log(rot)
        theta = np.linalg.norm(omega, axis=-1)
        k = hat(omega)
        small = theta < 1e-4
        t = np.where(small, 1.0, theta)
        coef = np.where(
            small,
            1.0 / 12.0 + theta**2 / 720.0,
            (1.0 - t * np.sin(t) / (2.0 * (1.0 - np.cos(t)))) / (t * t),
        )
        inv_jac = np.eye(3) - 0.5 * k + coef[..., None, None] * (k @ k)
        return np.concatenate([omega, np.einsum("...ij,...j->...i", inv_jac, r)], axis=-1)

    def compose(self, g, h):
        r1, p1 = self.split(g)
        r2, p2 = self.split(h)
        return self.join(r1 @ r2, p1 + np.einsum("...ij,...j->...i", r1, p2))

    def inverse(self, g):
        rot, r = self.split(g)
        rt = np.swapaxes(rot, -1, -2)
        return self.join(rt, -np.einsum("...ij,...j->...i", rt, r))

    def tangent_lift(self, g, xi):
        rot, _ = self.split(g)
        xi = np.asarray(xi, dtype=float)
        return self.join(rot @ hat(xi[..., :3]), np.einsum("...ij,...j->...i", rot, xi[..., 3:]))

    def bracket(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        wx, vx = x[..., :3], x[..., 3:]
        wy, vy = y[..., :3], y[..., 3:]
        return np.concatenate([cross(wx, wy), cross(wx, vy) - cross(wy, vx)], axis=-1)

    def defect(self, g):
        rot, _ = self.split(g)
        err = np.swapaxes(rot, -1, -2) @ rot - np.eye(3)
        return np.sqrt(np.sum(err * err, axis=(-2, -1)))


class CallbackGroup(LieGroupModel):
    """User-registered group given by callbacks.

    ``retract(g, xi, dt)``, ``tangent_lift(g, xi)``, ``compose(g, h)`` and
    ``defect(g)`` are required; ``bracket`` defaults to zero (abelian) and
    ``exp`` defaults to ``retract(identity, xi, 1)``.
    """

    name = "custom"

    def __init__(self, n, embed_dim, identity, compose, tangent_lift, retract, defect,
                 bracket=None, exp=None, log=None, inverse=None):
        self.n = int(n)
        self.embed_dim = int(embed_dim)
        self._identity = np.asarray(identity, dtype=float)
        self._compose = compose
        self._lift = tangent_lift
        self._retract = retract
        self._defect = defect
        self._bracket = bracket
        self._exp = exp
        self._log = log
        self._inverse = inverse

    @property
    def identity(self):
        return self._identity.copy()

    def compose(self, g, h):
        return self._compose(g, h)

    def tangent_lift(self, g, xi):
        return self._lift(g, xi)

    def retract(self, g, xi, dt=1.0):
        return self._retract(g, xi, dt)

    def defect(self, g):
        return self._defect(g)

    def exp(self, xi):
        if self._exp is not None:
            return self._exp(xi)
        return self._retract(self._identity, xi, 1.0)

    def log(self, g):
        if self._log is None:
            raise NotImplementedError("custom model has no log map")
        return self._log(g)

    def inverse(self, g):
        if self._inverse is None:
            raise NotImplementedError("custom model has no inverse")
        return self._inverse(g)

    def bracket(self, x, y):
        if self._bracket is None:
            return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))
        return self._bracket(x, y)


# --------------------------------------------------------------------------
# frames and connections


@dataclass(frozen=True)
class AlgebraFrame:
    """Orthonormal basis of the algebra.

    ``basis`` holds the basis vectors ``e_i`` as columns in raw coordinates;
    ``metric`` is the Gram matrix of the inner product in raw coordinates.
    """

    basis: np.ndarray
    metric: np.ndarray
    basis_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        metric = np.array(self.metric, dtype=float)
        n = basis.shape[0]
        if basis.shape != (n, n) or metric.shape != (n, n):
            raise GeometryError("basis and metric must be square and of equal size")
        if np.max(np.abs(metric - metric.T)) > 1e-12 * max(1.0, np.max(np.abs(metric))):
            raise GeometryError("metric must be symmetric")
        gram = basis.T @ metric @ basis
        if np.max(np.abs(gram - np.eye(n))) > 1e-10:
            raise GeometryError("basis is not orthonormal with respect to the metric")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "metric", metric)
        object.__setattr__(self, "basis_inv", np.linalg.inv(basis))

    @property
    def n(self) -> int:
        return self.basis.shape[0]

    def E(self, coords) -> np.ndarray:
        """Frame coordinates to raw algebra coordinates."""
        return np.asarray(coords, dtype=float) @ self.basis.T

    def E_inv(self, xi) -> np.ndarray:
        return np.asarray(xi, dtype=float) @ self.basis_inv.T

    def inner(self, x, y) -> np.ndarray:
        """Inner product of two raw algebra vectors."""
        return np.einsum("...i,ij,...j->...", x, self.metric, y)

    @classmethod
    def standard(cls, n: int) -> "AlgebraFrame":
        return cls(np.eye(n), np.eye(n))


@dataclass(frozen=True)
class ConnectionTable:
    """Coefficients ``coeffs[k, i, j]`` with ``nabla_{e_i} e_j = sum_k coeffs[k,i,j] e_k``.

    All indices refer to frame coordinates.
    """

    coeffs: np.ndarray
    symmetric_only: bool = False

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise GeometryError("connection coefficients must have shape (n, n, n)")
        object.__setattr__(self, "coeffs", c)

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, v, w) -> np.ndarray:
        return np.einsum("kij,...i,...j->...k", self.coeffs, v, w)

    def quadratic(self, v) -> np.ndarray:
        """``nabla_v v``; only the symmetric part of the table contributes."""
        v = np.asarray(v, dtype=float)
        n = self.n
        outer = (v[..., :, None] * v[..., None, :]).reshape(v.shape[:-1] + (n * n,))
        return outer @ self.coeffs.reshape(n, n * n).T

    @property
    def is_flat(self) -> bool:
        return not np.any(self.coeffs)

    @classmethod
    def zero(cls, n: int) -> "ConnectionTable":
        return cls(np.zeros((n, n, n)))

    @classmethod
    def from_quadratic(cls, quad: Callable[[np.ndarray], np.ndarray], n: int) -> "ConnectionTable":
        """Recover the symmetric bilinear map of ``quad(v) = nabla_v v`` by polarization."""
        eye = np.eye(n)
        diag = np.array([quad(eye[i]) for i in range(n)])  # (n, k)
        coeffs = np.zeros((n, n, n))
        for i in range(n):
            coeffs[:, i, i] = diag[i]
            for j in range(i + 1, n):
                b = 0.5 * (quad(eye[i] + eye[j]) - diag[i] - diag[j])
                coeffs[:, i, j] = coeffs[:, j, i] = b
        return cls(coeffs, symmetric_only=True)


def mu(frame: AlgebraFrame, conn: ConnectionTable) -> np.ndarray:
    """``sum_i nabla_{e_i} e_i`` in frame coordinates."""
    if conn.n != frame.n:
        raise GeometryError("connection and frame dimensions differ")
    return np.einsum("kii->k", conn.coeffs)


# --------------------------------------------------------------------------
# objectives and gradients


@dataclass(frozen=True)
class Objective:
    """A real function on the group with an optional ambient gradient."""

    value: Callable[[np.ndarray], np.ndarray]
    euclidean_gradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = "custom"
    minimizer: Optional[np.ndarray] = None

    def __call__(self, g):
        return self.value(g)


def fd_step_for(g, rel: float = 1e-6) -> float:
    return rel * max(1.0, float(np.max(np.abs(g), initial=0.0)))


def body_gradient(model: LieGroupModel, frame: AlgebraFrame, objective: Objective, g,
                  use_analytic: bool = True) -> np.ndarray:
    """Frame coordinates of the left-trivialized gradient of ``objective`` at ``g``.

    Entry ``i`` is the derivative of the objective along the left-invariant
    field of basis vector ``e_i``.  Uses the ambient gradient when the
    objective supplies one, else central differences along ``retract``.
    """
    g = np.asarray(g, dtype=float)
    directions = frame.basis.T  # (n, n_raw): row i is e_i
    if use_analytic and objective.euclidean_gradient is not None:
        lifts = model.tangent_lift(g[..., None, :], directions)  # (..., n, D)
        grad = objective.euclidean_gradient(g)
        return np.einsum("...id,...d->...i", lifts, grad)
    h = fd_step_for(g)
    gp = model.retract(g[..., None, :], directions, h)
    gm = model.retract(g[..., None, :], directions, -h)
    return (objective.value(gp) - objective.value(gm)) / (2.0 * h)
