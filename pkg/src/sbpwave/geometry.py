"""Curvilinear block geometry: surfaces, vertical-blend mappings, metric data,
materials, and the per-node coefficient matrices N_ij.

Each block maps the reference cube [0,1]^3 to a physical hexahedron with
vertical sides: x = Lx r1, y = Ly r2, z = r3 top(r1,r2) + (1-r3) bottom(r1,r2).
Surfaces carry analytic partial derivatives (symbolically differentiated at
construction), so all metric quantities are analytic rather than
finite-differenced.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

__all__ = [
    "Surface",
    "BlockMapping",
    "MetricData",
    "Material",
    "reference_grid",
    "evaluate_metric",
    "isotropic_m_blocks",
    "assemble_N",
    "assemble_N_from_Z",
    "cfl_kappa",
]

_R1, _R2 = sp.symbols("r1 r2")


class Surface:
    """Height surface z = theta(r1, r2) over the unit square, with analytic
    partial derivatives."""

    def __init__(self, expr):
        if not isinstance(expr, sp.Expr):
            expr = sp.sympify(expr)
        self.expr = expr
        self._f = sp.lambdify((_R1, _R2), expr, "numpy")
        self._f1 = sp.lambdify((_R1, _R2), sp.diff(expr, _R1), "numpy")
        self._f2 = sp.lambdify((_R1, _R2), sp.diff(expr, _R2), "numpy")

    @classmethod
    def constant(cls, c):
        return cls(sp.Float(c))

    def __call__(self, r1, r2):
        return np.broadcast_to(self._f(r1, r2), np.broadcast_shapes(
            np.shape(r1), np.shape(r2))).astype(float)

    def d_r1(self, r1, r2):
        return np.broadcast_to(self._f1(r1, r2), np.broadcast_shapes(
            np.shape(r1), np.shape(r2))).astype(float)

    def d_r2(self, r1, r2):
        return np.broadcast_to(self._f2(r1, r2), np.broadcast_shapes(
            np.shape(r1), np.shape(r2))).astype(float)


@dataclass(frozen=True)
class BlockMapping:
    """Vertical-blend mapping of the unit cube to a physical block."""
    lx: float
    ly: float
    bottom: Surface
    top: Surface

    def evaluate(self, r1, r2, r3):
        """Physical coordinates (x, y, z) at reference points."""
        top = self.top(r1, r2)
        bot = self.bottom(r1, r2)
        x = self.lx * r1 + 0.0 * r3
        y = self.ly * r2 + 0.0 * r3
        z = r3 * top + (1.0 - r3) * bot
        return np.broadcast_arrays(x, y, z)

    def inverse(self, x, y, z):
        """Reference coordinates; exact for the vertical-blend form."""
        r1 = np.asarray(x, dtype=float) / self.lx
        r2 = np.asarray(y, dtype=float) / self.ly
        top = self.top(r1, r2)
        bot = self.bottom(r1, r2)
        r3 = (np.asarray(z, dtype=float) - bot) / (top - bot)
        return r1, r2, r3


@dataclass
class MetricData:
    """Per-node metric quantities of one block."""
    x: np.ndarray          # (3, n1, n2, n3) physical coordinates
    cov: np.ndarray        # (n1, n2, n3, 3, 3) covariant matrix d x_k / d r_j
    xi: np.ndarray         # (n1, n2, n3, 3, 3) xi[k, j] = d r_j / d x_k
    J: np.ndarray          # (n1, n2, n3) Jacobian determinant
    lam: np.ndarray        # (n1, n2, n3) |grad_x r3|

    @property
    def shape(self):
        return self.J.shape


def reference_grid(n: int, periodic: bool = False) -> np.ndarray:
    """1D reference coordinates: n points on [0,1] (or [0,1) when periodic)."""
    if periodic:
        return np.arange(n) / n
    return np.linspace(0.0, 1.0, n)


def evaluate_metric(mapping: BlockMapping, r1, r2, r3) -> MetricData:
    """Evaluate the metric on the tensor lattice r1 x r2 x r3."""
    R1 = np.asarray(r1)[:, None, None]
    R2 = np.asarray(r2)[None, :, None]
    R3 = np.asarray(r3)[None, None, :]
    shape = np.broadcast_shapes(R1.shape, R2.shape, R3.shape)

    top = np.broadcast_to(mapping.top(R1, R2), shape)
    bot = np.broadcast_to(mapping.bottom(R1, R2), shape)
    t1 = np.broadcast_to(mapping.top.d_r1(R1, R2), shape)
    t2 = np.broadcast_to(mapping.top.d_r2(R1, R2), shape)
    b1 = np.broadcast_to(mapping.bottom.d_r1(R1, R2), shape)
    b2 = np.broadcast_to(mapping.bottom.d_r2(R1, R2), shape)

    x = np.empty((3,) + shape)
    x[0] = mapping.lx * np.broadcast_to(R1, shape)
    x[1] = mapping.ly * np.broadcast_to(R2, shape)
    x[2] = R3 * top + (1.0 - R3) * bot

    cov = np.zeros(shape + (3, 3))
    cov[..., 0, 0] = mapping.lx
    cov[..., 1, 1] = mapping.ly
    cov[..., 2, 0] = R3 * t1 + (1.0 - R3) * b1
    cov[..., 2, 1] = R3 * t2 + (1.0 - R3) * b2
    cov[..., 2, 2] = top - bot

    J = mapping.lx * mapping.ly * (top - bot)
    if np.any(J <= 0):
        bad = np.unravel_index(int(np.argmin(J)), shape)
        raise ValueError(f"non-positive Jacobian at node {bad}: J = {J[bad]}")

    # invert the lower-triangular covariant matrix analytically
    xi = np.zeros_like(cov)
    dz3 = cov[..., 2, 2]
    xi[..., 0, 0] = 1.0 / mapping.lx
    xi[..., 1, 1] = 1.0 / mapping.ly
    xi[..., 2, 2] = 1.0 / dz3
    xi[..., 0, 2] = -cov[..., 2, 0] / (mapping.lx * dz3)
    xi[..., 1, 2] = -cov[..., 2, 1] / (mapping.ly * dz3)

    lam = np.sqrt(np.sum(xi[..., :, 2] ** 2, axis=-1))
    return MetricData(x=x, cov=cov, xi=xi, J=J, lam=lam)


@dataclass
class Material:
    """Isotropic material given by scalar fields rho, mu, lambda of the
    physical coordinates (constants or callables)."""
    rho: Callable | float
    mu: Callable | float
    lam: Callable | float

    def _eval(self, f, x):
        if callable(f):
            return np.broadcast_to(f(x[0], x[1], x[2]), x.shape[1:]).astype(float)
        return np.full(x.shape[1:], float(f))

    def evaluate(self, x):
        """Evaluate (rho, mu, lambda) grids on physical coordinates
        x of shape (3, ...)."""
        rho = self._eval(self.rho, x)
        mu = self._eval(self.mu, x)
        lam = self._eval(self.lam, x)
        if np.any(rho <= 0) or np.any(mu <= 0):
            raise ValueError("material requires rho > 0 and mu > 0")
        return rho, mu, lam


def isotropic_m_blocks(mu, lam):
    """The nine 3x3 stiffness blocks M_lk for an isotropic material.

    Returns an array of shape mu.shape + (3, 3, 3, 3) indexed [..., l, k, p, q].
    """
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    M = np.zeros(mu.shape + (3, 3, 3, 3))
    two_mu_lam = 2 * mu + lam
    for l in range(3):
        Mll = M[..., l, l, :, :]
        for p in range(3):
            Mll[..., p, p] = two_mu_lam if p == l else mu
    for l in range(3):
        for k in range(3):
            if l == k:
                continue
            M[..., l, k, l, k] = lam
            M[..., l, k, k, l] = mu
    return M


def assemble_N(metric: MetricData, material: Material):
    """Per-node coefficient matrices N_ij = J sum_lk xi_li M_lk xi_kj.

    Returns (N, rho) where N has shape (3, 3) + grid + (3, 3), indexed
    [i, j, ..., p, q], and rho is the density grid.
    """
    rho, mu, lam = material.evaluate(metric.x)
    M = isotropic_m_blocks(mu, lam)
    return _contract_N(metric, M), rho


def assemble_N_from_Z(metric: MetricData, Z):
    """N_ij from a general 6x6 symmetric positive definite stiffness Z
    (constant or per-node array of shape grid + (6, 6))."""
    Z = np.asarray(Z, dtype=float)
    w = np.linalg.eigvalsh(Z)
    if np.any(w <= 0):
        raise ValueError("stiffness matrix must be symmetric positive definite")
    O = _voigt_o_matrices()
    shape = metric.shape
    M = np.zeros(shape + (3, 3, 3, 3))
    for l in range(3):
        for k in range(3):
            M[..., l, k, :, :] = np.einsum("ap,...ab,bq->...pq", O[l],
                                           np.broadcast_to(Z, shape + (6, 6)),
                                           O[k])
    return _contract_N(metric, M)


def _voigt_o_matrices():
    """The 6x3 selection matrices O_k (O_k^T maps stress components)."""
    O1 = np.zeros((6, 3)); O2 = np.zeros((6, 3)); O3 = np.zeros((6, 3))
    O1[0, 0] = O1[5, 1] = O1[4, 2] = 1.0
    O2[5, 0] = O2[1, 1] = O2[3, 2] = 1.0
    O3[4, 0] = O3[3, 1] = O3[2, 2] = 1.0
    return [O1, O2, O3]


def _contract_N(metric: MetricData, M):
    shape = metric.shape
    N = np.zeros((3, 3) + shape + (3, 3))
    xi = metric.xi
    J = metric.J
    for i in range(3):
        for j in range(3):
            acc = np.zeros(shape + (3, 3))
            for l in range(3):
                for k in range(3):
                    w = xi[..., l, i] * xi[..., k, j]
                    if not np.any(w):
                        continue
                    acc += w[..., None, None] * M[..., l, k, :, :]
            N[i, j] = J[..., None, None] * acc
    return N


def cfl_kappa(N, rho, J):
    """Largest eigenvalue of the per-node Courant matrices with entries
    Tr(N_lm) / (rho J)."""
    shape = rho.shape
    T = np.empty(shape + (3, 3))
    for l in range(3):
        for m in range(3):
            T[..., l, m] = np.trace(N[l, m], axis1=-2, axis2=-1)
    T /= (rho * J)[..., None, None]
    return float(np.linalg.eigvalsh(T)[..., -1].max())
