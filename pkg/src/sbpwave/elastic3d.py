"""Discrete elastic wave operator on one curvilinear block.

The semi-discretization reads rho*J*u_tt = L u, where

    L u = sum_l G_l(N_ll) u + sum_{l != m} D_l(N_lm D_m u),

applied componentwise through the 3x3 blocks N_lm.  Direction 3 (the vertical
reference direction) may carry a ghost-point closure at either end; the
lateral directions are periodic or use ghost-free closures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sbp1d

__all__ = ["BlockOperator", "FACE_LOW", "FACE_HIGH"]

FACE_LOW = 0
FACE_HIGH = -1


def _face_slice(axis: int, end: int):
    sl = [slice(None)] * 3
    sl[axis] = -1 if end == FACE_HIGH else 0
    return tuple(sl)


@dataclass
class BlockOperator:
    """Elastic operator for a single block.

    Args:
        N: coefficient matrices, shape (3, 3) + grid + (3, 3).
        rho: density grid.
        J: Jacobian grid.
        h: reference grid spacings (h1, h2, h3).
        periodic: lateral periodicity flags (directions 1 and 2).
        closure3: vertical closure at (low, high) end, "noghost" or "ghost".
    """
    N: np.ndarray
    rho: np.ndarray
    J: np.ndarray
    h: tuple
    periodic: tuple = (False, False)
    closure3: tuple = ("noghost", "noghost")
    _nz: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.shape = self.rho.shape
        # sparsity pattern of the componentwise coefficients
        self._nz = np.empty((3, 3, 3, 3), dtype=bool)
        for l in range(3):
            for m in range(3):
                for p in range(3):
                    for q in range(3):
                        self._nz[l, m, p, q] = bool(
                            np.any(self.N[l, m, ..., p, q]))

    # -- 1D kernels along a grid axis --------------------------------------

    def _d1(self, axis, v):
        vm = np.moveaxis(v, axis, -1)
        if axis < 2 and self.periodic[axis]:
            out = sbp1d.apply_d1_periodic(vm, self.h[axis])
        else:
            out = sbp1d.apply_d1(vm, self.h[axis])
        return np.moveaxis(out, -1, axis)

    def _d2(self, axis, gamma, v, vg_low=None, vg_high=None):
        gm = np.moveaxis(gamma, axis, -1)
        vm = np.moveaxis(v, axis, -1)
        if axis < 2 and self.periodic[axis]:
            out = sbp1d.apply_d2_var_periodic(gm, vm, self.h[axis])
        elif axis < 2:
            out = sbp1d.apply_d2_var(gm, vm, self.h[axis])
        else:
            low, high = self.closure3
            if low == "ghost" and vg_low is None:
                vg_low = np.zeros(self.shape[:2])
            if high == "ghost" and vg_high is None:
                vg_high = np.zeros(self.shape[:2])
            if low != "ghost":
                vg_low = None
            if high != "ghost":
                vg_high = None
            out = sbp1d.apply_d2_var(gm, vm, self.h[2], low=low, high=high,
                                     vg_low=vg_low, vg_high=vg_high)
        return np.moveaxis(out, -1, axis)

    def _boundary_derivative(self, axis, end, v, variant, vg=None):
        vm = np.moveaxis(v, axis, -1)
        return sbp1d.boundary_derivative(
            vm, self.h[axis], end="high" if end == FACE_HIGH else "low",
            variant=variant, vg=vg)

    # -- volume operator ----------------------------------------------------

    def first_derivatives(self, c):
        """D_m c_q for all directions/components; shape (3, 3) + grid."""
        D = np.empty((3, 3) + self.shape)
        for m in range(3):
            for q in range(3):
                D[m, q] = self._d1(m, c[..., q])
        return D

    def apply_L(self, c, ghost_low=None, ghost_high=None, Dc=None):
        """Apply L to the displacement field c (grid + component axis).

        ghost_low/ghost_high: vertical ghost planes of shape (n1, n2, 3),
        used only at ends with a ghost closure (zeros when omitted).
        """
        if Dc is None:
            Dc = self.first_derivatives(c)
        out = np.zeros(self.shape + (3,))
        for l in range(3):
            for p in range(3):
                w = None
                for q in range(3):
                    if self._nz[l, l, p, q]:
                        vgl = ghost_low[..., q] if (
                            l == 2 and ghost_low is not None) else None
                        vgh = ghost_high[..., q] if (
                            l == 2 and ghost_high is not None) else None
                        out[..., p] += self._d2(l, self.N[l, l, ..., p, q],
                                                c[..., q], vgl, vgh)
                    for m in range(3):
                        if m == l or not self._nz[l, m, p, q]:
                            continue
                        t = self.N[l, m, ..., p, q] * Dc[m, q]
                        w = t if w is None else w + t
                if w is not None:
                    out[..., p] += self._d1(l, w)
        return out

    def _sub_operator(self, end):
        """Operator restricted to the 12 planes next to one vertical end;
        the outermost plane of L only depends on those (narrow closures)."""
        depth = 12
        if self.shape[2] <= depth:
            return self
        attr = "_sub_low" if end == FACE_LOW else "_sub_high"
        cached = getattr(self, attr, None)
        if cached is not None:
            return cached
        sl = slice(None, depth) if end == FACE_LOW else slice(-depth, None)
        closure3 = ((self.closure3[0], "noghost") if end == FACE_LOW
                    else ("noghost", self.closure3[1]))
        sub = BlockOperator(N=self.N[:, :, :, :, sl], rho=self.rho[:, :, sl],
                            J=self.J[:, :, sl], h=self.h,
                            periodic=self.periodic, closure3=closure3)
        object.__setattr__(self, attr, sub)
        return sub

    def apply_L_bottom_plane(self, c, ghost_low=None):
        """L at the k = 0 plane only (cheap; used at the interface)."""
        sub = self._sub_operator(FACE_LOW)
        depth = sub.shape[2]
        return sub.apply_L(c[:, :, :depth], ghost_low=ghost_low)[:, :, 0]

    def apply_L_top_plane(self, c, ghost_high=None):
        """L at the k = n3 - 1 plane only."""
        sub = self._sub_operator(FACE_HIGH)
        depth = sub.shape[2]
        return sub.apply_L(c[:, :, -depth:], ghost_high=ghost_high)[:, :, -1]

    def ghost_plane_increment(self, g, end=FACE_HIGH):
        """Closed-form dependence of L on a vertical ghost plane g (n1,n2,3):
        the increment to L at the boundary plane itself (all other rows are
        unaffected)."""
        sl = _face_slice(2, end)
        N33 = self.N[2, 2][sl]                       # (n1, n2, 3, 3)
        coef = sbp1d.GHOST_COEFF / self.h[2] ** 2
        return coef * np.einsum("...pq,...q->...p", N33, g)

    # -- face tractions -----------------------------------------------------

    def traction(self, c, axis=2, end=FACE_HIGH, variant="noghost", vg=None,
                 Dc=None):
        """Traction-like operator A_axis c on a face (no 1/(J*Lambda) scaling,
        no outward-normal sign).

        A_f c = N_ff * (boundary derivative along f) + sum_{m != f} N_fm D_m c,
        evaluated on the face.  ``variant``/``vg`` select the ghost or
        ghost-free boundary derivative stencil; vg has shape face + (3,).
        """
        sl = _face_slice(axis, end)
        shape_face = self.N[0, 0][sl].shape[:-2]
        out = np.zeros(shape_face + (3,))
        bd = np.empty(shape_face + (3,))
        for q in range(3):
            bd[..., q] = self._boundary_derivative(
                axis, end, c[..., q], variant,
                vg=None if vg is None else vg[..., q])
        out += np.einsum("...pq,...q->...p", self.N[axis, axis][sl], bd)
        for m in range(3):
            if m == axis:
                continue
            for q in range(3):
                if not self._nz[axis, m, :, q].any():
                    continue
                dmq = Dc[m, q][sl] if Dc is not None else self._d1(
                    m, c[..., q])[sl]
                out += self.N[axis, m][sl][..., :, q] * dmq[..., None]
        return out

    def traction_ghost_matrix(self, axis=2, end=FACE_HIGH):
        """d(traction)/d(ghost plane): the pointwise 3x3 matrices
        N_ff / (4 h_f) on the face (ghost-variant boundary derivative)."""
        sl = _face_slice(axis, end)
        return self.N[axis, axis][sl] / (4.0 * self.h[axis])

    def solve_traction_ghost(self, c, rhs, axis=2, end=FACE_HIGH, Dc=None):
        """Ghost plane making the ghost-variant traction equal rhs on a
        physical face; pointwise 3x3 solves."""
        t0 = self.traction(c, axis, end, variant="ghost",
                           vg=np.zeros(rhs.shape), Dc=Dc)
        A = self.traction_ghost_matrix(axis, end)
        return np.linalg.solve(A, (rhs - t0)[..., None])[..., 0]

    # -- inner products and norms -------------------------------------------

    def omega(self, axis):
        n = self.shape[axis]
        if axis < 2 and self.periodic[axis]:
            return np.ones(n)
        return sbp1d.norm_weights(n)

    def weight_grid(self):
        """Quadrature weight at every node: prod_l h_l * omega_l (times J)."""
        w = (self.omega(0)[:, None, None] * self.omega(1)[None, :, None]
             * self.omega(2)[None, None, :])
        return np.prod(self.h) * w * self.J

    def volume_inner(self, u, v):
        """(u, v) = sum h1 h2 h3 omega J (u . v)."""
        dot = np.sum(u * v, axis=-1) if u.ndim == 4 else u * v
        return float(np.sum(self.weight_grid() * dot))
