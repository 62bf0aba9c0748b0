"""Operators coupling the coarse and fine blocks across the 1:2 refinement
interface: fourth-order interpolation P, its adjoint restriction R = P^T/4,
the metric-scaled variants, and face inner products.

The interface face carries a 2:1 nested node layout: every coarse face node
coincides with an even-indexed fine node; odd fine nodes sit at coarse cell
midpoints and are filled by cubic interpolation.

On a periodic face the restriction R = P^T/4 is the exact adjoint of P under
the uniform face quadratures.  On a bounded face the quadratures carry the
boundary-modified norm weights, so the compatible restriction becomes the
weighted transpose R = W_c^{-1} P^T W_f / 4.  Near the face boundary the
midpoint rows of P are solved (once per size, then cached) so that P remains
exact on quadratics everywhere (cubics away from the edge) while the weighted
restriction stays exact on constants everywhere and on cubics away from the
edge.  Full cubic exactness of both operators at every edge row/column is not
attainable simultaneously; the retained second-order edge closure matches the
boundary accuracy of the difference operator itself.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import sbp1d
from .elastic3d import FACE_HIGH, FACE_LOW

__all__ = [
    "fine_points",
    "lateral_weights",
    "p1_matrix",
    "r1_matrix",
    "prolong2d",
    "restrict2d",
    "FaceScaling",
    "face_inner_product_coarse",
    "face_inner_product_fine",
    "InterfaceSystem",
]

# cubic midpoint interpolation on four surrounding coarse nodes
_MID = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0
# one-sided midpoint weights used at the first/last interior midpoint when the
# centered stencil would reach outside the face (small faces only; larger
# bounded faces use the solved compatible closure)
_MID_EDGE = np.array([5.0, 15.0, -5.0, 1.0]) / 16.0

# bounded-face edge closure: midpoint rows solved per end, the coarse columns
# they may draw from, and the width of the zone over which the restriction's
# unavoidable moment defects are spread
_EDGE_ROWS = 8
_EDGE_COLS = 14
_RELAX_COLS = 8

_p1_cache: dict = {}


def fine_points(nc: int, periodic: bool = False) -> int:
    """Fine point count nested 2:1 with nc coarse points."""
    return 2 * nc if periodic else 2 * nc - 1


def lateral_weights(n: int, periodic: bool = False):
    """Face quadrature weights along one lateral direction (None means
    uniform, i.e. the periodic case)."""
    return None if periodic else sbp1d.norm_weights(n)


def _solve_edge_closure(nc: int) -> np.ndarray:
    """Bounded-face interpolation matrix with a compatible edge closure.

    The first _EDGE_ROWS midpoint rows at each end are solved from two hard
    constraint families: (a) each row reproduces quadratics (cubics from the
    fourth row on), and (b) the weighted column sums make the restriction
    W_c^{-1} P^T W_f / 2 reproduce constants at every column and cubics away
    from the outermost _RELAX_COLS columns per end.  A quadrature-error
    functional forces nonzero first-moment defects of the restriction
    somewhere near each end; spreading them over _RELAX_COLS columns keeps
    every individual defect small.  The remaining freedom minimizes, in
    order: the relaxed restriction moments (low orders first), the
    interpolation rows' higher moments (their error constants), and the
    deviation from the centered stencil.
    """
    nf = 2 * nc - 1
    nmid = nc - 1
    wc, wf = sbp1d.norm_weights(nc), sbp1d.norm_weights(nf)
    low = set(range(min(_EDGE_ROWS, nmid)))
    high = set(range(max(0, nmid - _EDGE_ROWS), nmid))
    free = sorted(low | high)
    fixed = [r for r in range(nmid) if r not in free]
    ncols = min(_EDGE_COLS, nc)
    support = {}
    for r in free:
        cols = set()
        if r in low:
            cols |= set(range(ncols))
        if r in high:
            cols |= set(range(nc - ncols, nc))
        support[r] = sorted(cols)
    idx = {}
    nv = 0
    for r in free:
        for j in support[r]:
            idx[(r, j)] = nv
            nv += 1

    hard_r, hard_b = [], []
    soft_r, soft_b, soft_w = [], [], []
    for r in free:
        # outermost three midpoints per end: quadratic row exactness; the
        # higher moments control the rows' error constants
        row_order = 2 if min(r, nmid - 1 - r) < 3 else 3
        for p in range(7):
            a = np.zeros(nv)
            for j in support[r]:
                a[idx[(r, j)]] = (j - (r + 0.5)) ** p
            if p <= row_order:
                hard_r.append(a)
                hard_b.append(1.0 if p == 0 else 0.0)
            else:
                soft_r.append(a)
                soft_b.append(0.0)
                soft_w.append(10.0 / 2.5 ** (p - row_order - 1))
    relaxed = set(range(_RELAX_COLS)) | set(range(nc - _RELAX_COLS, nc))
    for i in sorted(set().union(*support.values())):
        for p in range(4):
            a = np.zeros(nv)
            const = wf[2 * i] * (1.0 if p == 0 else 0.0)
            for r in fixed:
                if r - 1 <= i <= r + 2:
                    const += wf[2 * r + 1] * _MID[i - (r - 1)] \
                        * ((r + 0.5) - i) ** p
            for r in free:
                if i in support[r]:
                    a[idx[(r, i)]] += wf[2 * r + 1] * ((r + 0.5) - i) ** p
            val = 2.0 * wc[i] * (1.0 if p == 0 else 0.0) - const
            if p >= 1 and i in relaxed:
                soft_r.append(a)
                soft_b.append(val)
                soft_w.append((1000.0, 100.0, 4.0)[p - 1])
            else:
                hard_r.append(a)
                hard_b.append(val)

    A = np.array(hard_r)
    b = np.array(hard_b)
    s = np.linalg.norm(A, axis=1)
    s[s == 0] = 1.0
    An, bn = A / s[:, None], b / s
    w_part, *_ = np.linalg.lstsq(An, bn, rcond=None)
    res = float(np.abs(An @ w_part - bn).max())
    if res > 1e-10:
        raise RuntimeError(
            f"edge closure infeasible for nc = {nc} (residual {res:.2e})")
    # spend the null space on soft objectives
    _, S, Vt = np.linalg.svd(An, full_matrices=True)
    rank = int((S > 1e-10 * S[0]).sum())
    Z = Vt[rank:].T
    B = np.array(soft_r)
    c = np.array(soft_b)
    sw = np.array(soft_w)
    w0 = np.zeros(nv)
    dist = np.zeros(nv)
    for r in free:
        for k, j in enumerate(range(r - 1, r + 3)):
            if (r, j) in idx:
                w0[idx[(r, j)]] = _MID[k]
        for j in support[r]:
            dist[idx[(r, j)]] = max(0.0, abs(j - (r + 0.5)) - 1.5)
    loc = 1.0 * dist
    reg = np.sqrt(0.2)
    lhs = np.vstack([sw[:, None] * (B @ Z), loc[:, None] * Z, reg * Z])
    rhs = np.concatenate([sw * (c - B @ w_part), -loc * w_part,
                          reg * (w0 - w_part)])
    y, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
    w = w_part + Z @ y

    P = np.zeros((nf, nc))
    P[0::2] = np.eye(nc)
    for r in fixed:
        P[2 * r + 1, r - 1:r + 3] = _MID
    for r in free:
        for j in support[r]:
            P[2 * r + 1, j] = w[idx[(r, j)]]
    return P


def p1_matrix(nc: int, periodic: bool = False) -> np.ndarray:
    """1D interpolation matrix from nc coarse points to the nested fine grid."""
    if nc < 4:
        raise ValueError(f"need at least 4 coarse points, got {nc}")
    key = (nc, periodic)
    if key in _p1_cache:
        return _p1_cache[key]
    nf = fine_points(nc, periodic)
    if periodic:
        P = np.zeros((nf, nc))
        P[0::2, :] = np.eye(nc)
        for i in range(nc):
            for w, j in zip(_MID, range(i - 1, i + 3)):
                P[2 * i + 1, j % nc] += w
    elif nc < 8:
        # too small for boundary-modified norm weights; one-sided cubic rows
        P = np.zeros((nf, nc))
        P[0::2, :] = np.eye(nc)
        for i in range(nc - 1):
            row = 2 * i + 1
            if i == 0:
                P[row, 0:4] = _MID_EDGE
            elif i == nc - 2:
                P[row, nc - 4:nc] = _MID_EDGE[::-1]
            else:
                P[row, i - 1:i + 3] = _MID
    else:
        P = _solve_edge_closure(nc)
    P.setflags(write=False)
    _p1_cache[key] = P
    return P


def r1_matrix(nc: int, periodic: bool = False) -> np.ndarray:
    """1D restriction: the scaled transpose P^T / 2, weighted on bounded
    faces so that it is the quadrature adjoint of the interpolation."""
    P = p1_matrix(nc, periodic)
    w_c = lateral_weights(nc, periodic)
    if w_c is None:
        return 0.5 * P.T
    w_f = lateral_weights(fine_points(nc, periodic))
    return 0.5 * (P.T * w_f[None, :]) / w_c[:, None]


def prolong2d(P1, P2, c):
    """Apply the tensor-product interpolation to face data c with the two face
    axes leading (any trailing component axes)."""
    return np.einsum("ai,bj,ij...->ab...", P1, P2, c)


def restrict2d(P1, P2, f):
    """Apply the tensor-product restriction (P1^T/2) x (P2^T/2)."""
    return 0.25 * np.einsum("ai,bj,ab...->ij...", P1, P2, f)


@dataclass
class FaceScaling:
    """Metric-scaled interpolation/restriction across the interface.

    The raw tensor-product operators are conjugated by sqrt(J*Lambda) on each
    side so that interpolation and restriction remain exact adjoints under the
    metric-weighted face inner products.  Along non-periodic lateral
    directions those inner products carry the boundary-modified norm weights,
    and the restriction picks up the matching weighting.
    """
    P1: np.ndarray          # direction-1 interpolation matrix
    P2: np.ndarray          # direction-2 interpolation matrix
    jlam_c: np.ndarray      # J*Lambda on the coarse side of the face
    jlam_f: np.ndarray      # J*Lambda on the fine side of the face
    periodic: tuple = (True, True)   # lateral periodicity of the face

    def __post_init__(self):
        self._sc = np.sqrt(self.jlam_c)
        self._sf = np.sqrt(self.jlam_f)
        self.R1 = self._weighted_r(self.P1, self.periodic[0])
        self.R2 = self._weighted_r(self.P2, self.periodic[1])

    @staticmethod
    def _weighted_r(P, periodic):
        if periodic:
            return 0.5 * P.T
        w_f = sbp1d.norm_weights(P.shape[0])
        w_c = sbp1d.norm_weights(P.shape[1])
        return 0.5 * (P.T * w_f[None, :]) / w_c[:, None]

    def prolong(self, c):
        """Coarse face field -> fine face field (trailing component axes)."""
        w = self._sc.reshape(self._sc.shape + (1,) * (c.ndim - 2)) * c
        out = prolong2d(self.P1, self.P2, w)
        return out / self._sf.reshape(self._sf.shape + (1,) * (c.ndim - 2))

    def restrict(self, f):
        """Fine face field -> coarse face field (trailing component axes)."""
        w = self._sf.reshape(self._sf.shape + (1,) * (f.ndim - 2)) * f
        out = np.einsum("ia,jb,ab...->ij...", self.R1, self.R2, w)
        return out / self._sc.reshape(self._sc.shape + (1,) * (f.ndim - 2))


def _face_weight_grid(jlam, w1, w2):
    w = jlam
    if w1 is not None:
        w = w * w1[:, None]
    if w2 is not None:
        w = w * w2[None, :]
    return w


def face_inner_product_coarse(u, v, jlam_c, h1, h2, w1=None, w2=None):
    """Interface inner product on the coarse face; h1, h2 are the fine lateral
    spacings, so the coarse cell area is 4*h1*h2.  w1/w2 are optional lateral
    quadrature weights (non-periodic directions)."""
    dot = np.sum(u * v, axis=-1) if u.ndim > 2 else u * v
    return 4.0 * h1 * h2 * float(np.sum(_face_weight_grid(jlam_c, w1, w2)
                                        * dot))


def face_inner_product_fine(u, v, jlam_f, h1, h2, w1=None, w2=None):
    dot = np.sum(u * v, axis=-1) if u.ndim > 2 else u * v
    return h1 * h2 * float(np.sum(_face_weight_grid(jlam_f, w1, w2) * dot))


class InterfaceSystem:
    """Traction-continuity system determining the coarse ghost plane.

    The coarse block carries one plane of ghost points above its top face
    (the interface); the fine block has none.  Requiring the restricted fine
    traction (with the stability term eta) to equal the coarse traction gives
    a linear system K g = b in the ghost values g.  Because the ghost plane
    enters the coarse operator and traction only on the top plane, K is
    matrix-free and face-local:

        K g = (J L)_c^{-1} A_g g
              + h3 w1 * Restrict[ (J L)_f^{-1} (rho J)_f
                                  Prolong( (rho J)_c^{-1} E_g g ) ]

    where A_g = N33/(4 h3c) is the traction's ghost sensitivity and E_g g is
    the operator's ghost sensitivity on the top plane.
    """

    def __init__(self, coarse, fine, scaling: FaceScaling):
        if coarse.closure3[1] != "ghost":
            raise ValueError("coarse block needs a ghost closure at its top")
        self.coarse = coarse
        self.fine = fine
        self.scaling = scaling
        self.h3f = fine.h[2]
        self.omega1 = sbp1d.OMEGA_BOUNDARY[0]
        self.jlam_c = scaling.jlam_c[..., None]
        self.jlam_f = scaling.jlam_f[..., None]
        self.rhoJ_c = (coarse.rho * coarse.J)[:, :, -1][..., None]
        self.rhoJ_f = (fine.rho * fine.J)[:, :, 0][..., None]
        self.A_g = coarse.traction_ghost_matrix(axis=2, end=FACE_HIGH)
        self.E_g = (sbp1d.GHOST_COEFF / coarse.h[2] ** 2
                    * coarse.N[2, 2][:, :, -1])
        self.unknowns = 3 * self.jlam_c.shape[0] * self.jlam_c.shape[1]
        self.edge_mask = None

    def set_dirichlet_edges(self, faces):
        """Mark coarse-side lateral Dirichlet lines of the interface plane.

        On those lines the coarse values are injected boundary data, so the
        interface condition must see the effective (data) acceleration there
        rather than the raw operator image; the ghost sensitivity E_g vanishes
        on them.  ``faces`` is an iterable of (axis, end) pairs with axis < 2.
        """
        mask = np.ones(self.jlam_c.shape[:2] + (1,))
        for axis, end in faces:
            sl = [slice(None)] * 2
            sl[axis] = -1 if end == FACE_HIGH else 0
            mask[tuple(sl)] = 0.0
        self.edge_mask = mask

    def apply_K(self, g):
        """Apply the interface matrix to a ghost plane g of shape
        (n1c, n2c, 3)."""
        t1 = np.einsum("...pq,...q->...p", self.A_g, g) / self.jlam_c
        eg = np.einsum("...pq,...q->...p", self.E_g, g)
        if self.edge_mask is not None:
            eg = eg * self.edge_mask
        eta_g = self.rhoJ_f * self.scaling.prolong(eg / self.rhoJ_c)
        t2 = self.h3f * self.omega1 * self.scaling.restrict(
            eta_g / self.jlam_f)
        if self.edge_mask is not None:
            # ghost values on injected edge lines never reach the update;
            # masking the row as well keeps K symmetric for the Krylov solves
            t2 = t2 * self.edge_mask
        return t1 + t2

    def eta(self, Lc_top, Lf_bot):
        """Interface mismatch: (rho J)_f P[(rho J)_c^{-1} Lc] - Lf on the
        fine interface plane (ghost contributions excluded from Lc_top)."""
        return self.rhoJ_f * self.scaling.prolong(
            Lc_top / self.rhoJ_c) - Lf_bot

    def residual0(self, traction_c0, traction_f, Lc_top, Lf_bot):
        """Residual of the traction condition at g = 0.

        traction_c0: coarse ghost-variant interface traction with zero ghosts.
        traction_f:  fine interface traction (ghost-free variant, low end).
        Lc_top, Lf_bot: operator values on the two interface planes, with
        zero coarse ghosts.
        """
        eta0 = self.eta(Lc_top, Lf_bot)
        rhs = self.scaling.restrict(
            (traction_f - self.h3f * self.omega1 * eta0) / self.jlam_f)
        return traction_c0 / self.jlam_c - rhs

    def interface_fields(self, c, f, Dc=None, Df=None, edge_accel=None):
        """The four residual ingredients evaluated from the volume fields
        (coarse ghosts taken as zero).

        ``edge_accel`` gives the effective acceleration of the coarse
        interface plane on its Dirichlet edge lines (zero if omitted); it is
        substituted for the raw operator image there.
        """
        zero_g = np.zeros(self.jlam_c.shape[:2] + (3,))
        tc0 = self.coarse.traction(c, axis=2, end=FACE_HIGH, variant="ghost",
                                   vg=zero_g, Dc=Dc)
        tf = self.fine.traction(f, axis=2, end=FACE_LOW, variant="noghost",
                                Dc=Df)
        Lc_top = self.coarse.apply_L_top_plane(c)
        if self.edge_mask is not None:
            Lc_top = Lc_top * self.edge_mask
            if edge_accel is not None:
                Lc_top = Lc_top + (1.0 - self.edge_mask) * (self.rhoJ_c
                                                            * edge_accel)
        Lf_bot = self.fine.apply_L_bottom_plane(f)
        return tc0, tf, Lc_top, Lf_bot
