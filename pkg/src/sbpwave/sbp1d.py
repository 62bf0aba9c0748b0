"""Fourth-order summation-by-parts (SBP) operators on uniform 1D grids.

Provides the building blocks used by the 3D solver:

* ``apply_d1``: first-derivative SBP operator ``D`` (no ghost points),
  satisfying ``(u, Dv)_h = -(Du, v)_h - u_1 v_1 + u_n v_n`` under the
  diagonal norm ``(u, v)_h = h sum_i omega_i u_i v_i``.
* ``apply_d2_var``: variable-coefficient second derivative ``(gamma v')'``
  with a selectable closure at each end: ``"ghost"`` (uses one ghost value
  outside the boundary) or ``"noghost"`` (the ghost value is eliminated
  through the one-sided boundary-derivative stencil).
* ``boundary_derivative``: the fourth-order boundary derivative stencils
  (ghost variant ``b~`` and ghost-free variant ``b``).
* periodic variants of the first and second derivative.

All kernels are vectorized over arbitrary leading axes; the grid axis is the
last axis.  The boundary closure of the second derivative is the narrow
fourth-order variable-coefficient quadratic form M(gamma) of Mattsson (2012),
combined with fourth-order boundary-derivative stencils, so that the ghost
operator is G(gamma) = H^{-1}(-M(gamma) - e_1 gamma_1 b~_1^T + e_n gamma_n
b~_n^T); the summation-by-parts identities then hold to rounding error by
construction.  For 8 <= n < 12 the two 6-row closures of the narrow M would
overlap, so the wide form M = D^T H Gamma D is used instead (the identities
remain exact; only interior accuracy is reduced, which matters for no
supported grid).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "OMEGA_BOUNDARY",
    "Sbp1D",
    "Grid1D",
    "build_sbp",
    "norm_weights",
    "apply_d1",
    "apply_d1_periodic",
    "apply_d2_var",
    "apply_d2_var_periodic",
    "boundary_derivative",
    "eliminate_ghost",
    "d1_matrix",
    "d2_var_matrix",
    "GHOST_COEFF",
]

# ---------------------------------------------------------------------------
# coefficient tables
# ---------------------------------------------------------------------------

#: norm weights at the first four points (interior weight is 1).
OMEGA_BOUNDARY = np.array([17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0])

# Q stencil of the first-derivative operator (D = H^{-1} Q).
_QB = np.array(
    [
        [-1 / 2, 59 / 96, -1 / 12, -1 / 32, 0.0, 0.0],
        [-59 / 96, 0.0, 59 / 96, 0.0, 0.0, 0.0],
        [1 / 12, -59 / 96, 0.0, 59 / 96, -1 / 12, 0.0],
        [1 / 32, 0.0, -59 / 96, 0.0, 2 / 3, -1 / 12],
    ]
)
#: boundary block of D (4 rows x 6 columns), low end.
_DB = _QB / OMEGA_BOUNDARY[:, None]
_D_INT = np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12])

#: ghost-variant boundary derivative, low end, on (ghost, v0, v1, v2, v3).
_BD_GHOST = np.array([-1 / 4, -5 / 6, 3 / 2, -1 / 2, 1 / 12])
#: ghost-free boundary derivative, low end, on (v0, .., v4).
_BD_FREE = np.array([-25 / 12, 4.0, -3.0, 4 / 3, -1 / 4])

#: ghost coefficient of the ghost-closure row: gamma/(4 h^2 omega_1).
GHOST_COEFF = 1.0 / (4.0 * OMEGA_BOUNDARY[0])  # = 12/17


def _boundary_block(b):
    """Boundary rows (6x8) of the narrow quadratic-form matrix M(gamma).

    ``b`` holds the coefficient at the first eight nodes (Fractions or
    floats).  The returned rows satisfy u^T M v >= 0 together with the
    interior pentadiagonal stencil.  Coefficients from Mattsson (2012).
    """
    b1, b2, b3, b4, b5, b6, b7, b8 = b
    F = Fraction
    m0 = [
        F(12, 17) * b1 + F(59, 192) * b2
        + F(27010400129, 345067064608) * b3
        + F(69462376031, 2070402387648) * b4,
        -F(59, 68) * b1 - F(6025413881, 21126554976) * b3
        - F(537416663, 7042184992) * b4,
        F(2, 17) * b1 - F(59, 192) * b2
        + F(213318005, 16049630912) * b4
        + F(2083938599, 8024815456) * b3,
        F(3, 68) * b1 - F(1244724001, 21126554976) * b3
        + F(752806667, 21126554976) * b4,
        F(49579087, 10149031312) * b3 - F(49579087, 10149031312) * b4,
        -F(1, 784) * b4 + F(1, 784) * b3,
        0 * b1,
        0 * b1,
    ]
    m1 = [
        m0[1],
        F(3481, 3264) * b1
        + F(9258282831623875, 7669235228057664) * b3
        + F(236024329996203, 1278205871342944) * b4,
        -F(59, 408) * b1 - F(29294615794607, 29725717938208) * b3
        - F(2944673881023, 29725717938208) * b4,
        -F(59, 1088) * b1 + F(260297319232891, 2556411742685888) * b3
        - F(60834186813841, 1278205871342944) * b4,
        -F(1328188692663, 37594290333616) * b3
        + F(1328188692663, 37594290333616) * b4,
        -F(8673, 2904112) * b3 + F(8673, 2904112) * b4,
        0 * b1,
        0 * b1,
    ]
    m2 = [
        m0[2],
        m1[2],
        F(1, 51) * b1 + F(59, 192) * b2
        + F(13777050223300597, 26218083221499456) * b4
        + F(564461, 13384296) * b5
        + F(378288882302546512209, 270764341349677687456) * b3,
        F(1, 136) * b1 - F(125059, 743572) * b5
        - F(4836340090442187227, 5525802884687299744) * b3
        - F(17220493277981, 89177153814624) * b4,
        -F(10532412077335, 42840005263888) * b4
        + F(1613976761032884305, 7963657098519931984) * b3
        + F(564461, 4461432) * b5,
        -F(960119, 1280713392) * b4 - F(3391, 6692148) * b5
        + F(33235054191, 26452850508784) * b3,
        0 * b1,
        0 * b1,
    ]
    m3 = [
        m0[3],
        m1[3],
        m2[3],
        F(3, 1088) * b1
        + F(507284006600757858213, 475219048083107777984) * b3
        + F(1869103, 2230716) * b5 + F(1, 24) * b6
        + F(1950062198436997, 3834617614028832) * b4,
        -F(4959271814984644613, 20965546238960637264) * b3
        - F(1, 6) * b6
        - F(15998714909649, 37594290333616) * b4
        - F(375177, 743572) * b5,
        -F(368395, 2230716) * b5 + F(752806667, 539854092016) * b3
        + F(1063649, 8712336) * b4 + F(1, 8) * b6,
        0 * b1,
        0 * b1,
    ]
    m4 = [
        m0[4],
        m1[4],
        m2[4],
        m3[4],
        F(8386761355510099813, 128413970713633903242) * b3
        + F(2224717261773437, 2763180339520776) * b4
        + F(5, 6) * b6 + F(1, 24) * b7
        + F(280535, 371786) * b5,
        -F(35039615, 213452232) * b4 - F(1, 6) * b7
        - F(13091810925, 13226425254392) * b3
        - F(1118749, 2230716) * b5 - F(1, 2) * b6,
        -F(1, 6) * b6 + F(1, 8) * b5 + F(1, 8) * b7,
        0 * b1,
    ]
    m5 = [
        m0[5],
        m1[5],
        m2[5],
        m3[5],
        m4[5],
        F(3290636, 80044587) * b4 + F(5580181, 6692148) * b5
        + F(5, 6) * b7 + F(1, 24) * b8
        + F(660204843, 13226425254392) * b3 + F(3, 4) * b6,
        -F(1, 6) * b5 - F(1, 6) * b8 - F(1, 2) * b6 - F(1, 2) * b7,
        -F(1, 6) * b7 + F(1, 8) * b6 + F(1, 8) * b8,
    ]
    return [m0, m1, m2, m3, m4, m5]


def _make_closure_tensor() -> np.ndarray:
    """W[i, j, k]: coefficient of gamma_k in entry (i, j) of the M closure."""
    W = np.zeros((6, 8, 8))
    for k in range(8):
        e = [Fraction(0)] * 8
        e[k] = Fraction(1)
        rows = _boundary_block(e)
        for i in range(6):
            for j in range(8):
                W[i, j, k] = float(rows[i][j])
    return W


_W_CLOSURE = _make_closure_tensor()


def norm_weights(n: int) -> np.ndarray:
    """Diagonal norm weights omega_i for a non-periodic grid of n points."""
    if n < 8:
        raise ValueError(f"SBP operators require n >= 8, got n = {n}")
    w = np.ones(n)
    w[:4] = OMEGA_BOUNDARY
    w[-4:] = OMEGA_BOUNDARY[::-1]
    return w


# ---------------------------------------------------------------------------
# first derivative
# ---------------------------------------------------------------------------

def apply_d1(v: np.ndarray, h: float) -> np.ndarray:
    """SBP first derivative along the last axis (non-periodic)."""
    v = np.asarray(v)
    n = v.shape[-1]
    if n < 8:
        raise ValueError(f"SBP operators require n >= 8, got n = {n}")
    y = np.empty_like(v, dtype=float)
    y[..., 2:-2] = (
        _D_INT[0] * v[..., :-4] + _D_INT[1] * v[..., 1:-3]
        + _D_INT[3] * v[..., 3:-1] + _D_INT[4] * v[..., 4:]
    )
    y[..., :4] = np.einsum("rj,...j->...r", _DB, v[..., :6])
    y[..., -4:] = -np.einsum("rj,...j->...r", _DB, v[..., :-7:-1])[..., ::-1]
    return y / h


def apply_d1_periodic(v: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order centered first derivative with wraparound."""
    v = np.asarray(v)
    vp = np.concatenate([v[..., -2:], v, v[..., :2]], axis=-1)
    y = (
        _D_INT[0] * vp[..., :-4] + _D_INT[1] * vp[..., 1:-3]
        + _D_INT[3] * vp[..., 3:-1] + _D_INT[4] * vp[..., 4:]
    )
    return y / h


def _d1_transpose(v: np.ndarray, h: float) -> np.ndarray:
    """Apply (D^{bare})^T where D^{bare} = h*D, i.e. the stencil-matrix transpose."""
    # Only needed by the small-n wide fallback; use the dense matrix.
    n = v.shape[-1]
    Dm = d1_matrix(n, 1.0)
    return np.einsum("ij,...i->...j", Dm, v) / h


def d1_matrix(n: int, h: float) -> np.ndarray:
    """Dense first-derivative operator (n x n), for tests and small sizes."""
    cols = [apply_d1(e, h) for e in np.eye(n)]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# variable-coefficient second derivative
# ---------------------------------------------------------------------------

def boundary_derivative(v, h, end="low", variant="noghost", vg=None):
    """Fourth-order first-derivative approximation at a boundary node.

    Args:
        v: values on the physical nodes, grid axis last.
        end: "low" or "high".
        variant: "ghost" uses the ghost value ``vg`` one spacing outside the
            domain; "noghost" uses the five-point one-sided stencil.
        vg: ghost value(s), required for the ghost variant.

    Returns an array of the leading shape of ``v``.
    """
    v = np.asarray(v)
    if variant == "ghost":
        if vg is None:
            raise ValueError("ghost variant requires the ghost value")
        vg = np.asarray(vg)
        if end == "low":
            s = _BD_GHOST[0] * vg + np.einsum(
                "j,...j->...", _BD_GHOST[1:], v[..., :4])
        else:
            s = -_BD_GHOST[0] * vg - np.einsum(
                "j,...j->...", _BD_GHOST[1:], v[..., :-5:-1])
        return s / h
    if variant == "noghost":
        if end == "low":
            s = np.einsum("j,...j->...", _BD_FREE, v[..., :5])
        else:
            s = -np.einsum("j,...j->...", _BD_FREE, v[..., :-6:-1])
        return s / h
    raise ValueError(f"unknown variant {variant!r}")


def eliminate_ghost(v, h, end="low"):
    """Ghost value implied by equating the ghost and ghost-free boundary
    derivatives (b~ v = b v)."""
    bfree = boundary_derivative(v, h, end=end, variant="noghost")
    if end == "low":
        rest = np.einsum("j,...j->...", _BD_GHOST[1:], v[..., :4]) / h
        return (bfree - rest) * h / _BD_GHOST[0]
    rest = -np.einsum("j,...j->...", _BD_GHOST[1:], v[..., :-5:-1]) / h
    return (bfree - rest) * h / (-_BD_GHOST[0])


def _mhat_apply_narrow(gamma: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply the narrow quadratic-form matrix M(gamma) (no 1/h factor)."""
    n = v.shape[-1]
    y = np.empty(np.broadcast_shapes(gamma.shape, v.shape), dtype=float)
    # interior pentadiagonal rows (valid for 2 <= i <= n-3)
    g = gamma
    a_m2 = g[..., :-4] / 8 + g[..., 2:-2] / 8 - g[..., 1:-3] / 6
    a_m1 = -(g[..., :-4] / 6 + g[..., 3:-1] / 6
             + g[..., 1:-3] / 2 + g[..., 2:-2] / 2)
    a_0 = (g[..., :-4] / 24 + 5 * g[..., 1:-3] / 6 + 5 * g[..., 3:-1] / 6
           + g[..., 4:] / 24 + 3 * g[..., 2:-2] / 4)
    a_p1 = -(g[..., 1:-3] / 6 + g[..., 4:] / 6
             + g[..., 2:-2] / 2 + g[..., 3:-1] / 2)
    a_p2 = g[..., 2:-2] / 8 + g[..., 4:] / 8 - g[..., 3:-1] / 6
    y[..., 2:-2] = (
        a_m2 * v[..., :-4] + a_m1 * v[..., 1:-3] + a_0 * v[..., 2:-2]
        + a_p1 * v[..., 3:-1] + a_p2 * v[..., 4:]
    )
    # boundary closures (rows 0..5 and n-6..n-1)
    y[..., :6] = np.einsum(
        "ijk,...k,...j->...i", _W_CLOSURE, gamma[..., :8] + 0 * v[..., :8],
        v[..., :8] + 0 * gamma[..., :8])
    y[..., -6:] = np.einsum(
        "ijk,...k,...j->...i", _W_CLOSURE,
        (gamma[..., -8:] + 0 * v[..., -8:])[..., ::-1],
        (v[..., -8:] + 0 * gamma[..., -8:])[..., ::-1])[..., ::-1]
    return y


def _mhat_apply_wide(gamma: np.ndarray, v: np.ndarray, omega: np.ndarray):
    """Wide form M = (hD)^T (omega gamma) (hD), used for 8 <= n < 12."""
    w = apply_d1(v, 1.0)
    return _d1_transpose(omega * gamma * w, 1.0)


def apply_d2_var(gamma, v, h, low="noghost", high="noghost",
                 vg_low=None, vg_high=None):
    """Variable-coefficient second derivative (gamma v')' along the last axis.

    Args:
        gamma: coefficient at the physical nodes, broadcastable against v.
        v: values at the physical nodes (grid axis last).
        low, high: closure at each end, "ghost" or "noghost".  The ghost
            variant adds the ghost value's contribution through the boundary
            derivative stencil; the ghost-free variant is the operator with
            the ghost eliminated.
        vg_low, vg_high: ghost values (leading shape of v), required at any
            end flagged "ghost".
    """
    gamma = np.asarray(gamma, dtype=float)
    v = np.asarray(v, dtype=float)
    n = v.shape[-1]
    if n < 8:
        raise ValueError(f"SBP operators require n >= 8, got n = {n}")
    if (low == "ghost") != (vg_low is not None):
        raise ValueError("low closure flag inconsistent with supplied ghost data")
    if (high == "ghost") != (vg_high is not None):
        raise ValueError("high closure flag inconsistent with supplied ghost data")
    omega = norm_weights(n)
    if n >= 12:
        m = _mhat_apply_narrow(gamma, v)
    else:
        m = _mhat_apply_wide(gamma + 0 * v, v + 0 * gamma, omega)
    y = -m / (h * h * omega)
    bd_low = boundary_derivative(v, h, end="low", variant=low, vg=vg_low)
    bd_high = boundary_derivative(v, h, end="high", variant=high, vg=vg_high)
    y[..., 0] += -gamma[..., 0] * bd_low / (h * omega[0])
    y[..., -1] += gamma[..., -1] * bd_high / (h * omega[-1])
    return y


def apply_d2_var_periodic(gamma, v, h):
    """Variable-coefficient second derivative with wraparound (uniform norm)."""
    gamma = np.asarray(gamma, dtype=float)
    v = np.asarray(v, dtype=float)
    gamma = np.broadcast_to(gamma, np.broadcast_shapes(gamma.shape, v.shape))
    v = np.broadcast_to(v, gamma.shape)
    gp = np.concatenate([gamma[..., -2:], gamma, gamma[..., :2]], axis=-1)
    vp = np.concatenate([v[..., -2:], v, v[..., :2]], axis=-1)
    a_m2 = gp[..., :-4] / 8 + gp[..., 2:-2] / 8 - gp[..., 1:-3] / 6
    a_m1 = -(gp[..., :-4] / 6 + gp[..., 3:-1] / 6
             + gp[..., 1:-3] / 2 + gp[..., 2:-2] / 2)
    a_0 = (gp[..., :-4] / 24 + 5 * gp[..., 1:-3] / 6 + 5 * gp[..., 3:-1] / 6
           + gp[..., 4:] / 24 + 3 * gp[..., 2:-2] / 4)
    a_p1 = -(gp[..., 1:-3] / 6 + gp[..., 4:] / 6
             + gp[..., 2:-2] / 2 + gp[..., 3:-1] / 2)
    a_p2 = gp[..., 2:-2] / 8 + gp[..., 4:] / 8 - gp[..., 3:-1] / 6
    m = (a_m2 * vp[..., :-4] + a_m1 * vp[..., 1:-3] + a_0 * vp[..., 2:-2]
         + a_p1 * vp[..., 3:-1] + a_p2 * vp[..., 4:])
    return -m / (h * h)


def d2_var_matrix(gamma, h, low="noghost", high="noghost"):
    """Dense second-derivative operator for tests.

    Returns an n x (n + 2) matrix whose first and last columns multiply the
    low and high ghost values (zero columns at ends flagged "noghost").
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[-1]
    G = np.zeros((n, n + 2))
    zg = np.zeros(()) if low == "ghost" else None
    zgh = np.zeros(()) if high == "ghost" else None
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        G[:, j + 1] = apply_d2_var(gamma, e, h, low=low, high=high,
                                   vg_low=zg, vg_high=zgh)
    if low == "ghost":
        G[:, 0] = apply_d2_var(gamma, np.zeros(n), h, low=low, high=high,
                               vg_low=np.ones(()), vg_high=zgh)
    if high == "ghost":
        G[:, -1] = apply_d2_var(gamma, np.zeros(n), h, low=low, high=high,
                                vg_low=zg, vg_high=np.ones(()))
    return G


# ---------------------------------------------------------------------------
# object-style wrappers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid1D:
    """Uniform 1D grid descriptor."""
    n: int
    h: float
    periodic: bool = False
    has_ghost_low: bool = False
    has_ghost_high: bool = False

    def __post_init__(self):
        if self.n < 8:
            raise ValueError(
                f"SBP operators require at least 8 points, got n = {self.n}")
        if self.periodic and (self.has_ghost_low or self.has_ghost_high):
            raise ValueError("periodic grids carry no ghost points")


@dataclass(frozen=True)
class Sbp1D:
    """Bundle of the 1D operators on one grid."""
    grid: Grid1D

    @property
    def omega(self) -> np.ndarray:
        if self.grid.periodic:
            return np.ones(self.grid.n)
        return norm_weights(self.grid.n)

    def inner(self, u, v):
        """Diagonal-norm scalar product (u, v)_h."""
        return self.grid.h * np.sum(self.omega * u * v, axis=-1)

    def apply_D(self, v):
        if self.grid.periodic:
            return apply_d1_periodic(v, self.grid.h)
        return apply_d1(v, self.grid.h)

    def apply_G_ghost(self, gamma, v_ext):
        """Ghost-closure second derivative; v_ext holds n + 2 values
        (low ghost, physical nodes, high ghost)."""
        v_ext = np.asarray(v_ext)
        if v_ext.shape[-1] != self.grid.n + 2:
            raise ValueError(
                f"expected {self.grid.n + 2} values (incl. ghosts), "
                f"got {v_ext.shape[-1]}")
        return apply_d2_var(gamma, v_ext[..., 1:-1], self.grid.h,
                            low="ghost", high="ghost",
                            vg_low=v_ext[..., 0], vg_high=v_ext[..., -1])

    def apply_G_noghost(self, gamma, v, closure_low="noghost",
                        closure_high="noghost", vg_low=None, vg_high=None):
        if self.grid.periodic:
            return apply_d2_var_periodic(gamma, v, self.grid.h)
        return apply_d2_var(gamma, v, self.grid.h, low=closure_low,
                            high=closure_high, vg_low=vg_low, vg_high=vg_high)

    def boundary_derivative(self, v, end="low", variant="noghost", vg=None):
        return boundary_derivative(v, self.grid.h, end=end, variant=variant,
                                   vg=vg)


def build_sbp(n: int, h: float | None = None, periodic: bool = False) -> Sbp1D:
    """Construct the 1D operator bundle for an n-point grid."""
    if n < 8:
        raise ValueError(f"SBP operators require at least 8 points, got n = {n}")
    if h is None:
        h = 1.0 / n if periodic else 1.0 / (n - 1)
    return Sbp1D(Grid1D(n=n, h=h, periodic=periodic))
