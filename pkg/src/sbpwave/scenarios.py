"""Built-in experiment definitions.

Three fully specified problems:

* ``mms_problem``      -- manufactured trigonometric solution on curved
                          blocks with analytic forcing; used for convergence
                          measurement.
* ``gaussian_source_problem`` / ``gaussian_uniform_problem``
                       -- a Gaussian displacement pulse driven through the
                          top surface over a curved refinement interface,
                          plus the matching single-block reference run.
* ``energy_problem``   -- unforced evolution of Gaussian initial data with
                          discontinuous material, for conservation tests.

Each builder returns a problem object bundling operators, boundary
conditions, initial data/exact solution, and receiver helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy as sp

from . import geometry as geo, interface as itf, timestepper as ts
from .elastic3d import BlockOperator

__all__ = [
    "TwoBlockProblem", "SingleBlockProblem", "PointSampler",
    "build_block", "mms_problem", "gaussian_source_problem",
    "gaussian_uniform_problem", "energy_problem", "loh1_geometry",
]

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# generic assembly helpers

def build_block(mapping, material, shape, periodic=(False, False),
                closure3=("noghost", "noghost")):
    """Operator + metric for one block on the reference grid of ``shape``."""
    flags = (periodic[0], periodic[1], False)
    r = [geo.reference_grid(n, p) for n, p in zip(shape, flags)]
    h = tuple((1.0 / n if p else 1.0 / (n - 1)) for n, p in zip(shape, flags))
    met = geo.evaluate_metric(mapping, *r)
    N, rho = geo.assemble_N(met, material)
    op = BlockOperator(N=N, rho=rho, J=met.J, h=h, periodic=periodic,
                       closure3=closure3)
    return op, met


def build_coupled(map_c, map_f, mat_c, mat_f, nc, n3c, n3f,
                  periodic=(False, False), fine_top="noghost"):
    nf = itf.fine_points(nc, periodic[0])
    op_c, met_c = build_block(map_c, mat_c, (nc, nc, n3c), periodic,
                              ("noghost", "ghost"))
    op_f, met_f = build_block(map_f, mat_f, (nf, nf, n3f), periodic,
                              ("noghost", fine_top))
    P1 = itf.p1_matrix(nc, periodic[0])
    P2 = itf.p1_matrix(nc, periodic[1])
    scaling = itf.FaceScaling(P1, P2, (met_c.J * met_c.lam)[:, :, -1],
                              (met_f.J * met_f.lam)[:, :, 0],
                              periodic=periodic)
    system = itf.InterfaceSystem(op_c, op_f, scaling)
    return op_c, met_c, op_f, met_f, system


def _dirichlet_from_exact(met, exact, name):
    axis, end = ts._FACES[name]
    sl = [slice(None)] * 3
    sl[axis] = -1 if end == ts.FACE_HIGH else 0
    x_face = tuple(met.x[i][tuple(sl)] for i in range(3))

    def g(t):
        return _eval_vec(exact, x_face, t)
    return g


def _zero_face(shape2):
    z = np.zeros(shape2 + (3,))
    return lambda t: z


def _lateral_faces():
    return ("x_low", "x_high", "y_low", "y_high")


# ---------------------------------------------------------------------------
# receivers

class PointSampler:
    """Cubic tensor-product interpolation of a block field at one physical
    point; receivers that coincide with a node reproduce the nodal value."""

    def __init__(self, mapping, shape, periodic, point):
        r = mapping.inverse(*point)
        self.inside = all(-1e-9 <= float(ri) <= 1 + 1e-9 for ri in r)
        self.idx = []
        self.wts = []
        flags = (periodic[0], periodic[1], False)
        for ri, n, per in zip(r, shape, flags):
            s = float(ri) * (n if per else n - 1)
            i0 = int(np.floor(s)) - 1
            if per:
                ids = np.arange(i0, i0 + 4) % n
                nodes = np.arange(i0, i0 + 4, dtype=float)
            else:
                i0 = min(max(i0, 0), n - 4)
                ids = np.arange(i0, i0 + 4)
                nodes = ids.astype(float)
            w = np.ones(4)
            for j in range(4):
                for k in range(4):
                    if k != j:
                        w[j] *= (s - nodes[k]) / (nodes[j] - nodes[k])
            self.idx.append(ids)
            self.wts.append(w)

    def __call__(self, u):
        sub = u[np.ix_(self.idx[0], self.idx[1], self.idx[2])]
        return np.einsum("i,j,k,ijkc->c", *self.wts, sub)


# ---------------------------------------------------------------------------
# problem containers

@dataclass
class TwoBlockProblem:
    name: str
    op_c: BlockOperator
    op_f: BlockOperator
    met_c: geo.MetricData
    met_f: geo.MetricData
    system: itf.InterfaceSystem
    map_c: geo.BlockMapping
    map_f: geo.BlockMapping
    coarse: object
    fine: object
    t_end: float
    exact: Optional[Callable] = None        # exact(met, t) -> field
    u0_c: Optional[np.ndarray] = None
    u0_f: Optional[np.ndarray] = None
    receivers: list = field(default_factory=list)

    @property
    def ops(self):
        return [self.op_c, self.op_f]

    def make_stepper(self, cfl=ts.DEFAULT_CFL, t_end=None, dt=None,
                     ghost_solver="pcg", ghost_tol=1e-7):
        t_end = self.t_end if t_end is None else t_end
        if dt is None:
            dt, nsteps = ts.compute_dt(self.ops, cfl, t_end)
        else:
            nsteps = max(1, int(round(t_end / dt)))
        stepper = ts.TwoBlockStepper(self.coarse, self.fine, self.system, dt,
                                     ghost_solver=ghost_solver,
                                     ghost_tol=ghost_tol)
        if self.exact is not None:
            stepper.set_initial_history(
                self.exact(self.met_c, 0.0), self.exact(self.met_f, 0.0),
                self.exact(self.met_c, -dt), self.exact(self.met_f, -dt))
        else:
            stepper.initialize_from_rest(self.u0_c, self.u0_f)
        return stepper, nsteps

    def make_samplers(self, points=None):
        """(block_tag, sampler) per receiver; tag is "coarse" or "fine"."""
        out = []
        for p in (self.receivers if points is None else points):
            sc = PointSampler(self.map_c, self.op_c.shape,
                              self.op_c.periodic, p)
            if sc.inside:
                out.append(("coarse", sc))
            else:
                out.append(("fine", PointSampler(self.map_f, self.op_f.shape,
                                                 self.op_f.periodic, p)))
        return out


@dataclass
class SingleBlockProblem:
    name: str
    op: BlockOperator
    met: geo.MetricData
    mapping: geo.BlockMapping
    block: object
    t_end: float
    exact: Optional[Callable] = None
    u0: Optional[np.ndarray] = None
    receivers: list = field(default_factory=list)

    def make_stepper(self, cfl=ts.DEFAULT_CFL, t_end=None, dt=None):
        t_end = self.t_end if t_end is None else t_end
        if dt is None:
            dt, nsteps = ts.compute_dt(self.op, cfl, t_end)
        else:
            nsteps = max(1, int(round(t_end / dt)))
        stepper = ts.SingleBlockStepper(self.block, dt)
        if self.exact is not None:
            stepper.set_initial_history(self.exact(self.met, 0.0),
                                        self.exact(self.met, -dt))
        else:
            stepper.initialize_from_rest(self.u0)
        return stepper, nsteps

    def make_samplers(self, points=None):
        return [("block", PointSampler(self.mapping, self.op.shape,
                                       self.op.periodic, p))
                for p in (self.receivers if points is None else points)]


# ---------------------------------------------------------------------------
# manufactured solution

SURF_INTERFACE = "pi + 0.2*sin(4*pi*r1) + 0.2*cos(4*pi*r2)"
SURF_BOTTOM = "0.2*exp(-(r1-0.6)**2/0.04) + 0.2*exp(-(r2-0.6)**2/0.04)"
SURF_TOP = "2*pi + 0.2*exp(-(r1-0.5)**2/0.04) + 0.2*exp(-(r2-0.5)**2/0.04)"

_mms_cache = {}


def _eval_vec(funcs, x, t):
    shape = np.broadcast(*x).shape
    out = np.empty(shape + (3,))
    for p, fn in enumerate(funcs):
        out[..., p] = np.broadcast_to(fn(x[0], x[1], x[2], t), shape)
    return out


def _mms_symbolic():
    """Exact solution, material, forcing and stress, lambdified once."""
    if _mms_cache:
        return _mms_cache
    x1, x2, x3, t = sp.symbols("x1 x2 x3 t")
    X = (x1, x2, x3)
    rho = 2 + sp.sin(x1 + 0.3) * sp.sin(x2 + 0.3) * sp.sin(x3 - 0.2)
    mu = 3 + sp.sin(3 * x1 + 0.1) * sp.sin(3 * x2 + 0.1) * sp.sin(x3)
    lam = 21 + sp.cos(x1 + 0.1) * sp.cos(x2 + 0.1) * sp.sin(3 * x3) ** 2
    u = sp.Matrix([
        sp.cos(x1 + 0.3) * sp.sin(x2 + 0.3) * sp.sin(x3 + 0.2)
        * sp.cos(t ** 2),
        sp.sin(x1 + 0.3) * sp.cos(x2 + 0.3) * sp.sin(x3 + 0.2)
        * sp.cos(t ** 2),
        sp.sin(x1 + 0.2) * sp.sin(x2 + 0.2) * sp.cos(x3 + 0.2) * sp.sin(t),
    ])
    grad = u.jacobian(X)
    eps = (grad + grad.T) / 2
    sigma = 2 * mu * eps + lam * sp.trace(eps) * sp.eye(3)
    div_sigma = sp.Matrix([sum(sp.diff(sigma[i, j], X[j]) for j in range(3))
                           for i in range(3)])
    F = rho * sp.diff(u, t, 2) - div_sigma
    F_tt = sp.diff(F, t, 2)
    args = (x1, x2, x3, t)
    lam_vec = lambda v: [sp.lambdify(args, sp.expand(c), "numpy")
                         for c in v]
    _mms_cache.update(
        u=lam_vec(u), F=lam_vec(F), F_tt=lam_vec(F_tt),
        sigma=[[sp.lambdify(args, sigma[i, j], "numpy") for j in range(3)]
               for i in range(3)],
        material=dict(
            rho=sp.lambdify(X, rho, "numpy"),
            mu=sp.lambdify(X, mu, "numpy"),
            lam=sp.lambdify(X, lam, "numpy")))
    return _mms_cache


def mms_exact(met, t):
    return _eval_vec(_mms_symbolic()["u"], met.x, t)


def mms_forcing(x, t):
    return _eval_vec(_mms_symbolic()["F"], x, t)


def mms_traction(met_face_x, nhat, t):
    """sigma . n at given face points with unit normals nhat (... , 3)."""
    sym = _mms_symbolic()
    shape = np.broadcast(*met_face_x).shape
    sig = np.empty(shape + (3, 3))
    for i in range(3):
        for j in range(3):
            sig[..., i, j] = np.broadcast_to(
                sym["sigma"][i][j](*met_face_x, t), shape)
    return np.einsum("...ij,...j->...i", sig, nhat)


def mms_problem(nc=25, t_end=0.5):
    """Manufactured-solution run; nc is the coarse lateral point count
    (25 corresponds to coarse spacing 2*pi/24)."""
    n3c = (nc + 1) // 2
    n3f = 2 * n3c - 1
    sym = _mms_symbolic()
    mat = geo.Material(**sym["material"])
    map_c = geo.BlockMapping(TWO_PI, TWO_PI, geo.Surface(SURF_BOTTOM),
                             geo.Surface(SURF_INTERFACE))
    map_f = geo.BlockMapping(TWO_PI, TWO_PI, geo.Surface(SURF_INTERFACE),
                             geo.Surface(SURF_TOP))
    op_c, met_c, op_f, met_f, system = build_coupled(
        map_c, map_f, mat, mat, nc, n3c, n3f, fine_top="ghost")

    dir_c = {name: _dirichlet_from_exact(met_c, sym["u"], name)
             for name in _lateral_faces() + ("z_low",)}
    dir_f = {name: _dirichlet_from_exact(met_f, sym["u"], name)
             for name in _lateral_faces()}
    x_top = tuple(met_f.x[i][:, :, -1] for i in range(3))
    nhat = met_f.xi[:, :, -1, :, 2] / met_f.lam[:, :, -1][..., None]
    bcs_f = ts.BlockBCs(dirichlet=dir_f,
                        traction={"z_high":
                                  lambda t: mms_traction(x_top, nhat, t)})
    coarse = ts.make_block(
        op_c, ts.BlockBCs(dirichlet=dir_c),
        forcing=lambda t: mms_forcing(met_c.x, t),
        forcing_tt=lambda t: _eval_vec(sym["F_tt"], met_c.x, t))
    fine = ts.make_block(
        op_f, bcs_f,
        jlam_faces={"z_high": (met_f.J * met_f.lam)[:, :, -1]},
        forcing=lambda t: mms_forcing(met_f.x, t),
        forcing_tt=lambda t: _eval_vec(sym["F_tt"], met_f.x, t))
    return TwoBlockProblem(
        name="mms", op_c=op_c, op_f=op_f, met_c=met_c, met_f=met_f,
        system=system, map_c=map_c, map_f=map_f, coarse=coarse, fine=fine,
        t_end=t_end, exact=mms_exact)


# ---------------------------------------------------------------------------
# Gaussian surface source

def _gaussian_source(lx, width, t0, t_width, amp, x_face, y_face):
    space = amp * np.exp(-((x_face - lx / 2) / width) ** 2
                         - ((y_face - lx / 2) / width) ** 2)

    def g(t):
        out = np.zeros(space.shape + (3,))
        out[..., 2] = np.exp(-((t - t0) / t_width) ** 2) * space
        return out
    return g


def _default_receivers(lx, z_top, z_int):
    center = lx / 2
    return [(center, center, 0.85 * z_int), (center, center, 0.6 * z_int),
            (center, center, 0.3 * z_int), (0.6 * lx, 0.55 * lx,
                                            0.7 * z_int)]


def gaussian_source_problem(lx=2000.0, z_top=1000.0, z_int=800.0, wiggle=20.0,
                            nc=101, n3c=41, n3f=21, src_width=12.5,
                            t0=4 / 44.2, t_width=1 / 44.2, amp=1e9,
                            t_end=0.5, receivers=None):
    """Curved-interface mesh with a Gaussian pulse pushed through the top
    surface (Dirichlet); homogeneous Dirichlet elsewhere, zero initial data."""
    mat = geo.Material(rho=1.5e3, mu=1.5e9, lam=3e9)
    surf_i = geo.Surface(f"{z_int} + {wiggle}*sin(4*pi*r1)"
                         f" + {wiggle}*cos(4*pi*r2)")
    map_c = geo.BlockMapping(lx, lx, geo.Surface.constant(0.0), surf_i)
    map_f = geo.BlockMapping(lx, lx, surf_i, geo.Surface.constant(z_top))
    op_c, met_c, op_f, met_f, system = build_coupled(
        map_c, map_f, mat, mat, nc, n3c, n3f)

    dir_c = {name: _zero_face(_face_shape(op_c, name))
             for name in _lateral_faces() + ("z_low",)}
    dir_f = {name: _zero_face(_face_shape(op_f, name))
             for name in _lateral_faces()}
    dir_f["z_high"] = _gaussian_source(lx, src_width, t0, t_width, amp,
                                       met_f.x[0][:, :, -1],
                                       met_f.x[1][:, :, -1])
    coarse = ts.make_block(op_c, ts.BlockBCs(dirichlet=dir_c))
    fine = ts.make_block(op_f, ts.BlockBCs(dirichlet=dir_f))
    return TwoBlockProblem(
        name="gaussian-source", op_c=op_c, op_f=op_f, met_c=met_c,
        met_f=met_f, system=system, map_c=map_c, map_f=map_f, coarse=coarse,
        fine=fine, t_end=t_end,
        u0_c=np.zeros(op_c.shape + (3,)), u0_f=np.zeros(op_f.shape + (3,)),
        receivers=(receivers if receivers is not None
                   else _default_receivers(lx, z_top, z_int)))


def gaussian_uniform_problem(lx=2000.0, z_top=1000.0, n_lat=201, n3=101,
                             src_width=12.5, t0=4 / 44.2, t_width=1 / 44.2,
                             amp=1e9, t_end=0.5, receivers=None):
    """Single uniform Cartesian block covering the whole domain; reference
    for interface-transparency comparisons."""
    mat = geo.Material(rho=1.5e3, mu=1.5e9, lam=3e9)
    mapping = geo.BlockMapping(lx, lx, geo.Surface.constant(0.0),
                               geo.Surface.constant(z_top))
    op, met = build_block(mapping, mat, (n_lat, n_lat, n3))
    dirichlet = {name: _zero_face(_face_shape(op, name))
                 for name in _lateral_faces() + ("z_low",)}
    dirichlet["z_high"] = _gaussian_source(lx, src_width, t0, t_width, amp,
                                           met.x[0][:, :, -1],
                                           met.x[1][:, :, -1])
    block = ts.make_block(op, ts.BlockBCs(dirichlet=dirichlet))
    return SingleBlockProblem(
        name="gaussian-uniform", op=op, met=met, mapping=mapping,
        block=block, t_end=t_end, u0=np.zeros(op.shape + (3,)),
        receivers=(receivers if receivers is not None
                   else _default_receivers(lx, z_top, z_top)))


def _face_shape(op, name):
    axis, _ = ts._FACES[name]
    return tuple(n for a, n in enumerate(op.shape) if a != axis)


# ---------------------------------------------------------------------------
# energy conservation

def _energy_materials():
    mat_f = geo.Material(
        rho=lambda x, y, z: 3 + np.sin(2 * x + 0.3) * np.cos(y + 0.3)
        * np.sin(2 * z - 0.2),
        mu=lambda x, y, z: 2 + np.cos(3 * x + 0.1) * np.sin(3 * y + 0.1)
        * np.sin(z) ** 2,
        lam=lambda x, y, z: 15 + np.cos(x + 0.1) * np.sin(4 * y + 0.1)
        * np.sin(3 * z) ** 2)
    mat_c = geo.Material(
        rho=lambda x, y, z: 2 + np.sin(x + 0.3) * np.sin(y + 0.3)
        * np.sin(2 * z - 0.2),
        mu=lambda x, y, z: 3 + np.sin(3 * x + 0.1) * np.sin(3 * y + 0.1)
        * np.sin(z),
        lam=lambda x, y, z: 21 + np.cos(x + 0.1) * np.cos(y + 0.1)
        * np.sin(3 * z) ** 2)
    return mat_c, mat_f


def energy_initial_data(met):
    """Gaussian displacement triplet centered at (pi, pi, pi)."""
    x, y, z = met.x
    u = np.empty(met.J.shape + (3,))
    u[..., 0] = (np.exp(-(x - np.pi) ** 2 / 0.1)
                 * np.exp(-(y - np.pi) ** 2 / 0.1)
                 * np.exp(-(z - np.pi) ** 2 / 0.1))
    u[..., 1] = (np.exp(-(x - np.pi) ** 2 / 0.2)
                 * np.exp(-(y - np.pi) ** 2 / 0.2)
                 * np.exp(-(z - np.pi) ** 2 / 0.2))
    u[..., 2] = (np.exp(-(x - np.pi) ** 2 / 0.1)
                 * np.exp(-(y - np.pi) ** 2 / 0.2)
                 * np.exp(-(z - np.pi) ** 2 / 0.2))
    return u


def energy_problem(nc=25, t_end=120.0):
    """Unforced run with discontinuous material and Gaussian initial data;
    homogeneous Dirichlet on every physical face."""
    n3c = (nc + 1) // 2
    n3f = 2 * n3c - 1
    mat_c, mat_f = _energy_materials()
    map_c = geo.BlockMapping(TWO_PI, TWO_PI, geo.Surface(SURF_BOTTOM),
                             geo.Surface(SURF_INTERFACE))
    map_f = geo.BlockMapping(TWO_PI, TWO_PI, geo.Surface(SURF_INTERFACE),
                             geo.Surface(SURF_TOP))
    op_c, met_c, op_f, met_f, system = build_coupled(
        map_c, map_f, mat_c, mat_f, nc, n3c, n3f)
    dir_c = {name: _zero_face(_face_shape(op_c, name))
             for name in _lateral_faces() + ("z_low",)}
    dir_f = {name: _zero_face(_face_shape(op_f, name))
             for name in _lateral_faces() + ("z_high",)}
    u0_c = energy_initial_data(met_c)
    u0_f = energy_initial_data(met_f)
    coarse = ts.make_block(op_c, ts.BlockBCs(dirichlet=dir_c))
    fine = ts.make_block(op_f, ts.BlockBCs(dirichlet=dir_f))
    return TwoBlockProblem(
        name="energy", op_c=op_c, op_f=op_f, met_c=met_c, met_f=met_f,
        system=system, map_c=map_c, map_f=map_f, coarse=coarse, fine=fine,
        t_end=t_end, u0_c=u0_c, u0_f=u0_f)


# ---------------------------------------------------------------------------
# layered benchmark geometry (experimental: geometry/material only, no
# moment-tensor source or semi-analytic reference)

def loh1_geometry():
    """Layer-over-halfspace configuration: domain 30000 x 30000 x 17000 with
    a flat material discontinuity 1000 below the free surface (modeled here
    as the top face).  Material given as (rho, v_p, v_s) per layer."""
    surf_i = geo.Surface.constant(16000.0)
    map_c = geo.BlockMapping(30000.0, 30000.0, geo.Surface.constant(0.0),
                             surf_i)
    map_f = geo.BlockMapping(30000.0, 30000.0, surf_i,
                             geo.Surface.constant(17000.0))

    def material(rho, vp, vs):
        mu = rho * vs ** 2
        lam = rho * vp ** 2 - 2 * mu
        return geo.Material(rho=rho, mu=mu, lam=lam)

    return {
        "map_coarse": map_c,
        "map_fine": map_f,
        "material_coarse": material(2700.0, 6000.0, 3464.0),
        "material_fine": material(2600.0, 4000.0, 2000.0),
        "experimental": True,
    }
