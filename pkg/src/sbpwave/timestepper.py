"""Explicit fourth-order predictor-corrector time stepping for the coupled
two-block discretization (and a single-block variant).

Each step advances displacement with a leapfrog predictor, enforces the
interface conditions (solution continuity by scaled interpolation, traction
continuity by the ghost-point solve), forms discrete accelerations, and adds
the dt^4/12 modified-equation corrector, enforcing the interface conditions
again.  The ghost systems in the predictor and corrector share the same
matrix, so the solver state (diagonal blocks, warm starts) is reused.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import krylov
from .elastic3d import BlockOperator, FACE_HIGH, FACE_LOW
from .geometry import cfl_kappa
from .interface import InterfaceSystem

__all__ = ["compute_dt", "BlockBCs", "make_block", "TwoBlockStepper",
           "SingleBlockStepper"]

DEFAULT_CFL = 1.3


def compute_dt(ops, cfl=DEFAULT_CFL, t_end=None):
    """CFL time step over one or more blocks; optionally shrunk so that an
    integer number of steps reaches t_end exactly.

    Returns (dt, nsteps) with nsteps = None when t_end is None.
    """
    dt = np.inf
    for op in np.atleast_1d(ops):
        kappa = cfl_kappa(op.N, op.rho, op.J)
        dt = min(dt, cfl * min(op.h) / np.sqrt(kappa))
    if t_end is None:
        return dt, None
    nsteps = max(1, int(np.ceil(t_end / dt - 1e-12)))
    return t_end / nsteps, nsteps


# face identifiers: (axis, end)
_FACES = {
    "x_low": (0, FACE_LOW), "x_high": (0, FACE_HIGH),
    "y_low": (1, FACE_LOW), "y_high": (1, FACE_HIGH),
    "z_low": (2, FACE_LOW), "z_high": (2, FACE_HIGH),
}


@dataclass
class BlockBCs:
    """Physical boundary conditions of one block.

    ``dirichlet`` maps face names to callables g(t) -> face + (3,) arrays of
    displacement; ``traction`` maps a vertical face name to a callable giving
    the physical traction vector (sigma . n with the unit outward normal).
    Faces absent from both maps are periodic or interface faces.

    ``traction_t``/``traction_tt`` optionally give the first and second time
    derivatives of the traction data; the Taylor bootstrap needs them because
    the velocity and acceleration fields satisfy the differentiated boundary
    condition.
    """
    dirichlet: dict = field(default_factory=dict)
    traction: dict = field(default_factory=dict)
    traction_t: dict = field(default_factory=dict)
    traction_tt: dict = field(default_factory=dict)

    def apply_dirichlet(self, u, t):
        for name, g in self.dirichlet.items():
            axis, end = _FACES[name]
            sl = [slice(None)] * 3
            sl[axis] = -1 if end == FACE_HIGH else 0
            u[tuple(sl)] = g(t)
        return u


class _BlockState:
    """One block's fields and bookkeeping."""

    def __init__(self, op: BlockOperator, bcs: BlockBCs, jlam_faces,
                 forcing=None, forcing_tt=None):
        self.op = op
        self.bcs = bcs
        self.rhoJ = (op.rho * op.J)[..., None]
        self.forcing = forcing
        self.forcing_tt = forcing_tt
        # traction-controlled vertical faces get ghost closures
        self.traction_faces = {name: _FACES[name]
                               for name in bcs.traction}
        for name, (axis, end) in self.traction_faces.items():
            if axis != 2:
                raise ValueError("traction conditions supported on vertical "
                                 "faces only")
        self.jlam_faces = jlam_faces  # {face name: J*Lambda face grid}

    def rhs(self, u, ghost_low=None, ghost_high=None, forcing=None, t=0.0):
        out = self.op.apply_L(u, ghost_low=ghost_low, ghost_high=ghost_high)
        if forcing is not None:
            out = out + self.op.J[..., None] * forcing(t)
        return out / self.rhoJ

    def _traction_data(self, order):
        data = (self.bcs.traction, self.bcs.traction_t,
                self.bcs.traction_tt)[order]
        if self.traction_faces and len(data) < len(self.traction_faces):
            raise ValueError(
                "Taylor bootstrap needs the time derivatives of the traction "
                "data (traction_t/traction_tt); alternatively supply an "
                "exact previous level via set_initial_history")
        return data

    def solve_bc_ghosts(self, u, t, order=0):
        """Ghost planes enforcing traction boundary conditions at time t.

        order selects the time derivative of the boundary data (the
        displacement field satisfies the condition with data g, the velocity
        with g_t, the acceleration with g_tt).
        """
        data = self._traction_data(order)
        ghosts = {}
        for name, (axis, end) in self.traction_faces.items():
            g_phys = data[name](t)
            # the discrete face operator is taken along +r3; the outward
            # normal flips its sign at the low end
            sign = 1.0 if end == FACE_HIGH else -1.0
            rhs = sign * self.jlam_faces[name][..., None] * g_phys
            ghosts[end] = self.op.solve_traction_ghost(u, rhs, axis=axis,
                                                       end=end)
        return ghosts.get(FACE_LOW), ghosts.get(FACE_HIGH)


@dataclass
class _History:
    """Rolling pair (previous, current) of a field or ghost plane."""
    prev: np.ndarray
    curr: np.ndarray

    def rotate(self, new):
        self.prev, self.curr = self.curr, new

    def second_difference(self, new, dt):
        return (new - 2.0 * self.curr + self.prev) / dt ** 2


def make_block(op, bcs, jlam_faces=None, forcing=None, forcing_tt=None):
    """Bundle an operator with its boundary conditions for a stepper.

    jlam_faces maps traction face names to J*Lambda face grids (needed only
    when traction conditions are present).
    """
    return _BlockState(op, bcs, jlam_faces or {}, forcing, forcing_tt)


class TwoBlockStepper:
    """Algorithmic driver for the coupled coarse/fine system."""

    def __init__(self, coarse: _BlockState, fine: _BlockState,
                 system: InterfaceSystem, dt: float,
                 ghost_solver: str = "pcg", ghost_tol: float = 1e-7):
        if coarse.traction_faces:
            raise ValueError("traction conditions on the coarse block are "
                             "not supported (its top face is the interface)")
        self.coarse = coarse
        self.fine = fine
        self.system = system
        self.dt = dt
        self.ghost_tol = ghost_tol
        self.ghost_solver = ghost_solver
        self.strict = True      # raise (vs. warn) on solver non-convergence
        self.solve_history = []
        lateral_dirichlet = [_FACES[name] for name in coarse.bcs.dirichlet
                             if _FACES[name][0] < 2]
        if lateral_dirichlet:
            system.set_dirichlet_edges(lateral_dirichlet)
        if ghost_solver in ("pcg", "jacobi"):
            D = krylov.extract_diagonal_blocks(
                system.apply_K, system.jlam_c.shape[:2] + (3,),
                periodic=coarse.op.periodic)
            self._block_inv = krylov.invert_blocks(D)
        else:
            self._block_inv = None
        self.t = 0.0

    # -- state initialization -------------------------------------------

    def set_initial_history(self, c0, f0, c_prev, f_prev, t0=0.0, dt=None):
        """Install displacement fields at t0 and t0 - dt; interface values and
        ghost planes are (re)derived so the history is consistent."""
        dt = self.dt if dt is None else dt
        f0 = f0.copy()
        f_prev = f_prev.copy()
        f0[:, :, 0] = self.system.scaling.prolong(c0[:, :, -1])
        f_prev[:, :, 0] = self.system.scaling.prolong(c_prev[:, :, -1])
        gf0 = self.fine.solve_bc_ghosts(f0, t0)
        gfp = self.fine.solve_bc_ghosts(f_prev, t0 - dt)
        gc0 = self._solve_interface_ghosts(c0, f0, x0=None)
        gcp = self._solve_interface_ghosts(c_prev, f_prev, x0=gc0)
        self.c = _History(c_prev, c0)
        self.f = _History(f_prev, f0)
        self.gc = _History(gcp, gc0)
        self.gf = _History(gfp[1], gf0[1])  # fine-top ghost plane (or None)
        self.t = t0

    def initialize_from_rest(self, c0, f0, v_c=None, v_f=None, t0=0.0):
        """Build the t0 - dt level from a fourth-order Taylor expansion using
        the semi-discrete operator (velocities default to zero)."""
        dt = self.dt
        f0 = f0.copy()
        f0[:, :, 0] = self.system.scaling.prolong(c0[:, :, -1])

        if self.coarse.forcing is not None or self.fine.forcing is not None:
            raise ValueError("Taylor bootstrap supports unforced problems; "
                             "supply an exact previous level instead")

        def accel(c, f, t, order=0):
            gf = self.fine.solve_bc_ghosts(f, t, order)
            gc = self._solve_interface_ghosts(c, f)
            ac = self.coarse.rhs(c, ghost_high=gc)
            af = self.fine.rhs(f, ghost_low=gf[0], ghost_high=gf[1])
            return ac, af

        ac0, af0 = accel(c0, f0, t0)
        # u(-dt) = u0 - dt v0 + dt^2/2 a0 - dt^3/6 a'(0) + dt^4/24 a''(0),
        # with a'(0) the acceleration of the velocity field and a''(0) the
        # acceleration of the acceleration (the operator is linear and
        # time-independent here).
        a2c, a2f = accel(ac0, af0, t0, order=2)
        if v_c is None:
            c_prev = c0 + 0.5 * dt ** 2 * ac0 + dt ** 4 / 24.0 * a2c
            f_prev = f0 + 0.5 * dt ** 2 * af0 + dt ** 4 / 24.0 * a2f
        else:
            avc, avf = accel(v_c, v_f, t0, order=1)
            c_prev = (c0 - dt * v_c + 0.5 * dt ** 2 * ac0
                      - dt ** 3 / 6.0 * avc + dt ** 4 / 24.0 * a2c)
            f_prev = (f0 - dt * v_f + 0.5 * dt ** 2 * af0
                      - dt ** 3 / 6.0 * avf + dt ** 4 / 24.0 * a2f)
        self.coarse.bcs.apply_dirichlet(c_prev, t0 - dt)
        self.fine.bcs.apply_dirichlet(f_prev, t0 - dt)
        self.set_initial_history(c0, f0, c_prev, f_prev, t0=t0)

    # -- interface ghost solve -------------------------------------------

    def _solve_interface_ghosts(self, c, f, x0=None, edge_accel=None):
        fields = self.system.interface_fields(c, f, edge_accel=edge_accel)
        b = -self.system.residual0(*fields)
        if self.ghost_solver == "dense":
            K = krylov.assemble_dense(self.system.apply_K, b.shape)
            return np.linalg.solve(K, b.ravel()).reshape(b.shape)
        if self.ghost_solver == "jacobi":
            x, info = krylov.block_jacobi(self.system.apply_K, b,
                                          self._block_inv, x0=x0,
                                          tol=self.ghost_tol)
        elif self.ghost_solver == "cg":
            x, info = krylov.cg(self.system.apply_K, b, x0=x0,
                                tol=self.ghost_tol)
        else:
            apply_M = lambda r: np.einsum("...pq,...q->...p",
                                          self._block_inv, r)
            x, info = krylov.cg(self.system.apply_K, b, x0=x0,
                                tol=self.ghost_tol, apply_M=apply_M)
        self.solve_history.append(info)
        if not info["converged"]:
            if self.strict:
                raise RuntimeError(
                    f"interface ghost solve failed to converge: {info}")
            warnings.warn(f"interface ghost solve not converged: {info}",
                          RuntimeWarning, stacklevel=2)
        return x

    # -- one step ----------------------------------------------------------

    def step(self):
        dt = self.dt
        t, t1 = self.t, self.t + dt
        cs, fs = self.coarse, self.fine
        c, f = self.c.curr, self.f.curr

        # predictor
        c_star = (2.0 * c - self.c.prev
                  + dt ** 2 * cs.rhs(c, ghost_high=self.gc.curr,
                                     forcing=cs.forcing, t=t))
        cs.bcs.apply_dirichlet(c_star, t1)
        gf = (None, self.gf.curr)
        f_star = (2.0 * f - self.f.prev
                  + dt ** 2 * fs.rhs(f, ghost_low=gf[0], ghost_high=gf[1],
                                     forcing=fs.forcing, t=t))
        fs.bcs.apply_dirichlet(f_star, t1)
        f_star[:, :, 0] = self.system.scaling.prolong(c_star[:, :, -1])
        gf_star = fs.solve_bc_ghosts(f_star, t1)[1]
        # effective acceleration of the injected plane edges (data second
        # difference); the interface condition sees it instead of L there
        ea = self.c.second_difference(c_star, dt)[:, :, -1]
        gc_star = self._solve_interface_ghosts(c_star, f_star,
                                               x0=self.gc.curr, edge_accel=ea)

        # accelerations (including ghost planes)
        a_c = self.c.second_difference(c_star, dt)
        a_f = self.f.second_difference(f_star, dt)
        ga_c = self.gc.second_difference(gc_star, dt)
        ga_f = None if self.gf.curr is None else self.gf.second_difference(
            gf_star, dt)

        # corrector
        c_new = (c_star + dt ** 4 / 12.0
                 * cs.rhs(a_c, ghost_high=ga_c, forcing=cs.forcing_tt, t=t))
        cs.bcs.apply_dirichlet(c_new, t1)
        f_new = (f_star + dt ** 4 / 12.0
                 * fs.rhs(a_f, ghost_high=ga_f, forcing=fs.forcing_tt, t=t))
        fs.bcs.apply_dirichlet(f_new, t1)
        f_new[:, :, 0] = self.system.scaling.prolong(c_new[:, :, -1])
        gf_new = fs.solve_bc_ghosts(f_new, t1)[1]
        ea_new = self.c.second_difference(c_new, dt)[:, :, -1]
        gc_new = self._solve_interface_ghosts(c_new, f_new, x0=gc_star,
                                              edge_accel=ea_new)

        self.c.rotate(c_new)
        self.f.rotate(f_new)
        self.gc.rotate(gc_new)
        self.gf.rotate(gf_new)
        self.t = t1
        return c_new, f_new


class SingleBlockStepper:
    """Same predictor-corrector scheme on a single block with physical
    boundary conditions on all six faces (used for uniform reference runs)."""

    def __init__(self, block: _BlockState, dt: float):
        self.block = block
        self.dt = dt
        self.t = 0.0

    def set_initial_history(self, u0, u_prev, t0=0.0, dt=None):
        dt = self.dt if dt is None else dt
        self.u = _History(u_prev, u0)
        self.g = _History(self.block.solve_bc_ghosts(u_prev, t0 - dt),
                          self.block.solve_bc_ghosts(u0, t0))
        self.t = t0

    def initialize_from_rest(self, u0, v0=None, t0=0.0):
        dt = self.dt
        bs = self.block
        if bs.forcing is not None:
            raise ValueError("Taylor bootstrap supports unforced problems; "
                             "supply an exact previous level instead")

        def accel(u, t, order=0):
            g = bs.solve_bc_ghosts(u, t, order)
            return bs.rhs(u, ghost_low=g[0], ghost_high=g[1])

        a0 = accel(u0, t0)
        a2 = accel(a0, t0, order=2)
        if v0 is None:
            u_prev = u0 + 0.5 * dt ** 2 * a0 + dt ** 4 / 24.0 * a2
        else:
            av = accel(v0, t0, order=1)
            u_prev = (u0 - dt * v0 + 0.5 * dt ** 2 * a0
                      - dt ** 3 / 6.0 * av + dt ** 4 / 24.0 * a2)
        bs.bcs.apply_dirichlet(u_prev, t0 - dt)
        self.set_initial_history(u0, u_prev, t0=t0)

    def step(self):
        dt = self.dt
        t, t1 = self.t, self.t + dt
        bs = self.block
        u = self.u.curr
        g = self.g.curr
        u_star = (2.0 * u - self.u.prev
                  + dt ** 2 * bs.rhs(u, ghost_low=g[0], ghost_high=g[1],
                                     forcing=bs.forcing, t=t))
        bs.bcs.apply_dirichlet(u_star, t1)
        g_star = bs.solve_bc_ghosts(u_star, t1)
        a = self.u.second_difference(u_star, dt)
        ga = tuple(
            None if gs is None else (gs - 2.0 * gc + gp) / dt ** 2
            for gs, gc, gp in zip(g_star, self.g.curr, self.g.prev))
        u_new = (u_star + dt ** 4 / 12.0
                 * bs.rhs(a, ghost_low=ga[0], ghost_high=ga[1],
                          forcing=bs.forcing_tt, t=t))
        bs.bcs.apply_dirichlet(u_new, t1)
        g_new = bs.solve_bc_ghosts(u_new, t1)
        self.u.rotate(u_new)
        self.g.rotate(g_new)
        self.t = t1
        return u_new
