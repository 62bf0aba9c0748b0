"""Discrete energy, the boundary-free bilinear form, and error norms.

The spatial operator satisfies a summation-by-parts identity

    (u, (J)^{-1} L v)_h = -S(u, v) + B(u, v),

where S is a symmetric positive semi-definite bilinear form that uses no
ghost points and B collects the face traction terms (positive sign at the
high end of each direction).  We never form S directly; we evaluate it
through this identity, which makes its value independent of the ghost values
used in L and B (their contributions cancel exactly).
"""

from __future__ import annotations

import numpy as np

from .elastic3d import BlockOperator, FACE_HIGH, FACE_LOW

__all__ = ["bilinear_S", "discrete_energy", "two_block_energy",
           "l2_norm", "l2_error", "convergence_rates"]


def _face_weights(op: BlockOperator, axis: int):
    """Quadrature weights h_a h_b omega_a omega_b on the face normal to
    ``axis`` (metric factors live in the traction operator)."""
    others = [a for a in range(3) if a != axis]
    a, b = others
    w = op.omega(a)[:, None] * op.omega(b)[None, :]
    return op.h[a] * op.h[b] * w


def _face_values(u, axis, end):
    sl = [slice(None)] * 3
    sl[axis] = -1 if end == FACE_HIGH else 0
    return u[tuple(sl)]


def bilinear_S(op: BlockOperator, u, v):
    """Ghost-free symmetric bilinear form of the block operator."""
    Lv = op.apply_L(v)
    w_noJ = op.weight_grid() / op.J
    val = -float(np.sum(w_noJ * np.sum(u * Lv, axis=-1)))
    for axis in range(3):
        if axis < 2 and op.periodic[axis]:
            continue
        fw = _face_weights(op, axis)
        for end, sign in ((FACE_LOW, -1.0), (FACE_HIGH, 1.0)):
            variant = "noghost"
            vg = None
            if axis == 2:
                closure = op.closure3[0 if end == FACE_LOW else 1]
                if closure == "ghost":
                    variant = "ghost"
                    vg = np.zeros(fw.shape + (3,))
            t = op.traction(v, axis=axis, end=end, variant=variant, vg=vg)
            uf = _face_values(u, axis, end)
            val += sign * float(np.sum(fw * np.sum(uf * t, axis=-1)))
    return val


def discrete_energy(op: BlockOperator, u_new, u_old, dt,
                    ghosts_new=(None, None), ghosts_old=(None, None),
                    injected_faces=(), L_new=None, L_old=None):
    """Conserved energy of one block between two consecutive time levels:

        ||sqrt(rho) (u_new - u_old)/dt||^2 + S(u_new, u_old)
        - dt^2/12 (J^{-1} L u_new, rho^{-1} J^{-1} L u_old)_h.

    ghosts_new/ghosts_old are the (low, high) vertical ghost planes of the
    two levels at ends with a ghost closure.  ``injected_faces`` lists
    (axis, end) pairs where boundary values are injected (Dirichlet); the
    scheme's effective acceleration is zero on those rows, so they are
    excluded from the correction term.  L_new/L_old override the internally
    computed operator images (used when an interface row carries a different
    effective operator).
    """
    vel = (u_new - u_old) / dt
    w = op.weight_grid()
    kinetic = float(np.sum(w * op.rho * np.sum(vel * vel, axis=-1)))
    s = bilinear_S(op, u_new, u_old)
    if L_new is None:
        L_new = op.apply_L(u_new, ghost_low=ghosts_new[0],
                           ghost_high=ghosts_new[1])
    else:
        L_new = L_new.copy()
    if L_old is None:
        L_old = op.apply_L(u_old, ghost_low=ghosts_old[0],
                           ghost_high=ghosts_old[1])
    else:
        L_old = L_old.copy()
    for axis, end in injected_faces:
        sl = [slice(None)] * 3
        sl[axis] = -1 if end == FACE_HIGH else 0
        L_new[tuple(sl)] = 0.0
        L_old[tuple(sl)] = 0.0
    w_noJ = w / op.J
    corr = float(np.sum(w_noJ * np.sum(L_new * L_old, axis=-1)
                        / (op.rho * op.J)))
    return kinetic + s - dt ** 2 / 12.0 * corr


def _injected(block):
    from .timestepper import _FACES
    return [_FACES[name] for name in block.bcs.dirichlet]


def _fine_L_effective(stepper, f, gf, c, gc):
    """Operator image on the fine block with the interface row replaced by
    its effective value: the fine interface plane tracks the interpolated
    coarse acceleration."""
    sysm = stepper.system
    Lf = stepper.fine.op.apply_L(f, ghost_high=gf)
    Lc_top = stepper.coarse.op.apply_L_top_plane(c, ghost_high=gc)
    if sysm.edge_mask is not None:
        # injected edge lines of the coarse plane carry the data acceleration
        # (zero for the conservation scenarios), not the operator image
        Lc_top = Lc_top * sysm.edge_mask
    Lf[:, :, 0] = sysm.rhoJ_f * sysm.scaling.prolong(Lc_top / sysm.rhoJ_c)
    return Lf


def two_block_energy(stepper):
    """Total energy of a coupled stepper from its stored (previous, current)
    levels and ghost histories."""
    e_c = discrete_energy(stepper.coarse.op, stepper.c.curr, stepper.c.prev,
                          stepper.dt,
                          ghosts_new=(None, stepper.gc.curr),
                          ghosts_old=(None, stepper.gc.prev),
                          injected_faces=_injected(stepper.coarse))
    Lf_new = _fine_L_effective(stepper, stepper.f.curr, stepper.gf.curr,
                               stepper.c.curr, stepper.gc.curr)
    Lf_old = _fine_L_effective(stepper, stepper.f.prev, stepper.gf.prev,
                               stepper.c.prev, stepper.gc.prev)
    e_f = discrete_energy(stepper.fine.op, stepper.f.curr, stepper.f.prev,
                          stepper.dt,
                          injected_faces=_injected(stepper.fine),
                          L_new=Lf_new, L_old=Lf_old)
    return e_c + e_f


def l2_norm(op: BlockOperator, e):
    """Jacobian-weighted discrete L2 norm of a field on one block."""
    return float(np.sqrt(op.volume_inner(e, e)))


def l2_error(op: BlockOperator, u, u_exact):
    return l2_norm(op, u - u_exact)


def convergence_rates(errors):
    """log2 error ratios of successively halved grids."""
    e = np.asarray(errors, dtype=float)
    return np.log2(e[:-1] / e[1:])
