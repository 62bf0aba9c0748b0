"""Matrix-free iterative solvers for the interface ghost-point systems.

The system matrix couples the three displacement components at each coarse
interface node and neighboring nodes within the interpolation stencils, so it
is block sparse with 3x3 node blocks.  It is mildly nonsymmetric; plain CG
still converges for these systems but carries a breakdown guard.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "cg",
    "block_jacobi",
    "extract_diagonal_blocks",
    "assemble_dense",
    "condition_number",
]

#: lateral coupling radius of the interface matrix (interpolation stencil
#: width 4 on each side of the transpose product)
COUPLING_RADIUS = 3


def _dot(u, v):
    return float(np.sum(u * v))


def cg(apply_A, b, x0=None, tol=1e-7, maxiter=1000, apply_M=None):
    """(Preconditioned) conjugate gradients with an absolute max-norm
    stopping criterion on the residual.

    Returns (x, info) with info = {"iterations", "residual", "converged",
    "breakdown"}.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_A(x)
    info = {"iterations": 0, "residual": float(np.abs(r).max()),
            "converged": False, "breakdown": False}
    if info["residual"] < tol:
        info["converged"] = True
        return x, info
    z = r if apply_M is None else apply_M(r)
    p = z.copy()
    rz = _dot(r, z)
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        pAp = _dot(p, Ap)
        if not np.isfinite(pAp) or abs(pAp) < 1e-300:
            info["breakdown"] = True
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        info["iterations"] = it
        info["residual"] = float(np.abs(r).max())
        if info["residual"] < tol:
            info["converged"] = True
            break
        z = r if apply_M is None else apply_M(r)
        rz_new = _dot(r, z)
        if not np.isfinite(rz_new):
            info["breakdown"] = True
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, info


def block_jacobi(apply_A, b, block_inv, x0=None, tol=1e-7, maxiter=1000):
    """Block Jacobi iteration x <- x + D^{-1}(b - A x) with pointwise 3x3
    diagonal blocks (block_inv: grid + (3, 3) inverted blocks)."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    info = {"iterations": 0, "residual": np.inf, "converged": False,
            "breakdown": False}
    for it in range(maxiter + 1):
        r = b - apply_A(x)
        info["iterations"] = it
        info["residual"] = float(np.abs(r).max())
        if info["residual"] < tol:
            info["converged"] = True
            break
        if not np.isfinite(info["residual"]):
            info["breakdown"] = True
            break
        x += np.einsum("...pq,...q->...p", block_inv, r)
    return x, info


def extract_diagonal_blocks(apply_A, shape, radius=COUPLING_RADIUS,
                            periodic=(False, False)):
    """Pointwise 3x3 diagonal blocks of a face operator by comb probing.

    apply_A maps fields of shape (n1, n2, 3) to fields of the same shape and
    has lateral coupling radius <= ``radius`` in each direction, so combs
    with stride 2*radius + 1 isolate the diagonal contributions.
    """
    n1, n2, _ = shape
    stride = 2 * radius + 1
    D = np.zeros((n1, n2, 3, 3))
    for a in range(min(stride, n1)):
        for bo in range(min(stride, n2)):
            for q in range(3):
                e = np.zeros(shape)
                e[a::stride, bo::stride, q] = 1.0
                y = apply_A(e)
                D[a::stride, bo::stride, :, q] = y[a::stride, bo::stride, :]
    return D


def invert_blocks(D):
    return np.linalg.inv(D)


def assemble_dense(apply_A, shape, max_unknowns=20000):
    """Dense matrix of a face operator by unit-vector probing (tests and
    condition-number studies only)."""
    n = int(np.prod(shape))
    if n > max_unknowns:
        raise ValueError(f"system too large to assemble densely ({n} unknowns)")
    A = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        A[:, j] = apply_A(e.reshape(shape)).ravel()
    return A


def condition_number(A):
    """2-norm condition number (singular value ratio)."""
    s = np.linalg.svd(A, compute_uv=False)
    return float(s[0] / s[-1])
