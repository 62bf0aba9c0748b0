import numpy as np
import pytest

from sbpwave import krylov


def random_spd_apply(n, seed=0):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    A = B @ B.T + n * np.eye(n)
    return A, lambda x: (A @ x.ravel()).reshape(x.shape)


def test_cg_solves_spd_system():
    n = 60
    A, apply_A = random_spd_apply(n)
    rng = np.random.default_rng(1)
    b = rng.standard_normal((n // 3, 1, 3))
    x, info = krylov.cg(apply_A, b, tol=1e-10)
    assert info["converged"]
    assert np.abs(apply_A(x) - b).max() < 1e-10


def test_pcg_with_exact_inverse_converges_immediately():
    n = 60
    A, apply_A = random_spd_apply(n, seed=2)
    Ainv = np.linalg.inv(A)
    apply_M = lambda r: (Ainv @ r.ravel()).reshape(r.shape)
    b = np.random.default_rng(3).standard_normal((n // 3, 1, 3))
    x, info = krylov.cg(apply_A, b, tol=1e-10, apply_M=apply_M)
    assert info["converged"]
    assert info["iterations"] <= 2


def test_warm_start_reduces_iterations():
    n = 60
    A, apply_A = random_spd_apply(n, seed=4)
    b = np.random.default_rng(5).standard_normal((n // 3, 1, 3))
    x, info_cold = krylov.cg(apply_A, b, tol=1e-10)
    x2, info_warm = krylov.cg(apply_A, b, x0=x, tol=1e-10)
    assert info_warm["iterations"] <= 1


def test_block_jacobi_exact_for_block_diagonal():
    rng = np.random.default_rng(6)
    shape = (5, 4, 3)
    D = rng.standard_normal(shape[:2] + (3, 3)) + 4 * np.eye(3)
    apply_A = lambda x: np.einsum("...pq,...q->...p", D, x)
    b = rng.standard_normal(shape)
    x, info = krylov.block_jacobi(apply_A, b, krylov.invert_blocks(D),
                                  tol=1e-12)
    assert info["converged"] and info["iterations"] == 1
    assert np.abs(apply_A(x) - b).max() < 1e-11


def test_extract_diagonal_blocks_with_local_coupling():
    rng = np.random.default_rng(7)
    shape = (11, 9, 3)
    D = rng.standard_normal(shape[:2] + (3, 3)) + 5 * np.eye(3)

    def apply_A(x):
        # diagonal blocks plus a radius-3 lateral shift coupling
        y = np.einsum("...pq,...q->...p", D, x)
        y[3:] += 0.3 * x[:-3]
        y[:, :-2] += 0.1 * x[:, 2:]
        return y

    blocks = krylov.extract_diagonal_blocks(apply_A, shape)
    assert np.abs(blocks - D).max() < 1e-13


def test_assemble_dense_and_condition():
    d = np.arange(1.0, 13.0)
    apply_A = lambda x: (d * x.ravel()).reshape(x.shape)
    A = krylov.assemble_dense(apply_A, (2, 2, 3))
    assert np.abs(A - np.diag(d)).max() == 0
    assert abs(krylov.condition_number(A) - 12.0) < 1e-12
    with pytest.raises(ValueError):
        krylov.assemble_dense(apply_A, (200, 200, 3))


def test_interface_system_solvers_agree():
    from test_interface import two_block_setup
    sys, op_c, op_f, *_ = two_block_setup(nc=9, n3c=12, curved=True)
    rng = np.random.default_rng(8)
    c = rng.standard_normal(op_c.shape + (3,))
    f = rng.standard_normal(op_f.shape + (3,))
    b = -sys.residual0(*sys.interface_fields(c, f))
    x_cg, info_cg = krylov.cg(sys.apply_K, b, tol=1e-10)
    assert info_cg["converged"]
    D = krylov.extract_diagonal_blocks(sys.apply_K, b.shape)
    Dinv = krylov.invert_blocks(D)
    x_bj, info_bj = krylov.block_jacobi(sys.apply_K, b, Dinv, tol=1e-10)
    assert info_bj["converged"]
    apply_M = lambda r: np.einsum("...pq,...q->...p", Dinv, r)
    x_pc, info_pc = krylov.cg(sys.apply_K, b, tol=1e-10, apply_M=apply_M)
    assert info_pc["converged"]
    assert info_pc["iterations"] < info_cg["iterations"]
    assert np.abs(x_cg - x_bj).max() < 1e-8
    assert np.abs(x_cg - x_pc).max() < 1e-8
    # dense cross-check
    K = krylov.assemble_dense(sys.apply_K, b.shape)
    x_ref = np.linalg.solve(K, b.ravel()).reshape(b.shape)
    assert np.abs(x_cg - x_ref).max() < 1e-8
    assert krylov.condition_number(K) < 200
