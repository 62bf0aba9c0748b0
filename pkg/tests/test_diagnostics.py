import numpy as np
import pytest

from sbpwave import diagnostics as diag, timestepper as ts
from sbpwave.elastic3d import FACE_HIGH, FACE_LOW

from sbpwave import geometry as geo
from test_elastic3d import cartesian_block, curvi_block
from test_timestepper import build_block, coupled_setup


@pytest.mark.parametrize("closure3", [("noghost", "noghost"),
                                      ("noghost", "ghost")])
def test_bilinear_form_symmetric_and_psd(closure3):
    op, _ = curvi_block(shape=(10, 10, 14), periodic=(True, False),
                        closure3=closure3)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u = rng.standard_normal(op.shape + (3,))
        v = rng.standard_normal(op.shape + (3,))
        suv, svu = diag.bilinear_S(op, u, v), diag.bilinear_S(op, v, u)
        scale = abs(suv) + abs(svu)
        assert abs(suv - svu) < 1e-11 * scale
        assert diag.bilinear_S(op, u, u) > -1e-11 * scale


def test_bilinear_form_ignores_ghost_values():
    """The ghost contributions to L and to the face traction cancel, so the
    identity-based evaluation is ghost independent."""
    op, _ = curvi_block(shape=(10, 10, 14), periodic=(True, True),
                        closure3=("ghost", "ghost"))
    rng = np.random.default_rng(1)
    u = rng.standard_normal(op.shape + (3,))
    v = rng.standard_normal(op.shape + (3,))
    g_lo = rng.standard_normal(op.shape[:2] + (3,))
    g_hi = rng.standard_normal(op.shape[:2] + (3,))
    # evaluate the identity by hand with nonzero ghosts
    Lv = op.apply_L(v, ghost_low=g_lo, ghost_high=g_hi)
    w_noJ = op.weight_grid() / op.J
    val = -float(np.sum(w_noJ * np.sum(u * Lv, axis=-1)))
    fw = op.h[0] * op.h[1] * np.ones(op.shape[:2])
    t_hi = op.traction(v, axis=2, end=FACE_HIGH, variant="ghost", vg=g_hi)
    t_lo = op.traction(v, axis=2, end=FACE_LOW, variant="ghost", vg=g_lo)
    val += float(np.sum(fw * np.sum(u[:, :, -1] * t_hi, axis=-1)))
    val -= float(np.sum(fw * np.sum(u[:, :, 0] * t_lo, axis=-1)))
    s = diag.bilinear_S(op, u, v)
    assert abs(val - s) < 1e-11 * abs(s)


def gaussian_bump(met, center, widths, component, amp=1.0):
    u = np.zeros(met.J.shape + (3,))
    q = sum(((met.x[i] - center[i]) / widths[i]) ** 2 for i in range(3))
    u[..., component] = amp * np.exp(-q)
    return u


def test_two_block_energy_is_conserved():
    op_c, op_f, met_c, met_f, system = coupled_setup(8, 9, curved=True)
    u0_c = gaussian_bump(met_c, (0.5, 0.5, 0.6), (0.15, 0.15, 0.15), 2)
    u0_f = gaussian_bump(met_f, (0.5, 0.5, 0.6), (0.15, 0.15, 0.15), 2)
    zero_c = lambda t: np.zeros(met_c.J.shape[:2] + (3,))
    zero_f = lambda t: np.zeros(met_f.J.shape[:2] + (3,))
    bcs_c = ts.BlockBCs(dirichlet={"z_low": zero_c})
    bcs_f = ts.BlockBCs(dirichlet={"z_high": zero_f})
    u0_c[:, :, 0] = 0.0
    u0_f[:, :, -1] = 0.0
    dt, _ = ts.compute_dt([op_c, op_f], cfl=1.0)
    stepper = ts.TwoBlockStepper(ts.make_block(op_c, bcs_c),
                                 ts.make_block(op_f, bcs_f),
                                 system, dt, ghost_tol=1e-13)
    stepper.initialize_from_rest(u0_c, u0_f)
    energies = []
    for _ in range(40):
        stepper.step()
        energies.append(diag.two_block_energy(stepper))
    e = np.array(energies)
    assert e[0] > 0
    assert np.abs(e - e[0]).max() / e[0] < 1e-9


def test_two_block_energy_conserved_with_dirichlet_laterals():
    """Homogeneous Dirichlet walls: the weighted interface restriction and
    the injected-edge handling keep the discrete energy exact."""
    mid = geo.Surface("1 + 0.05*sin(2*pi*r1) + 0.05*cos(2*pi*r2)")
    map_c = geo.BlockMapping(1.0, 1.0, geo.Surface.constant(0.0), mid)
    map_f = geo.BlockMapping(1.0, 1.0, mid, geo.Surface.constant(2.0))
    import sbpwave.scenarios as sc
    op_c, met_c, op_f, met_f, system = sc.build_coupled(
        map_c, map_f, geo.Material(rho=1.0, mu=1.0, lam=2.0),
        geo.Material(rho=2.0, mu=3.0, lam=1.0), 15, 8, 15)
    names = ("x_low", "x_high", "y_low", "y_high")
    dir_c = {n: sc._zero_face(sc._face_shape(op_c, n))
             for n in names + ("z_low",)}
    dir_f = {n: sc._zero_face(sc._face_shape(op_f, n))
             for n in names + ("z_high",)}
    u0_c = gaussian_bump(met_c, (0.5, 0.5, 0.6), (0.15, 0.15, 0.15), 2)
    u0_f = gaussian_bump(met_f, (0.5, 0.5, 0.6), (0.15, 0.15, 0.15), 2)
    for u0 in (u0_c, u0_f):
        u0[0] = u0[-1] = 0.0
        u0[:, 0] = u0[:, -1] = 0.0
    u0_c[:, :, 0] = 0.0
    u0_f[:, :, -1] = 0.0
    dt, _ = ts.compute_dt([op_c, op_f], cfl=1.0)
    stepper = ts.TwoBlockStepper(ts.make_block(op_c, ts.BlockBCs(dirichlet=dir_c)),
                                 ts.make_block(op_f, ts.BlockBCs(dirichlet=dir_f)),
                                 system, dt, ghost_tol=1e-13)
    stepper.initialize_from_rest(u0_c, u0_f)
    energies = []
    for _ in range(25):
        stepper.step()
        energies.append(diag.two_block_energy(stepper))
    e = np.array(energies)
    assert e[0] > 0
    assert np.abs(e - e[0]).max() / e[0] < 1e-11


def test_single_block_energy_is_conserved():
    k3 = np.pi / 2
    mapping = geo.BlockMapping(1.0, 1.0, geo.Surface.constant(0.0),
                               geo.Surface.constant(2.0))
    op, met = build_block(mapping, (8, 8, 17), ("noghost", "noghost"))
    zero = lambda t: np.zeros(met.J.shape[:2] + (3,))
    bcs = ts.BlockBCs(dirichlet={"z_low": zero, "z_high": zero})
    dt, _ = ts.compute_dt(op, cfl=1.0)
    stepper = ts.SingleBlockStepper(ts.make_block(op, bcs), dt)
    u0 = gaussian_bump(met, (0.5, 0.5, 1.0), (0.2, 0.2, 0.3), 0)
    u0[:, :, 0] = 0.0
    u0[:, :, -1] = 0.0
    stepper.initialize_from_rest(u0)
    energies = []
    for _ in range(40):
        stepper.step()
        energies.append(diag.discrete_energy(
            op, stepper.u.curr, stepper.u.prev, dt,
            injected_faces=[(2, FACE_LOW), (2, FACE_HIGH)]))
    e = np.array(energies)
    assert e[0] > 0
    assert np.abs(e - e[0]).max() / e[0] < 1e-11


def test_error_norm_and_rates():
    op, met = cartesian_block(shape=(10, 10, 10))
    e = np.ones(op.shape + (3,))
    # unit cube, J = 1: |e|^2 integrates to 3
    assert abs(diag.l2_norm(op, e) - np.sqrt(3.0)) < 1e-12
    rates = diag.convergence_rates([1.0, 1 / 16, 1 / 256])
    assert np.allclose(rates, [4.0, 4.0])
