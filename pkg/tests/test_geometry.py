import numpy as np
import pytest

from sbpwave import geometry as geo


def identity_metric(shape=(6, 5, 4)):
    m = geo.BlockMapping(1.0, 1.0, geo.Surface.constant(0.0),
                         geo.Surface.constant(1.0))
    r = [geo.reference_grid(n) for n in shape]
    return geo.evaluate_metric(m, *r)


def test_identity_mapping():
    met = identity_metric()
    assert np.abs(met.J - 1.0).max() < 1e-14
    assert np.abs(met.xi - np.eye(3)).max() < 1e-14
    assert np.abs(met.lam - 1.0).max() < 1e-14
    # coordinates are the reference lattice itself
    assert np.abs(met.x[2][0, 0] - geo.reference_grid(4)).max() < 1e-14


def test_metric_against_finite_differences():
    top = geo.Surface("800 + 20*sin(4*pi*r1) + 20*cos(4*pi*r2)")
    m = geo.BlockMapping(2000.0, 2000.0, geo.Surface.constant(0.0), top)
    rng = np.random.default_rng(0)
    r1, r2, r3 = rng.random(3) * 0.8 + 0.1
    met = geo.evaluate_metric(m, [r1], [r2], [r3])
    cov = met.cov[0, 0, 0]
    eps = 1e-6
    for j, dr in enumerate(np.eye(3) * eps):
        xp = np.array(m.evaluate(r1 + dr[0], r2 + dr[1], r3 + dr[2]))
        xm = np.array(m.evaluate(r1 - dr[0], r2 - dr[1], r3 - dr[2]))
        fd = (xp - xm) / (2 * eps)
        assert np.abs(cov[:, j] - fd).max() < 1e-4
    # xi is the exact inverse transpose pairing: xi[k, j] = d r_j / d x_k
    assert np.abs(met.xi[0, 0, 0].T @ cov - np.eye(3)).max() < 1e-12
    assert abs(met.J[0, 0, 0] - np.linalg.det(cov)) < 1e-6 * met.J[0, 0, 0]
    assert abs(met.lam[0, 0, 0]
               - np.linalg.norm(met.xi[0, 0, 0][:, 2])) < 1e-14


def test_surface_expression_value():
    s = geo.Surface("pi + 0.2*sin(4*pi*r1) + 0.2*cos(4*pi*r2)")
    assert abs(s(0.0, 0.0) - (np.pi + 0.2)) < 1e-14
    assert abs(s.d_r1(0.0, 0.0) - 0.8 * np.pi) < 1e-13


def test_inverse_roundtrip():
    top = geo.Surface("1 + 0.1*sin(2*pi*r1)*cos(2*pi*r2)")
    bot = geo.Surface("0.1*r1 - 0.2*r2")
    m = geo.BlockMapping(3.0, 2.0, bot, top)
    rng = np.random.default_rng(1)
    r1, r2, r3 = rng.random((3, 50))
    x, y, z = m.evaluate(r1, r2, r3)
    s1, s2, s3 = m.inverse(x, y, z)
    assert np.abs(s1 - r1).max() < 1e-13
    assert np.abs(s2 - r2).max() < 1e-13
    assert np.abs(s3 - r3).max() < 1e-12


def test_degenerate_mapping_rejected():
    m = geo.BlockMapping(1.0, 1.0, geo.Surface.constant(0.5),
                         geo.Surface("r1"))
    with pytest.raises(ValueError, match="Jacobian"):
        geo.evaluate_metric(m, geo.reference_grid(5), geo.reference_grid(5),
                            geo.reference_grid(3))


def test_cartesian_N_blocks():
    met = identity_metric((4, 4, 4))
    mat = geo.Material(rho=1.0, mu=1.0, lam=2.0)
    N, rho = geo.assemble_N(met, mat)
    assert np.abs(rho - 1.0).max() == 0
    node = (2, 1, 3)
    assert np.allclose(N[(0, 0) + node], np.diag([4.0, 1.0, 1.0]))
    assert np.allclose(N[(1, 1) + node], np.diag([1.0, 4.0, 1.0]))
    assert np.allclose(N[(0, 1) + node], [[0, 2, 0], [1, 0, 0], [0, 0, 0]])
    assert np.allclose(N[(0, 2) + node], [[0, 0, 2], [0, 0, 0], [1, 0, 0]])
    assert abs(np.trace(N[(0, 1) + node])) == 0


def test_N_structure_curvilinear():
    top = geo.Surface("1 + 0.2*sin(2*pi*r1) + 0.1*cos(2*pi*r2)")
    m = geo.BlockMapping(1.3, 0.7, geo.Surface.constant(-0.2), top)
    met = geo.evaluate_metric(m, geo.reference_grid(5), geo.reference_grid(4),
                              geo.reference_grid(6))
    mat = geo.Material(
        rho=lambda x, y, z: 2 + 0.3 * np.sin(x + y + z),
        mu=lambda x, y, z: 1 + 0.2 * np.cos(x - y),
        lam=lambda x, y, z: 2 + 0.1 * np.sin(z),
    )
    N, rho = geo.assemble_N(met, mat)
    # N_ij = N_ji^T and the diagonal blocks are symmetric positive definite
    for i in range(3):
        for j in range(3):
            assert np.abs(N[i, j] - np.swapaxes(N[j, i], -1, -2)).max() < 1e-12
    for i in range(3):
        w = np.linalg.eigvalsh(N[i, i])
        assert w.min() > 0


def test_general_stiffness_matches_isotropic():
    top = geo.Surface("1 + 0.1*sin(2*pi*r1)")
    m = geo.BlockMapping(1.0, 1.0, geo.Surface.constant(0.0), top)
    met = geo.evaluate_metric(m, geo.reference_grid(5), geo.reference_grid(5),
                              geo.reference_grid(5))
    mu, lam = 1.4, 2.3
    Z = np.zeros((6, 6))
    Z[:3, :3] = lam
    Z[np.arange(3), np.arange(3)] = 2 * mu + lam
    Z[np.arange(3, 6), np.arange(3, 6)] = mu
    N_gen = geo.assemble_N_from_Z(met, Z)
    N_iso, _ = geo.assemble_N(met, geo.Material(rho=1.0, mu=mu, lam=lam))
    assert np.abs(N_gen - N_iso).max() < 1e-12


def test_general_stiffness_random_spd():
    met = identity_metric((4, 4, 4))
    rng = np.random.default_rng(5)
    A = rng.standard_normal((6, 6))
    Z = A @ A.T + 6 * np.eye(6)
    N = geo.assemble_N_from_Z(met, Z)
    for i in range(3):
        for j in range(3):
            assert np.abs(N[i, j] - np.swapaxes(N[j, i], -1, -2)).max() < 1e-12
        assert np.linalg.eigvalsh(N[i, i]).min() > 0
    with pytest.raises(ValueError):
        geo.assemble_N_from_Z(met, -Z)


def test_cfl_kappa_cartesian():
    met = identity_metric((4, 4, 4))
    N, rho = geo.assemble_N(met, geo.Material(rho=1.0, mu=1.0, lam=2.0))
    assert abs(geo.cfl_kappa(N, rho, met.J) - 6.0) < 1e-12


def test_reference_grid():
    assert np.abs(geo.reference_grid(5) - np.linspace(0, 1, 5)).max() == 0
    g = geo.reference_grid(8, periodic=True)
    assert len(g) == 8 and g[-1] < 1.0 and abs(g[1] - 0.125) < 1e-15
