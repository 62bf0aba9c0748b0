import numpy as np
import pytest

from sbpwave import sbp1d


def _norm(u):
    return np.linalg.norm(u)


def identity_residual_d1(n, u, v):
    h = 1.0 / (n - 1)
    H = h * sbp1d.norm_weights(n)
    Du = sbp1d.apply_d1(u, h)
    Dv = sbp1d.apply_d1(v, h)
    return np.sum(H * u * Dv) + np.sum(H * Du * v) + u[0] * v[0] - u[-1] * v[-1]


def S_ghost(gamma, a, ag, b, bg, h):
    """S(a, b) from the ghost-closure identity, rearranged."""
    H = h * sbp1d.norm_weights(len(a))
    Gb = sbp1d.apply_d2_var(gamma, b, h, low="ghost", high="ghost",
                            vg_low=bg[0], vg_high=bg[1])
    bd1 = sbp1d.boundary_derivative(b, h, "low", "ghost", vg=bg[0])
    bdn = sbp1d.boundary_derivative(b, h, "high", "ghost", vg=bg[1])
    return -np.sum(H * a * Gb) - a[0] * gamma[0] * bd1 + a[-1] * gamma[-1] * bdn


def S_noghost(gamma, a, b, h):
    H = h * sbp1d.norm_weights(len(a))
    Gb = sbp1d.apply_d2_var(gamma, b, h)
    bd1 = sbp1d.boundary_derivative(b, h, "low", "noghost")
    bdn = sbp1d.boundary_derivative(b, h, "high", "noghost")
    return -np.sum(H * a * Gb) - a[0] * gamma[0] * bd1 + a[-1] * gamma[-1] * bdn


@pytest.mark.parametrize("n", [8, 12, 16, 24, 48])
def test_first_derivative_identity(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        r = identity_residual_d1(n, u, v)
        assert abs(r) < 1e-12 * _norm(u) * _norm(v)


def test_first_derivative_exactness():
    n = 16
    h = 1.0 / (n - 1)
    x = np.arange(n) * h
    assert np.abs(sbp1d.apply_d1(np.ones(n), h)).max() < 1e-13
    assert np.abs(sbp1d.apply_d1(x, h) - 1.0).max() < 1e-13


@pytest.mark.parametrize("n", [8, 12, 16, 24, 48])
def test_second_derivative_identities(n):
    rng = np.random.default_rng(100 + n)
    h = 1.0 / (n - 1)
    for _ in range(20):
        gamma = rng.random(n) + 0.5
        u, v = rng.standard_normal((2, n))
        ug, vg = rng.standard_normal((2, 2))
        s_uv = S_ghost(gamma, u, ug, v, vg, h)
        s_vu = S_ghost(gamma, v, vg, u, ug, h)
        s_uu = S_ghost(gamma, u, ug, u, ug, h)
        nrm = _norm(u) * _norm(v) + 1.0
        assert abs(s_uv - s_vu) < 1e-12 * nrm
        assert s_uu >= -1e-12 * _norm(u) ** 2
        # ghost-free variant
        t_uv = S_noghost(gamma, u, v, h)
        t_vu = S_noghost(gamma, v, u, h)
        t_uu = S_noghost(gamma, u, u, h)
        assert abs(t_uv - t_vu) < 1e-12 * nrm
        assert t_uu >= -1e-12 * _norm(u) ** 2


def test_second_derivative_annihilates_linears():
    n = 24
    h = 1.0 / (n - 1)
    x = np.arange(n) * h
    ones = np.ones(n)
    y = sbp1d.apply_d2_var(ones, x, h, low="ghost", high="ghost",
                           vg_low=-h, vg_high=1.0 + h)
    assert np.abs(y).max() < 1e-12
    assert np.abs(sbp1d.apply_d2_var(ones, ones, h, low="ghost", high="ghost",
                                     vg_low=1.0, vg_high=1.0)).max() < 1e-11
    assert np.abs(sbp1d.apply_d2_var(ones, x, h)).max() < 1e-12
    assert np.abs(sbp1d.apply_d2_var(ones, ones, h)).max() < 1e-11


def test_ghost_elimination_consistency():
    n = 20
    h = 1.0 / (n - 1)
    rng = np.random.default_rng(7)
    gamma = rng.random(n) + 0.5
    v = rng.standard_normal(n)
    vg_low = sbp1d.eliminate_ghost(v, h, "low")
    vg_high = sbp1d.eliminate_ghost(v, h, "high")
    a = sbp1d.apply_d2_var(gamma, v, h, low="ghost", high="ghost",
                           vg_low=vg_low, vg_high=vg_high)
    b = sbp1d.apply_d2_var(gamma, v, h)
    assert np.abs(a - b).max() < 1e-11 * np.abs(b).max()


def test_boundary_derivative_stencils():
    n = 16
    h = 1.0 / (n - 1)
    x = np.arange(n) * h
    # exact on linears, both variants and ends
    assert abs(sbp1d.boundary_derivative(x, h, "low", "noghost") - 1) < 1e-13
    assert abs(sbp1d.boundary_derivative(x, h, "high", "noghost") - 1) < 1e-13
    assert abs(sbp1d.boundary_derivative(x, h, "low", "ghost", vg=-h) - 1) < 1e-13
    assert abs(sbp1d.boundary_derivative(x, h, "high", "ghost", vg=1 + h) - 1) < 1e-13
    # constants
    c = np.full(n, 3.7)
    assert abs(sbp1d.boundary_derivative(c, h, "low", "noghost")) < 1e-12
    # fourth-order exactness on quartics at the low end (x_0 = 0)
    assert abs(sbp1d.boundary_derivative(x ** 4, h, "low", "noghost")) < 1e-12
    assert abs(sbp1d.boundary_derivative(x ** 4, h, "low", "ghost",
                                         vg=(-h) ** 4)) < 1e-12
    # and at the high end against the analytic derivative 4x^3
    d = sbp1d.boundary_derivative(x ** 4, h, "high", "noghost")
    assert abs(d - 4.0) < 1e-12


def test_interior_truncation_order():
    errs = []
    for m in (64, 128):
        h = 1.0 / (m - 1)
        x = np.arange(m) * h
        gamma = 1.0 + 0.5 * np.sin(x)
        v = np.sin(2 * x)
        y = sbp1d.apply_d2_var(gamma, v, h)
        exact = 0.5 * np.cos(x) * 2 * np.cos(2 * x) - 4 * gamma * np.sin(2 * x)
        errs.append(np.abs((y - exact)[8:-8]).max())
    rate = np.log2(errs[0] / errs[1])
    assert 3.5 < rate < 4.5


def test_closure_rows_at_least_second_order():
    errs = []
    for m in (64, 128):
        h = 1.0 / (m - 1)
        x = np.arange(m) * h
        gamma = 1.0 + 0.5 * np.sin(x)
        v = np.sin(2 * x)
        y = sbp1d.apply_d2_var(gamma, v, h)
        exact = 0.5 * np.cos(x) * 2 * np.cos(2 * x) - 4 * gamma * np.sin(2 * x)
        errs.append(np.abs((y - exact)[:8]).max())
    rate = np.log2(errs[0] / errs[1])
    assert rate > 1.8


def test_periodic_ops():
    n = 64
    h = 1.0 / n
    x = np.arange(n) * h
    v = np.sin(2 * np.pi * x)
    d = sbp1d.apply_d1_periodic(v, h)
    assert np.abs(d - 2 * np.pi * np.cos(2 * np.pi * x)).max() < 1e-4
    # order 4 under doubling
    n2 = 128
    h2 = 1.0 / n2
    x2 = np.arange(n2) * h2
    d2 = sbp1d.apply_d1_periodic(np.sin(2 * np.pi * x2), h2)
    e1 = np.abs(d - 2 * np.pi * np.cos(2 * np.pi * x)).max()
    e2 = np.abs(d2 - 2 * np.pi * np.cos(2 * np.pi * x2)).max()
    assert 3.5 < np.log2(e1 / e2) < 4.5
    # constants annihilated exactly
    assert np.abs(sbp1d.apply_d2_var_periodic(np.ones(n), np.ones(n), h)).max() < 1e-11
    # self-adjointness under the uniform norm
    rng = np.random.default_rng(3)
    gamma = rng.random(n) + 0.5
    u, w = rng.standard_normal((2, n))
    a = np.sum(u * sbp1d.apply_d2_var_periodic(gamma, w, h))
    b = np.sum(w * sbp1d.apply_d2_var_periodic(gamma, u, h))
    assert abs(a - b) < 1e-10 * _norm(u) * _norm(w)


def test_size_guard():
    with pytest.raises(ValueError):
        sbp1d.build_sbp(7)
    with pytest.raises(ValueError):
        sbp1d.apply_d1(np.zeros(5), 0.1)


def test_wrapper_shapes():
    op = sbp1d.build_sbp(16)
    v_ext = np.zeros(19)
    with pytest.raises(ValueError):
        op.apply_G_ghost(np.ones(16), v_ext)
    with pytest.raises(ValueError):
        sbp1d.apply_d2_var(np.ones(16), np.zeros(16), 0.1, low="ghost")
