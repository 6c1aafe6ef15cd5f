import math

import mpmath
import numpy as np
import pytest

from nelson_kepler import exact_state as ex
from nelson_kepler import limit_state as ls
from nelson_kepler.core import DomainError, PoleError, params_new, quantum_params


def mp_ratio(n, z):
    """Extended-precision L'_{n-1}(z) / L_{n-1}(z) via mpmath's Laguerre function."""
    with mpmath.workdps(60):
        zz = mpmath.mpc(z.real, z.imag)
        val = mpmath.laguerre(n - 1, 0, zz)
        der = mpmath.diff(lambda t: mpmath.laguerre(n - 1, 0, t), zz)
        return complex(der / val)


def test_nu_examples(p05):
    v = ex.nu(p05, [0.5, 0, 0])
    assert v.re == pytest.approx(-0.5) and v.im == pytest.approx(0.0)
    v = ex.nu(p05, [0.0, 0.7, 0.0])
    assert v.re == pytest.approx(0.7)
    assert v.im == pytest.approx(-0.7 * math.sqrt(3))
    with pytest.raises(DomainError):
        ex.nu(p05, [0, 0, 0])


def test_laguerre_ratio_examples():
    assert ex.laguerre_ratio(1, 3.7 + 1j) == 0
    assert ex.laguerre_ratio(2, 2.0) == pytest.approx(1.0)
    z = ex.laguerre_ratio(400, 400 * (-0.5))
    assert z.real == pytest.approx(-1.0, abs=1e-2)
    with pytest.raises(DomainError):
        ex.laguerre_ratio(0, 1.0)


def test_laguerre_ratio_pole():
    with pytest.raises(PoleError):
        ex.laguerre_ratio(2, 1.0)
    r = ex.laguerre_ratio(3, np.array([2 + math.sqrt(2), 1.0]), strict=False)
    assert np.isnan(r[0]) and np.isfinite(r[1])


@pytest.mark.parametrize("n", [2, 5, 20, 60, 100])
def test_ratio_against_extended_precision(n):
    rng = np.random.default_rng(n)
    nus = rng.uniform(-3, 3, 6) + 1j * rng.uniform(-3, 3, 6)
    for v in nus:
        if abs(v) < 0.05:
            continue
        z = n * v
        ours = complex(ex.laguerre_ratio(n, z))
        ref = mp_ratio(n, z)
        assert abs(ours - ref) <= 1e-8 * abs(ref)


def test_ratio_real_axis_against_extended_precision():
    n = 40
    roots = ex.laguerre_roots(n - 1)
    # midpoints between nodes are far from poles in relative terms
    for z in 0.5 * (roots[:-1] + roots[1:])[::5]:
        assert abs(complex(ex.laguerre_ratio(n, z)) - mp_ratio(n, complex(z))) < 1e-8 * abs(mp_ratio(n, complex(z)))


def test_ratio_small_argument_uses_derivative():
    # L'_m(0)/L_m(0) = -m
    assert complex(ex.laguerre_ratio(10, 1e-9)).real == pytest.approx(-9.0, rel=1e-6)


def test_ratio_converges_to_large_n_limit():
    for v in (-0.5, 3.0 + 2.0j, -2.0 - 1.0j):
        lim = complex(ex.laguerre_ratio_limit(v))
        errs = [abs(complex(ex.laguerre_ratio(n, n * v)) - lim) for n in (10, 20, 40, 80)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
    assert complex(ex.laguerre_ratio_limit(-0.5)).real == pytest.approx(-1.0)


def test_no_overflow_at_large_n():
    n = 200
    r = ex.laguerre_ratio(n, n * (5.0 + 3.0j))
    assert np.isfinite(r)
    assert np.isfinite(ex.laguerre_log_abs(n - 1, n * (5.0 + 3.0j)))


def test_laguerre_value_matches_scipy():
    from scipy.special import eval_laguerre

    z = np.linspace(-2, 30, 17)
    np.testing.assert_allclose(ex.laguerre_value(12, z).real, eval_laguerre(12, z), rtol=1e-10, atol=1e-10)


def test_z_field_exact_n1_is_radial():
    P = params_new(1, 1, 0.5, 1.0, n=1)
    p = np.array([0.3, -0.4, 1.2])
    Z = ex.z_field_exact(P, p)
    np.testing.assert_allclose(Z, 1j * p / np.linalg.norm(p), atol=1e-15)
    b = ex.drift_exact(P, [2.0, 0.0, 0.0])
    np.testing.assert_allclose(b, [-1.0, 0.0, 0.0], atol=1e-15)


def test_z_field_needs_n(p05):
    with pytest.raises(DomainError):
        ex.z_field_exact(p05, [1, 1, 1])


@pytest.mark.parametrize("n", [1, 3, 8])
def test_riccati_residual(n):
    P = quantum_params(n, e=0.5)
    eps2 = P.epsilon**2
    rng = np.random.default_rng(7 + n)
    pts = rng.uniform(-3, 3, size=(120, 3))
    h = 1e-5
    worst = 0.0
    for p in pts:
        try:
            Z = ex.z_field_exact(P, p)
            div = 0j
            for k in range(3):
                d = np.zeros(3)
                d[k] = h
                div += (ex.z_field_exact(P, p + d)[k] - ex.z_field_exact(P, p - d)[k]) / (2 * h)
        except PoleError:
            continue
        res = -0.5j * eps2 * div + 0.5 * np.sum(Z * Z) - P.mu / np.linalg.norm(p) - P.energy
        worst = max(worst, abs(res) / (1 + abs(0.5 * np.sum(Z * Z))))
    assert worst < 1e-6


def test_z_field_matches_log_gradient_of_psi():
    P = quantum_params(6, e=0.5)
    p = np.array([0.7, 0.9, -0.3])
    eps2 = P.epsilon**2
    k = P.mu / P.lam**2

    def log_psi(q):
        with mpmath.workdps(40):
            r = mpmath.sqrt(sum(mpmath.mpf(c) ** 2 for c in q))
            v = k * (r - q[0] / P.e) - 1j * k * q[1] * math.sqrt(1 - P.e**2) / P.e
            return -P.n * P.mu * r / P.lam**2 + mpmath.log(mpmath.laguerre(P.n - 1, 0, P.n * v))

    h = 1e-7
    grad = []
    for i in range(3):
        d = np.zeros(3)
        d[i] = h
        grad.append(complex((log_psi(p + d) - log_psi(p - d)) / (2 * h)))
    np.testing.assert_allclose(ex.z_field_exact(P, p), -1j * eps2 * np.array(grad), rtol=1e-6, atol=1e-9)


def test_drift_exact_reflection_symmetry():
    P = quantum_params(7, e=0.5)
    p = np.array([0.4, 0.8, 0.3])
    q = p * np.array([1, -1, 1])
    Zp, Zq = ex.z_field_exact(P, p), ex.z_field_exact(P, q)
    # nu -> conj(nu) under y -> -y
    np.testing.assert_allclose(Zq[[0, 2]], -np.conj(Zp[[0, 2]]), rtol=1e-12)
    np.testing.assert_allclose(Zq[1], np.conj(Zp[1]), rtol=1e-12)


def test_drift_exact_approaches_limit():
    P = quantum_params(200, e=0.5)
    rng = np.random.default_rng(3)
    pts = rng.uniform(-3, 2, size=(200, 3))
    nv = ex.nu(P, pts).value
    pts = pts[np.abs(nv - 2) > 1][:60]
    b = ex.drift_exact(P, pts, strict=False)
    lim = ls.drift3(P, pts)
    ok = np.all(np.isfinite(b), axis=1)
    rel = np.linalg.norm(b[ok] - lim[ok], axis=1) / np.linalg.norm(lim[ok], axis=1)
    assert ok.sum() > 40
    assert np.max(rel) < 0.05


def test_density_exact():
    P1 = params_new(1, 1, 0.5, 1.0, n=1)
    p = np.array([0.3, 0.2, -0.1])
    assert ex.invariant_density_exact(P1, p) == pytest.approx(math.exp(-2 * np.linalg.norm(p)))
    P = params_new(1, 1, 0.5, math.sqrt(1 / 3), n=3)
    curves = ex.nodal_curves(P)
    xz = curves.sample(0, num=5)
    on = np.stack([xz[:, 0], np.zeros(5), xz[:, 1]], -1)
    assert np.all(ex.invariant_density_exact(P, on) < 1e-20)


def test_density_exact_peaks_on_kepler_ellipse():
    P = quantum_params(20, e=0.5)
    xs = np.linspace(-3, 2, 201)
    ys = np.linspace(-2.5, 2.5, 201)
    X, Y = np.meshgrid(xs, ys)
    pts = np.stack([X, Y, np.zeros_like(X)], -1)
    logd = ex.log_invariant_density_exact(P, np.where(np.hypot(X, Y)[..., None] == 0, 1e-9, pts))
    j, i = np.unravel_index(np.argmax(logd), logd.shape)
    x, y = xs[i], ys[j]
    # distance to the ellipse ((x + ae)/a)^2 + (y/b)^2 = 1
    th = np.linspace(0, 2 * np.pi, 20001)
    ell = np.stack([P.a * np.cos(th) - P.a * P.e, P.a * P.sqrt1me2 * np.sin(th)], -1)
    d = np.min(np.hypot(ell[:, 0] - x, ell[:, 1] - y))
    assert d <= math.hypot(xs[1] - xs[0], ys[1] - ys[0])


def test_nodal_curves():
    c2 = ex.nodal_curves(params_new(1, 1, 0.5, math.sqrt(0.5), n=2))
    np.testing.assert_allclose(c2.roots, [1.0], atol=1e-14)
    c3 = ex.nodal_curves(params_new(1, 1, 0.5, math.sqrt(1 / 3), n=3))
    np.testing.assert_allclose(c3.roots, [2 - math.sqrt(2), 2 + math.sqrt(2)], atol=1e-13)
    c5 = ex.nodal_curves(quantum_params(5, e=0.5))
    assert len(c5.roots) == 4 and c5.eccentricity == 2.0
    with pytest.raises(DomainError):
        ex.nodal_curves(params_new(1, 1, 0.5, 1.0, n=1))


def test_nodal_curve_geometry_and_residual():
    P = quantum_params(30, e=0.4)
    c = ex.nodal_curves(P)
    for k in (0, 10, len(c.roots) - 1):
        scale = math.exp(ex.laguerre_log_abs(P.n - 2, c.roots[k]))
        assert abs(ex.laguerre_value(P.n - 1, c.roots[k]).real) < 1e-10 * max(scale, 1.0)
        xz = c.sample(k, num=50)
        lhs = P.mu / P.lam**2 * (np.hypot(xz[:, 0], xz[:, 1]) - xz[:, 0] / P.e)
        np.testing.assert_allclose(lhs, c.roots[k] / P.n, rtol=1e-10)


def test_node_proximity_error():
    P = quantum_params(20, e=0.5)
    c = ex.nodal_curves(P)
    x, z = c.sample(3, num=3)[1]
    with pytest.raises(PoleError):
        ex.z_field_exact(P, [x, 0.0, z])
