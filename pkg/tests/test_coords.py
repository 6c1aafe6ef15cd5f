import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nelson_kepler import coords
from nelson_kepler.core import ConvergenceError, DomainError, SingularityError, params_new
from nelson_kepler.limit_state import alpha_beta_cartesian


def quartic_inverse(e, a, x, y):
    """Independent oracle: u solves a quartic obtained by eliminating v."""
    s = 2 * a * e
    # (x(e+u) + s u)^2 (1 - u^2) + y^2 (e+u)^2 - s^2 (1 - u^2) = 0
    P = np.polynomial.Polynomial
    lin = P([x * e, x + s])
    one_m_u2 = P([1, 0, -1])
    poly = lin**2 * one_m_u2 + y * y * P([e, 1]) ** 2 - s * s * one_m_u2
    best = None
    for r in poly.roots():
        if abs(r.imag) > 1e-9 or not (-e < r.real <= 1):
            continue
        u = r.real
        k = s / (e + u)
        cv = x / k + u
        sv = y / (k * math.sqrt(max(1 - u * u, 0.0))) if u < 1 else 0.0
        err = abs(cv * cv + sv * sv - 1)
        v = math.atan2(sv, cv) % (2 * math.pi)
        pt = coords.to_cartesian(params_new(e=e, lam=math.sqrt(a)), u, v)
        res = math.hypot(pt[0] - x, pt[1] - y)
        if best is None or res + err < best[0]:
            best = (res + err, u, v)
    return best[1], best[2]


def test_to_cartesian_examples(p05):
    np.testing.assert_allclose(coords.to_cartesian(p05, 0.5, 0.0), [0.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(coords.to_cartesian(p05, 0.5, math.pi), [-1.5, 0.0], atol=1e-15)
    np.testing.assert_allclose(coords.to_cartesian(p05, 0.5, math.pi / 2), [-0.5, 0.8660254], atol=1e-7)


def test_on_ellipse_reduction(p05):
    v = np.linspace(0, 2 * np.pi, 50)
    a, e = p05.a, p05.e
    expect = np.stack([a * np.cos(v) - a * e, a * math.sqrt(1 - e * e) * np.sin(v)], -1)
    np.testing.assert_allclose(coords.to_cartesian(p05, e, v), expect, atol=1e-14)


def test_from_cartesian_examples(p05):
    u, v = coords.from_cartesian(p05, [-0.5, 0.8660254])
    assert u == pytest.approx(0.5, abs=1e-7)
    assert v == pytest.approx(math.pi / 2, abs=1e-7)
    u, v = coords.from_cartesian(p05, [0.5, 0.0])
    assert (u, v) == (pytest.approx(0.5, abs=1e-14), 0.0)
    with pytest.raises(DomainError):
        coords.from_cartesian(p05, [0.0, 0.0])
    with pytest.raises(DomainError):
        coords.from_cartesian(p05, [-0.7, 0.0])


def test_from_cartesian_nonstrict_gives_nan(p05):
    u, v = coords.from_cartesian(p05, np.array([[0.0, 0.0], [1.0, 1.0]]), strict=False)
    assert np.isnan(u[0]) and np.isnan(v[0])
    assert np.isfinite(u[1])


def test_convergence_error_carries_residual(p05):
    with pytest.raises(ConvergenceError) as exc:
        coords.from_cartesian(p05, [0.3, 0.4], max_iter=0, restarts=1)
    assert exc.value.residual > 0


@settings(max_examples=200, deadline=None)
@given(
    e=st.floats(0.05, 0.95),
    t=st.floats(0.0, 1.0),
    v=st.floats(0.0, 2 * math.pi, exclude_max=True),
)
def test_roundtrip_property(e, t, v):
    P = params_new(e=e)
    u = -e + 0.05 + t * (0.95 - (-e + 0.05))
    p = coords.to_cartesian(P, u, v)
    u2, v2 = coords.from_cartesian(P, p)
    assert abs(u2 - u) < 1e-9
    dv = (v2 - v + math.pi) % (2 * math.pi) - math.pi
    assert abs(dv) < 1e-9
    back = coords.to_cartesian(P, u2, v2)
    assert np.linalg.norm(back - p) < 1e-9 * (1 + np.linalg.norm(p))


def test_from_cartesian_against_quartic_oracle(rng):
    for e in (0.2, 0.5, 0.85):
        P = params_new(e=e)
        pts = rng.uniform(-4, 3, size=(60, 2))
        u, v = coords.from_cartesian(P, pts, strict=False)
        for k, (x, y) in enumerate(pts):
            if np.isnan(u[k]):
                continue
            uo, vo = quartic_inverse(e, P.a, x, y)
            assert abs(uo - u[k]) < 1e-8
            assert abs((vo - v[k] + math.pi) % (2 * math.pi) - math.pi) < 1e-8


def test_sign_of_sin_v_matches_y(rng, p05):
    pts = rng.uniform(-3, 2, size=(500, 2))
    u, v = coords.from_cartesian(p05, pts, strict=False)
    ok = ~np.isnan(u) & (np.abs(pts[:, 1]) > 1e-12)
    assert np.all(np.sign(np.sin(v[ok])) == np.sign(pts[ok, 1]))
    assert np.all((v[ok] >= 0) & (v[ok] < 2 * math.pi))


def test_alpha_beta_uv_examples(p05):
    ab = coords.alpha_beta_uv(p05, 0.5, 0.0)
    assert (ab.alpha, ab.beta) == (pytest.approx(3.0), pytest.approx(0.0))
    ab = coords.alpha_beta_uv(p05, 0.5, math.pi / 2)
    assert (ab.alpha, ab.beta) == (pytest.approx(0.6), pytest.approx(-0.8))
    ab = coords.alpha_beta_uv(p05, 1.0, math.pi / 2)
    assert (ab.alpha, ab.beta) == (pytest.approx(0.0), pytest.approx(-1.0))
    with pytest.raises(SingularityError):
        coords.alpha_beta_uv(p05, 1.0, 0.0)


def test_alpha_beta_squares_to_one_minus_four_over_nu(rng, p05):
    u = rng.uniform(-0.45, 0.95, 300)
    v = rng.uniform(0, 2 * np.pi, 300)
    ab = coords.alpha_beta_uv(p05, u, v)
    x, y = coords.to_cartesian(p05, u, v).T
    nu = np.hypot(x, y) - x / p05.e - 1j * y * math.sqrt(1 - p05.e**2) / p05.e
    w = (ab.alpha + 1j * ab.beta) ** 2
    np.testing.assert_allclose(w, 1 - 4 / nu, rtol=1e-10, atol=1e-10)
    assert np.all(ab.alpha >= 0)


def test_alpha_beta_representation_consistency(rng):
    for e in (0.3, 0.5, 0.9):
        P = params_new(e=e)
        u = rng.uniform(-e + 0.05, 0.95, 300)
        v = rng.uniform(0, 2 * np.pi, 300)
        ab = coords.alpha_beta_uv(P, u, v)
        abc = alpha_beta_cartesian(P, coords.to_cartesian(P, u, v))
        np.testing.assert_allclose(abc.alpha, ab.alpha, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(abc.beta, ab.beta, rtol=1e-10, atol=1e-10)


def test_beta_jump_on_singular_line(p05):
    for v0 in (0.3, 1.0, 2.0, 2.9):
        above = coords.alpha_beta_uv(p05, 1.0, v0).beta
        below = coords.alpha_beta_uv(p05, 1.0, 2 * math.pi - v0).beta
        assert below - above == pytest.approx(2 * math.sin(v0) / (1 - math.cos(v0)), rel=1e-12)
    # approaching u = 1 from inside the coordinate cylinder gives the same limits
    near = coords.alpha_beta_uv(p05, 1 - 1e-12, 1.0)
    assert near.beta == pytest.approx(-math.sin(1.0) / (1 - math.cos(1.0)), rel=1e-5)


def test_jacobian_examples_and_fd(p05):
    J = coords.jacobian(p05, 0.5, 0.0)
    assert J[0, 1] == pytest.approx(0.0, abs=1e-15)
    J = coords.jacobian(p05, 0.5, math.pi / 2)
    assert J[1, 1] == pytest.approx(0.0, abs=1e-15)
    u, v, h = 0.3, 1.0, 1e-6
    J = coords.jacobian(p05, u, v)
    du = (coords.to_cartesian(p05, u + h, v) - coords.to_cartesian(p05, u - h, v)) / (2 * h)
    dv = (coords.to_cartesian(p05, u, v + h) - coords.to_cartesian(p05, u, v - h)) / (2 * h)
    fd = np.stack([du, dv], axis=-1)
    np.testing.assert_allclose(J, fd, rtol=1e-6, atol=1e-9)
    with pytest.raises(SingularityError):
        coords.jacobian(p05, 1.0, 1.0)


def test_keplercoord_normalises_v(p05):
    kc = coords.KeplerCoord(0.5, -math.pi / 2)
    assert kc.v == pytest.approx(1.5 * math.pi)
    back = coords.KeplerCoord.from_point(p05, kc.to_point(p05))
    assert back.u == pytest.approx(0.5) and back.v == pytest.approx(kc.v)


def test_u_out_of_range(p05):
    with pytest.raises(DomainError):
        coords.to_cartesian(p05, -0.5, 0.0)
    with pytest.raises(DomainError):
        coords.to_cartesian(p05, 1.2, 0.0)
