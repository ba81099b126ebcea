import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from roughsys.coefficients import identity_tensor, lame_tensor, legendre_constants, normalize_a00, zero_top_row
from roughsys.errors import EllipticityLost, MapDegenerate
from roughsys.grid import build_domain, strip
from roughsys.pullback import (MollifierSpec, PullbackMap, build_pullback, flatten_problem,
                               mollify_phi, mollify_with_derivatives, pushforward_coeffs,
                               rho_jacobian, rho_map)


def sine_graph(res, L, n=2):
    x = strip(n, res).lateral_coords()[..., 0]
    return L / (2 * np.pi) * np.sin(2 * np.pi * x)


# ---- kernel -----------------------------------------------------------------

def test_kernel_unit_mass_even_nonnegative():
    k = MollifierSpec()
    assert k.mass(1) == pytest.approx(1.0, abs=1e-10)
    assert k.mass(2) == pytest.approx(1.0, abs=1e-10)
    x = np.linspace(-1.5, 1.5, 301)[:, None]
    p = k.profile(x)
    assert np.all(p >= 0)
    np.testing.assert_array_equal(p, k.profile(-x))
    assert np.all(p[np.abs(x[:, 0]) >= 1] == 0)


@given(st.floats(-3, 3), st.floats(0.0, 0.4))
def test_mollify_constant(c, lam):
    phi = np.full(64, c)
    np.testing.assert_allclose(mollify_phi(phi, lam, 1 / 64), c, rtol=1e-13, atol=1e-13)


def test_mollify_linear_exact_away_from_wrap():
    dl = 1 / 256
    x = np.arange(256) * dl
    phi = 0.3 * x
    lam = 0.05
    out = mollify_phi(phi, lam, dl)
    window = (x > lam + dl) & (x < 1 - lam - dl)
    np.testing.assert_allclose(out[window], phi[window], atol=1e-13)


def test_mollify_cosine_damping_matches_quadrature():
    dl = 1 / 256
    x = np.arange(256) * dl
    lam = 0.1
    out = mollify_phi(np.cos(2 * np.pi * x), lam, dl)
    c = MollifierSpec().norm_1d()
    damp, _ = integrate.quad(lambda t: c * (1 - t * t) ** 4 * np.cos(2 * np.pi * lam * t), -1, 1,
                             epsabs=1e-14)
    np.testing.assert_allclose(out, damp * np.cos(2 * np.pi * x), atol=1e-9)


def test_subgrid_mollifier_is_identity(rng):
    phi = rng.standard_normal(32)
    np.testing.assert_array_equal(mollify_phi(phi, 0.5 / 32, 1 / 32), phi)


def test_mollifier_2d_constant_and_symmetry(rng):
    phi = rng.standard_normal((16, 16))
    out = mollify_phi(phi, 0.2, 1 / 16)
    assert out.mean() == pytest.approx(phi.mean(), abs=1e-13)
    # even kernel: mollifying the reflected field reflects the result
    ref = mollify_phi(phi[::-1, ::-1], 0.2, 1 / 16)
    np.testing.assert_allclose(np.roll(ref[::-1, ::-1], (-1, -1), axis=(0, 1))[::1], np.roll(out, (-1, -1), axis=(0, 1)), atol=1e-13)


def test_scale_derivative_matches_finite_difference(rng):
    x = np.arange(128) / 128
    phi = 0.05 * np.sin(2 * np.pi * x) + 0.02 * np.cos(6 * np.pi * x)
    lam, eps = 0.13, 1e-6
    _, ds, _ = mollify_with_derivatives(phi, lam, 1 / 128)
    fd = (mollify_phi(phi, lam + eps, 1 / 128) - mollify_phi(phi, lam - eps, 1 / 128)) / (2 * eps)
    np.testing.assert_allclose(ds, fd, atol=1e-6)


# ---- map and Jacobian -------------------------------------------------------

def test_zero_graph_gives_identity_map():
    dom = strip(2, 32)
    pm = build_pullback(dom, np.zeros(32))
    np.testing.assert_array_equal(rho_map(pm, [0.3, 0.4]), [0.3, 0.4])
    np.testing.assert_array_equal(rho_jacobian(pm, [0.3, 0.4]), np.eye(2))
    assert pm.det_range == (1.0, 1.0)


def test_linear_graph_map_and_jacobian():
    dom = strip(2, 128)
    x = np.arange(128) / 128
    ell = 0.2
    pm = build_pullback(dom, ell * x, gamma=0.1)
    p = np.array([0.5, 0.5])      # mollification window 0.05 stays inside one period
    np.testing.assert_allclose(rho_map(pm, p), [0.5 + ell * 0.5, 0.5], atol=1e-12)
    J = rho_jacobian(pm, p)
    np.testing.assert_allclose(J, [[1.0, ell], [0.0, 1.0]], atol=1e-10)
    assert np.linalg.det(J) == pytest.approx(1.0, abs=1e-10)


def test_boundary_trace_is_graph(rng):
    dom = strip(2, 64)
    phi = 0.02 * rng.standard_normal(64)
    pm = build_pullback(dom, phi)
    np.testing.assert_array_equal(pm.s[0], phi)
    for j in (0, 7, 40):
        np.testing.assert_allclose(rho_map(pm, [0.0, j / 64]), [phi[j], j / 64], atol=1e-15)


def _jac_fd_gap(res):
    dom = strip(2, res)
    pm = build_pullback(dom, sine_graph(res, 0.1) + 0.01 * np.cos(4 * np.pi * np.arange(res) / res),
                        gamma=0.1)
    gaps = []
    for i, j in [(res // 2, res // 4), (res // 4, res // 3), (3 * res // 4, res // 8)]:
        p = np.array([i / res, j / res])
        J = rho_jacobian(pm, p)
        h = 1 / res
        col0 = (rho_map(pm, p + [h, 0]) - rho_map(pm, p - [h, 0])) / (2 * h)
        col1 = (rho_map(pm, p + [0, h]) - rho_map(pm, p - [0, h])) / (2 * h)
        gaps.append(np.max(np.abs(np.stack([col0, col1], -1) - J)))
    return max(gaps)


def test_jacobian_matches_finite_differences():
    g32, g64 = _jac_fd_gap(32), _jac_fd_gap(64)
    assert g64 < 1e-3
    assert g32 / g64 > 3.0


def test_degenerate_map_raises():
    dom = strip(2, 64)
    x = np.arange(64) / 64
    # a slope-1 tent mollified at scale 6 x0 sinks faster than x0 rises over the peak
    pm = build_pullback(dom, np.abs(x - 0.5), gamma=6.0)
    assert not pm.is_monotone()
    with pytest.raises(MapDegenerate):
        rho_jacobian(pm, [0.05, 0.0])
    with pytest.raises(MapDegenerate):
        pushforward_coeffs(pm, identity_tensor(dom))


@pytest.mark.parametrize("L", [0.05, 0.2, 0.5])
def test_fibres_monotone_and_shift_bounded(L):
    dom = strip(2, 64)
    phi = sine_graph(64, L)
    pm = build_pullback(dom, phi)
    assert pm.is_monotone()
    lo, hi = pm.det_range
    assert 0.9 <= lo <= hi <= 1.1
    assert np.isfinite(pm.shift_constant(build_domain(2, 1, 1, 2, 64, phi).lip_const))


# ---- pushforward ------------------------------------------------------------

def test_pushforward_flat_is_identity(rng):
    dom = strip(2, 16)
    co = lame_tensor(dom, 1.0 + 0.1 * rng.random(dom.node_shape), 3.0, 1.0)
    out = pushforward_coeffs(build_pullback(dom, np.zeros(16)), co)
    np.testing.assert_allclose(out.A, co.A, atol=1e-14)
    np.testing.assert_allclose(out.B, co.B, atol=1e-14)


def test_pushforward_linear_graph_scalar_laplacian():
    res, ell = 128, 0.2
    dom = strip(2, res)
    x = np.arange(res) / res
    graph = build_domain(2, 1.0, 1.0, dom.nx0, res, ell * x)
    out = pushforward_coeffs(build_pullback(dom, ell * x, gamma=0.1), identity_tensor(graph))
    want = np.array([[1 + ell ** 2, -ell], [-ell, 1.0]])
    # columns whose mollification window never wraps, rows below height 1
    cols = (x > 0.15) & (x < 0.85)
    np.testing.assert_allclose(out.A[:, cols, :, :, 0, 0], np.broadcast_to(want, out.A[:, cols, :, :, 0, 0].shape), atol=1e-10)


def test_pushforward_callable_vertical_shift():
    dom = strip(2, 16)
    c = 0.25

    def coeffs(pts):
        A = np.zeros(pts.shape[:-1] + (2, 2, 1, 1))
        A[..., 0, 0, 0, 0] = 1 + pts[..., 0]
        A[..., 1, 1, 0, 0] = 2 + pts[..., 0] ** 2
        return A, np.zeros(pts.shape[:-1] + (2, 1, 1))

    out = pushforward_coeffs(build_pullback(dom, np.full(16, c)), coeffs)
    x0 = dom.node_x0() + c
    np.testing.assert_allclose(out.A[..., 0, 0, 0, 0], 1 + x0, atol=1e-14)
    np.testing.assert_allclose(out.A[..., 1, 1, 0, 0], 2 + x0 ** 2, atol=1e-14)


def test_pushforward_legendre_trend():
    vals = []
    for L in (0.025, 0.05, 0.1):
        graph = strip(2, 64, phi_samples=sine_graph(64, L))
        pm = build_pullback(strip(2, 64), graph.phi)
        vals.append(legendre_constants(pushforward_coeffs(pm, identity_tensor(graph)), rank_one=False).legendre_min)
        assert vals[-1] >= 1 - 3 * L
    assert vals[0] > vals[1] > vals[2]


# ---- full flattening --------------------------------------------------------

def test_flatten_flat_input_only_normalises():
    dom = strip(2, 16)
    co = lame_tensor(dom, 1.0, 3.0, 1.0)
    fr = flatten_problem(dom, co, np.ones(16))
    ref = zero_top_row(normalize_a00(co))[0]
    np.testing.assert_allclose(fr.coeffs.A, ref.A, atol=1e-14)
    np.testing.assert_allclose(fr.coeffs.B, ref.B, atol=1e-14)
    np.testing.assert_array_equal(fr.f, np.ones(16))


def test_flatten_lame_postconditions():
    graph = strip(2, 32, phi_samples=sine_graph(32, 0.05))
    fr = flatten_problem(graph, lame_tensor(graph, 1.0, 3.0, 1.0), np.zeros((32, 2)))
    A = fr.coeffs.A
    assert np.max(np.abs(A[..., 0, 0, :, :] - np.eye(2))) <= 1e-12
    assert np.all(A[..., 0, 1:, :, :] == 0)
    assert fr.metrics["legendre_after"] > 0


def test_flatten_carleson_growth_trend():
    after = []
    for L in (0.025, 0.05, 0.1):
        graph = strip(2, 64, phi_samples=sine_graph(64, L))
        fr = flatten_problem(graph, lame_tensor(graph, 1.0, 3.0, 1.0), np.zeros((64, 2)))
        after.append(fr.metrics["carleson_after"])
        # constant Lamé input: the whole Carleson norm comes from the graph
        assert fr.metrics["carleson_before"] == 0
    assert after[0] < after[1] < after[2]
    # quadratic in L for a constant input
    assert 2.5 < after[1] / after[0] < 5.5


def test_flatten_raises_when_ellipticity_lost():
    graph = strip(2, 16)
    co = identity_tensor(graph)
    A = co.A.copy()
    A[..., 1, 1, 0, 0] = -1.0          # hyperbolic in the lateral direction
    with pytest.raises(EllipticityLost):
        flatten_problem(graph, co.replace(A), np.zeros(16))
