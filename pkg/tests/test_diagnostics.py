import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughsys import diagnostics as D
from roughsys.coefficients import CarlesonDensity, carleson_density, identity_tensor, lame_tensor
from roughsys.errors import BallTooLarge, GeometryError
from roughsys.grid import ConeSpec, GridFunction, cone_nodes, strip
from roughsys.profiles import perturbed_identity, random_smooth_field
from roughsys.solver import solve_dirichlet


def field(dom, values):
    return GridFunction(np.broadcast_to(values, dom.node_shape).astype(float), dom)


def random_field(dom, seed, N=1):
    return GridFunction(np.random.default_rng(seed).standard_normal(dom.node_shape + (N,)), dom)


# ---- L2 averages ------------------------------------------------------------

@pytest.mark.parametrize("n", [2, 3])
def test_average_of_constant(n):
    dom = strip(n, 8)
    w = D.l2_average(field(dom, -2.5)).w
    np.testing.assert_allclose(w, 2.5, rtol=1e-14)


def test_average_of_linear_field_matches_ball_moment():
    dom = strip(2, 128, h=2.0)
    x0 = dom.node_x0()
    w = D.l2_average(field(dom, x0 + 0 * dom.lateral_coords()[..., 0])).w
    for i in (40, 64, 100):      # heights 0.31, 0.5, 0.78
        assert w[i, 5] == pytest.approx(x0[i, 0] * np.sqrt(1 + 1 / 16), rel=3e-3)


def test_average_matches_exhaustive_rescan(rng):
    dom = strip(2, 32)
    u = random_field(dom, 3, N=2)
    w = D.l2_average(u).w
    mag = u.magnitude_sq()
    x0, lat = dom.node_x0()[:, 0], dom.lateral_coords()[:, 0]
    picks = list(zip(rng.integers(1, dom.nx0, 1000), rng.integers(0, 32, 1000)))
    for i, j in picks:
        r = x0[i] / 2
        acc, cnt = 0.0, 0
        for k in range(-2, 3):                        # periodic images
            d = (lat[None, :] + k - lat[j]) ** 2 + (x0[:, None] - x0[i]) ** 2
            sel = d < r * r
            acc += mag[sel].sum()
            cnt += sel.sum()
        assert w[i, j] == pytest.approx(np.sqrt(acc / cnt), rel=1e-12)


# ---- nontangential maximal functions ----------------------------------------

def test_ntmax_constant():
    dom = strip(2, 16)
    assert np.allclose(D.ntmax_tilde(field(dom, -3.0), ConeSpec(1.0)).values, 3.0)
    assert np.allclose(D.ntmax(field(dom, -3.0), ConeSpec(1.0)).values, 3.0)


def test_truncated_ntmax_of_linear_field():
    dom = strip(2, 64, h=2.0)
    u = field(dom, dom.node_x0() + 0 * dom.lateral_coords()[..., 0])
    nt = D.ntmax_tilde(u, ConeSpec(1.0, trunc_height=1.0)).values
    w = D.l2_average(u).w
    top = int(round(1.0 / dom.dx0))
    assert np.all(nt <= w[top, 0] + 1e-12) and np.all(nt >= w[top - 1, 0] - 1e-12)
    np.testing.assert_allclose(nt, np.sqrt(1 + 1 / 16), rtol=2 * dom.dx0)


@given(st.integers(0, 10_000), st.floats(0.3, 2.0))
def test_ntilde_equals_n_of_w(seed, a):
    dom = strip(2, 16)
    u = random_field(dom, seed, 2)
    lhs = D.ntmax_tilde(u, ConeSpec(a)).values
    rhs = D.ntmax(D.l2_average(u), ConeSpec(a)).values
    np.testing.assert_array_equal(lhs, rhs)


@given(st.integers(0, 10_000), st.floats(0.3, 2.0), st.floats(0.3, 2.0))
def test_aperture_monotonicity(seed, a1, a2):
    dom = strip(2, 16)
    u = random_field(dom, seed)
    lo, hi = sorted((a1, a2))
    assert np.all(D.ntmax_tilde(u, ConeSpec(lo)).values <= D.ntmax_tilde(u, ConeSpec(hi)).values)
    assert np.all(D.square_function(u, ConeSpec(lo)).values
                  <= D.square_function(u, ConeSpec(hi)).values + 1e-12)


@given(st.integers(0, 10_000), st.floats(0.05, 1.0), st.floats(0.05, 1.0))
def test_truncation_monotonicity(seed, h1, h2):
    dom = strip(2, 16)
    u = random_field(dom, seed)
    lo, hi = sorted((h1, h2))
    c = lambda t: ConeSpec(1.0, trunc_height=t)
    assert np.all(D.ntmax_tilde(u, c(lo)).values <= D.ntmax_tilde(u, c(hi)).values)
    assert np.all(D.square_function(u, c(lo)).values <= D.square_function(u, c(hi)).values + 1e-12)


def test_ntmax_strip_extension_pads_with_zeros():
    dom = strip(2, 16)
    u, _ = solve_dirichlet(dom, identity_tensor(dom), np.ones(16))
    nt = D.ntmax_tilde_strip(u, ConeSpec(1.0))
    assert nt.values.shape == (16,) and np.all(nt.values > 0) and np.all(nt.values <= 1 + 1e-12)


# ---- square function --------------------------------------------------------

def test_square_function_of_constant():
    dom = strip(2, 16)
    assert not np.any(D.square_function(field(dom, 4.0), ConeSpec(1.0)).values)


def test_square_function_of_linear_field_is_cone_area():
    dom = strip(2, 64)
    u = field(dom, dom.node_x0() + 0 * dom.lateral_coords()[..., 0])
    s = D.square_function(u, ConeSpec(1.0, trunc_height=1.0)).values
    np.testing.assert_allclose(s, 1.0, rtol=0.03)


@pytest.mark.parametrize("a", [0.5, 1.0])
def test_fubini_identity(a):
    dom = strip(2, 64)
    for seed in range(3):
        u = random_smooth_field(dom, seed)
        s2 = D.square_function(u, ConeSpec(a)).lp_norm(2.0) ** 2
        assert s2 / D.weighted_energy(u) == pytest.approx(D.fubini_constant(2, a), rel=0.02)


# ---- Carleson ---------------------------------------------------------------

def test_zero_density_norm():
    dom = strip(2, 32)
    rep = D.carleson_norm(CarlesonDensity(np.zeros(dom.cell_shape), dom))
    assert rep.norm == 0.0


def test_tent_indicator_norm():
    dom = strip(2, 128, h=1.0, period=2.0)
    lat = dom.cell_lateral_coords()[..., 0]
    lat = np.minimum(lat, dom.period - lat)
    inside = dom.cell_delta() ** 2 + lat[None] ** 2 < 1.0
    rep = D.carleson_norm(CarlesonDensity(inside.astype(float), dom))
    assert rep.norm == pytest.approx(np.pi / 4, rel=0.03)
    assert rep.argmax[1] == pytest.approx(1.0)
    assert rep.norm == max(rep.table.values())


def test_norm_eps_squared_scaling():
    dom = strip(2, 64)
    n1 = D.carleson_norm(carleson_density(perturbed_identity(dom, 0.1))).norm
    n2 = D.carleson_norm(carleson_density(perturbed_identity(dom, 0.2))).norm
    assert n2 / n1 == pytest.approx(4.0, abs=1e-10)


def test_tent_radius_too_large():
    dom = strip(2, 16)
    with pytest.raises(BallTooLarge):
        D.tent_masses(CarlesonDensity(np.ones(dom.cell_shape), dom), 0.75)


@given(st.integers(0, 10_000))
def test_norm_dominates_table(seed):
    dom = strip(2, 16)
    dens = np.random.default_rng(seed).random(dom.cell_shape)
    rep = D.carleson_norm(CarlesonDensity(dens, dom))
    assert rep.norm >= 0 and rep.norm == max(rep.table.values())


def test_embedding_ratio_zero_field():
    dom = strip(2, 16)
    dens = CarlesonDensity(np.ones(dom.cell_shape), dom)
    assert D.carleson_embedding_ratio(field(dom, 0.0), dens, ConeSpec(1.0)) == 0.0


def test_embedding_ratio_tent_closed_form():
    dom = strip(2, 128)
    R = 0.25
    lat = dom.cell_lateral_coords()[..., 0]
    lat = np.minimum(lat, 1 - lat)
    tent = (dom.cell_delta() ** 2 + lat[None] ** 2 < R * R).astype(float)
    ratio = D.carleson_embedding_ratio(field(dom, 1.0), CarlesonDensity(tent, dom), ConeSpec(1.0))
    # volume pi R^2 / 2 over (pi R / 4) * period
    assert ratio == pytest.approx(2 * R, rel=0.03)


def _embedding(res):
    dom = strip(2, res)
    u = random_smooth_field(dom, 7)
    x = dom.cell_lateral_coords()[..., 0][None]
    dens = (1 + np.sin(2 * np.pi * x)) * dom.cell_delta()
    return D.carleson_embedding_ratio(u, CarlesonDensity(dens, dom), ConeSpec(1.0))


def test_embedding_ratio_refinement_stable():
    r32, r64 = _embedding(32), _embedding(64)
    assert abs(r64 / r32 - 1) < 0.2


# ---- Hardy-Littlewood -------------------------------------------------------

def test_hl_constant():
    dom = strip(2, 32)
    np.testing.assert_allclose(D.hl_maximal(np.full(32, 1.5), dom).values, 1.5)


def test_hl_point_mass():
    dom = strip(2, 128)
    f = np.zeros(128)
    f[0] = 1 / dom.dl
    got = D.hl_maximal(f, dom, radii="all").values
    # exhaustive scan over every radius
    brute = np.zeros(128)
    for q in range(128):
        best = abs(f[q])
        for k in range(1, 65):
            d = np.abs(np.arange(128) - q)
            d = np.minimum(d, 128 - d)
            sel = d < k
            best = max(best, f[sel].mean())
        brute[q] = best
    np.testing.assert_allclose(got, brute, rtol=1e-12)
    for q in (8, 16, 32):
        dist = q * dom.dl
        assert got[q] == pytest.approx(1 / (2 * dist), rel=2 / q + 1e-9)


@given(st.integers(0, 10_000))
def test_hl_dominates(seed):
    dom = strip(3, 8)
    f = np.random.default_rng(seed).standard_normal(dom.lat_shape)
    assert np.all(D.hl_maximal(f, dom).values >= np.abs(f))


# ---- stopping time ----------------------------------------------------------

def _averaged(dom, w):
    return D.AveragedField(np.broadcast_to(w, dom.node_shape).copy(), field(dom, 0.0))


def test_stopping_time_zero_when_below_threshold():
    dom = strip(2, 16)
    st_ = D.stopping_time(_averaged(dom, 0.3), 0.5, ConeSpec(1.0))
    assert not np.any(st_.values)


@pytest.mark.parametrize("c,nu", [(2.0, 0.5), (2.0, 0.8), (2.0, 1.5), (2.0, 2.5)])
def test_stopping_time_analytic_profile(c, nu):
    dom = strip(2, 64, h=4.0)
    w = c / (1 + dom.node_x0())
    hbar = D.stopping_time(_averaged(dom, w + 0 * dom.lateral_coords()[..., 0]), nu, ConeSpec(1.0))
    assert np.all(np.abs(hbar.values - max(0.0, c / nu - 1)) <= dom.dx0 + 1e-12)


def _check_threshold(dom, w, nu, a):
    hbar = D.stopping_time(_averaged(dom, w), nu, ConeSpec(a)).values
    for j in range(dom.nx_lat):
        up = cone_nodes(dom, (j,), ConeSpec(a), lift=hbar[j] + dom.dx0)
        assert not up.any() or w[up].max() < nu
        if hbar[j] > 0:
            down = cone_nodes(dom, (j,), ConeSpec(a), lift=hbar[j] - dom.dx0)
            assert w[down].max() >= nu
    return hbar


@given(st.integers(0, 10_000), st.floats(0.5, 2.0))
def test_stopping_time_threshold_semantics(seed, a):
    dom = strip(2, 16, h=2.0)
    rng = np.random.default_rng(seed)
    w = rng.random(dom.node_shape)
    w[dom.nx0 // 2:] = 0.0                      # field vanishes above the strip
    _check_threshold(dom, w, 0.5, a)


@given(st.integers(0, 10_000), st.floats(0.5, 2.0))
def test_stopping_time_lipschitz(seed, a):
    dom = strip(2, 32, h=2.0)
    rng = np.random.default_rng(seed)
    w = rng.random(dom.node_shape)
    w[dom.nx0 // 2:] = 0.0
    hbar = D.stopping_time(_averaged(dom, w), 0.7, ConeSpec(a)).values
    slope = np.max(np.abs(np.diff(np.r_[hbar, hbar[0]]))) / dom.dl
    assert slope <= 1 / a + 2 * dom.dx0 / dom.dl + 1e-9


# ---- level sets and good lambda ---------------------------------------------

def test_level_sets():
    dom = strip(2, 16)
    F = D.BoundaryFunctional(np.linspace(0, 1, 16), dom, "Ntilde")
    assert not D.level_set(F, 2.0).any()
    np.testing.assert_array_equal(D.level_set(F, 0.0), F.values > 0)
    assert D.level_set(F, 0.5).sum() == sum(v > 0.5 for v in F.values)


def test_good_lambda_zero_field():
    dom = strip(2, 16)
    rows = D.good_lambda_counts(field(dom, 0.0), 1.0, gammas=(0.1,), nu_grid=[0.1, 1.0])
    assert all(r.left == 0 and r.right == 0 and np.isnan(r.ratio) for r in rows)


def test_good_lambda_gamma_zero_empty():
    dom = strip(2, 32)
    u = random_smooth_field(dom, 1)
    rows = D.good_lambda_counts(u, 1.0, gammas=(0.0,))
    assert rows and all(r.left == 0 for r in rows)


def test_good_lambda_requires_wider_square_cone():
    dom = strip(2, 16)
    with pytest.raises(GeometryError):
        D.good_lambda_counts(field(dom, 1.0), 1.0, b=0.5)


@given(st.integers(0, 10_000), st.sampled_from([0.05, 0.4, 2.0, 10.0]))
def test_good_lambda_inclusion(seed, gamma):
    dom = strip(2, 16)
    u = random_field(dom, seed)
    for g, nu, left, right, above in D.good_lambda_sets(u, 1.0, gammas=(gamma,)):
        assert not np.any(left & ~above)
        assert not np.any(above & ~right)


# ---- Poincaré and Caccioppoli -----------------------------------------------

def test_ratios_vanish_for_constants():
    dom = strip(2, 32)
    u = field(dom, 1.0)
    assert D.poincare_ratio(u, (0.5, 0.5), 0.2) == 0.0
    assert D.caccioppoli_ratio(u, (0.5, 0.5), 0.2) == 0.0


def test_poincare_linear_field():
    dom = strip(2, 128)
    u = field(dom, dom.node_x0() + 0 * dom.lateral_coords()[..., 0])
    assert D.poincare_ratio(u, (0.5, 0.5), 0.3) == pytest.approx(1 / 4, rel=0.03)
    assert np.isfinite(D.caccioppoli_ratio(u, (0.5, 0.5), 0.2))


def test_ratio_balls_must_be_interior():
    dom = strip(2, 32)
    u = field(dom, 1.0)
    with pytest.raises(GeometryError):
        D.poincare_ratio(u, (0.1, 0.5), 0.2)
    with pytest.raises(GeometryError):
        D.caccioppoli_ratio(u, (0.5, 0.5), 0.3)


def _lame_ratios(res):
    dom = strip(2, res)
    x = dom.lateral_coords()[..., 0]
    f = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x)], -1)
    u, _ = solve_dirichlet(dom, lame_tensor(dom, 1.0, 3.0, 1.0), f)
    return (D.poincare_ratio(u, (0.5, 0.5), 0.2), D.caccioppoli_ratio(u, (0.5, 0.5), 0.2))


def test_ratios_refinement_stable():
    p1, c1 = _lame_ratios(32)
    p2, c2 = _lame_ratios(64)
    assert abs(p2 / p1 - 1) < 0.1 and abs(c2 / c1 - 1) < 0.1
