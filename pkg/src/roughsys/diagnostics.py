"""Harmonic-analysis functionals of grid fields.

Conventions: ``w``, ``N`` and ``Ñ`` live on nodes; ``S``, Carleson densities
and tent sums live on cells.  Cone membership is the open test
``a * (x0 - vertex) > |x' - Q'|``; balls are open.  Lateral directions are
periodic, and sums over balls and cones count every periodic image.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import kernels
from .coefficients import CarlesonDensity
from .errors import BallTooLarge, GeometryError
from .fd import cell_average, cell_gradient, nodal_gradient
from .grid import ConeSpec, DomainSpec, GridFunction, check_aperture, torus_distance


@dataclass(eq=False)
class AveragedField:
    """Local L2 averages ``w`` on nodes (shape ``node_shape``)."""
    w: np.ndarray
    source: GridFunction = field(repr=False)

    @property
    def domain(self) -> DomainSpec:
        return self.source.domain


@dataclass(eq=False)
class BoundaryFunctional:
    values: np.ndarray
    domain: DomainSpec
    kind: str

    def lp_norm(self, p: float = 2.0) -> float:
        return boundary_lp_norm(self.values, self.domain, p)


@dataclass
class CarlesonReport:
    norm: float
    argmax: tuple          # (boundary node index, radius)
    table: dict            # radius -> max over nodes of mu(T)/sigma


def _to2(a, domain):
    a = np.asarray(a, dtype=float)
    return a[..., None] if domain.n == 2 else a


def _from2(a, domain):
    return a[..., 0] if domain.n == 2 else a


def _rows3(values, domain):
    """View a grid array as ``(rows, M1, M2)``."""
    return np.ascontiguousarray(values.reshape((values.shape[0],) + _to2(domain.phi, domain).shape))


def boundary_lp_norm(values, domain: DomainSpec, p: float = 2.0) -> float:
    if isinstance(values, BoundaryFunctional):
        values = values.values
    v = np.abs(np.asarray(values, dtype=float))
    return float((np.sum(v ** p) * domain.boundary_cell_area) ** (1.0 / p))


def _node_queries(domain: DomainSpec):
    idx = np.indices(domain.node_shape).reshape(domain.n, -1)
    qj = np.zeros((idx.shape[1], 2), dtype=np.int64)
    qj[:, 0] = idx[1]
    if domain.n == 3:
        qj[:, 1] = idx[2]
    base = _to2(domain.phi, domain)
    qx0 = base[qj[:, 0], qj[:, 1]] + idx[0] * domain.dx0
    return qx0, qj


def l2_average(u: GridFunction, top_pad: bool = False) -> AveragedField:
    """``w(x) = (mean of |u|^2 over nodes in B_{delta(x)/2}(x))^{1/2}``.

    With ``top_pad`` the lattice is treated as continuing above the top row
    with zeros (fields that vanish above the strip).  Boundary nodes get ``|u|``.
    """
    dom = u.domain
    mag = u.magnitude_sq()
    lat = dom.node_lattice()
    qx0, qj = _node_queries(dom)
    radius = 0.5 * dom.node_delta().ravel()
    mean, _ = kernels.ball_reduce(_rows3(mag, dom), lat.base, lat.dx0, lat.dl, lat.row_off,
                                  lat.lat_off, qx0, qj, 0.0, radius, kernels.OP_MEAN,
                                  bool(top_pad), lat.lat_dims)
    w = np.sqrt(np.maximum(mean, 0.0)).reshape(dom.node_shape)
    w[0] = np.sqrt(mag[0])
    return AveragedField(w, u)


def _node_imax(domain, cone):
    if cone.trunc_height is None:
        return domain.nx0 - 1
    return int(np.floor(cone.trunc_height / domain.dx0 + 1e-9))


def _cell_imax(domain, cone):
    if cone.trunc_height is None:
        return domain.nx0 - 2
    return int(np.floor(cone.trunc_height / domain.dx0 - 0.5 + 1e-9))


def _nodal_magnitude(x):
    if isinstance(x, AveragedField):
        return x.w, x.domain
    if isinstance(x, GridFunction):
        return np.sqrt(x.magnitude_sq()), x.domain
    raise TypeError("expected an AveragedField or a GridFunction")


def ntmax(w_or_u, cone: ConeSpec, kind: str = "N") -> BoundaryFunctional:
    """Sup of ``w`` (or ``|u|``) over the nodes of the cone at each boundary node."""
    vals, dom = _nodal_magnitude(w_or_u)
    check_aperture(dom, cone)
    lat = dom.node_lattice()
    qbase = lat.base
    out = kernels.cone_max(_rows3(vals, dom), lat.base, lat.dx0, lat.dl, lat.row_off,
                           lat.lat_off, qbase, 0.0, np.zeros_like(qbase), cone.aperture,
                           _node_imax(dom, cone), lat.lat_dims)
    out = np.where(np.isfinite(out), out, 0.0)
    return BoundaryFunctional(_from2(out, dom), dom, kind)


def ntmax_tilde(u: GridFunction, cone: ConeSpec, beyond_top: str = "clip") -> BoundaryFunctional:
    """``Ñ_a(u) = N_a(w)``; ``beyond_top='zero'`` pads with zeros above the strip."""
    if beyond_top not in ("clip", "zero"):
        raise ValueError("beyond_top must be 'clip' or 'zero'")
    w = l2_average(u, top_pad=beyond_top == "zero")
    return ntmax(w, cone, kind="Ntilde")


def ntmax_tilde_strip(u: GridFunction, cone: ConeSpec) -> BoundaryFunctional:
    """``Ñ_a`` of a strip solution extended by zero to twice the strip height."""
    dom = u.domain
    extra = dom.nx0 - 1
    tall = dom.with_height(2 * dom.h, dom.nx0 + extra)
    vals = np.zeros(tall.node_shape + (u.N,))
    vals[: dom.nx0] = u.values
    nt = ntmax_tilde(GridFunction(vals, tall), cone, beyond_top="zero")
    return BoundaryFunctional(nt.values, dom, "Ntilde")


def gradient_energy_density(u: GridFunction) -> np.ndarray:
    """``|grad u|^2`` per cell."""
    g = cell_gradient(u.values, u.domain)
    return np.sum(g.reshape(u.domain.cell_shape + (-1,)) ** 2, axis=-1)


def square_function(u: GridFunction, cone: ConeSpec) -> BoundaryFunctional:
    """``S(Q)^2 = sum over cone cells of |grad u|^2 delta^{2-n} * cell volume``."""
    dom = u.domain
    check_aperture(dom, cone)
    vals = gradient_energy_density(u) * dom.cell_delta() ** (2 - dom.n) * dom.cell_volume
    lat = dom.cell_lattice()
    qbase = _to2(dom.phi, dom)
    s2 = kernels.cone_sum(_rows3(vals, dom), lat.base, lat.dx0, lat.dl, lat.row_off,
                          lat.lat_off, qbase, 0.0, cone.aperture, _cell_imax(dom, cone),
                          lat.lat_dims)
    kind = "S" if cone.trunc_height is None else "S_trunc"
    return BoundaryFunctional(_from2(np.sqrt(np.maximum(s2, 0.0)), dom), dom, kind)


def weighted_energy(u: GridFunction) -> float:
    """``int |grad u|^2 delta dx``, the Fubini partner of ``||S||_2^2``."""
    dom = u.domain
    return float(np.sum(gradient_energy_density(u) * dom.cell_delta()) * dom.cell_volume)


def fubini_constant(n: int, aperture: float) -> float:
    """Measure of the lateral slice of the unit-height cone: ``omega_{n-1} a^{n-1}``."""
    return 2.0 * aperture if n == 2 else np.pi * aperture ** 2


def dyadic_radii(domain: DomainSpec, max_levels: int | None = None) -> list:
    radii = []
    r = domain.dl
    while r <= domain.period / 2 + 1e-12 and (max_levels is None or len(radii) < max_levels):
        radii.append(r)
        r *= 2
    return radii


def surface_count(domain: DomainSpec, r: float) -> int:
    """Number of boundary nodes within lateral distance ``r`` of a node."""
    d = torus_distance(domain.lateral_coords(), np.zeros(domain.n - 1), domain.period)
    return int(np.count_nonzero(d < r))


def _boundary_queries(domain):
    M = _to2(domain.phi, domain)
    j1, j2 = np.meshgrid(np.arange(M.shape[0]), np.arange(M.shape[1]), indexing="ij")
    qj = np.stack([j1.ravel(), j2.ravel()], axis=-1).astype(np.int64)
    return M.ravel().copy(), qj


def tent_masses(density: CarlesonDensity, r: float) -> np.ndarray:
    """``mu(T(Delta_r(Q)))`` for every boundary node ``Q`` (lateral shape)."""
    dom = density.domain
    if r > dom.period / 2 + 1e-12:
        raise BallTooLarge(f"radius {r} exceeds half the lateral period {dom.period / 2}")
    lat = dom.cell_lattice()
    qx0, qj = _boundary_queries(dom)
    vals = _rows3(density.density * dom.cell_volume, dom)
    s, _ = kernels.ball_reduce(vals, lat.base, lat.dx0, lat.dl, lat.row_off, lat.lat_off,
                               qx0, qj, 0.0, np.full(qx0.shape, float(r)), kernels.OP_SUM,
                               False, lat.lat_dims)
    return s.reshape(dom.lat_shape)


def carleson_norm(density: CarlesonDensity, radii=None, max_levels: int | None = None) -> CarlesonReport:
    """Sup over boundary nodes and radii of ``mu(T(Delta_r)) / sigma(Delta_r)``."""
    dom = density.domain
    if radii is None:
        radii = dyadic_radii(dom, max_levels)
    table = {}
    best, arg = 0.0, (tuple([0] * (dom.n - 1)), float(radii[0]) if len(radii) else 0.0)
    for r in radii:
        r = float(r)
        ratio = tent_masses(density, r) / (surface_count(dom, r) * dom.boundary_cell_area)
        k = int(np.argmax(ratio))
        table[r] = float(ratio.ravel()[k])
        if table[r] > best:
            best = table[r]
            arg = (tuple(int(i) for i in np.unravel_index(k, dom.lat_shape)), r)
    return CarlesonReport(float(best), arg, table)


def carleson_embedding_ratio(u: GridFunction, density: CarlesonDensity, cone: ConeSpec,
                             radii=None) -> float:
    """``int |u|^2 d nu / (||mu||_C ||Ñ_a(u)||_2^2)``; zero when ``u`` vanishes."""
    dom = u.domain
    u2 = cell_average(u.magnitude_sq(), dom)
    num = float(np.sum(u2 * density.density) * dom.cell_volume)
    nt = ntmax_tilde(u, cone).lp_norm(2.0) ** 2
    cnorm = carleson_norm(density, radii).norm
    den = cnorm * nt
    if den == 0.0:
        return 0.0
    return num / den


def _disc_footprint(domain, r):
    k = int(np.ceil(r / domain.dl))
    k = min(k, (domain.nx_lat - 1) // 2)
    d = np.arange(-k, k + 1) * domain.dl
    grids = np.meshgrid(*([d] * (domain.n - 1)), indexing="ij")
    rho = np.sqrt(sum(g ** 2 for g in grids))
    return (rho < r).astype(float)


def hl_maximal(f, domain: DomainSpec, radii="dyadic") -> BoundaryFunctional:
    """Centred Hardy-Littlewood maximal function on the lateral torus.

    ``radii``: ``'dyadic'`` (spacing times powers of two up to half the
    period), ``'all'`` (every multiple of the spacing) or an explicit list.
    """
    f = np.abs(np.asarray(f, dtype=float))
    if f.shape != domain.lat_shape:
        raise ValueError(f"boundary function shape {f.shape}, expected {domain.lat_shape}")
    if isinstance(radii, str):
        if radii == "dyadic":
            radii = dyadic_radii(domain)
        elif radii == "all":
            kmax = int(np.floor(domain.period / 2 / domain.dl + 1e-9))
            radii = [k * domain.dl for k in range(1, kmax + 1)]
        else:
            raise ValueError(f"unknown radii mode {radii!r}")
    out = f.copy()
    for r in radii:
        fp = _disc_footprint(domain, r)
        avg = ndimage.convolve(f, fp / fp.sum(), mode="wrap")
        out = np.maximum(out, avg)
    return BoundaryFunctional(out, domain, "HL-max")


def stopping_time(w: AveragedField, nu: float, cone: ConeSpec) -> BoundaryFunctional:
    """``ħ(Q)``: lowest lattice height over ``Q`` whose cone keeps ``w < nu``.

    Heights are measured from the boundary along the fibre, so on a flat strip
    they are plain ``x0`` values.  For strip solutions pass a field extended
    by zero above the strip, which makes the result finite.
    """
    dom = w.domain
    check_aperture(dom, cone)
    lat = dom.node_lattice()
    out = kernels.stopping_time(_rows3(w.w, dom), lat.base, lat.dx0, lat.dl, lat.row_off,
                                lat.lat_off, lat.base, 0.0, cone.aperture, float(nu),
                                _node_imax(dom, cone), lat.lat_dims)
    return BoundaryFunctional(_from2(out, dom), dom, "stopping-time")


def level_set(F: BoundaryFunctional, nu: float) -> np.ndarray:
    return np.asarray(F.values) > nu


@dataclass
class GoodLambdaRow:
    gamma: float
    nu: float
    left: float
    right: float

    @property
    def ratio(self) -> float:
        return self.left / self.right if self.right > 0 else float("nan")


def good_lambda_sets(u: GridFunction, a: float, b: float | None = None, gammas=(0.1,),
                     nu_grid=None, beyond_top: str = "clip"):
    """Yield ``(gamma, nu, left, right, above)`` boolean node sets.

    Left set: ``{Ñ_a > nu, (M S_b^2)^{1/2} < gamma nu, (M S_b^2 M Ñ_a^2)^{1/4} < gamma nu}``;
    right set: ``{Ñ_a > nu/32}``; ``above``: ``{Ñ_a > nu}``.  ``b`` defaults to ``2a``.
    """
    dom = u.domain
    b = 2.0 * a if b is None else b
    if not b > a:
        raise GeometryError("the square-function aperture b must exceed a")
    nt = ntmax_tilde(u, ConeSpec(a), beyond_top).values
    sb = square_function(u, ConeSpec(b)).values
    ms = hl_maximal(sb ** 2, dom).values
    mn = hl_maximal(nt ** 2, dom).values
    if nu_grid is None:
        top = nt.max()
        nu_grid = top * np.geomspace(0.05, 1.0, 12) if top > 0 else []
    for g in gammas:
        for nu in nu_grid:
            above = nt > nu
            left = above & (np.sqrt(ms) < g * nu) & ((ms * mn) ** 0.25 < g * nu)
            yield float(g), float(nu), left, nt > nu / 32.0, above


def good_lambda_counts(u: GridFunction, a: float, b: float | None = None, gammas=(0.1,),
                       nu_grid=None, beyond_top: str = "clip") -> list:
    """Measures of the good-lambda sets of :func:`good_lambda_sets`, one row per ``(gamma, nu)``."""
    area = u.domain.boundary_cell_area
    return [GoodLambdaRow(g, nu, np.count_nonzero(left) * area, np.count_nonzero(right) * area)
            for g, nu, left, right, _ in good_lambda_sets(u, a, b, gammas, nu_grid, beyond_top)]


def good_lambda_constant(rows, gamma: float) -> float:
    """Largest measured ratio for one ``gamma`` (``nan`` when every row is empty)."""
    vals = [r.ratio for r in rows if r.gamma == gamma and r.right > 0]
    return float(max(vals)) if vals else float("nan")


def _ball_nodes(domain, center, R):
    center = np.asarray(center, dtype=float)
    if R > domain.period / 2:
        raise BallTooLarge(f"radius {R} exceeds half the lateral period")
    rho = torus_distance(domain.lateral_coords(), center[1:], domain.period)
    return (domain.node_x0() - center[0]) ** 2 + rho[None] ** 2 < R * R


def _check_interior(domain, center, R):
    c0 = float(np.asarray(center, dtype=float)[0])
    top = domain.phi.min() + domain.h
    if c0 - R <= domain.phi.max() or c0 + R >= top:
        raise GeometryError(f"ball of radius {R} at height {c0} is not interior to the strip")


def poincare_ratio(u: GridFunction, center, R: float) -> float:
    """``int_B |u - mean|^2 / (R^2 int_B |grad u|^2)`` over ``B_R(center)``."""
    dom = u.domain
    _check_interior(dom, center, R)
    ball = _ball_nodes(dom, center, R)
    v = u.values[ball]
    dev = float(np.sum((v - v.mean(axis=0)) ** 2))
    g = nodal_gradient(u.values, dom)[ball]
    den = R * R * float(np.sum(g ** 2))
    return dev / den if den > 0 else 0.0


def caccioppoli_ratio(u: GridFunction, center, R: float) -> float:
    """``int_{B_R} |grad u|^2 / (R^{-2} int_{B_2R} |u|^2)``; needs ``B_2R`` interior."""
    dom = u.domain
    _check_interior(dom, center, 2 * R)
    g = nodal_gradient(u.values, dom)[_ball_nodes(dom, center, R)]
    big = u.values[_ball_nodes(dom, center, 2 * R)]
    den = float(np.sum(big ** 2)) / (R * R)
    return float(np.sum(g ** 2)) / den if den > 0 else 0.0
