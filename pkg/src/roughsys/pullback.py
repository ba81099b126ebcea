"""Mollified graph-flattening map and the induced change of coefficients.

The map sends the flat strip onto the region above a Lipschitz graph,
``(x0, x') -> (x0 + s(x0, x'), x')`` with ``s(x0, .)`` the graph function
mollified at scale ``gamma * x0``.  Convolutions are discrete sums over the
periodic lateral lattice with weights normalised to unit mass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .coefficients import CoefficientField, legendre_constants, normalize_a00, zero_top_row
from .errors import EllipticityLost, MapDegenerate
from .grid import DomainSpec, build_domain, lipschitz_constant

_BUMP_POWER = 4


@dataclass(frozen=True)
class MollifierSpec:
    """Tensor-product bump ``c * prod (1 - t_k^2)^4`` supported in the unit cube."""
    gamma: float = 0.1
    support_radius: float = 1.0

    def norm_1d(self) -> float:
        return 315.0 / 256.0   # 1 / int_{-1}^{1} (1 - t^2)^4 dt

    def profile(self, x):
        """Kernel values at points ``x`` (last axis = lateral coordinates)."""
        x = np.asarray(x, dtype=float)
        t = np.clip(1.0 - x * x, 0.0, None) ** _BUMP_POWER
        return self.norm_1d() ** x.shape[-1] * np.prod(t, axis=-1)

    def mass(self, lat_dims: int = 1) -> float:
        c = self.norm_1d()
        one, _ = integrate.quad(lambda t: c * (1 - t * t) ** _BUMP_POWER, -1.0, 1.0,
                                epsabs=1e-13)
        return one ** lat_dims


def _bump(t):
    return np.where(np.abs(t) < 1, np.clip(1 - t * t, 0, None) ** _BUMP_POWER, 0.0)


def _dbump(t):
    return np.where(np.abs(t) < 1,
                    -2 * _BUMP_POWER * t * np.clip(1 - t * t, 0, None) ** (_BUMP_POWER - 1), 0.0)


def _offsets(lam, dl, lat_dims):
    k = int(np.floor(lam / dl))
    r = np.arange(-k, k + 1)
    grids = np.meshgrid(*([r] * lat_dims), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _shifted(phi, off):
    return np.roll(phi, tuple(int(o) for o in off), axis=tuple(range(phi.ndim)))


def mollify_with_derivatives(phi: np.ndarray, lam: float, dl: float):
    """Mollified graph and its derivatives in the scale and lateral variables.

    Returns ``(s, ds_dlam, grad_s)`` with ``grad_s`` carrying the lateral
    derivative index last.  Below one lattice spacing the mollifier
    degenerates to point evaluation.
    """
    phi = np.asarray(phi, dtype=float)
    lat_dims = phi.ndim
    if lam < dl:
        grad = np.stack([(np.roll(phi, -1, axis=k) - np.roll(phi, 1, axis=k)) / (2 * dl)
                         for k in range(lat_dims)], axis=-1)
        return phi.copy(), np.zeros_like(phi), grad
    offs = _offsets(lam, dl, lat_dims)
    t = offs * dl / lam                                  # (K, d)
    b = _bump(t)
    p = np.prod(b, axis=-1)
    mass = p.sum()
    # d/dlam of p_k = prod_m bump(t_km), with t = k dl / lam
    dp = np.zeros_like(p)
    grad_w = np.zeros_like(t)
    for m in range(lat_dims):
        others = np.prod(np.delete(b, m, axis=-1), axis=-1) if lat_dims > 1 else 1.0
        db = _dbump(t[:, m]) * others
        dp += db * (-t[:, m] / lam)
        grad_w[:, m] = db / lam
    w = p / mass
    dw = (dp - w * dp.sum()) / mass
    # first moment of the derivative weights is exactly -1 so linear graphs keep their slope
    moment = -(grad_w * offs * dl).sum(axis=0)
    degenerate = np.abs(moment) < 1e-12
    gw = grad_w / np.where(degenerate, 1.0, moment)
    for m in np.nonzero(degenerate)[0]:     # only the centre carries mass: central difference
        gw[:, m] = 0.0
        for sign in (-1, 1):
            hit = (offs[:, m] == sign) & np.all(np.delete(offs, m, axis=-1) == 0, axis=-1)
            gw[hit, m] = -sign / (2 * dl)
    s = np.zeros_like(phi)
    ds = np.zeros_like(phi)
    gs = np.zeros(phi.shape + (lat_dims,))
    for k, off in enumerate(offs):
        sh = _shifted(phi, off)            # phi(x' - off * dl)
        s += w[k] * sh
        ds += dw[k] * sh
        gs += gw[k] * sh[..., None]
    return s, ds, gs


def mollify_phi(phi: np.ndarray, lam: float, dl: float, kernel: MollifierSpec | None = None):
    """Periodic discrete convolution of ``phi`` with the kernel scaled to ``lam``."""
    return mollify_with_derivatives(phi, lam, dl)[0]


@dataclass(eq=False)
class PullbackMap:
    domain: DomainSpec          # flat source grid
    phi: np.ndarray
    gamma: float
    s: np.ndarray = field(repr=False)
    ds0: np.ndarray = field(repr=False)
    dsl: np.ndarray = field(repr=False)

    @property
    def det_range(self):
        det = 1.0 + self.ds0
        return float(det.min()), float(det.max())

    def shift_constant(self, lip: float) -> float:
        """Measured ``c`` in ``|d0 s| <= c * gamma * L``."""
        if lip == 0 or self.gamma == 0:
            return 0.0
        return float(np.max(np.abs(self.ds0)) / (self.gamma * lip))

    def is_monotone(self) -> bool:
        heights = self.domain.node_x0() + self.s
        return bool(np.all(np.diff(heights, axis=0) > 0))

    def jacobians(self) -> np.ndarray:
        """``J = I + e0 (x) grad s`` at every node, shape ``node_shape + (n, n)``."""
        n = self.domain.n
        J = np.broadcast_to(np.eye(n), self.domain.node_shape + (n, n)).copy()
        J[..., 0, 0] += self.ds0
        J[..., 0, 1:] += self.dsl
        return J


def default_gamma(lip: float) -> float:
    return 0.1 * min(1.0, 1.0 / lip) if lip > 0 else 0.1


def build_pullback(source: DomainSpec, phi: np.ndarray, gamma: float | None = None) -> PullbackMap:
    phi = np.asarray(phi, dtype=float)
    if gamma is None:
        gamma = default_gamma(lipschitz_constant(phi, source.dl))
    s = np.empty(source.node_shape)
    ds0 = np.empty(source.node_shape)
    dsl = np.empty(source.node_shape + (source.n - 1,))
    for i in range(source.nx0):
        lam = gamma * i * source.dx0
        si, dsi, gi = mollify_with_derivatives(phi, lam, source.dl)
        s[i], ds0[i], dsl[i] = si, gamma * dsi, gi
    return PullbackMap(source, phi, float(gamma), s, ds0, dsl)


def _interp_lat(field_, xlat, dl):
    """Periodic multilinear interpolation of a lateral field at one point.

    The leading ``len(xlat)`` axes of ``field_`` are lateral; trailing axes ride along.
    """
    xlat = np.atleast_1d(xlat)
    lat_dims = xlat.shape[0]
    t = xlat / dl
    i0 = np.floor(t).astype(int)
    fr = t - i0
    val = 0.0
    shape = field_.shape[:lat_dims]
    for corner in np.ndindex(*([2] * lat_dims)):
        idx = tuple((i0[k] + corner[k]) % shape[k] for k in range(lat_dims))
        wgt = np.prod([fr[k] if corner[k] else 1 - fr[k] for k in range(lat_dims)])
        val = val + wgt * field_[idx]
    return val


def _point_shift(pmap: PullbackMap, point):
    x0 = float(point[0])
    xlat = np.asarray(point[1:], dtype=float)
    s, ds, gs = mollify_with_derivatives(pmap.phi, pmap.gamma * x0, pmap.domain.dl)
    return (_interp_lat(s, xlat, pmap.domain.dl),
            pmap.gamma * _interp_lat(ds, xlat, pmap.domain.dl),
            _interp_lat(gs, xlat, pmap.domain.dl))


def rho_map(pmap: PullbackMap, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    s, _, _ = _point_shift(pmap, point)
    out = point.copy()
    out[0] = point[0] + s
    return out


def rho_jacobian(pmap: PullbackMap, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    _, ds0, gs = _point_shift(pmap, point)
    n = point.shape[0]
    J = np.eye(n)
    J[0, 0] += ds0
    J[0, 1:] += gs
    if not np.linalg.det(J) > 0:
        raise MapDegenerate(f"Jacobian determinant {np.linalg.det(J)} at {tuple(point)}")
    return J


def _sample_on_graph(target: DomainSpec, arr: np.ndarray, heights: np.ndarray) -> np.ndarray:
    """Linear interpolation along each lateral column of the target node lattice."""
    t = (heights - target.phi[None]) / target.dx0
    t = np.clip(t, 0.0, target.nx0 - 1)
    i0 = np.minimum(np.floor(t).astype(int), target.nx0 - 2)
    fr = t - i0
    lat_idx = np.indices(heights.shape)[1:]
    lo = arr[(i0,) + tuple(lat_idx)]
    hi = arr[(i0 + 1,) + tuple(lat_idx)]
    fr = fr.reshape(fr.shape + (1,) * (arr.ndim - target.n))
    return (1 - fr) * lo + fr * hi


def pushforward_coeffs(pmap: PullbackMap, coeffs):
    """Coefficients of the pulled-back system on the flat source grid.

    ``coeffs`` is either a :class:`CoefficientField` on the graph domain (same
    lateral lattice, sampled by linear interpolation along columns) or a
    callable ``points -> (A, B)`` evaluated at the mapped nodes.
    """
    src = pmap.domain
    det = 1.0 + pmap.ds0
    if np.any(det <= 0):
        raise MapDegenerate(f"Jacobian determinant reaches {det.min():.3g}")
    heights = src.node_x0() + pmap.s
    if callable(coeffs):
        pts = np.stack([heights] + [np.broadcast_to(src.lateral_coords()[..., k], src.node_shape)
                                    for k in range(src.n - 1)], axis=-1)
        A, B = coeffs(pts)
        A = np.broadcast_to(A, src.node_shape + np.shape(A)[-4:]).astype(float)
        B = np.broadcast_to(B, src.node_shape + np.shape(B)[-3:]).astype(float)
        meta = {}
    else:
        A = _sample_on_graph(coeffs.domain, coeffs.A, heights)
        B = _sample_on_graph(coeffs.domain, coeffs.B, heights)
        meta = dict(coeffs.meta)
    Jinv = np.linalg.inv(pmap.jacobians())
    At = det[..., None, None, None, None] * np.einsum("...ik,...klab,...jl->...ijab", Jinv, A, Jinv)
    Bt = det[..., None, None, None] * np.einsum("...ik,...kab->...iab", Jinv, B)
    meta["pulled_back"] = True
    return CoefficientField(At, Bt, src, meta)


@dataclass
class FlattenResult:
    domain: DomainSpec
    coeffs: CoefficientField
    f: np.ndarray
    pmap: PullbackMap
    metrics: dict


def flatten_problem(graph: DomainSpec, coeffs, f: np.ndarray, gamma: float | None = None,
                    carleson_radii: int | None = None) -> FlattenResult:
    """Pull back to the flat strip, then normalise ``A_00`` and clear the top row."""
    from .diagnostics import carleson_norm
    from .coefficients import carleson_density

    flat = build_domain(graph.n, graph.h, graph.period, graph.nx0, graph.nx_lat)
    if gamma is None:
        gamma = default_gamma(graph.lip_const)
    pmap = build_pullback(flat, graph.phi, gamma)
    pushed = pushforward_coeffs(pmap, coeffs)
    normed = normalize_a00(pushed)
    final, _ = zero_top_row(normed)
    ell = legendre_constants(final, rank_one=False).legendre_min
    metrics = {"gamma": float(gamma), "lip_const": graph.lip_const,
               "det_min": pmap.det_range[0], "det_max": pmap.det_range[1],
               "shift_constant": pmap.shift_constant(graph.lip_const),
               "legendre_after": ell}
    if isinstance(coeffs, CoefficientField):
        metrics["legendre_before"] = legendre_constants(coeffs, rank_one=False).legendre_min
        metrics["carleson_before"] = carleson_norm(carleson_density(coeffs), max_levels=carleson_radii).norm
    metrics["carleson_after"] = carleson_norm(carleson_density(final), max_levels=carleson_radii).norm
    if not ell > 0:
        raise EllipticityLost(f"flattened coefficients have Legendre constant {ell:.3g}")
    f_tilde = np.array(f, dtype=float, copy=True)   # boundary trace of the map is the graph map
    return FlattenResult(flat, final, f_tilde, pmap, metrics)
