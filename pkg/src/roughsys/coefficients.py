"""Coefficient tensors: construction, ellipticity audits, normalisation, Carleson densities.

Index layout: ``A[..., i, j, alpha, beta]`` and ``B[..., i, alpha, beta]`` on the
node grid, with ``i, j`` the spatial directions (0 is the transversal one) and
``alpha, beta`` the solution components, all zero-based.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import kernels
from .errors import LameDimensionMismatch, NotNormalized, SingularPrincipalMinor
from .fd import cell_corners, cell_gradient, nodal_gradient
from .grid import DomainSpec


@dataclass(eq=False)
class CoefficientField:
    A: np.ndarray
    B: np.ndarray
    domain: DomainSpec
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        g = self.domain.node_shape
        n = self.domain.n
        if self.A.shape[: len(g)] != g or self.A.shape[len(g):len(g) + 2] != (n, n):
            raise ValueError(f"A has shape {self.A.shape}, expected {g} + ({n}, {n}, N, N)")
        N = self.A.shape[-1]
        if self.B.shape != g + (n, N, N):
            raise ValueError(f"B has shape {self.B.shape}, expected {g + (n, N, N)}")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise ValueError("coefficients must be finite")

    @property
    def n(self) -> int:
        return self.domain.n

    @property
    def N(self) -> int:
        return self.A.shape[-1]

    @property
    def Lambda(self) -> float:
        return sup_norm(self)

    def has_drift(self) -> bool:
        return bool(np.any(self.B))

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        """``A_ij^{ab} == A_ji^{ba}`` at every node."""
        At = np.swapaxes(np.swapaxes(self.A, -4, -3), -2, -1)
        return bool(np.max(np.abs(self.A - At), initial=0.0) <= tol)

    def replace(self, A=None, B=None, **meta) -> "CoefficientField":
        m = dict(self.meta)
        m.update(meta)
        return CoefficientField(self.A if A is None else A, self.B if B is None else B,
                                self.domain, m)


@dataclass
class EllipticityReport:
    legendre_min: float
    lh_min: float
    legendre_argmin: tuple
    lh_argmin: tuple


@dataclass(eq=False)
class CarlesonDensity:
    """Density of a measure on the cell centres; ``density * cell_volume`` is the cell mass."""
    density: np.ndarray
    domain: DomainSpec
    kind: str = "gradient"


def _broadcast(field_, domain):
    return np.broadcast_to(np.asarray(field_, dtype=float), domain.node_shape).copy()


def identity_tensor(domain: DomainSpec, N: int = 1) -> CoefficientField:
    n = domain.n
    base = np.einsum("ij,ab->ijab", np.eye(n), np.eye(N))
    A = np.broadcast_to(base, domain.node_shape + base.shape).copy()
    B = np.zeros(domain.node_shape + (n, N, N))
    return CoefficientField(A, B, domain, {"kind": "identity"})


def lame_tensor(domain: DomainSpec, lam, mu, r=0.0, N: int | None = None) -> CoefficientField:
    """Lamé coefficients with the symmetrising parameter ``r``.

    Component ``alpha`` is identified with direction ``alpha`` (both zero-based),
    which makes ``A_00 = (lam + 2 mu) I``.  The drift produced by moving the
    antisymmetric part is ``r * d_j(A_ij - A_ji)`` with ``A`` the plain (r=0)
    Lamé tensor.
    """
    n = domain.n
    N = n if N is None else N
    if N != n:
        raise LameDimensionMismatch(f"Lamé system needs N == n, got N={N}, n={n}")
    lam, mu, r = (_broadcast(v, domain) for v in (lam, mu, r))
    I = np.eye(n)
    d_ij_ab = np.einsum("ij,ab->ijab", I, I)
    d_ia_jb = np.einsum("ia,jb->ijab", I, I)
    d_ib_ja = np.einsum("ib,ja->ijab", I, I)

    def tensor(r_):
        p, q = lam + r_, mu - r_
        # snap rounding-level gaps so the symmetric choice of r is symmetric to the bit
        tie = np.abs(p - q) <= 4 * np.finfo(float).eps * np.maximum(np.abs(p), np.abs(q))
        p = np.where(tie, 0.5 * (p + q), p)
        q = np.where(tie, p, q)
        return (mu[..., None, None, None, None] * d_ij_ab
                + p[..., None, None, None, None] * d_ia_jb
                + q[..., None, None, None, None] * d_ib_ja)

    A_plain = tensor(np.zeros_like(r))
    A_bar = tensor(r)
    anti = A_plain - np.swapaxes(A_plain, -4, -3)
    grad = nodal_gradient(anti, domain)  # [..., k, i, j, a, b]
    div_j = np.einsum("...jijab->...iab", grad)
    B_bar = r[..., None, None, None] * div_j
    return CoefficientField(A_bar, B_bar, domain, {"kind": "lame"})


def _legendre_matrix(A):
    """Rows (i, alpha), columns (j, beta)."""
    sh = A.shape
    n, N = sh[-4], sh[-1]
    M = np.swapaxes(A, -3, -2).reshape(sh[:-4] + (n * N, n * N))
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def _unique_tensors(A):
    flat = A.reshape(-1, int(np.prod(A.shape[-4:])))
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    return uniq.reshape((-1,) + A.shape[-4:]), inverse.ravel()


def _directions(n, count=1024):
    if n == 2:
        t = np.linspace(0.0, np.pi, count, endpoint=False)
        return np.stack([np.cos(t), np.sin(t)], axis=-1)
    k = np.arange(count) + 0.5
    z = 1.0 - k / count                       # upper hemisphere: q and -q agree
    rad = np.sqrt(1.0 - z * z)
    th = np.pi * (1.0 + 5 ** 0.5) * k
    return np.stack([z, rad * np.cos(th), rad * np.sin(th)], axis=-1)


def _rank_one_min(T, q):
    M = np.einsum("i,j,ijab->ab", q, q, T)
    return np.linalg.eigvalsh(0.5 * (M + M.T))[0]


def _refine_lh(T, q0):
    n = T.shape[0]
    if n == 2:
        t0 = np.arctan2(q0[1], q0[0])
        res = optimize.minimize_scalar(
            lambda t: _rank_one_min(T, np.array([np.cos(t), np.sin(t)])),
            bracket=(t0 - 0.01, t0, t0 + 0.01))
        return min(res.fun, _rank_one_min(T, q0))

    def f(x):
        q = x / np.linalg.norm(x)
        return _rank_one_min(T, q)

    res = optimize.minimize(f, q0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return min(res.fun, _rank_one_min(T, q0))


def legendre_constants(coeffs: CoefficientField, rank_one: bool = True,
                       directions: int = 1024) -> EllipticityReport:
    """Strong (Legendre) and rank-one (Legendre-Hadamard) ellipticity constants."""
    grid_shape = coeffs.domain.node_shape
    uniq, inverse = _unique_tensors(coeffs.A)
    eig = np.linalg.eigvalsh(_legendre_matrix(uniq))[:, 0]
    k = int(np.argmin(eig))
    leg = float(eig[k])
    leg_node = tuple(int(i) for i in np.unravel_index(int(np.nonzero(inverse == k)[0][0]), grid_shape))
    if not rank_one:
        return EllipticityReport(leg, float("nan"), leg_node, ())
    q = _directions(coeffs.n, directions)
    sampled = np.empty(len(uniq))
    best_q = np.empty((len(uniq), coeffs.n))
    chunk = max(1, 200_000 // len(q))
    for s in range(0, len(uniq), chunk):
        T = uniq[s:s + chunk]
        M = np.einsum("di,dj,tijab->tdab", q, q, T)
        M = 0.5 * (M + np.swapaxes(M, -1, -2))
        lo = np.linalg.eigvalsh(M)[..., 0]
        arg = np.argmin(lo, axis=1)
        sampled[s:s + chunk] = lo[np.arange(len(T)), arg]
        best_q[s:s + chunk] = q[arg]
    order = np.argsort(sampled)[:3]
    refined = [(_refine_lh(uniq[t], best_q[t]), t) for t in order]
    lh, t = min(refined)
    lh = float(lh)
    lh_node = tuple(int(i) for i in np.unravel_index(int(np.nonzero(inverse == t)[0][0]), grid_shape))
    return EllipticityReport(leg, lh, leg_node, lh_node)


def lame_admissibility(lam, mu) -> float:
    """Smallest of ``mu``, ``lam + 2 mu`` and ``mu - lam`` over all nodes."""
    lam = np.asarray(lam, dtype=float)
    mu = np.asarray(mu, dtype=float)
    return float(np.min(np.minimum(np.minimum(mu, lam + 2 * mu), mu - lam)))


def sup_norm(coeffs: CoefficientField) -> float:
    return float(np.max(np.abs(coeffs.A)))


def normalize_a00(coeffs: CoefficientField) -> CoefficientField:
    """Left-multiply the system by ``A_00^{-1}`` so that the new ``A_00`` is the identity."""
    A, B = coeffs.A, coeffs.B
    A00 = A[..., 0, 0, :, :]
    N = coeffs.N
    scale = np.max(np.abs(A00), axis=(-2, -1))
    det = np.linalg.det(A00)
    bad = ~(np.abs(det) > 1e-12 * np.maximum(scale, 1e-300) ** N)
    if np.any(bad):
        raise SingularPrincipalMinor(np.argwhere(bad)[0])
    inv = np.linalg.inv(A00)
    A_hat = np.einsum("...ag,...ijgb->...ijab", inv, A)
    A_hat[..., 0, 0, :, :] = np.eye(N)
    dinv = nodal_gradient(inv, coeffs.domain)  # [..., k, a, g]
    B_hat = (np.einsum("...ag,...igb->...iab", inv, B)
             - np.einsum("...kag,...kigb->...iab", dinv, A))
    return coeffs.replace(A_hat, B_hat, normalized=True)


def zero_top_row(coeffs: CoefficientField, tol: float = 1e-10):
    """Move the ``A_0j`` (j > 0) blocks into ``A_j0`` plus first-order terms.

    Returns ``(new_coeffs, drift_correction)`` where the correction has the
    shape of ``B`` and has already been added to the returned drift.
    """
    A = coeffs.A
    N = coeffs.N
    if np.max(np.abs(A[..., 0, 0, :, :] - np.eye(N))) > tol:
        raise NotNormalized("zero_top_row needs A_00 = I; call normalize_a00 first")
    n = coeffs.n
    A_bar = A.copy()
    for j in range(1, n):
        A_bar[..., j, 0, :, :] = A[..., j, 0, :, :] + A[..., 0, j, :, :]
        A_bar[..., 0, j, :, :] = 0.0
    A_bar[..., 0, 0, :, :] = np.eye(N)
    top = A[..., 0, :, :, :]                      # [..., j, a, b]
    grad = nodal_gradient(top, coeffs.domain)     # [..., k, j, a, b]
    corr = np.zeros_like(coeffs.B)
    for j in range(1, n):
        corr[..., 0, :, :] -= grad[..., j, j, :, :]
        corr[..., j, :, :] += grad[..., 0, j, :, :]
    return coeffs.replace(A_bar, coeffs.B + corr, top_row_zero=True), corr


def _ball_max_cells(cell_values, domain, radius):
    lat = domain.cell_lattice()
    nc = np.prod(domain.cell_shape)
    idx = np.indices(domain.cell_shape).reshape(domain.n, -1)
    qj = np.zeros((nc, 2), dtype=np.int64)
    qj[:, 0] = idx[1]
    if domain.n == 3:
        qj[:, 1] = idx[2]
    qx0 = (lat.base[qj[:, 0], qj[:, 1]] + (idx[0] + 0.5) * domain.dx0)
    vals = cell_values.reshape((domain.nx0 - 1, lat.base.shape[0], lat.base.shape[1]))
    out, _ = kernels.ball_reduce(vals, lat.base, lat.dx0, lat.dl, lat.row_off, lat.lat_off,
                                 qx0, qj, lat.lat_off, radius.ravel(), kernels.OP_MAX,
                                 False, lat.lat_dims)
    return out.reshape(domain.cell_shape)


def _cell_drift_size(coeffs):
    bmag = np.max(np.abs(coeffs.B), axis=(-3, -2, -1))
    corners = cell_corners(bmag, coeffs.domain)
    return np.maximum.reduce(list(corners.values()))


def carleson_density(coeffs: CoefficientField, kind: str = "gradient") -> CarlesonDensity:
    """Integrand of the Carleson condition evaluated at every cell centre.

    ``gradient``: ``[(sup |grad A|)^2 + (sup |B|)^2] * delta``;
    ``oscillation``: ``(osc A)^2 / delta + (sup |B|)^2 * delta``.  Sups and
    oscillations run over the cells whose centres lie within ``delta/2``.
    """
    dom = coeffs.domain
    delta = dom.cell_delta()
    radius = 0.5 * delta
    b_cell = _cell_drift_size(coeffs)
    b_sup = _ball_max_cells(b_cell, dom, radius) if np.any(b_cell) else np.zeros_like(delta)
    if kind == "gradient":
        g = cell_gradient(coeffs.A, dom)
        g_cell = np.max(np.abs(g).reshape(dom.cell_shape + (-1,)), axis=-1)
        g_sup = _ball_max_cells(g_cell, dom, radius) if np.any(g_cell) else np.zeros_like(delta)
        dens = (g_sup ** 2 + b_sup ** 2) * delta
    elif kind == "oscillation":
        corners = list(cell_corners(coeffs.A, dom).values())
        cmax = np.maximum.reduce(corners).reshape(dom.cell_shape + (-1,))
        cmin = np.minimum.reduce(corners).reshape(dom.cell_shape + (-1,))
        osc = np.zeros_like(delta)
        for e in range(cmax.shape[-1]):
            if np.all(cmax[..., e] == cmin[..., e]) and np.ptp(cmax[..., e]) == 0:
                continue
            hi = _ball_max_cells(cmax[..., e], dom, radius)
            lo = -_ball_max_cells(-cmin[..., e], dom, radius)
            osc = np.maximum(osc, hi - lo)
        dens = osc ** 2 / delta + b_sup ** 2 * delta
    else:
        raise ValueError(f"unknown density kind {kind!r}")
    return CarlesonDensity(dens, dom, kind)
