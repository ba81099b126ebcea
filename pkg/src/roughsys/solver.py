"""Energy solutions of the strip Dirichlet problem.

Discretisation: bilinear cells with coefficients frozen at the cell midpoint.
Diagonal blocks ``A_ii`` act on the edge differences parallel to direction
``i`` (averaged over the cell's parallel edges); off-diagonal blocks act on the
cell-averaged gradient.  For ``A = I`` this is the classical (2n+1)-point
Laplacian, and the form stays coercive whenever ``A`` is Legendre elliptic.
The drift ``B . grad u`` uses the cell-averaged gradient and is lumped to the
corners.  Rows are assembled for ``a(u, psi) = int A grad u . grad psi -
int (B . grad u) psi``, so ``K u ~ -cell_volume * L u`` at interior nodes.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coefficients import CoefficientField, legendre_constants
from .errors import ConvergenceError, EllipticityError, GeometryError
from .fd import cell_average, cell_gradient
from .grid import DomainSpec, GridFunction

log = logging.getLogger(__name__)

DIRECT_LIMIT = 20_000


@dataclass(eq=False)
class WeakSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    domain: DomainSpec
    N: int
    full_matrix: sp.csr_matrix = field(repr=False)
    boundary_values: np.ndarray = field(repr=False)
    symmetric: bool = False
    legendre_min: float = float("nan")

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SolveStats:
    iterations: int
    residual: float
    energy: float
    method: str
    history: list = field(default_factory=list, repr=False)


def _local_weights(domain: DomainSpec):
    """Gradient weights ``W[i, j, a, b]`` and averaged-gradient rows ``G[i, a]``."""
    n = domain.n
    corners = list(itertools.product((0, 1), repeat=n))
    spacing = [domain.dx0] + [domain.dl] * (n - 1)
    nc = len(corners)
    G = np.zeros((n, nc))
    for a, c in enumerate(corners):
        for d in range(n):
            G[d, a] = (1.0 if c[d] else -1.0) / (2 ** (n - 1) * spacing[d])
    W = np.einsum("ia,jb->ijab", G, G)
    for d in range(n):
        D = np.zeros((nc, nc))
        for a, ca in enumerate(corners):
            for b, cb in enumerate(corners):
                same_edge = all(ca[k] == cb[k] for k in range(n) if k != d)
                if same_edge:
                    sa = 1.0 if ca[d] else -1.0
                    sb = 1.0 if cb[d] else -1.0
                    D[a, b] = sa * sb / spacing[d] ** 2
        W[d, d] = D / 2 ** (n - 1)
    return corners, G, W


def _cell_node_indices(domain: DomainSpec, corners):
    idx = np.arange(int(np.prod(domain.node_shape))).reshape(domain.node_shape)
    out = []
    for c in corners:
        g = idx[1:] if c[0] else idx[:-1]
        for k in range(domain.n - 1):
            if c[1 + k]:
                g = np.roll(g, -1, axis=1 + k)
        out.append(g.ravel())
    return np.stack(out, axis=-1)    # (cells, corners)


def assemble_full(domain: DomainSpec, coeffs: CoefficientField) -> sp.csr_matrix:
    """Stiffness matrix over all nodes (no boundary conditions applied)."""
    if not domain.is_flat:
        raise GeometryError("the solver works on flat strips; flatten the problem first")
    n, N = domain.n, coeffs.N
    corners, G, W = _local_weights(domain)
    nc = len(corners)
    vol = domain.cell_volume
    Ac = cell_average(coeffs.A, domain).reshape(-1, n, n, N, N)
    K = vol * np.einsum("cijxy,ijab->caxby", Ac, W)
    if coeffs.has_drift():
        Bc = cell_average(coeffs.B, domain).reshape(-1, n, N, N)
        drift = np.einsum("cixy,ib->cxby", Bc, G) * (vol / nc)
        K -= drift[:, None, :, :, :]
    nodes = _cell_node_indices(domain, corners)               # (cells, nc)
    dof = nodes[:, :, None] * N + np.arange(N)[None, None, :]  # (cells, nc, N)
    rows = np.broadcast_to(dof[:, :, :, None, None], K.shape).ravel()
    cols = np.broadcast_to(dof[:, None, None, :, :], K.shape).ravel()
    ndof = int(np.prod(domain.node_shape)) * N
    return sp.csr_matrix((K.ravel(), (rows, cols)), shape=(ndof, ndof))


def _as_boundary(f, domain, N):
    f = np.asarray(f, dtype=float)
    if f.shape == domain.lat_shape:
        f = f[..., None]
    if f.shape != domain.lat_shape + (N,):
        raise ValueError(f"boundary data shape {f.shape}, expected {domain.lat_shape + (N,)}")
    return f


def _interior_mask(domain, N):
    rows = np.zeros(domain.node_shape, dtype=bool)
    rows[1:-1] = True
    return np.repeat(rows.ravel(), N)


def assemble(domain: DomainSpec, coeffs: CoefficientField, f) -> WeakSystem:
    """Weak system with ``u = f`` on ``x0 = 0`` and ``u = 0`` on ``x0 = h`` eliminated."""
    N = coeffs.N
    K = assemble_full(domain, coeffs)
    ub = np.zeros(domain.node_shape + (N,))
    ub[0] = _as_boundary(f, domain, N)
    ub = ub.ravel()
    inner = _interior_mask(domain, N)
    Kii = K[inner][:, inner].tocsr()
    Kib = K[inner][:, ~inner]
    rhs = -Kib @ ub[~inner]
    sym = (not coeffs.has_drift()) and coeffs.is_symmetric()
    ell = legendre_constants(coeffs, rank_one=False).legendre_min
    return WeakSystem(Kii, rhs, domain, N, K, ub, sym, ell)


class _History:
    def __init__(self, A, b):
        self.A, self.b = A, b
        self.bnorm = np.linalg.norm(b) or 1.0
        self.values = []

    def __call__(self, xk):
        self.values.append(float(np.linalg.norm(self.b - self.A @ xk) / self.bnorm))


def _jacobi(A):
    d = A.diagonal().copy()
    d[d == 0] = 1.0
    inv = 1.0 / d
    return spla.LinearOperator(A.shape, matvec=lambda x: inv * x, dtype=float)


def solve_strip(system: WeakSystem, tol: float = 1e-10, max_iter: int | None = None,
                method: str = "auto"):
    """Solve the weak system; returns ``(GridFunction, SolveStats)``.

    ``method``: ``auto`` (direct below 20k unknowns), ``direct``, ``cg`` or
    ``gmres``; ``cg`` is only used for symmetric systems.
    """
    if not system.legendre_min > 0:
        raise EllipticityError(
            f"coefficients are not strongly elliptic (Legendre constant {system.legendre_min:.3g})")
    A, b = system.matrix, system.rhs
    bnorm = np.linalg.norm(b)
    if method == "auto":
        method = "direct" if system.n_unknowns < DIRECT_LIMIT else ("cg" if system.symmetric else "gmres")
    if method == "cg" and not system.symmetric:
        method = "gmres"
    history: list = []
    if bnorm == 0.0:
        x, iters = np.zeros_like(b), 0
    elif method == "direct":
        lu = spla.splu(A.tocsc())
        x = lu.solve(b)
        r = b - A @ x
        if np.linalg.norm(r) > tol * bnorm:       # one step of iterative refinement
            x += lu.solve(r)
        iters = 1
    else:
        max_iter = max_iter or 20 * system.n_unknowns
        hist = _History(A, b)
        M = _jacobi(A)
        if method == "cg":
            x, info = spla.cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=M, callback=hist)
        else:
            x, info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=60, maxiter=max_iter, M=M,
                                 callback=hist, callback_type="x")
        history = hist.values
        iters = len(history)
        if info != 0:
            raise ConvergenceError(
                f"{method} stopped after {iters} iterations with residual "
                f"{history[-1] if history else float('nan'):.3e}", history)
    res = float(np.linalg.norm(b - A @ x) / bnorm) if bnorm > 0 else 0.0
    if res > tol:
        raise ConvergenceError(f"{method} residual {res:.3e} above tolerance {tol:.1e}", history)
    u = system.boundary_values.copy()
    u[_interior_mask(system.domain, system.N)] = x
    u = GridFunction(u.reshape(system.domain.node_shape + (system.N,)), system.domain)
    stats = SolveStats(iters, res, discrete_energy(u), method, history)
    log.debug("solved %d unknowns with %s: residual %.2e", system.n_unknowns, method, res)
    return u, stats


def discrete_energy(u: GridFunction) -> float:
    """``int |grad u|^2`` with per-cell gradients."""
    g = cell_gradient(u.values, u.domain)
    return float(np.sum(g ** 2) * u.domain.cell_volume)


def manufactured_residual(domain: DomainSpec, coeffs: CoefficientField, u_exact) -> np.ndarray:
    """``K u`` at interior nodes, shape ``(nx0 - 2, *lat, N)``; approximates ``-cell_volume * L u``."""
    u = np.asarray(u_exact, dtype=float)
    if u.shape == domain.node_shape:
        u = u[..., None]
    K = assemble_full(domain, coeffs)
    r = (K @ u.ravel()).reshape(domain.node_shape + (coeffs.N,))
    return r[1:-1]


def discrete_operator(domain: DomainSpec, coeffs: CoefficientField, u_exact) -> np.ndarray:
    """Discrete ``L u`` at interior nodes."""
    return -manufactured_residual(domain, coeffs, u_exact) / domain.cell_volume


def extend_by_zero(u: GridFunction, height: float) -> GridFunction:
    """Extend a strip field by zero to a taller strip with the same spacing."""
    dom = u.domain
    extra = int(round((height - dom.h) / dom.dx0))
    if extra < 0:
        raise ValueError("target height below the current strip")
    tall = dom.with_height(dom.h + extra * dom.dx0, dom.nx0 + extra)
    vals = np.zeros(tall.node_shape + (u.N,))
    vals[: dom.nx0] = u.values
    return GridFunction(vals, tall)


def solve_dirichlet(domain: DomainSpec, coeffs: CoefficientField, f, tol: float = 1e-10,
                    method: str = "auto"):
    return solve_strip(assemble(domain, coeffs, f), tol=tol, method=method)


@dataclass
class SweepEntry:
    h: float
    u: GridFunction
    stats: SolveStats
    ntilde_l2: float


def height_sweep(base: DomainSpec, heights, coeffs, f, aperture: float = 1.0,
                 tol: float = 1e-10):
    """Solve strips of increasing height with a common spacing.

    ``coeffs`` is a callable ``domain -> CoefficientField``.  Returns the per-height
    entries (fields extended by zero to the tallest strip) and the L2 distances
    between consecutive heights on ``{x0 <= heights[0]}``.
    """
    from .diagnostics import boundary_lp_norm, ntmax_tilde_strip
    from .grid import ConeSpec

    heights = sorted(float(h) for h in heights)
    dx0 = base.dx0
    tallest = heights[-1]
    entries = []
    for h in heights:
        nx0 = int(round(h / dx0)) + 1
        dom = base.with_height((nx0 - 1) * dx0, nx0)
        u, stats = solve_dirichlet(dom, coeffs(dom), f, tol=tol)
        nt = ntmax_tilde_strip(u, ConeSpec(aperture))
        entries.append(SweepEntry(dom.h, extend_by_zero(u, tallest) if h < tallest else u,
                                  stats, boundary_lp_norm(nt, dom, 2.0)))
    rows = int(round(heights[0] / dx0)) + 1
    diffs = []
    for a, b in zip(entries[:-1], entries[1:]):
        d = a.u.values[:rows] - b.u.values[:rows]
        diffs.append(float(np.sqrt(np.sum(d ** 2) * base.cell_volume)))
    return entries, diffs
