"""Structured grids on strips and Lipschitz graph domains.

The domain is ``{phi(x') < x0 < phi(x') + h}`` over a periodic lateral box of
side ``period``.  Nodes form a sheared tensor lattice: node ``(i, j)`` sits at
``(phi(x'_j) + i * dx0, x'_j)``, so the surrogate distance ``x0 - phi(x')`` of a
node is exactly ``i * dx0``.  Cells are the boxes between neighbouring nodes;
their centres are at half-integer lattice positions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (BallTooLarge, GeometryError, InvalidGeometry, OutsideDomain,
                     UnsupportedDimension)


@dataclass(frozen=True, eq=False)
class DomainSpec:
    n: int
    h: float
    period: float
    nx0: int
    nx_lat: int
    phi: np.ndarray = field(repr=False)
    lip_const: float = 0.0

    @property
    def lat_dims(self) -> int:
        return self.n - 1

    @property
    def lat_shape(self) -> tuple:
        return (self.nx_lat,) * (self.n - 1)

    @property
    def node_shape(self) -> tuple:
        return (self.nx0,) + self.lat_shape

    @property
    def cell_shape(self) -> tuple:
        return (self.nx0 - 1,) + self.lat_shape

    @property
    def dx0(self) -> float:
        return self.h / (self.nx0 - 1)

    @property
    def dl(self) -> float:
        return self.period / self.nx_lat

    @property
    def cell_volume(self) -> float:
        return self.dx0 * self.dl ** (self.n - 1)

    @property
    def boundary_cell_area(self) -> float:
        return self.dl ** (self.n - 1)

    @property
    def is_flat(self) -> bool:
        return not np.any(self.phi)

    def lateral_coords(self) -> np.ndarray:
        """Node lateral coordinates, shape ``lat_shape + (n-1,)``."""
        x = np.arange(self.nx_lat) * self.dl
        grids = np.meshgrid(*([x] * (self.n - 1)), indexing="ij")
        return np.stack(grids, axis=-1)

    def cell_lateral_coords(self) -> np.ndarray:
        return self.lateral_coords() + 0.5 * self.dl

    def phi_cells(self) -> np.ndarray:
        """phi averaged over the lateral corners of each cell column."""
        p = self.phi
        for ax in range(self.n - 1):
            p = 0.5 * (p + np.roll(p, -1, axis=ax))
        return p

    def phi_slope_cells(self) -> np.ndarray:
        """Lateral derivatives of phi at cell-column centres, shape ``lat_shape + (n-1,)``."""
        out = []
        for ax in range(self.n - 1):
            d = (np.roll(self.phi, -1, axis=ax) - self.phi) / self.dl
            for other in range(self.n - 1):
                if other != ax:
                    d = 0.5 * (d + np.roll(d, -1, axis=other))
            out.append(d)
        return np.stack(out, axis=-1)

    def node_x0(self) -> np.ndarray:
        """Physical heights of all nodes."""
        i = np.arange(self.nx0).reshape((-1,) + (1,) * (self.n - 1))
        return self.phi[None] + i * self.dx0

    def node_delta(self) -> np.ndarray:
        i = np.arange(self.nx0).reshape((-1,) + (1,) * (self.n - 1))
        return np.broadcast_to(i * self.dx0, self.node_shape).astype(float)

    def cell_delta(self) -> np.ndarray:
        i = np.arange(self.nx0 - 1).reshape((-1,) + (1,) * (self.n - 1))
        return np.broadcast_to((i + 0.5) * self.dx0, self.cell_shape).astype(float)

    def node_lattice(self) -> "Lattice":
        return Lattice(_as2(self.phi, self.n), self.dx0, self.dl, 0.0, 0.0, self.n - 1)

    def cell_lattice(self) -> "Lattice":
        return Lattice(_as2(self.phi_cells(), self.n), self.dx0, self.dl, 0.5, 0.5, self.n - 1)

    def with_height(self, h: float, nx0: int) -> "DomainSpec":
        return build_domain(self.n, h, self.period, nx0, self.nx_lat,
                            None if self.is_flat else self.phi)


@dataclass(frozen=True)
class Lattice:
    """Arguments describing a point lattice to the scan kernels."""
    base: np.ndarray
    dx0: float
    dl: float
    row_off: float
    lat_off: float
    lat_dims: int


@dataclass(frozen=True)
class ConeSpec:
    aperture: float
    trunc_height: float | None = None

    def __post_init__(self):
        if not self.aperture > 0:
            raise GeometryError("cone aperture must be positive")


@dataclass(eq=False)
class GridFunction:
    """Nodal field with ``N`` components; ``values`` has shape ``node_shape + (N,)``."""
    values: np.ndarray
    domain: DomainSpec

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == len(self.domain.node_shape):
            self.values = self.values[..., None]
        if self.values.shape[:-1] != self.domain.node_shape:
            raise InvalidGeometry(
                f"field shape {self.values.shape} does not match grid {self.domain.node_shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidGeometry("grid function has non-finite entries")

    @property
    def N(self) -> int:
        return self.values.shape[-1]

    def magnitude_sq(self) -> np.ndarray:
        return np.sum(self.values ** 2, axis=-1)


def _as2(a, n):
    a = np.asarray(a, dtype=float)
    return a[:, None] if n == 2 else a


def lipschitz_constant(phi: np.ndarray, dl: float) -> float:
    """Maximum absolute forward-difference slope of sampled ``phi``."""
    phi = np.asarray(phi, dtype=float)
    slopes = [np.abs(np.diff(phi, axis=ax)).max(initial=0.0) / dl for ax in range(phi.ndim)]
    return float(max(slopes, default=0.0))


def build_domain(n: int, h: float, period: float, nx0: int, nx_lat: int,
                 phi_samples=None) -> DomainSpec:
    if n not in (2, 3):
        raise UnsupportedDimension(f"dimension {n} not supported (use 2 or 3)")
    if not (h > 0 and period > 0):
        raise InvalidGeometry("strip height and period must be positive")
    if nx0 < 2 or nx_lat < 2:
        raise InvalidGeometry("need at least two nodes per axis")
    lat_shape = (nx_lat,) * (n - 1)
    if phi_samples is None:
        phi = np.zeros(lat_shape)
    else:
        phi = np.asarray(phi_samples, dtype=float)
        if phi.shape != lat_shape:
            raise InvalidGeometry(f"phi samples must have shape {lat_shape}, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InvalidGeometry("phi samples must be finite")
    phi = phi.copy()
    phi.setflags(write=False)
    dl = period / nx_lat
    return DomainSpec(n, float(h), float(period), int(nx0), int(nx_lat), phi,
                      lipschitz_constant(phi, dl))


def strip(n: int = 2, resolution: int = 64, h: float = 1.0, period: float = 1.0,
          phi_samples=None) -> DomainSpec:
    """Strip whose vertical spacing matches the lateral one (``h/period`` integral)."""
    nx0 = int(round(resolution * h / period)) + 1
    return build_domain(n, h, period, nx0, resolution, phi_samples)


def phi_at(domain: DomainSpec, xlat) -> float:
    """Multilinear periodic interpolation of phi at a lateral point."""
    xlat = np.atleast_1d(np.asarray(xlat, dtype=float))
    if domain.is_flat:
        return 0.0
    t = xlat / domain.dl
    i0 = np.floor(t).astype(int)
    fr = t - i0
    val = 0.0
    for corner in np.ndindex(*([2] * (domain.n - 1))):
        idx = tuple((i0[k] + corner[k]) % domain.nx_lat for k in range(domain.n - 1))
        wgt = np.prod([fr[k] if corner[k] else 1 - fr[k] for k in range(domain.n - 1)])
        val += wgt * domain.phi[idx]
    return float(val)


def dist_to_boundary(domain: DomainSpec, point) -> float:
    """Surrogate distance ``x0 - phi(x')`` of a point ``(x0, x'...)``."""
    point = np.asarray(point, dtype=float)
    d = point[0] - phi_at(domain, point[1:])
    if d < 0:
        raise OutsideDomain(f"point {tuple(point)} lies below the boundary graph")
    return float(d)


def torus_distance(a, b, period):
    """Minimal-image lateral distance; last axis holds the coordinates."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff = diff - period * np.round(diff / period)
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def _q_index(domain, Q):
    Q = np.atleast_1d(np.asarray(Q, dtype=int))
    if Q.shape != (domain.n - 1,):
        raise GeometryError(f"boundary node index must have {domain.n - 1} entries")
    return tuple(int(q) % domain.nx_lat for q in Q)


def check_aperture(domain: DomainSpec, cone: ConeSpec):
    if domain.lip_const > 0 and cone.aperture >= 1.0 / domain.lip_const:
        raise GeometryError(
            f"aperture {cone.aperture} too large for Lipschitz constant {domain.lip_const}")


def cone_cells(domain: DomainSpec, Q, cone: ConeSpec, lift: float = 0.0) -> np.ndarray:
    """Boolean mask of cells whose centres lie in the cone at boundary node ``Q``.

    ``lift`` raises the vertex by that height along the fibre through ``Q``.
    """
    check_aperture(domain, cone)
    q = _q_index(domain, Q)
    qlat = np.array(q, dtype=float) * domain.dl
    q0 = domain.phi[q] + lift
    lat = domain.cell_lateral_coords()
    rho = torus_distance(lat, qlat, domain.period)
    i = np.arange(domain.nx0 - 1).reshape((-1,) + (1,) * (domain.n - 1))
    y0 = domain.phi_cells()[None] + (i + 0.5) * domain.dx0
    mask = cone.aperture * (y0 - q0) > rho[None]
    if cone.trunc_height is not None:
        mask &= domain.cell_delta() <= cone.trunc_height
    return mask


def cone_nodes(domain: DomainSpec, Q, cone: ConeSpec, lift: float = 0.0) -> np.ndarray:
    """Same membership test as :func:`cone_cells`, applied to nodes."""
    check_aperture(domain, cone)
    q = _q_index(domain, Q)
    qlat = np.array(q, dtype=float) * domain.dl
    q0 = domain.phi[q] + lift
    rho = torus_distance(domain.lateral_coords(), qlat, domain.period)
    mask = cone.aperture * (domain.node_x0() - q0) > rho[None]
    if cone.trunc_height is not None:
        mask &= domain.node_delta() <= cone.trunc_height
    return mask


def surface_ball(domain: DomainSpec, Q, r: float):
    """Surface ball and Carleson region at boundary node ``Q``.

    Returns ``(node_mask, cell_mask)``: boundary nodes within lateral distance
    ``r`` and cells whose centres lie in the Euclidean ball ``B_r(Q)``.
    """
    if not r > 0:
        raise GeometryError("radius must be positive")
    if r > domain.period / 2:
        raise BallTooLarge(f"radius {r} exceeds half the lateral period {domain.period / 2}")
    q = _q_index(domain, Q)
    qlat = np.array(q, dtype=float) * domain.dl
    q0 = domain.phi[q]
    nodes = torus_distance(domain.lateral_coords(), qlat, domain.period) < r
    rho = torus_distance(domain.cell_lateral_coords(), qlat, domain.period)
    i = np.arange(domain.nx0 - 1).reshape((-1,) + (1,) * (domain.n - 1))
    y0 = domain.phi_cells()[None] + (i + 0.5) * domain.dx0
    cells = (y0 - q0) ** 2 + rho[None] ** 2 < r * r
    return nodes, cells


def surface_measure(domain: DomainSpec, node_mask) -> float:
    return float(np.count_nonzero(node_mask) * domain.boundary_cell_area)
