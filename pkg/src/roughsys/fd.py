"""Finite-difference helpers on the (possibly sheared) node lattice."""
from __future__ import annotations

import itertools

import numpy as np

from .grid import DomainSpec


def _nodal_phi_slopes(domain: DomainSpec):
    return [(np.roll(domain.phi, -1, axis=k) - np.roll(domain.phi, 1, axis=k)) / (2 * domain.dl)
            for k in range(domain.n - 1)]


def _d0(f, dx0):
    """Vertical derivative; written with differences so constants give exact zeros."""
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * dx0)
    if f.shape[0] > 2:
        out[0] = (4 * (f[1] - f[0]) - (f[2] - f[0])) / (2 * dx0)
        out[-1] = (4 * (f[-1] - f[-2]) - (f[-1] - f[-3])) / (2 * dx0)
    else:
        out[0] = out[-1] = (f[1] - f[0]) / dx0
    return out


def nodal_gradient(f: np.ndarray, domain: DomainSpec) -> np.ndarray:
    """Physical gradient of a nodal field; derivative axis inserted after the grid axes.

    Centred differences, second-order one-sided at the bottom and top faces,
    periodic laterally.
    """
    f = np.asarray(f, dtype=float)
    nd = domain.n
    d0 = _d0(f, domain.dx0)
    parts = [d0]
    slopes = None if domain.is_flat else _nodal_phi_slopes(domain)
    for k in range(nd - 1):
        ax = 1 + k
        dk = (np.roll(f, -1, axis=ax) - np.roll(f, 1, axis=ax)) / (2 * domain.dl)
        if slopes is not None:
            s = slopes[k].reshape((1,) + domain.lat_shape + (1,) * (f.ndim - nd))
            dk = dk - s * d0
        parts.append(dk)
    return np.stack(parts, axis=nd)


def cell_corners(f: np.ndarray, domain: DomainSpec):
    """Dictionary ``corner -> values`` for the ``2**n`` corners of every cell."""
    f = np.asarray(f, dtype=float)
    out = {}
    for corner in itertools.product((0, 1), repeat=domain.n):
        g = f[1:] if corner[0] else f[:-1]
        for k in range(domain.n - 1):
            if corner[1 + k]:
                g = np.roll(g, -1, axis=1 + k)
        out[corner] = g
    return out


def cell_average(f: np.ndarray, domain: DomainSpec) -> np.ndarray:
    corners = cell_corners(f, domain)
    return sum(corners.values()) / len(corners)


def cell_gradient(f: np.ndarray, domain: DomainSpec) -> np.ndarray:
    """Per-cell gradient (edge differences averaged over the cell), cell-centred."""
    corners = cell_corners(f, domain)
    nd = domain.n
    spacing = [domain.dx0] + [domain.dl] * (nd - 1)
    scale = 2.0 ** (nd - 1)
    parts = []
    for d in range(nd):
        acc = 0.0
        for corner, g in corners.items():
            acc = acc + (g if corner[d] else -g)
        parts.append(acc / (scale * spacing[d]))
    if not domain.is_flat:
        slopes = domain.phi_slope_cells()
        extra = (1,) * (parts[0].ndim - nd)
        for k in range(nd - 1):
            s = slopes[..., k].reshape((1,) + domain.lat_shape + extra)
            parts[1 + k] = parts[1 + k] - s * parts[0]
    return np.stack(parts, axis=nd)
