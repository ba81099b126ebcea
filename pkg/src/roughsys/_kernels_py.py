"""Pure NumPy implementations of the scan kernels.

Every function here has a twin in ``_kernels.pyx`` with the same signature and
the same semantics; ``roughsys.kernels`` picks one at import time.

Lattice convention shared by all kernels: values live on an array of shape
``(nrows, M1, M2)``; the point of row ``i`` in lateral column ``m`` sits at height
``base[m] + (i + row_off) * dx0`` and lateral position ``(m + lat_off) * dl``.
Lateral directions are periodic with ``M1`` and ``M2`` columns; ``lat_dims``
is 1 for planar problems (then ``M2 == 1``) and 2 for spatial ones.
"""
from __future__ import annotations

import numpy as np

OP_MEAN, OP_MAX, OP_SUM = 0, 1, 2
TIE_EPS = 1e-9


def _lateral_offsets(rmax, dl, shift, lat_dims):
    """Integer column offsets whose lateral distance is below ``rmax``."""
    k = int(np.ceil(rmax / dl)) + 2
    d1 = np.arange(-k, k + 1)
    if lat_dims == 1:
        d1 = d1[np.abs(d1 + shift) * dl < rmax]
        return d1, np.zeros_like(d1), np.abs(d1 + shift) * dl
    g1, g2 = np.meshgrid(d1, d1, indexing="ij")
    g1, g2 = g1.ravel(), g2.ravel()
    rho = np.hypot(g1 + shift, g2 + shift) * dl
    keep = rho < rmax
    return g1[keep], g2[keep], rho[keep]


def _sparse_table(v):
    table = [v]
    span = 1
    while 2 * span <= v.shape[0]:
        prev = table[-1]
        table.append(np.maximum(prev[:-span], prev[span:]))
        span *= 2
    return table


def _range_max(table, lo, hi, cols1, cols2):
    length = hi - lo + 1
    level = np.zeros_like(length)
    pos = length > 0
    level[pos] = np.floor(np.log2(length[pos])).astype(np.int64)
    out = np.full(lo.shape, -np.inf)
    for lev in np.unique(level[pos]):
        sel = pos & (level == lev)
        t = table[lev]
        a = t[lo[sel], cols1[sel], cols2[sel]]
        b = t[hi[sel] - (1 << lev) + 1, cols1[sel], cols2[sel]]
        out[sel] = np.maximum(a, b)
    return out


def ball_reduce(values, base, dx0, dl, row_off, lat_off, qx0, qj, qlat_off,
                radius, op, top_pad, lat_dims):
    """Reduce ``values`` over open Euclidean balls around query points.

    Lateral directions are treated as a periodic extension, so balls wider
    than the period visit columns more than once.  With ``top_pad`` the rows
    above the lattice count as zeros in ``count`` (mean/sum only).
    """
    values = np.ascontiguousarray(values, dtype=float)
    nrows, M1, M2 = values.shape
    qx0 = np.asarray(qx0, dtype=float)
    radius = np.asarray(radius, dtype=float)
    qj = np.asarray(qj, dtype=np.int64).reshape(-1, 2)
    nq = qx0.shape[0]
    count = np.zeros(nq, dtype=np.int64)
    if op == OP_MAX:
        out = np.full(nq, -np.inf)
        table = _sparse_table(values)
    else:
        out = np.zeros(nq)
        prefix = np.zeros((nrows + 1, M1, M2))
        np.cumsum(values, axis=0, out=prefix[1:])
    if nq == 0 or radius.max(initial=0.0) <= 0.0:
        return out, count
    shift = lat_off - qlat_off
    d1, d2, rho = _lateral_offsets(radius.max(), dl, shift, lat_dims)
    for a, b, r in zip(d1, d2, rho):
        live = radius > r
        if not live.any():
            continue
        q = np.nonzero(live)[0]
        m1 = (qj[q, 0] + a) % M1
        m2 = (qj[q, 1] + b) % M2
        s = np.sqrt(radius[q] ** 2 - r * r)
        bh = base[m1, m2]
        tlo = (qx0[q] - s - bh) / dx0 - row_off
        thi = (qx0[q] + s - bh) / dx0 - row_off
        lo = np.floor(tlo).astype(np.int64) + 1
        hi = np.ceil(thi).astype(np.int64) - 1
        lo_c = np.maximum(lo, 0)
        hi_c = np.minimum(hi, nrows - 1)
        ok = hi_c >= lo_c
        n_in = np.where(ok, hi_c - lo_c + 1, 0)
        if top_pad:
            n_virtual = np.maximum(hi - np.maximum(lo, nrows) + 1, 0)
        else:
            n_virtual = 0
        count[q] += n_in + n_virtual
        if not ok.any():
            continue
        qo, lo_o, hi_o, m1o, m2o = q[ok], lo_c[ok], hi_c[ok], m1[ok], m2[ok]
        if op == OP_MAX:
            out[qo] = np.maximum(out[qo], _range_max(table, lo_o, hi_o, m1o, m2o))
        else:
            out[qo] += prefix[hi_o + 1, m1o, m2o] - prefix[lo_o, m1o, m2o]
    if op == OP_MEAN:
        nz = count > 0
        out[nz] /= count[nz]
    return out, count


def _min_image(raw, M):
    return np.abs(raw - M * np.round(raw / M))


def _column_distances(dl, shift, M1, M2, lat_dims):
    """Minimal-image lateral distance from column 0 to every column."""
    r1 = _min_image(np.arange(M1) + shift, M1)
    if lat_dims == 1:
        return (r1 * dl)[:, None]
    r2 = _min_image(np.arange(M2) + shift, M2)
    return np.hypot(r1[:, None], r2[None, :]) * dl


def _suffix_max(values, imax):
    v = values[: imax + 1]
    return np.maximum.accumulate(v[::-1], axis=0)[::-1]


def cone_max(values, base, dx0, dl, row_off, lat_off, qbase, qlat_off, lift,
             aperture, imax, lat_dims):
    """Max of ``values`` over the open cone above each boundary column.

    The cone vertex over column ``j`` is at height ``qbase[j] + lift[j]``;
    rows above ``imax`` are ignored (truncation).  Empty cones give ``-inf``.
    """
    values = np.asarray(values, dtype=float)
    nrows, M1, M2 = values.shape
    imax = min(int(imax), nrows - 1)
    out = np.full((M1, M2), -np.inf)
    if imax < 0:
        return out
    G = _suffix_max(values, imax)
    dist = _column_distances(dl, lat_off - qlat_off, M1, M2, lat_dims)
    vertex = np.asarray(qbase, dtype=float) + lift
    J1, J2 = np.meshgrid(np.arange(M1), np.arange(M2), indexing="ij")
    for e1 in range(M1):
        for e2 in range(M2):
            m1 = (J1 + e1) % M1
            m2 = (J2 + e2) % M2
            t = (vertex + dist[e1, e2] / aperture - base[m1, m2]) / dx0 - row_off
            imin = np.floor(t).astype(np.int64) + 1
            imin = np.maximum(imin, 0)
            ok = imin <= imax
            if ok.any():
                cand = G[imin[ok], m1[ok], m2[ok]]
                out[ok] = np.maximum(out[ok], cand)
    return out


def cone_sum(values, base, dx0, dl, row_off, lat_off, qbase, qlat_off,
             aperture, imax, lat_dims):
    """Sum of ``values`` over the open cone above each boundary column.

    Unlike :func:`cone_max`, every periodic image of a lattice point inside the
    cone contributes, which keeps the lateral slice of the cone at its exact
    measure even when it is wider than the period.  Points lying exactly on
    the cone surface count with weight one half.
    """
    values = np.asarray(values, dtype=float)
    nrows, M1, M2 = values.shape
    imax = min(int(imax), nrows - 1)
    out = np.zeros((M1, M2))
    if imax < 0:
        return out
    v = values[: imax + 1]
    suffix = np.cumsum(v[::-1], axis=0)[::-1]
    suffix = np.concatenate([suffix, np.zeros((1, M1, M2))], axis=0)
    qbase = np.asarray(qbase, dtype=float)
    top = base.max() + (imax + row_off) * dx0 - qbase.min()
    if top <= 0:
        return out
    # widen by the tie tolerance so surface points on the top row keep their half weight
    d1, d2, rho = _lateral_offsets(aperture * (top + 2 * TIE_EPS * dx0), dl, lat_off - qlat_off,
                                   lat_dims)
    J1, J2 = np.meshgrid(np.arange(M1), np.arange(M2), indexing="ij")
    for a, b, r in zip(d1, d2, rho):
        m1 = (J1 + a) % M1
        m2 = (J2 + b) % M2
        t = (qbase + r / aperture - base[m1, m2]) / dx0 - row_off
        ti = np.floor(t + 0.5).astype(np.int64)
        tie = np.abs(t - ti) < TIE_EPS
        imin = np.where(tie, ti + 1, np.floor(t).astype(np.int64) + 1)
        imin = np.clip(imin, 0, imax + 1)
        out += suffix[imin, m1, m2]
        half = tie & (ti >= 0) & (ti <= imax)
        if half.any():
            out[half] += 0.5 * v[ti[half], m1[half], m2[half]]
    return out


def stopping_time(values, base, dx0, dl, row_off, lat_off, qbase, qlat_off,
                  aperture, nu, imax, lat_dims):
    """Smallest lattice lift ``k * dx0`` whose lifted cone has max below ``nu``.

    The predicate is monotone in the lift because cones with a raised vertex
    on the same fibre are nested, so a bisection per column suffices.
    """
    values = np.asarray(values, dtype=float)
    nrows, M1, M2 = values.shape
    span = base.max() - np.min(qbase)
    kmax = nrows + int(np.ceil(max(span, 0.0) / dx0)) + 1
    lo = np.full((M1, M2), -1, dtype=np.int64)   # predicate false (or k=-1 sentinel)
    hi = np.full((M1, M2), kmax, dtype=np.int64)  # predicate true
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = (lo + hi) // 2
        mid = np.where(active, mid, hi)
        cm = cone_max(values, base, dx0, dl, row_off, lat_off, qbase, qlat_off,
                      mid * dx0, aperture, imax, lat_dims)
        good = cm < nu
        hi = np.where(active & good, mid, hi)
        lo = np.where(active & ~good, mid, lo)
    return hi * dx0
