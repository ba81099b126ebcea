# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, floor, ceil, fabs, INFINITY, round as cround

cnp.import_array()

DEF OP_MEAN = 0
DEF OP_MAX = 1
DEF OP_SUM = 2
DEF TIE_EPS = 1e-9


cdef inline long _mod(long a, long m) nogil:
    cdef long r = a % m
    if r < 0:
        r += m
    return r


cdef inline double _min_image(double raw, long M) nogil:
    return fabs(raw - M * cround(raw / M))


def ball_reduce(values, base, double dx0, double dl, double row_off, double lat_off,
                qx0, qj, double qlat_off, radius, int op, bint top_pad, int lat_dims):
    vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[::1] qx = np.ascontiguousarray(qx0, dtype=np.float64)
    cdef const long[:, ::1] qq = np.ascontiguousarray(np.asarray(qj).reshape(-1, 2), dtype=np.int64)
    cdef const double[::1] rad = np.ascontiguousarray(radius, dtype=np.float64)
    cdef Py_ssize_t nrows = vals.shape[0], M1 = vals.shape[1], M2 = vals.shape[2]
    cdef Py_ssize_t nq = qx.shape[0]
    out_np = np.zeros(nq) if op != OP_MAX else np.full(nq, -np.inf)
    count_np = np.zeros(nq, dtype=np.int64)
    cdef double[::1] out = out_np
    cdef long[::1] cnt = count_np
    # column prefix sums for mean/sum, a sparse max table for max
    cdef double[:, :, ::1] P
    cdef double[:, :, :, ::1] T
    cdef long nlev = 1, span = 1, lev
    if op == OP_MAX:
        while 2 * span <= nrows:
            span *= 2
            nlev += 1
        T_np = np.empty((nlev, nrows, M1, M2))
        T_np[0] = vals
        span = 1
        for lev in range(1, nlev):
            T_np[lev, : nrows - 2 * span + 1] = np.maximum(T_np[lev - 1, : nrows - 2 * span + 1],
                                                          T_np[lev - 1, span: nrows - span + 1])
            span *= 2
        T = T_np
    else:
        P_np = np.zeros((nrows + 1, M1, M2))
        np.cumsum(vals, axis=0, out=P_np[1:])
        P = P_np
    cdef double shift = lat_off - qlat_off
    cdef Py_ssize_t q
    cdef long k, d1, d2, d2lim, m1, m2, lo, hi, lo_c, hi_c, length
    cdef double r, r2, rho1, rho, s, bh, acc, best, cand
    with nogil:
        for q in range(nq):
            r = rad[q]
            if r <= 0:
                continue
            r2 = r * r
            k = <long>ceil(r / dl) + 2
            acc = 0.0
            best = -INFINITY
            d2lim = k if lat_dims == 2 else 0
            for d1 in range(-k, k + 1):
                rho1 = (d1 + shift) * dl
                if rho1 * rho1 >= r2:
                    continue
                for d2 in range(-d2lim, d2lim + 1):
                    if lat_dims == 2:
                        rho = (d2 + shift) * dl
                        rho = rho1 * rho1 + rho * rho
                    else:
                        rho = rho1 * rho1
                    if rho >= r2:
                        continue
                    s = sqrt(r2 - rho)
                    m1 = _mod(qq[q, 0] + d1, M1)
                    m2 = _mod(qq[q, 1] + d2, M2)
                    bh = b[m1, m2]
                    lo = <long>floor((qx[q] - s - bh) / dx0 - row_off) + 1
                    hi = <long>ceil((qx[q] + s - bh) / dx0 - row_off) - 1
                    lo_c = lo if lo > 0 else 0
                    hi_c = hi if hi < nrows - 1 else nrows - 1
                    if hi_c >= lo_c:
                        cnt[q] += hi_c - lo_c + 1
                        if op == OP_MAX:
                            length = hi_c - lo_c + 1
                            lev = 0
                            span = 1
                            while 2 * span <= length:
                                span *= 2
                                lev += 1
                            cand = T[lev, lo_c, m1, m2]
                            if T[lev, hi_c - span + 1, m1, m2] > cand:
                                cand = T[lev, hi_c - span + 1, m1, m2]
                            if cand > best:
                                best = cand
                        else:
                            acc = acc + (P[hi_c + 1, m1, m2] - P[lo_c, m1, m2])
                    if top_pad and op != OP_MAX:
                        lo_c = lo if lo > nrows else nrows
                        if hi >= lo_c:
                            cnt[q] += hi - lo_c + 1
            if op == OP_MAX:
                out[q] = best
            elif op == OP_MEAN:
                out[q] = acc / cnt[q] if cnt[q] > 0 else 0.0
            else:
                out[q] = acc
    return out_np, count_np


cdef double[:, :, ::1] _suffix_max(const double[:, :, ::1] v, long imax):
    cdef Py_ssize_t M1 = v.shape[1], M2 = v.shape[2]
    G_np = np.empty((imax + 1, M1, M2))
    cdef double[:, :, ::1] G = G_np
    cdef long i, a, c
    for a in range(M1):
        for c in range(M2):
            G[imax, a, c] = v[imax, a, c]
            for i in range(imax - 1, -1, -1):
                G[i, a, c] = v[i, a, c] if v[i, a, c] > G[i + 1, a, c] else G[i + 1, a, c]
    return G


cdef double[:, ::1] _distances(double dl, double shift, long M1, long M2, int lat_dims):
    dist_np = np.empty((M1, M2))
    cdef double[:, ::1] dist = dist_np
    cdef long e1, e2
    cdef double r1, r2
    for e1 in range(M1):
        r1 = _min_image(e1 + shift, M1)
        for e2 in range(M2):
            if lat_dims == 2:
                r2 = _min_image(e2 + shift, M2)
                dist[e1, e2] = sqrt(r1 * r1 + r2 * r2) * dl
            else:
                dist[e1, e2] = r1 * dl
    return dist


cdef void _cone_max_into(double[:, :, ::1] G, const double[:, ::1] b, double[:, ::1] dist,
                         double dx0, double row_off, double vertex_h, long j1, long j2,
                         double aperture, long imax, double *res) noexcept nogil:
    cdef long M1 = G.shape[1], M2 = G.shape[2]
    cdef long e1, e2, m1, m2, imin
    cdef double best = -INFINITY, t
    for e1 in range(M1):
        m1 = j1 + e1
        if m1 >= M1:
            m1 -= M1
        for e2 in range(M2):
            m2 = j2 + e2
            if m2 >= M2:
                m2 -= M2
            t = (vertex_h + dist[e1, e2] / aperture - b[m1, m2]) / dx0 - row_off
            imin = <long>floor(t) + 1
            if imin < 0:
                imin = 0
            if imin <= imax and G[imin, m1, m2] > best:
                best = G[imin, m1, m2]
    res[0] = best


def cone_max(values, base, double dx0, double dl, double row_off, double lat_off,
             qbase, double qlat_off, lift, double aperture, long imax, int lat_dims):
    cdef const double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t nrows = v.shape[0], M1 = v.shape[1], M2 = v.shape[2]
    if imax > nrows - 1:
        imax = nrows - 1
    out_np = np.full((M1, M2), -np.inf)
    if imax < 0:
        return out_np
    cdef double[:, ::1] out = out_np
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[:, ::1] qb = np.ascontiguousarray(qbase, dtype=np.float64)
    cdef const double[:, ::1] lf = np.ascontiguousarray(np.broadcast_to(lift, (M1, M2)), dtype=np.float64)
    cdef double[:, :, ::1] G = _suffix_max(v, imax)
    cdef double[:, ::1] dist = _distances(dl, lat_off - qlat_off, M1, M2, lat_dims)
    cdef long j1, j2
    with nogil:
        for j1 in range(M1):
            for j2 in range(M2):
                _cone_max_into(G, b, dist, dx0, row_off, qb[j1, j2] + lf[j1, j2],
                               j1, j2, aperture, imax, &out[j1, j2])
    return out_np


def cone_sum(values, base, double dx0, double dl, double row_off, double lat_off,
             qbase, double qlat_off, double aperture, long imax, int lat_dims):
    cdef const double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t nrows = v.shape[0], M1 = v.shape[1], M2 = v.shape[2]
    if imax > nrows - 1:
        imax = nrows - 1
    out_np = np.zeros((M1, M2))
    if imax < 0:
        return out_np
    cdef double[:, ::1] out = out_np
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[:, ::1] qb = np.ascontiguousarray(qbase, dtype=np.float64)
    suffix_np = np.zeros((imax + 2, M1, M2))
    cdef double[:, :, ::1] suf = suffix_np
    cdef long i, a, c, j1, j2, d1, d2, k, d2lim, m1, m2, imin, ti
    for a in range(M1):
        for c in range(M2):
            for i in range(imax, -1, -1):
                suf[i, a, c] = suf[i + 1, a, c] + v[i, a, c]
    cdef double top = np.max(base) + (imax + row_off) * dx0 - np.min(qbase)
    if top <= 0:
        return out_np
    # widen by the tie tolerance so surface points on the top row keep their half weight
    cdef double rmax = aperture * (top + 2 * TIE_EPS * dx0), shift = lat_off - qlat_off
    cdef double rho1, rho, t, acc
    k = <long>ceil(rmax / dl) + 2
    d2lim = k if lat_dims == 2 else 0
    with nogil:
        for j1 in range(M1):
            for j2 in range(M2):
                acc = 0.0
                for d1 in range(-k, k + 1):
                    rho1 = (d1 + shift) * dl
                    if fabs(rho1) >= rmax:
                        continue
                    m1 = _mod(j1 + d1, M1)
                    for d2 in range(-d2lim, d2lim + 1):
                        if lat_dims == 2:
                            rho = (d2 + shift) * dl
                            rho = sqrt(rho1 * rho1 + rho * rho)
                        else:
                            rho = fabs(rho1)
                        if rho >= rmax:
                            continue
                        m2 = _mod(j2 + d2, M2)
                        t = (qb[j1, j2] + rho / aperture - b[m1, m2]) / dx0 - row_off
                        ti = <long>floor(t + 0.5)
                        if fabs(t - ti) < TIE_EPS:
                            # lattice point on the cone surface: half weight
                            imin = ti + 1
                            if 0 <= ti <= imax:
                                acc = acc + 0.5 * v[ti, m1, m2]
                        else:
                            imin = <long>floor(t) + 1
                        if imin < 0:
                            imin = 0
                        if imin <= imax:
                            acc = acc + suf[imin, m1, m2]
                out[j1, j2] = acc
    return out_np


def stopping_time(values, base, double dx0, double dl, double row_off, double lat_off,
                  qbase, double qlat_off, double aperture, double nu, long imax, int lat_dims):
    cdef const double[:, :, ::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t nrows = v.shape[0], M1 = v.shape[1], M2 = v.shape[2]
    if imax > nrows - 1:
        imax = nrows - 1
    out_np = np.zeros((M1, M2))
    if imax < 0:
        return out_np
    cdef double[:, ::1] out = out_np
    cdef const double[:, ::1] b = np.ascontiguousarray(base, dtype=np.float64)
    cdef const double[:, ::1] qb = np.ascontiguousarray(qbase, dtype=np.float64)
    cdef double[:, :, ::1] G = _suffix_max(v, imax)
    cdef double[:, ::1] dist = _distances(dl, lat_off - qlat_off, M1, M2, lat_dims)
    cdef double span = np.max(base) - np.min(qbase)
    cdef long kmax = nrows + <long>ceil((span if span > 0 else 0.0) / dx0) + 1
    cdef long j1, j2, lo, hi, mid
    cdef double cm
    with nogil:
        for j1 in range(M1):
            for j2 in range(M2):
                lo = -1
                hi = kmax
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    _cone_max_into(G, b, dist, dx0, row_off, qb[j1, j2] + mid * dx0,
                                   j1, j2, aperture, imax, &cm)
                    if cm < nu:
                        hi = mid
                    else:
                        lo = mid
                out[j1, j2] = hi * dx0
    return out_np
