# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: row-wise layer norm and masked softmax, weighted
row gathers, Dijkstra over CSR adjacency and nearest-centroid assignment.

Every function here has a numpy twin in ``_pykernels`` with the same
signature; the two are checked against each other in the test suite.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, INFINITY

cnp.import_array()


def layer_norm_fwd(const double[:, ::1] x, const double[::1] gain,
                   const double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j
    cdef double mu, var, r, d
    out_arr = np.empty((n, m), dtype=np.float64)
    xhat_arr = np.empty((n, m), dtype=np.float64)
    rstd_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[:, ::1] xhat = xhat_arr
    cdef double[::1] rstd = rstd_arr
    with nogil:
        for i in range(n):
            mu = 0.0
            for j in range(m):
                mu += x[i, j]
            mu /= m
            var = 0.0
            for j in range(m):
                d = x[i, j] - mu
                var += d * d
            var /= m
            r = 1.0 / sqrt(var + eps)
            rstd[i] = r
            for j in range(m):
                d = (x[i, j] - mu) * r
                xhat[i, j] = d
                out[i, j] = d * gain[j] + bias[j]
    return out_arr, xhat_arr, rstd_arr


def layer_norm_bwd(const double[:, ::1] gy, const double[:, ::1] xhat,
                   const double[::1] rstd, const double[::1] gain):
    cdef Py_ssize_t n = gy.shape[0], m = gy.shape[1], i, j
    cdef double s1, s2, g
    gx_arr = np.empty((n, m), dtype=np.float64)
    ggain_arr = np.zeros(m, dtype=np.float64)
    gbias_arr = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    cdef double[::1] ggain = ggain_arr
    cdef double[::1] gbias = gbias_arr
    with nogil:
        for i in range(n):
            s1 = 0.0
            s2 = 0.0
            for j in range(m):
                g = gy[i, j] * gain[j]
                s1 += g
                s2 += g * xhat[i, j]
                ggain[j] += gy[i, j] * xhat[i, j]
                gbias[j] += gy[i, j]
            s1 /= m
            s2 /= m
            for j in range(m):
                gx[i, j] = rstd[i] * (gy[i, j] * gain[j] - s1 - xhat[i, j] * s2)
    return gx_arr, ggain_arr, gbias_arr


def softmax_fwd(const double[:, ::1] x, const unsigned char[:, ::1] mask):
    """Row softmax; ``mask`` nonzero marks entries that take part."""
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1], i, j, live
    cdef double mx, s
    cdef int has_mask = mask.shape[0] > 0
    cdef Py_ssize_t bad = -1
    out_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(n):
            mx = -INFINITY
            live = 0
            for j in range(m):
                if not has_mask or mask[i, j]:
                    live += 1
                    # NaN wins so it propagates like numpy's max
                    if x[i, j] > mx or x[i, j] != x[i, j]:
                        mx = x[i, j]
                        if mx != mx:
                            break
            if live == 0:
                bad = i
                break
            s = 0.0
            for j in range(m):
                if not has_mask or mask[i, j]:
                    out[i, j] = exp(x[i, j] - mx)
                    s += out[i, j]
            for j in range(m):
                out[i, j] /= s
    if bad >= 0:
        raise ValueError(f"softmax row {bad} has no unmasked entry")
    return out_arr


def softmax_bwd(const double[:, ::1] gy, const double[:, ::1] p):
    cdef Py_ssize_t n = gy.shape[0], m = gy.shape[1], i, j
    cdef double s
    gx_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] gx = gx_arr
    with nogil:
        for i in range(n):
            s = 0.0
            for j in range(m):
                s += gy[i, j] * p[i, j]
            for j in range(m):
                gx[i, j] = p[i, j] * (gy[i, j] - s)
    return gx_arr


def gather_weighted_fwd(const double[:, ::1] pool, const long[:, ::1] index,
                        const double[:, ::1] weight):
    cdef Py_ssize_t r = index.shape[0], k = index.shape[1], m = pool.shape[1]
    cdef Py_ssize_t i, j, c, src
    cdef double w
    out_arr = np.zeros((r, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    with nogil:
        for i in range(r):
            for j in range(k):
                w = weight[i, j]
                if w == 0.0:
                    continue
                src = index[i, j]
                for c in range(m):
                    out[i, c] += w * pool[src, c]
    return out_arr


def gather_weighted_bwd(const double[:, ::1] gy, const long[:, ::1] index,
                        const double[:, ::1] weight, Py_ssize_t pool_rows):
    cdef Py_ssize_t r = index.shape[0], k = index.shape[1], m = gy.shape[1]
    cdef Py_ssize_t i, j, c, dst
    cdef double w
    gp_arr = np.zeros((pool_rows, m), dtype=np.float64)
    cdef double[:, ::1] gp = gp_arr
    with nogil:
        for i in range(r):
            for j in range(k):
                w = weight[i, j]
                if w == 0.0:
                    continue
                dst = index[i, j]
                for c in range(m):
                    gp[dst, c] += w * gy[i, c]
    return gp_arr


def dijkstra_csr(const long[::1] indptr, const long[::1] indices,
                 const double[::1] lengths, Py_ssize_t source):
    """Single-source distances over a CSR graph (binary heap, lazy deletion)."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full(n, np.inf, dtype=np.float64)
    cdef double[::1] dist = dist_arr
    cdef cnp.uint8_t[::1] done = np.zeros(n, dtype=np.uint8)
    cdef Py_ssize_t cap = indices.shape[0] + 1
    cdef double[::1] hkey = np.empty(cap, dtype=np.float64)
    cdef long[::1] hnode = np.empty(cap, dtype=np.int64)
    cdef Py_ssize_t size = 0, pos, parent, child, u, v, e
    cdef double kd, nd, tk
    cdef long tn
    dist[source] = 0.0
    hkey[0] = 0.0
    hnode[0] = source
    size = 1
    with nogil:
        while size > 0:
            kd = hkey[0]
            u = hnode[0]
            size -= 1
            if size > 0:
                # sift the last element down from the root
                tk = hkey[size]
                tn = hnode[size]
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= size:
                        break
                    if child + 1 < size and (hkey[child + 1] < hkey[child] or
                            (hkey[child + 1] == hkey[child] and hnode[child + 1] < hnode[child])):
                        child += 1
                    if hkey[child] < tk or (hkey[child] == tk and hnode[child] < tn):
                        hkey[pos] = hkey[child]
                        hnode[pos] = hnode[child]
                        pos = child
                    else:
                        break
                hkey[pos] = tk
                hnode[pos] = tn
            if done[u]:
                continue
            done[u] = 1
            for e in range(indptr[u], indptr[u + 1]):
                v = indices[e]
                nd = kd + lengths[e]
                if nd < dist[v]:
                    dist[v] = nd
                    if size >= cap:
                        continue
                    pos = size
                    size += 1
                    while pos > 0:
                        parent = (pos - 1) // 2
                        if hkey[parent] > nd or (hkey[parent] == nd and hnode[parent] > v):
                            hkey[pos] = hkey[parent]
                            hnode[pos] = hnode[parent]
                            pos = parent
                        else:
                            break
                    hkey[pos] = nd
                    hnode[pos] = v
    return dist_arr


def nearest_centroid(const double[:, ::1] points, const double[:, ::1] centroids):
    """Index of (and squared distance to) the nearest centroid; ties to the lower index."""
    cdef Py_ssize_t n = points.shape[0], k = centroids.shape[0], m = points.shape[1]
    cdef Py_ssize_t i, j, c, best
    cdef double d, t, bd
    lab_arr = np.empty(n, dtype=np.int64)
    dist_arr = np.empty(n, dtype=np.float64)
    cdef long[::1] lab = lab_arr
    cdef double[::1] dd = dist_arr
    with nogil:
        for i in range(n):
            best = 0
            bd = INFINITY
            for j in range(k):
                d = 0.0
                for c in range(m):
                    t = points[i, c] - centroids[j, c]
                    d += t * t
                if d < bd:
                    bd = d
                    best = j
            lab[i] = best
            dd[i] = bd
    return lab_arr, dist_arr
