"""Pure numpy/heapq versions of the compiled kernels (same signatures)."""

from __future__ import annotations

import heapq

import numpy as np


def layer_norm_fwd(x, gain, bias, eps):
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd[:, None]
    return xhat * gain + bias, xhat, rstd


def layer_norm_bwd(gy, xhat, rstd, gain):
    g = gy * gain
    s1 = g.mean(axis=1, keepdims=True)
    s2 = (g * xhat).mean(axis=1, keepdims=True)
    gx = rstd[:, None] * (g - s1 - xhat * s2)
    return gx, (gy * xhat).sum(axis=0), gy.sum(axis=0)


def softmax_fwd(x, mask):
    if mask.shape[0] == 0:
        z = x - x.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)
    keep = mask.astype(bool)
    empty = ~keep.any(axis=1)
    if empty.any():
        raise ValueError(f"softmax row {int(np.argmax(empty))} has no unmasked entry")
    z = np.where(keep, x, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(keep, np.exp(z), 0.0)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(gy, p):
    s = (gy * p).sum(axis=1, keepdims=True)
    return p * (gy - s)


def gather_weighted_fwd(pool, index, weight):
    return np.einsum("rk,rkm->rm", weight, pool[index])


def gather_weighted_bwd(gy, index, weight, pool_rows):
    gp = np.zeros((pool_rows, gy.shape[1]))
    contrib = weight[:, :, None] * gy[:, None, :]
    np.add.at(gp, index.reshape(-1), contrib.reshape(-1, gy.shape[1]))
    return gp


def dijkstra_csr(indptr, indices, lengths, source):
    n = len(indptr) - 1
    dist = np.full(n, np.inf)
    done = np.zeros(n, dtype=bool)
    dist[source] = 0.0
    heap = [(0.0, int(source))]
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        for e in range(indptr[u], indptr[u + 1]):
            v = int(indices[e])
            nd = d + lengths[e]
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def nearest_centroid(points, centroids):
    diff = points[:, None, :] - centroids[None, :, :]
    d2 = np.einsum("nkm,nkm->nk", diff, diff)
    lab = np.argmin(d2, axis=1)
    return lab.astype(np.int64), d2[np.arange(len(points)), lab]
