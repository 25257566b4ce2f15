"""Compiled inner loops for trajectory sampling and breadth-first search."""

import numpy as np
from numba import njit


@njit(cache=True)
def walk(cum, nbr, start, u, steps, path):
    x = start
    path[0] = x
    kmax = cum.shape[1] - 1
    for t in range(u.size):
        row = cum[x]
        k = 0
        while k < kmax and u[t] >= row[k]:
            k += 1
        steps[t] = k
        x = nbr[x, k]
        path[t + 1] = x
    return x


@njit(cache=True)
def tilt_sums(cum, nbr, ftab, start, u):
    """Sum of ftab along one trajectory per row of u."""
    out = np.empty(u.shape[0])
    kmax = cum.shape[1] - 1
    for s in range(u.shape[0]):
        x = start
        acc = 0.0
        for t in range(u.shape[1]):
            row = cum[x]
            k = 0
            while k < kmax and u[s, t] >= row[k]:
                k += 1
            acc += ftab[x, k]
            x = nbr[x, k]
        out[s] = acc
    return out


@njit(cache=True)
def bfs_pairs(nbr, src, dst, dist, queue):
    """Graph distance from src[i] to dst[i] for each i, -1 if unreachable.

    ``nbr[x, k]`` is the neighbour of x in direction k or -1; ``dist`` must
    be all -1 on entry and is restored before returning. Each search stops
    as soon as its target is dequeued.
    """
    out = np.full(src.size, -1, dtype=np.int64)
    for i in range(src.size):
        s, t = src[i], dst[i]
        dist[s] = 0
        queue[0] = s
        head, tail = 0, 1
        while head < tail:
            x = queue[head]
            head += 1
            if x == t:
                out[i] = dist[x]
                break
            for k in range(nbr.shape[1]):
                y = nbr[x, k]
                if y >= 0 and dist[y] < 0:
                    dist[y] = dist[x] + 1
                    queue[tail] = y
                    tail += 1
        for j in range(tail):
            dist[queue[j]] = -1
    return out


def cumulative(probs):
    """Row-wise cumulative probabilities, saturated from the last open entry on.

    Saturation guarantees a uniform in [0, 1) never selects a zero-probability
    direction because of rounding in the final partial sum.
    """
    cum = np.cumsum(probs, axis=1)
    last = probs.shape[1] - 1 - np.argmax(probs[:, ::-1] > 0, axis=1)
    cols = np.arange(probs.shape[1])
    cum[cols[None, :] >= last[:, None]] = 2.0
    return np.ascontiguousarray(cum)
