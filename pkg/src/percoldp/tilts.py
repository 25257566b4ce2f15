"""Bounded local functions f(environment seen from x, step e).

Every tilt is consumed through :meth:`Tilt.table`, which returns an
``(n, 2d)`` array of values on the giant cluster in local indexing.
Values on closed edges are never read.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .env import translate


class Tilt:
    def table(self, cluster) -> np.ndarray:
        raise NotImplementedError

    def sup_norm(self, cluster) -> float:
        t = self.table(cluster)
        return float(np.abs(t[cluster.open]).max(initial=0.0))

    def __add__(self, other):
        return SumTilt(self, as_tilt(other))


@dataclass(frozen=True)
class LinearTilt(Tilt):
    """f(omega, e) = <theta, e>."""

    theta: tuple

    def table(self, cluster):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (cluster.lattice.d,):
            raise ValueError(f"theta must have {cluster.lattice.d} components")
        row = cluster.steps @ theta
        return np.broadcast_to(row, (cluster.n, cluster.n_dirs)).copy()


@dataclass(frozen=True)
class ConstantTilt(Tilt):
    c: float = 0.0

    def table(self, cluster):
        return np.full((cluster.n, cluster.n_dirs), float(self.c))


ZERO = ConstantTilt(0.0)


@dataclass(frozen=True)
class SumTilt(Tilt):
    a: Tilt
    b: Tilt

    def table(self, cluster):
        return self.a.table(cluster) + self.b.table(cluster)


@dataclass(frozen=True, eq=False)
class TableTilt(Tilt):
    """Explicit values per (torus site, direction); shape (N, 2d)."""

    values: np.ndarray

    def table(self, cluster):
        return np.asarray(self.values, dtype=float)[cluster.sites].copy()


@dataclass(frozen=True, eq=False)
class WindowTilt(Tilt):
    """f evaluated on the bond window of radius r around each site.

    ``fn(window, k)`` receives the bonds of the translated environment
    restricted to the box [-r, r]^d, shape ``(2r+1,)*d + (d,)``, with the
    origin at the box centre, and the direction index ``k``.
    """

    fn: Callable
    radius: int = 1

    def table(self, cluster):
        env = cluster.env
        lat = env.lattice
        r = self.radius
        out = np.empty((cluster.n, cluster.n_dirs))
        for a, x in enumerate(cluster.sites):
            shifted = translate(env, lat.coords(x))
            grid = shifted.bonds.reshape(lat.shape + (lat.d,))
            idx = np.arange(-r, r + 1) % lat.L
            window = grid[np.ix_(*([idx] * lat.d))]
            for k in range(cluster.n_dirs):
                out[a, k] = self.fn(window, k)
        return out


def degree_tilt(weight, theta=None):
    """<theta, e> plus weight * (number of open bonds at the origin) / 2d."""
    def fn(window, k):
        d = window.shape[-1]
        c = (window.shape[0] - 1) // 2
        centre = (c,) * d
        deg = 0
        for i in range(d):
            back = list(centre)
            back[i] -= 1
            deg += int(window[centre + (i,)]) + int(window[tuple(back) + (i,)])
        val = weight * deg / (2 * d)
        if theta is not None:
            axis, sign = k // 2, 1 - 2 * (k % 2)
            val += sign * theta[axis]
        return val

    return WindowTilt(fn, radius=1)


def as_tilt(f) -> Tilt:
    if isinstance(f, Tilt):
        return f
    if np.ndim(f) == 0:
        return ConstantTilt(float(f))
    return LinearTilt(tuple(float(v) for v in f))
