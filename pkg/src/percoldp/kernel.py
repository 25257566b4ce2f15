"""Transition kernels on the giant cluster and trajectory sampling."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _jit
from .errors import AdmissibilityError, ParameterError
from .streams import stream
from .tilts import as_tilt

ROW_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Step distribution per giant-cluster site, shape (n, 2d), local indexing."""

    cluster: object
    probs: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        P = np.ascontiguousarray(self.probs, dtype=float)
        check_admissible(self.cluster, P)
        P.setflags(write=False)
        object.__setattr__(self, "probs", P)

    @property
    def n(self):
        return self.cluster.n

    def matrix(self, weights=None):
        """Sparse (n, n) matrix with entry (x, x+e) = probs[x, e] * weights[x, e]."""
        import scipy.sparse as sp

        a, k = self.cluster.edges
        vals = self.probs[a, k] if weights is None else self.probs[a, k] * weights[a, k]
        n = self.n
        return sp.csr_matrix((vals, (a, self.cluster.nbr[a, k])), shape=(n, n))


def check_admissible(cluster, P):
    if P.shape != (cluster.n, cluster.n_dirs):
        raise AdmissibilityError(f"kernel shape {P.shape} != {(cluster.n, cluster.n_dirs)}")
    if not np.all(np.isfinite(P)) or (P < 0).any():
        raise AdmissibilityError("kernel has negative or non-finite entries")
    open_ = cluster.open
    if (P[~open_] != 0).any():
        raise AdmissibilityError("kernel charges a closed edge")
    if (P[open_] <= 0).any():
        raise AdmissibilityError("kernel vanishes on an open edge")
    err = np.abs(P.sum(axis=1) - 1.0).max(initial=0.0)
    if err > ROW_TOL:
        raise AdmissibilityError(f"kernel rows deviate from 1 by {err:.3e}")


def normalize_weights(cluster, w):
    w = np.where(cluster.open, w, 0.0)
    z = w.sum(axis=1, keepdims=True)
    if (z <= 0).any():
        raise AdmissibilityError("site of degree 0 inside the kernel support")
    return w / z


def srw_kernel(cluster):
    """Agile simple random walk: uniform over the open incident edges."""
    return TransitionKernel(cluster, normalize_weights(cluster, np.ones(cluster.nbr.shape)), "srw")


def beta_kernel(cluster, beta):
    """Walk biased towards +e1 with weight beta on that direction."""
    if not beta > 1:
        raise ParameterError(f"beta must be > 1 (use srw_kernel for beta = 1), got {beta!r}")
    psi = np.ones(cluster.nbr.shape)
    psi[:, 0] = beta
    return TransitionKernel(cluster, normalize_weights(cluster, psi), f"beta={beta:g}")


def random_kernel(cluster, rng, spread=1.0):
    """Admissible kernel with log-normal random weights on open edges."""
    w = np.exp(spread * rng.standard_normal(cluster.nbr.shape))
    return TransitionKernel(cluster, normalize_weights(cluster, w), "random")


def tilt_from_potential(kernel, f, g):
    """Kernel proportional to pi(x,e) exp(f(x,e) + g(x) - g(x+e))."""
    cl = kernel.cluster
    g = np.asarray(g, dtype=float)
    if g.shape != (cl.n,):
        raise ParameterError(f"potential must have shape ({cl.n},)")
    ftab = as_tilt(f).table(cl)
    gn = np.where(cl.open, g[np.maximum(cl.nbr, 0)], 0.0)
    expo = np.where(cl.open, ftab + g[:, None] - gn, -np.inf)
    expo -= expo.max(axis=1, keepdims=True)
    w = kernel.probs * np.exp(expo)
    return TransitionKernel(cl, w / w.sum(axis=1, keepdims=True), f"tilt({kernel.name})")


@dataclass(frozen=True, eq=False)
class Trajectory:
    cluster: object
    start: int
    steps: np.ndarray
    path: np.ndarray

    @property
    def n(self):
        return self.steps.size

    @property
    def displacement(self):
        """Unwrapped displacement X_n - X_0."""
        counts = np.bincount(self.steps, minlength=self.cluster.n_dirs)
        return counts @ self.cluster.steps

    @property
    def winding(self):
        lat = self.cluster.lattice
        return (lat.coords(self.start) + self.displacement) // lat.L

    @property
    def end(self):
        return int(self.cluster.sites[self.path[-1]])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step_index", "direction_index"])
            w.writerows(zip(range(self.n), self.steps.tolist()))


def _start_local(cluster, start):
    lat = cluster.lattice
    x = int(start) if np.ndim(start) == 0 else int(lat.index(start))
    if not 0 <= x < lat.n_sites or cluster.local[x] < 0:
        raise ParameterError(f"start site {start!r} is outside the kernel support")
    return x, int(cluster.local[x])


def simulate(kernel, start, n, stream_seed):
    if n < 0:
        raise ParameterError("n must be >= 0")
    cl = kernel.cluster
    x, a = _start_local(cl, start)
    u = stream(stream_seed).random(n)
    steps = np.empty(n, dtype=np.int8)
    path = np.empty(n + 1, dtype=np.int64)
    _jit.walk(_jit.cumulative(kernel.probs), cl.nbr, a, u, steps, path)
    return Trajectory(cl, x, steps, path)


def mean_velocity(traj):
    if traj.n == 0:
        raise ParameterError("velocity undefined for a trajectory of length 0")
    return traj.displacement / traj.n
