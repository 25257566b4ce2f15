"""Pair measures mu(x, e) on (giant-cluster site, step) and their kernel/density form.

The periodized reference law is the uniform measure on giant-cluster sites,
so a density phi has mean 1 over the cluster and mu(x, e) = pi~(x, e) phi(x) / n.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError, ParameterError
from .kernel import TransitionKernel, _start_local, simulate
from .spectral import stationary
from .tilts import as_tilt

MASS_TOL = 1e-12
BALANCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PairMeasure:
    cluster: object
    weights: np.ndarray

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=float)
        cl = self.cluster
        if w.shape != (cl.n, cl.n_dirs):
            raise ParameterError(f"weights shape {w.shape} != {(cl.n, cl.n_dirs)}")
        if (w < 0).any() or not np.all(np.isfinite(w)):
            raise ParameterError("pair measure weights must be finite and >= 0")
        if (w[~cl.open] != 0).any():
            raise ParameterError("pair measure charges a closed edge")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise ParameterError(f"total mass {w.sum()!r} differs from 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def integrate(self, f):
        return float((np.where(self.cluster.open, as_tilt(f).table(self.cluster), 0.0) * self.weights).sum())

    def tv(self, other):
        return 0.5 * float(np.abs(self.weights - other.weights).sum())

    def mix(self, other, x):
        w = x * self.weights + (1 - x) * other.weights
        return PairMeasure(self.cluster, w / w.sum())

    def to_csv(self, path):
        a, k = self.cluster.edges
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["site_index", "direction_index", "weight"])
            for ai, ki in zip(a, k):
                out.writerow([int(self.cluster.sites[ai]), int(ki), repr(float(self.weights[ai, ki]))])


def point_mass(cluster, x, k):
    _, a = _start_local(cluster, x)
    w = np.zeros((cluster.n, cluster.n_dirs))
    w[a, k] = 1.0
    return PairMeasure(cluster, w)


def pair_empirical(traj):
    if traj.n == 0:
        raise ParameterError("empirical measure of an empty trajectory")
    cl = traj.cluster
    flat = traj.path[:-1] * cl.n_dirs + traj.steps
    counts = np.bincount(flat, minlength=cl.n * cl.n_dirs).reshape(cl.n, cl.n_dirs)
    return PairMeasure(cl, counts / traj.n)


def marginals(mu):
    """(first, second) marginals: mass leaving x and mass arriving at x."""
    cl = mu.cluster
    first = mu.weights.sum(axis=1)
    a, k = cl.edges
    second = np.bincount(cl.nbr[a, k], weights=mu.weights[a, k], minlength=cl.n)
    return first, second


@dataclass
class M1StarCheck:
    ok: bool
    balance: float
    reason: str = ""

    def __bool__(self):
        return self.ok


def in_m1_star(mu, tol=BALANCE_TOL):
    """Balanced marginals and conditional weights positive exactly on open edges."""
    first, second = marginals(mu)
    bal = float(np.abs(first - second).sum())
    if bal > tol:
        return M1StarCheck(False, bal, f"marginals differ by {bal:.3e} in l1")
    visited = first > 0
    cond = mu.weights[visited] > 0
    bad = np.flatnonzero((cond != mu.cluster.open[visited]).any(axis=1))
    if bad.size:
        site = int(mu.cluster.sites[np.flatnonzero(visited)[bad[0]]])
        return M1StarCheck(False, bal, f"support clause fails at site {site}")
    return M1StarCheck(True, bal)


@dataclass(frozen=True, eq=False)
class KernelDensityPair:
    kernel: TransitionKernel
    density: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.density, dtype=float)
        if phi.shape != (self.kernel.n,) or (phi < 0).any():
            raise ParameterError("density must be non-negative with one value per cluster site")
        if abs(phi.mean() - 1.0) > MASS_TOL:
            raise ParameterError(f"density mean {phi.mean()!r} differs from 1")
        object.__setattr__(self, "density", phi)

    @property
    def residual(self):
        """l1 residual of phi(x) = sum_e pi~(x - e, e) phi(x - e), per site mass."""
        P = self.kernel.matrix()
        return float(np.abs(P.T @ self.density - self.density).sum() / self.kernel.n)

    @property
    def invariant(self):
        return self.residual <= BALANCE_TOL


def stationary_density(kernel, **kw):
    return kernel.n * stationary(kernel, **kw)


def stationary_pair(kernel, **kw):
    dist = stationary(kernel, **kw)
    return PairMeasure(kernel.cluster, kernel.probs * (dist / dist.sum())[:, None])


def pair_from(kdp):
    if not kdp.invariant:
        raise AdmissibilityError(f"density is not invariant (residual {kdp.residual:.3e})")
    w = kdp.kernel.probs * kdp.density[:, None] / kdp.kernel.n
    return PairMeasure(kdp.kernel.cluster, w / w.sum())


def kdp_from(mu):
    check = in_m1_star(mu)
    if not check:
        raise AdmissibilityError(check.reason)
    first = mu.weights.sum(axis=1)
    if (first <= 0).any():
        raise AdmissibilityError("first marginal vanishes on part of the cluster")
    kernel = TransitionKernel(mu.cluster, mu.weights / first[:, None], "from-measure")
    phi = mu.cluster.n * first
    return KernelDensityPair(kernel, phi / phi.mean())


@dataclass
class ErgodicAverage:
    time_average: float
    stationary_expectation: float
    stderr: float

    @property
    def gap(self):
        return abs(self.time_average - self.stationary_expectation)


def ergodic_average(kernel, f, n, stream_seed, start=None, batches=100):
    """Time average of f along one trajectory against its stationary expectation.

    ``stderr`` is the batch-means standard error with ``batches`` contiguous
    batches.
    """
    cl = kernel.cluster
    if start is None:
        start = cl.sites[max(cl.origin, 0)]
    ftab = as_tilt(f).table(cl)
    traj = simulate(kernel, start, n, stream_seed)
    incr = ftab[traj.path[:-1], traj.steps]
    exact = float((stationary(kernel)[:, None] * np.where(cl.open, kernel.probs * ftab, 0.0)).sum())
    b = max(2, min(batches, n))
    means = np.array([chunk.mean() for chunk in np.array_split(incr, b)])
    return ErgodicAverage(float(incr.mean()), exact, float(means.std(ddof=1) / np.sqrt(b)))
