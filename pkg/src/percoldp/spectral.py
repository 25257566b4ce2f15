"""Exact finite-volume oracles built on the tilted transfer operator

    M_f(x, x+e) = pi(x, e) * exp(f(tau_x omega, e))

on the giant cluster. ``log_perron`` is the limiting quenched log-MGF of the
periodized system; ``finite_n_mgf`` is its prelimit from a fixed start.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.sparse import csgraph

from . import _jit
from .errors import ConvergenceError, NumericError, ParameterError, StructureError
from .kernel import _start_local
from .streams import stream
from .tilts import as_tilt

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TiltedOperator:
    kernel: object
    tilt: object
    ftab: np.ndarray
    matrix: sp.csr_matrix

    @property
    def cluster(self):
        return self.kernel.cluster

    def row_sums(self):
        return np.asarray(self.matrix.sum(axis=1)).ravel()


def build_tilted(kernel, f):
    ftab = as_tilt(f).table(kernel.cluster)
    M = kernel.matrix(np.exp(ftab))
    M.sum_duplicates()
    return TiltedOperator(kernel, as_tilt(f), ftab, M)


@dataclass
class PerronResult:
    log_rho: float
    vector: np.ndarray
    iterations: int
    residual: float
    lower: float
    upper: float
    trace: list = field(default_factory=list, repr=False)

    @property
    def rho(self):
        return float(np.exp(self.log_rho))

    def trace_to_csv(self, path):
        """(iteration, relative Collatz-Wielandt gap) rows; needs ``trace=True``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "residual"])
            w.writerows((i, repr(float(r))) for i, r in self.trace)


def _check_irreducible(M):
    n_comp, _ = csgraph.connected_components(M, directed=True, connection="strong")
    if n_comp != 1:
        raise StructureError(f"operator is reducible ({n_comp} strong components)")


def _collatz(M, v):
    r = (M @ v) / v
    return r.min(), r.max()


def log_perron(op, tol=1e-12, max_iter=1_000_000, method="power", trace=False):
    """Perron root of the tilted operator and its positive right eigenvector.

    ``power`` iterates the shifted operator M + sI (s = half the mean row
    sum), which has the same Perron vector and no peripheral spectrum, so
    period-2 clusters converge. ``noda`` is Noda's inverse iteration with
    shifts taken from the Collatz-Wielandt upper bound; it needs a sparse LU
    per step and is meant for large boxes. Both stop once the
    Collatz-Wielandt bounds agree to ``tol`` relative.
    """
    M = op.matrix.tocsr()
    n = M.shape[0]
    if n == 0:
        raise StructureError("empty operator")
    _check_irreducible(M)
    v = np.ones(n)
    lo, hi = _collatz(M, v)
    hist = []
    it = 0
    if method == "power":
        s = 0.5 * op.row_sums().mean()
        while (hi - lo) > tol * hi:
            if it >= max_iter:
                raise ConvergenceError(
                    f"power iteration did not converge in {max_iter} steps", residual=(hi - lo) / hi, iterations=it
                )
            v = M @ v + s * v
            v /= v.max()
            it += 1
            if it % 8 == 0 or trace:
                lo, hi = _collatz(M, v)
                if trace:
                    hist.append((it, (hi - lo) / hi))
    elif method == "noda":
        ident = sp.identity(n, format="csc")
        Mc = M.tocsc()
        while (hi - lo) > tol * hi:
            if it >= max_iter:
                raise ConvergenceError("Noda iteration did not converge", residual=(hi - lo) / hi, iterations=it)
            sigma = hi
            lu = sla.splu((sigma * ident - Mc).tocsc(), permc_spec="COLAMD")
            w = lu.solve(v)
            if not np.all(np.isfinite(w)) or (w <= 0).any():
                break  # shift numerically at the root; the current v is converged
            v = w / w.max()
            it += 1
            lo, hi = _collatz(M, v)
            if trace:
                hist.append((it, (hi - lo) / hi))
    else:
        raise ParameterError(f"unknown method {method!r}")
    lo, hi = _collatz(M, v)
    log.debug("perron/%s: %d iterations, relative gap %.2e", method, it, (hi - lo) / hi)
    rho = 0.5 * (lo + hi)
    resid = float(np.abs(M @ v - rho * v).max() / np.abs(v).max())
    return PerronResult(float(np.log(rho)), v, it, resid, float(lo), float(hi), hist)


def perron_potential(op, **kw):
    """g = log v for the Perron right eigenvector v, normalized to g(origin) = 0."""
    res = log_perron(op, **kw)
    g = np.log(res.vector)
    o = op.cluster.origin
    if o >= 0:
        g = g - g[o]
    return g, res


def finite_n_mgf(op, start, n):
    """(1/n) log (M^n 1)(start), by log-stabilized repeated products."""
    return finite_n_mgf_curve(op, start, [n])[0]


def finite_n_mgf_curve(op, start, ns):
    ns = [int(m) for m in ns]
    if not ns or min(ns) < 1:
        raise ParameterError("n must be >= 1")
    _, a = _start_local(op.cluster, start)
    M = op.matrix
    v = np.ones(M.shape[0])
    logscale = 0.0
    wanted = set(ns)
    found = {}
    for step in range(1, max(ns) + 1):
        v = M @ v
        s = v.max()
        if not (np.isfinite(s) and s > 0):
            raise NumericError(f"overflow or underflow at step {step}")
        v /= s
        logscale += np.log(s)
        if step in wanted:
            found[step] = (logscale + np.log(v[a])) / step
    return np.array([found[m] for m in ns])


def stationary(kernel, tol=1e-10, method="direct", max_iter=10_000_000):
    """Invariant site distribution of the kernel (sums to 1).

    ``direct`` solves the balance equations with one row replaced by the
    normalization; ``power`` iterates the lazy chain (I + P) / 2.
    """
    P = kernel.matrix()
    n = P.shape[0]
    if method == "direct":
        A = (P.T - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[n - 1] = 1.0
        pi = sla.spsolve(A.tocsc(), b)
    elif method == "power":
        pi = np.full(n, 1.0 / n)
        PT = P.T.tocsr()
        for it in range(max_iter):
            nxt = 0.5 * (pi + PT @ pi)
            nxt /= nxt.sum()
            done = np.abs(nxt - pi).sum() <= tol * 1e-2
            pi = nxt
            if done:
                break
        else:
            raise ConvergenceError("stationary power iteration stalled", iterations=max_iter)
    else:
        raise ParameterError(f"unknown method {method!r}")
    resid = balance_residual(P, pi)
    if not np.all(np.isfinite(pi)) or resid > tol or (pi < -tol).any():
        raise ConvergenceError(f"stationary solve residual {resid:.3e} exceeds {tol:.1e}", residual=resid)
    return np.clip(pi, 0.0, None)


def balance_residual(P, pi):
    return float(np.abs(P.T @ pi - pi).sum())


@dataclass
class MgfEstimate:
    estimate: float
    stderr: float
    samples: int
    n: int


def mc_mgf(kernel, f, n, samples, master_seed, start=None, budget=10**9, chunk=2048):
    """Monte Carlo (1/n) log E exp(sum of f over n steps), independent trajectories.

    Trajectory i draws its uniforms from ``stream(master_seed, i)``.
    """
    if n < 1 or samples < 2:
        raise ParameterError("need n >= 1 and samples >= 2")
    if n * samples > budget:
        raise ParameterError(f"n * samples = {n * samples} exceeds the budget {budget}")
    cl = kernel.cluster
    _, a = _start_local(cl, cl.sites[cl.origin] if start is None else start)
    ftab = np.ascontiguousarray(as_tilt(f).table(cl))
    cum = _jit.cumulative(kernel.probs)
    sums = np.empty(samples)
    for lo in range(0, samples, chunk):
        hi = min(lo + chunk, samples)
        u = np.stack([stream(master_seed, i).random(n) for i in range(lo, hi)])
        sums[lo:hi] = _jit.tilt_sums(cum, cl.nbr, ftab, a, u)
    if not np.all(np.isfinite(sums)):
        raise NumericError("non-finite tilt sums; use finite_n_mgf")
    top = sums.max()
    w = np.exp(sums - top)
    mean = w.mean()
    if mean <= 0:
        raise NumericError("all weights underflowed; use finite_n_mgf")
    est = (top + np.log(mean)) / n
    se = w.std(ddof=1) / np.sqrt(samples) / mean / n
    return MgfEstimate(float(est), float(se), samples, n)
