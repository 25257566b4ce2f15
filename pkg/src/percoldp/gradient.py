"""Gradient fields on the giant cluster, their correctors, and Lambda(f, G).

A GradientField holds a value for every (cluster site, direction) slot. On
open edges the values come from a potential, G(x, e) = g(x + e) - g(x), so
every open cycle, winding cycles included, sums to zero. Slots of closed
edges are never traversed by an open path and never enter Lambda; they
absorb the per-direction mean so that each column averages to zero over the
cluster without disturbing the gradient on open edges.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy.special import logsumexp

from .errors import ConvergenceError, ParameterError
from .kernel import simulate, srw_kernel
from .spectral import build_tilted, perron_potential
from .streams import derived_seed
from .tilts import LinearTilt, as_tilt

MEAN_TOL = 1e-10
CYCLE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class GradientField:
    cluster: object
    values: np.ndarray
    provenance: str = "loaded"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.cluster.n, self.cluster.n_dirs):
            raise ParameterError(f"field shape {v.shape} != {(self.cluster.n, self.cluster.n_dirs)}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self):
        return float(np.abs(self.values).max(initial=0.0))

    def perturbed(self, a, k, delta, antisymmetric=False):
        v = self.values.copy()
        v[a, k] += delta
        if antisymmetric:
            v[self.cluster.nbr[a, k], k ^ 1] -= delta
        return GradientField(self.cluster, v, "perturbed")


def zero_field(cluster):
    return GradientField(cluster, np.zeros((cluster.n, cluster.n_dirs)), "zero")


def from_potential(cluster, g):
    g = np.asarray(g, dtype=float)
    if g.shape != (cluster.n,):
        raise ParameterError(f"potential must have shape ({cluster.n},)")
    op = cluster.open
    vals = np.where(op, g[np.maximum(cluster.nbr, 0)] - g[:, None], 0.0)
    col = vals.sum(axis=0)
    n_closed = (~op).sum(axis=0)
    fill = np.divide(-col, n_closed, out=np.zeros_like(col), where=n_closed > 0)
    vals = np.where(op, vals, fill[None, :])
    return GradientField(cluster, vals, "from-potential")


class _Tree:
    """BFS spanning tree of the open cluster graph with tree-path sums."""

    def __init__(self, cluster, root):
        n = cluster.n
        self.parent = np.full(n, -1, dtype=np.int64)
        self.pdir = np.full(n, -1, dtype=np.int64)
        self.depth = np.zeros(n, dtype=np.int64)
        self.order = np.empty(n, dtype=np.int64)
        seen = np.zeros(n, dtype=bool)
        seen[root] = True
        q = deque([root])
        nbr = cluster.nbr
        i = 0
        while q:
            x = q.popleft()
            self.order[i] = x
            i += 1
            for k in range(nbr.shape[1]):
                y = nbr[x, k]
                if y >= 0 and not seen[y]:
                    seen[y] = True
                    self.parent[y] = x
                    self.pdir[y] = k
                    self.depth[y] = self.depth[x] + 1
                    q.append(y)
        if i != n:
            raise ParameterError("cluster graph is not connected")
        self.root = root

    def accumulate(self, values):
        h = np.zeros(self.order.size)
        for y in self.order[1:]:
            h[y] = h[self.parent[y]] + values[self.parent[y], self.pdir[y]]
        return h

    def path_to_root(self, x):
        out = [x]
        while self.parent[out[-1]] >= 0:
            out.append(self.parent[out[-1]])
        return out

    def cycle(self, a, b):
        """Vertices of the fundamental cycle closing tree paths to a and b with a -> b."""
        pa, pb = self.path_to_root(a), self.path_to_root(b)
        common = set(pa) & set(pb)
        pa = pa[: next(i for i, v in enumerate(pa) if v in common) + 1]
        pb = pb[: next(i for i, v in enumerate(pb) if v in common) + 1]
        return pa[::-1] + pb


def _tree_for(cluster):
    root = cluster.origin if cluster.origin >= 0 else 0
    return _Tree(cluster, root)


@dataclass
class FieldDiagnostics:
    antisymmetry: float
    mean: np.ndarray
    cycle_residual: float
    M: float
    violating_cycle: list = None
    mean_tol: float = MEAN_TOL
    cycle_tol: float = CYCLE_TOL

    @property
    def closed_loop_ok(self):
        return self.cycle_residual <= self.cycle_tol

    @property
    def mean_ok(self):
        return float(np.abs(self.mean).max(initial=0.0)) <= self.mean_tol

    @property
    def passed(self):
        return self.closed_loop_ok and self.mean_ok and np.isfinite(self.M)

    def failures(self):
        out = []
        if not self.closed_loop_ok:
            out.append(f"closed loop: residual {self.cycle_residual:.3e} on cycle {self.violating_cycle}")
        if not self.mean_ok:
            out.append(f"zero mean: max column mean {np.abs(self.mean).max():.3e}")
        return out


def validate(G, tree=None):
    """Closed-loop, zero-mean and boundedness diagnostics for a field.

    Every open directed edge a -> b is checked through h(a) + G(a, e) - h(b),
    with h the tree-path sum from the root: on the reverse of a tree edge this
    is the two-step loop (antisymmetry), on a non-tree edge it is the sum
    around its fundamental cycle, so together they cover a cycle basis.
    """
    cl = G.cluster
    tree = _tree_for(cl) if tree is None else tree
    a, k = cl.edges
    b = cl.nbr[a, k]
    v = G.values
    anti = float(np.abs(v[a, k] + v[b, k ^ 1]).max(initial=0.0))
    h = tree.accumulate(v)
    res = np.abs(h[a] + v[a, k] - h[b])
    worst = int(np.argmax(res)) if res.size else 0
    cyc = float(res[worst]) if res.size else 0.0
    named = None
    if cyc > CYCLE_TOL:
        named = [int(s) for s in cl.sites[tree.cycle(int(a[worst]), int(b[worst]))]]
    return FieldDiagnostics(anti, v.mean(axis=0), cyc, G.M, named)


@dataclass
class CorrectorPotential:
    psi: np.ndarray
    field: GradientField
    spot_residual: float

    def at(self, site):
        return float(self.psi[self.field.cluster.local[site]])


def corrector(G, rng=None, spot_checks=100):
    """Psi(x) = sum of G along an open path from the origin to x."""
    cl = G.cluster
    if cl.origin < 0:
        raise ParameterError("origin is not in the giant cluster")
    tree = _Tree(cl, cl.origin)
    psi = tree.accumulate(G.values)
    a, k = cl.edges
    rng = np.random.default_rng(0) if rng is None else rng
    pick = rng.choice(a.size, size=min(spot_checks, a.size), replace=False) if a.size else []
    b = cl.nbr[a[pick], k[pick]]
    spot = float(np.abs(psi[a[pick]] + G.values[a[pick], k[pick]] - psi[b]).max(initial=0.0))
    return CorrectorPotential(psi, G, spot)


def lambda_value(f, G, kernel):
    """max over cluster sites of log sum_e pi(x, e) exp(f(x, e) + G(x, e))."""
    return float(_site_values(kernel, as_tilt(f).table(kernel.cluster) + G.values).max())


def _site_values(kernel, expo):
    cl = kernel.cluster
    with np.errstate(divide="ignore"):
        s = np.where(cl.open, np.log(kernel.probs) + expo, -np.inf)
    return logsumexp(s, axis=1)


@dataclass
class LambdaMin:
    value: float
    lower: float
    g: np.ndarray
    field: GradientField
    stages: list = field(default_factory=list)

    @property
    def spread(self):
        return self.value - self.lower


def minimize_lambda(f, kernel, tol=1e-11, t0=1.0, shrink=0.1, t_switch=1e-4, max_newton=50, max_polish=50):
    """min over potentials g of max_x F_x(g), F_x(g) = log sum_e pi e^{f + g(x+e) - g(x)}.

    The max is replaced by t * logsumexp(F / t) and minimized by damped
    Newton steps, warm-started from g = 0 and re-solved for decreasing t.
    Once t reaches ``t_switch`` the iterate is polished by Newton steps on
    the flat system F_x(g) = lam, accepted only when they shrink the spread.
    By the Collatz-Wielandt inequality min_x F_x <= optimum <= max_x F_x for
    every g, so the spread max F - min F certifies the returned value; the
    routine stops once it falls below ``tol``.
    """
    cl = kernel.cluster
    n = cl.n
    logw = np.where(cl.open, np.log(np.where(cl.open, kernel.probs, 1.0)) + as_tilt(f).table(cl), -np.inf)
    a, k = cl.edges
    b = cl.nbr[a, k]
    ref = cl.origin if cl.origin >= 0 else 0
    free = np.flatnonzero(np.arange(n) != ref)

    def evaluate(g):
        s = logw + np.where(cl.open, g[np.maximum(cl.nbr, 0)], 0.0)
        lse = logsumexp(s, axis=1)
        return lse - g, np.exp(s - lse[:, None])

    def smoothed(F, t):
        return t * logsumexp(F / t)

    def jacobian(q):
        return sp.csr_matrix((q[a, k], (a, b)), shape=(n, n)) - sp.identity(n, format="csr")

    g = np.zeros(n)
    stages = []
    t = t0
    F, q = evaluate(g)
    while F.max() - F.min() > tol and t >= t_switch:
        for it in range(1, max_newton + 1):
            w = np.exp((F - F.max()) / t)
            w /= w.sum()
            qv = q[a, k]
            Q = sp.csr_matrix((qv, (a, b)), shape=(n, n)).toarray()
            J = Q - np.eye(n)
            grad = J.T @ w
            d1 = np.bincount(b, weights=w[a] * qv, minlength=n)
            H = np.diag(d1) - Q.T @ (w[:, None] * Q) + (J.T @ (w[:, None] * J) - np.outer(grad, grad)) / t
            Hf, gf = H[np.ix_(free, free)], grad[free]
            try:
                step = -np.linalg.solve(Hf, gf)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(Hf, gf, rcond=None)[0]
            dec = -gf @ step
            if not np.isfinite(dec) or dec <= (1e-3 * t) ** 2:
                break
            phi0 = smoothed(F, t)
            s = 1.0
            while s > 1e-10:
                gn = g.copy()
                gn[free] += s * step
                Fn, qn = evaluate(gn)
                if smoothed(Fn, t) <= phi0 - 0.25 * s * dec:
                    break
                s *= 0.5
            else:
                break
            g, F, q = gn, Fn, qn
        stages.append(("smooth", t, float(F.max() - F.min()), it))
        t *= shrink
    for it in range(1, max_polish + 1):
        spread = F.max() - F.min()
        if spread <= tol:
            break
        lam = 0.5 * (F.max() + F.min())
        K = sp.hstack([jacobian(q)[:, free], -np.ones((n, 1))]).tocsc()
        step = sla.spsolve(K, lam - F)
        if not np.all(np.isfinite(step)):
            break
        s = 1.0
        while s > 1e-6:
            gn = g.copy()
            gn[free] += s * step[:-1]
            Fn, qn = evaluate(gn)
            if Fn.max() - Fn.min() < spread:
                break
            s *= 0.5
        else:
            break
        g, F, q = gn, Fn, qn
        stages.append(("flat", None, float(F.max() - F.min()), it))
    if F.max() - F.min() > tol:
        raise ConvergenceError(
            f"descent stagnated: spread {F.max() - F.min():.3e} > tol {tol:.1e}", residual=float(F.max() - F.min())
        )
    g = g - g[ref]
    return LambdaMin(float(F.max()), float(F.min()), g, from_potential(cl, g), stages)


@dataclass
class ScanRow:
    L: int
    seed: int
    n: int
    max_psi_over_n: float
    avg_fraction: dict
    fitted_c: dict


@dataclass
class ScanReport:
    rows: list
    eps: tuple

    def medians(self, n_of_L=lambda L: L // 2):
        out = {}
        for L in sorted({r.L for r in self.rows}):
            sel = [r for r in self.rows if r.L == L and r.n == n_of_L(L)]
            out[L] = {
                "max_psi_over_n": float(np.median([r.max_psi_over_n for r in sel])),
                **{f"avg_fraction_{e}": float(np.median([r.avg_fraction[e] for r in sel])) for e in self.eps},
                **{f"fitted_c_{e}": float(np.median([r.fitted_c[e] for r in sel])) for e in self.eps},
            }
        return out

    def to_csv(self, path):
        e_lo, e_hi = sorted(self.eps)[0], sorted(self.eps)[-1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "seed", "n", "max_psi_over_n", "avg_fraction_eps05", "avg_fraction_eps10", "fitted_c_eps"])
            for r in self.rows:
                w.writerow([r.L, r.seed, r.n, repr(r.max_psi_over_n), repr(r.avg_fraction[e_lo]), repr(r.avg_fraction[e_hi]), repr(r.fitted_c[e_hi])])


def perron_field(cluster, f=LinearTilt((0.5, 0.0)), method="noda"):
    """GradientField of g = log v, v the Perron vector of the SRW operator tilted by f."""
    g, _ = perron_potential(build_tilted(srw_kernel(cluster), f), method=method)
    return from_potential(cluster, g)


def scan_cluster(cluster, G, seed=0, eps=(0.05, 0.1), n_paths=200):
    """Sublinearity diagnostics of the corrector of G on one torus."""
    lat = cluster.lattice
    L, d = lat.L, lat.d
    psi = np.abs(corrector(G).psi)
    r = lat.torus_linf(cluster.sites, 0)
    kern = srw_kernel(cluster)
    rows = []
    for n in (L // 4, L // 2):
        inside = r <= n
        frac = {e: float(np.count_nonzero(psi[inside] > e * n)) / n**d for e in eps}
        worst = 0.0
        for i in range(n_paths):
            tr = simulate(kern, cluster.sites[cluster.origin], n, derived_seed(seed, i))
            worst = max(worst, -float(G.values[tr.path[:-1], tr.steps].sum()))
        fitted = {e: max(0.0, worst - n * e) for e in eps}
        rows.append(ScanRow(L, seed, n, float(psi[inside].max()) / n, frac, fitted))
    return rows


def sublinearity_scan(clusters, field_factory=perron_field, eps=(0.05, 0.1), n_paths=200):
    """Corrector growth across a sequence of tori.

    ``clusters`` is an iterable of (seed, GiantCluster) pairs; the field on
    each comes from ``field_factory(cluster)``.
    """
    rows = []
    for seed, cl in clusters:
        rows.extend(scan_cluster(cl, field_factory(cl), seed, eps, n_paths))
    return ScanReport(rows, tuple(eps))
