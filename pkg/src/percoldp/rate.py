"""Relative-entropy rate functional and the variational value H(f).

H(f) = sup { <f, mu> - I(mu) : mu balanced, supported exactly on open edges }
is solved on the measure side by an infeasible-start equality-constrained
Newton method over the weights of the open directed edges. The objective

    <f, mu> - sum mu(x,e) log( mu(x,e) / (mu_1(x) pi(x,e)) )

is concave and smooth on the interior, and its optimum is interior, so the
iteration converges quadratically once close.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla
from scipy import optimize

from .errors import ConvergenceError, NumericError
from .kernel import random_kernel, srw_kernel
from .pair import BALANCE_TOL, PairMeasure, in_m1_star, stationary_pair
from .spectral import build_tilted, log_perron
from .tilts import LinearTilt, as_tilt


@dataclass
class RateValue:
    value: float
    witness: object = None

    @property
    def finite(self):
        return bool(np.isfinite(self.value))

    def __float__(self):
        return float(self.value)


def entropy_I(mu, base=None, tol=BALANCE_TOL):
    """I(mu) relative to the base kernel (default: simple random walk); +inf off M1*."""
    if not in_m1_star(mu, tol):
        return RateValue(np.inf, mu)
    base = srw_kernel(mu.cluster) if base is None else base
    w = mu.weights
    first = w.sum(axis=1, keepdims=True)
    pos = w > 0
    ratio = np.ones_like(w)
    ratio[pos] = w[pos] / (np.broadcast_to(first, w.shape)[pos] * base.probs[pos])
    return RateValue(float(np.sum(w[pos] * np.log(ratio[pos]))), mu)


def xi_contraction(mu):
    """Mean step vector sum_{x,e} e mu(x, e)."""
    return mu.weights.sum(axis=0) @ mu.cluster.steps.astype(float)


@dataclass
class NewtonResult:
    mu: PairMeasure
    objective: float
    iterations: int
    residual: float


def _constraints(cl, a, k, target):
    m = a.size
    dst = cl.nbr[a, k]
    rows = np.concatenate([a, dst])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    cols = np.concatenate([np.arange(m)] * 2)
    keep = rows < cl.n - 1
    blocks = [sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(cl.n - 1, m)), sp.csr_matrix(np.ones((1, m)))]
    rhs = [np.zeros(cl.n - 1), [1.0]]
    if target is not None:
        blocks.append(sp.csr_matrix(cl.steps[k].T.astype(float)))
        rhs.append(np.asarray(target, dtype=float))
    return sp.vstack(blocks).tocsr(), np.concatenate(rhs)


def _newton(cl, c, init, target=None, tol=1e-12, max_iter=200):
    """Minimize sum mu (log mu - c) - sum_x mu_1 log mu_1 subject to balance,
    total mass 1 and optionally a prescribed mean step vector."""
    a, k = cl.edges
    m = a.size
    site = sp.csr_matrix((np.ones(m), (np.arange(m), a)), shape=(m, cl.n))
    A, b = _constraints(cl, a, k, target)
    x = init.copy()
    nu = np.zeros(A.shape[0])

    def residual(x, nu):
        first = site.T @ x
        grad = np.log(x) - np.log(first[a]) - c
        return np.concatenate([grad + A.T @ nu, A @ x - b])

    r = residual(x, nu)
    rnorm = np.linalg.norm(r)
    for it in range(1, max_iter + 1):
        first = site.T @ x
        H = sp.diags(1.0 / x) - site @ sp.diags(1.0 / first) @ site.T
        K = sp.bmat([[H, A.T], [A, None]], format="csc")
        step = sla.spsolve(K, -r)
        dx, dnu = step[:m], step[m:]
        if not np.all(np.isfinite(step)):
            raise NumericError("singular KKT system (constraints dependent or target unreachable)")
        t = 1.0
        neg = dx < 0
        if neg.any():
            t = min(1.0, 0.99 * float(np.min(-x[neg] / dx[neg])))
        while True:
            xn, nun = x + t * dx, nu + t * dnu
            rn = residual(xn, nun)
            rn_norm = np.linalg.norm(rn)
            if rn_norm <= (1 - 0.01 * t) * rnorm or t < 1e-14:
                break
            t *= 0.5
        x, nu, r, prev, rnorm = xn, nun, rn, rnorm, rn_norm
        if rnorm <= tol:
            break
        if t < 1e-14 and rnorm >= prev:
            raise ConvergenceError(f"Newton stalled with residual {rnorm:.3e}", residual=rnorm, iterations=it)
    else:
        raise ConvergenceError(f"Newton did not converge, residual {rnorm:.3e}", residual=rnorm, iterations=max_iter)
    w = np.zeros((cl.n, cl.n_dirs))
    w[a, k] = x
    mu = PairMeasure(cl, w / w.sum())
    first = site.T @ x
    return NewtonResult(mu, float(np.sum(x * (np.log(x) - c)) - np.sum(first * np.log(first))), it, float(rnorm))


@dataclass
class HBar:
    value: float
    witness: PairMeasure
    iterations: int
    residual: float


def h_bar(f, cluster, base=None, tol=1e-12):
    """sup over M1* of <f, mu> - I(mu), started from the stationary measure of the base kernel."""
    base = srw_kernel(cluster) if base is None else base
    a, k = cluster.edges
    c = as_tilt(f).table(cluster)[a, k] + np.log(base.probs[a, k])
    init = stationary_pair(base).weights[a, k]
    res = _newton(cluster, c, init, tol=tol)
    mu = res.mu
    value = mu.integrate(f) - entropy_I(mu, base).value
    return HBar(value, mu, res.iterations, res.residual)


def constrained_rate(cluster, velocity, base=None, tol=1e-12):
    """inf { I(mu) : mu in M1*, xi(mu) = velocity } by the same Newton method."""
    base = srw_kernel(cluster) if base is None else base
    a, k = cluster.edges
    init = stationary_pair(base).weights[a, k]
    try:
        res = _newton(cluster, np.log(base.probs[a, k]), init, target=velocity, tol=tol)
    except NumericError:
        return RateValue(np.inf)
    return RateValue(entropy_I(res.mu, base).value, res.mu)


@dataclass
class LevelOneCurve:
    x_grid: np.ndarray
    J: np.ndarray
    theta_grid: np.ndarray
    hbar: np.ndarray
    argmax: np.ndarray
    saturated: np.ndarray

    def midpoint_defect(self):
        """Largest J((x+y)/2) - (J(x)+J(y))/2 over grid pairs whose midpoint is on the grid."""
        lookup = {tuple(np.round(p, 12)): j for p, j in zip(self.x_grid, self.J)}
        worst = -np.inf
        for i, j in itertools.combinations(range(len(self.J)), 2):
            mid = tuple(np.round(0.5 * (self.x_grid[i] + self.x_grid[j]), 12))
            if mid in lookup:
                worst = max(worst, lookup[mid] - 0.5 * (self.J[i] + self.J[j]))
        return worst

    def to_csv(self, path):
        d = self.x_grid.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(d)] + ["J", "saturated"])
            for x, j, s in zip(self.x_grid, self.J, self.saturated):
                w.writerow([repr(float(v)) for v in x] + [repr(float(j)), int(s)])

    def hbar_to_csv(self, path):
        d = self.theta_grid.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"theta{i + 1}" for i in range(d)] + ["H"])
            for t, h in zip(self.theta_grid, self.hbar):
                w.writerow([repr(float(v)) for v in t] + [repr(float(h))])


def hbar_sweep(cluster, theta_grid, base=None, method="hbar"):
    theta_grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    base = srw_kernel(cluster) if base is None else base
    out = np.empty(len(theta_grid))
    for i, th in enumerate(theta_grid):
        f = LinearTilt(tuple(th))
        if method == "hbar":
            out[i] = h_bar(f, cluster, base).value
        elif method == "perron":
            out[i] = log_perron(build_tilted(base, f)).log_rho
        else:
            raise ValueError(f"unknown method {method!r}")
    return out


def level1_rate(cluster, theta_grid, x_grid, base=None, method="hbar", hbar=None, refine=False):
    """J(x) = max over the theta grid of <theta, x> - H(f_theta).

    A velocity whose maximizing theta sits on the boundary of the theta box is
    flagged as saturated: there J is only a lower bound. With ``refine`` the
    grid maximizer seeds a bounded quasi-Newton ascent over the theta box;
    the gradient of H at theta is the mean step of the optimal measure, so
    each evaluation costs one ``h_bar`` solve.
    """
    theta_grid = np.atleast_2d(np.asarray(theta_grid, dtype=float))
    x_grid = np.atleast_2d(np.asarray(x_grid, dtype=float))
    base = srw_kernel(cluster) if base is None else base
    if hbar is None:
        hbar = hbar_sweep(cluster, theta_grid, base, method)
    scores = x_grid @ theta_grid.T - hbar[None, :]
    arg = np.argmax(scores, axis=1)
    J = scores[np.arange(len(x_grid)), arg]
    lo, hi = theta_grid.min(axis=0), theta_grid.max(axis=0)
    best = theta_grid[arg].copy()
    wide = hi > lo
    if refine:
        for i, x in enumerate(x_grid):
            best[i], J[i] = _legendre_point(cluster, base, x, best[i], lo, hi)
        edge = 1e-6 * np.maximum(hi - lo, 1.0)
        sat = (((best <= lo + edge) | (best >= hi - edge)) & wide).any(axis=1)
    else:
        sat = (((best == lo) | (best == hi)) & wide).any(axis=1)
    return LevelOneCurve(x_grid, J, theta_grid, np.asarray(hbar), arg, sat)


def _legendre_point(cluster, base, x, start, lo, hi):
    def neg(theta):
        res = h_bar(LinearTilt(tuple(theta)), cluster, base)
        return res.value - theta @ x, xi_contraction(res.witness) - x

    sol = optimize.minimize(neg, start, jac=True, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                            options={"ftol": 1e-15, "gtol": 1e-10})
    val = -sol.fun
    start_val = -neg(start)[0]
    if val < start_val:
        return start, start_val
    return sol.x, val


@dataclass
class ConvexityReport:
    trials: int
    max_violation: float
    worst: tuple = field(default=None)


def random_m1_star(cluster, rng, spread=1.0):
    return stationary_pair(random_kernel(cluster, rng, spread))


def convexity_probe(cluster, trials, rng, base=None, pairs=None):
    """Largest I(x mu + (1-x) nu) - x I(mu) - (1-x) I(nu) over random triples."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    base = srw_kernel(cluster) if base is None else base
    worst, where = -np.inf, None
    for t in range(trials):
        if pairs is not None:
            mu, nu, x = pairs[t]
        else:
            mu, nu = random_m1_star(cluster, rng), random_m1_star(cluster, rng)
            x = rng.uniform()
        lhs = entropy_I(mu.mix(nu, x), base).value
        rhs = x * entropy_I(mu, base).value + (1 - x) * entropy_I(nu, base).value
        if lhs - rhs > worst:
            worst, where = lhs - rhs, (t, x)
    return ConvexityReport(trials, float(worst), where)

