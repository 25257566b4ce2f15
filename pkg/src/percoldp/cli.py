"""Command-line driver: ``percoldp <command> [--config FILE] [--flag value ...]``.

Every command emits one JSON-lines ResultRecord (command, config echo,
outputs, wall time, versions) on stdout or appends it to ``--records``.
A config file holds flat ``key = value`` lines using the flag names with
dashes or underscores; flags given on the command line override it.

Exit codes: 0 success, 2 usage or parameter error, 3 acceptance gap,
4 numeric failure.

Randomness: a single ``--seed``. Single-environment commands condition on
the origin starting from that seed. Multi-seed commands use
``derived_seed(seed, i)`` for environment ``i`` and
``derived_seed(seed, WALK_OFFSET + i)`` for the walk on it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np
import scipy

from . import gradient as corr
from .env import Environment, chemdist_survey, condition_on_origin, giant_cluster, label_clusters
from .errors import ConditioningError, DegenerateClusterError, NumericError, ParameterError, PercolError
from .kernel import beta_kernel, mean_velocity, simulate, srw_kernel
from .rate import constrained_rate, h_bar, level1_rate
from .spectral import build_tilted, finite_n_mgf_curve, log_perron, mc_mgf
from .streams import derived_seed, stream
from .tilts import LinearTilt

EXIT_OK, EXIT_USAGE, EXIT_GAP, EXIT_NUMERIC = 0, 2, 3, 4
WALK_OFFSET = 1 << 20


def _floats(s):
    return tuple(float(v) for v in str(s).split(",") if v.strip())


def _ints(s):
    return tuple(int(v) for v in str(s).split(",") if v.strip())


def _positive(x):
    return x > 0


# name -> (type, default, check, help); check is a predicate or None
COMMON = {
    "d": (int, 2, lambda v: v >= 2, "lattice dimension"),
    "L": (int, 16, lambda v: v >= 2, "torus side length"),
    "p": (float, 0.75, lambda v: 0 < v <= 1, "bond open probability (p = 1 is the all-open test hook)"),
    "seed": (int, 0, lambda v: 0 <= v < 2**64, "master seed"),
    "env": (str, None, None, "environment file (PERC format) instead of sampling"),
    "max_tries": (int, 100, _positive, "conditioning retries"),
    "threads": (int, None, _positive, "worker cap (default: PERCOLDP_THREADS or 1)"),
    "records": (str, None, None, "append the JSON record here instead of stdout"),
}

COMMANDS = {
    "sample": {
        "out": (str, None, None, "output environment file"),
    },
    "mgf": {
        "theta": (_floats, (0.5, 0.0), None, "tilt vector, comma separated"),
        "n": (_ints, (128, 256, 512, 1024, 2048, 4096), lambda v: min(v) >= 1, "prelimit lengths"),
        "samples": (int, 0, lambda v: v >= 0, "Monte Carlo trajectories at the largest n (0 = skip)"),
        "beta": (float, 1.0, lambda v: v >= 1, "drift weight on +e1 (1 = simple random walk)"),
        "tol": (float, 1e-12, _positive, "Perron tolerance"),
    },
    "rate": {
        "theta_max": (float, 1.5, _positive, "half-width of the theta box"),
        "theta_steps": (int, 31, lambda v: v >= 2, "theta grid points per axis"),
        "x_max": (float, 0.5, lambda v: 0 <= v < 1, "half-width of the velocity box"),
        "x_steps": (int, 11, lambda v: v >= 1, "velocity grid points per axis"),
        "check": (int, 5, lambda v: v >= 0, "velocities cross-checked by the constrained program"),
        "method": (str, "perron", lambda v: v in ("hbar", "perron"), "H evaluation route"),
        "csv": (str, None, None, "write the J curve here"),
    },
    "duality": {
        "theta": (_floats, (0.5, 0.0), None, "tilt vector"),
        "tol": (float, 1e-6, _positive, "allowed pairwise gap"),
    },
    "corrector": {
        "Ls": (_ints, (64, 128, 256), lambda v: min(v) >= 4, "torus sides to scan"),
        "seeds": (int, 20, _positive, "environments per L"),
        "theta": (_floats, (0.5, 0.0), None, "tilt defining the Perron potential"),
        "paths": (int, 200, _positive, "sampled paths per environment"),
        "csv": (str, None, None, "write the scan table here"),
    },
    "chemdist": {
        "pairs": (int, 10_000, lambda v: v >= 0, "sampled site pairs"),
    },
    "speed": {
        "betas": (_floats, (1.5, 10.0), lambda v: min(v) >= 1, "drift weights (1 = simple random walk)"),
        "n": (int, 100_000, _positive, "steps per walk"),
        "seeds": (int, 50, _positive, "environments"),
    },
}


@dataclass
class ExperimentConfig:
    command: str
    values: dict = field(default_factory=dict)

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    def echo(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in self.values.items()}


@dataclass
class ResultRecord:
    command: str
    config: dict
    outputs: dict
    wall_time: float
    versions: dict
    status: str = "ok"

    def to_json(self):
        return json.dumps(asdict(self), default=_jsonable, sort_keys=True)


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v)}")


def versions():
    try:
        mine = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        mine = "unknown"
    return {"percoldp": mine, "numpy": np.__version__, "scipy": scipy.__version__, "python": sys.version.split()[0]}


def read_config(path):
    out = {}
    with open(path) as fh:
        for num, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{num}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = val
    return out


def _spec(command):
    return {**COMMON, **COMMANDS[command]}


def build_parser():
    parser = argparse.ArgumentParser(prog="percoldp", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", help="flat key = value file; flags override it")
        for key, (_, default, _, helptext) in _spec(name).items():
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            sp_.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, help=f"{helptext} (default {shown})")
    return parser


def resolve(args):
    """Merge defaults < config file < flags, convert types and range-check."""
    spec = _spec(args.command)
    raw = {}
    if args.config:
        raw.update(read_config(args.config))
        unknown = sorted(set(raw) - set(spec))
        if unknown:
            raise ParameterError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
    for key in spec:
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    vals = {}
    for key, (kind, default, check, _) in spec.items():
        if key in raw:
            try:
                v = kind(raw[key])
            except (TypeError, ValueError):
                raise ParameterError(f"--{key.replace('_', '-')}: cannot parse {raw[key]!r}") from None
        else:
            v = default
        if v is not None and check is not None and not check(v):
            raise ParameterError(f"--{key.replace('_', '-')}: value {v!r} out of range")
        vals[key] = v
    if vals["threads"] is None:
        env_threads = os.environ.get("PERCOLDP_THREADS")
        vals["threads"] = int(env_threads) if env_threads else 1
        if vals["threads"] < 1:
            raise ParameterError("PERCOLDP_THREADS must be >= 1")
    for key in ("theta",):
        if key in vals and len(vals[key]) != vals["d"]:
            raise ParameterError(f"--theta needs {vals['d']} components")
    return ExperimentConfig(args.command, vals)


def _cluster(cfg):
    if cfg.env:
        env = Environment.load(cfg.env)
        lab = label_clusters(env)
        if not lab.origin_in_giant:
            raise ParameterError(f"--env: origin is not in the giant cluster of {cfg.env}")
    else:
        env, lab = condition_on_origin(cfg.d, cfg.L, cfg.p, cfg.seed, cfg.max_tries)
    return env, lab, giant_cluster(env, lab)


def _kernel(cl, beta):
    return srw_kernel(cl) if beta == 1 else beta_kernel(cl, beta)


def _pmap(cfg, fn, items):
    items = list(items)
    if cfg.threads == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(fn, items))


def cmd_sample(cfg):
    if not cfg.out:
        raise ParameterError("--out is required")
    env, lab, cl = _cluster(cfg)
    env.save(cfg.out)
    return {"file": cfg.out, "seed_used": env.seed, "open_fraction": env.open_fraction(),
            "giant_fraction": lab.giant_fraction, "giant_size": lab.giant_size}, EXIT_OK


def cmd_mgf(cfg):
    _, _, cl = _cluster(cfg)
    kern = _kernel(cl, cfg.beta)
    f = LinearTilt(cfg.theta)
    op = build_tilted(kern, f)
    lp = log_perron(op, tol=cfg.tol, method="noda").log_rho
    ns = sorted(cfg.n)
    lam = finite_n_mgf_curve(op, cl.sites[cl.origin], ns)
    out = {"log_perron": lp, "n": ns, "finite_n": lam.tolist(), "n_gap": (np.array(ns) * np.abs(lam - lp)).tolist()}
    if cfg.samples:
        if cfg.samples < 2:
            raise ParameterError("--samples must be 0 or >= 2")
        est = mc_mgf(kern, f, ns[-1], cfg.samples, cfg.seed)
        out.update(mc_estimate=est.estimate, mc_stderr=est.stderr, mc_n=ns[-1])
    return out, EXIT_OK


def cmd_rate(cfg):
    _, _, cl = _cluster(cfg)
    axes = [np.linspace(-cfg.theta_max, cfg.theta_max, cfg.theta_steps)] * cfg.d
    thetas = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, cfg.d)
    xs_axis = [np.linspace(-cfg.x_max, cfg.x_max, cfg.x_steps)] * cfg.d
    xs = np.stack(np.meshgrid(*xs_axis, indexing="ij"), -1).reshape(-1, cfg.d)
    curve = level1_rate(cl, thetas, xs, method=cfg.method)
    if cfg.csv:
        curve.to_csv(cfg.csv)
    zero = int(np.argmin(np.abs(xs).sum(axis=1)))
    interior = np.flatnonzero(~curve.saturated)
    rng = stream(cfg.seed, 0)
    picks = rng.choice(interior, size=min(cfg.check, interior.size), replace=False) if cfg.check else []
    checks = []
    if len(picks):
        fine = level1_rate(cl, thetas, xs[picks], hbar=curve.hbar, refine=True)
        for x, j in zip(xs[picks], fine.J):
            direct = constrained_rate(cl, x).value
            checks.append({"x": x.tolist(), "legendre": float(j), "constrained": direct, "gap": abs(direct - j)})
    return {"J_at_zero": float(curve.J[zero]), "argmin": xs[int(np.argmin(curve.J))].tolist(),
            "midpoint_defect": curve.midpoint_defect(), "saturated": int(curve.saturated.sum()),
            "checks": checks, "csv": cfg.csv}, EXIT_OK


def cmd_duality(cfg):
    _, _, cl = _cluster(cfg)
    kern = srw_kernel(cl)
    f = LinearTilt(cfg.theta)
    hb = h_bar(f, cl, kern).value
    ml = corr.minimize_lambda(f, kern)
    lp = log_perron(build_tilted(kern, f)).log_rho
    gaps = {"hbar_minlambda": abs(hb - ml.value), "hbar_perron": abs(hb - lp), "minlambda_perron": abs(ml.value - lp)}
    ok = max(gaps.values()) <= cfg.tol
    return {"h_bar": hb, "minimize_lambda": ml.value, "log_perron": lp, "spread": ml.spread,
            "gaps": gaps, "n_sites": cl.n}, EXIT_OK if ok else EXIT_GAP


def cmd_corrector(cfg):
    f = LinearTilt(cfg.theta)
    jobs = [(L, i) for L in cfg.Ls for i in range(cfg.seeds)]

    def run(job):
        L, i = job
        s = derived_seed(cfg.seed, L * WALK_OFFSET + i)
        env, lab = condition_on_origin(cfg.d, L, cfg.p, s, cfg.max_tries)
        cl = giant_cluster(env, lab)
        return corr.scan_cluster(cl, corr.perron_field(cl, f), s, n_paths=cfg.paths)

    rows = [r for chunk in _pmap(cfg, run, jobs) for r in chunk]
    report = corr.ScanReport(rows, (0.05, 0.1))
    if cfg.csv:
        report.to_csv(cfg.csv)
    med = report.medians()
    return {"medians": {str(L): v for L, v in med.items()}, "csv": cfg.csv}, EXIT_OK


def cmd_chemdist(cfg):
    env, lab, _ = _cluster(cfg)
    rep = chemdist_survey(env, lab, cfg.pairs, stream(cfg.seed, 0))
    return {"pairs": int(rep.dch.size), "percentiles": rep.percentiles()}, EXIT_OK


def cmd_speed(cfg):
    def run(i):
        env, lab = condition_on_origin(cfg.d, cfg.L, cfg.p, derived_seed(cfg.seed, i), cfg.max_tries)
        cl = giant_cluster(env, lab)
        walk = derived_seed(cfg.seed, WALK_OFFSET + i)
        return [float(mean_velocity(simulate(_kernel(cl, b), cl.sites[cl.origin], cfg.n, walk))[0]) for b in cfg.betas]

    speeds = np.array(_pmap(cfg, run, range(cfg.seeds)))
    out = {"betas": list(cfg.betas), "mean_speed": speeds.mean(axis=0).tolist(),
           "sd_speed": speeds.std(axis=0, ddof=1).tolist() if cfg.seeds > 1 else None}
    if len(cfg.betas) >= 2:
        out["fraction_last_below_first"] = float(np.mean(speeds[:, -1] < speeds[:, 0]))
    return out, EXIT_OK


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


def run(argv=None):
    """Parse, execute and return (exit code, ResultRecord or None, message)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return (EXIT_OK if exc.code == 0 else EXIT_USAGE), None, ""
    t0 = time.perf_counter()
    try:
        cfg = resolve(args)
        outputs, code = HANDLERS[args.command](cfg)
    except (ParameterError, ConditioningError, DegenerateClusterError, OSError) as exc:
        return EXIT_USAGE, None, f"error: {exc}"
    except (NumericError, FloatingPointError) as exc:
        return EXIT_NUMERIC, None, f"numeric failure: {exc}"
    except PercolError as exc:
        return EXIT_NUMERIC, None, f"error: {exc}"
    status = "ok" if code == EXIT_OK else "gap"
    rec = ResultRecord(args.command, cfg.echo(), outputs, time.perf_counter() - t0, versions(), status)
    return code, rec, ""


def main(argv=None):
    code, rec, msg = run(argv)
    if msg:
        print(msg, file=sys.stderr)
    if rec is not None:
        line = rec.to_json()
        if rec.config.get("records"):
            with open(rec.config["records"], "a") as fh:
                fh.write(line + "\n")
        else:
            print(line)
    return code


if __name__ == "__main__":
    sys.exit(main())
