"""Mean-velocity rate function by Legendre transform of the Perron root.

Writes J on a velocity grid and cross-checks a few interior velocities
against the constrained entropy program.
"""

import logging
from dataclasses import dataclass

import numpy as np

from percoldp.env import condition_on_origin, giant_cluster
from percoldp.rate import constrained_rate, level1_rate

from _common import parse_config

log = logging.getLogger("level1")


@dataclass
class Config:
    L: int = 16
    p: float = 0.75
    seed: int = 0
    theta_max: float = 1.5
    theta_steps: int = 31
    x_max: float = 0.5
    x_steps: int = 11
    out: str = "level1.csv"


def grid(half, steps):
    ax = np.linspace(-half, half, steps)
    return np.stack(np.meshgrid(ax, ax, indexing="ij"), -1).reshape(-1, 2)


def main(cfg):
    env, lab = condition_on_origin(2, cfg.L, cfg.p, cfg.seed)
    cl = giant_cluster(env, lab)
    thetas, xs = grid(cfg.theta_max, cfg.theta_steps), grid(cfg.x_max, cfg.x_steps)
    curve = level1_rate(cl, thetas, xs, method="perron")
    curve.to_csv(cfg.out)
    log.info("J(0) = %.2e, %d of %d velocities saturated", curve.J[np.argmin(np.abs(xs).sum(1))],
             curve.saturated.sum(), len(xs))
    probe = np.array([[0.1, 0.0], [0.0, 0.1], [0.1, 0.1], [-0.2, 0.05]])
    fine = level1_rate(cl, thetas, probe, hbar=curve.hbar, refine=True)
    for x, j in zip(probe, fine.J):
        log.info("x=%s  Legendre %.10f  constrained %.10f", x, j, constrained_rate(cl, x).value)


if __name__ == "__main__":
    main(parse_config(Config, __doc__.split("\n\n")[0]))
