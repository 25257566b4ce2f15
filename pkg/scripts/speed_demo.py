"""Speed of the biased walk on the giant cluster for several drift weights.

The walk steps to an open neighbour with weight beta along +e1 and 1
otherwise. Per environment the script records the mean +e1 velocity after n
steps for each beta, plus the time the walk spends at its most visited site,
which shows when a dead-end trap holds it.
"""

import logging
from dataclasses import dataclass

import numpy as np

from percoldp.cli import WALK_OFFSET
from percoldp.env import condition_on_origin, giant_cluster
from percoldp.kernel import beta_kernel, mean_velocity, simulate
from percoldp.streams import derived_seed

from _common import parse_config, write_rows

log = logging.getLogger("speed")


@dataclass
class Config:
    L: int = 64
    p: float = 0.7
    n: int = 100_000
    seeds: int = 50
    betas: tuple = (1.5, 10.0)
    master: int = 0
    out: str = "speed.csv"


def main(cfg):
    rows = []
    speeds = np.empty((cfg.seeds, len(cfg.betas)))
    for i in range(cfg.seeds):
        env, lab = condition_on_origin(2, cfg.L, cfg.p, derived_seed(cfg.master, i))
        cl = giant_cluster(env, lab)
        walk = derived_seed(cfg.master, WALK_OFFSET + i)
        for j, b in enumerate(cfg.betas):
            tr = simulate(beta_kernel(cl, b), cl.sites[cl.origin], cfg.n, walk)
            speeds[i, j] = mean_velocity(tr)[0]
            busiest = np.bincount(tr.path).max() / (cfg.n + 1)
            rows.append([i, env.seed, b, repr(float(speeds[i, j])), repr(float(busiest))])
        log.info("env %2d  speeds %s", i, np.round(speeds[i], 4))
    write_rows(cfg.out, ["index", "env_seed", "beta", "speed", "busiest_site_share"], rows)
    log.info("mean speed per beta %s", dict(zip(cfg.betas, np.round(speeds.mean(axis=0), 4).tolist())))
    if len(cfg.betas) >= 2:
        log.info("speed(beta=%g) < speed(beta=%g) in %.0f%% of environments",
                 cfg.betas[-1], cfg.betas[0], 100 * np.mean(speeds[:, -1] < speeds[:, 0]))


if __name__ == "__main__":
    main(parse_config(Config, __doc__.split("\n\n")[0]))
