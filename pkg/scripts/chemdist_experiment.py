"""Chemical distance against torus l1 distance on the giant cluster.

Samples pairs of giant-cluster sites on one conditioned torus per L and
reports percentiles of d_ch / |x - y|_1.
"""

import logging
import time
from dataclasses import dataclass

import numpy as np

from percoldp.env import chemdist_survey, condition_on_origin

from _common import parse_config, write_rows

log = logging.getLogger("chemdist")


@dataclass
class Config:
    Ls: tuple = (64, 128, 256)
    p: float = 0.75
    pairs: int = 10_000
    seed: int = 0
    out: str = "chemdist.csv"


def main(cfg):
    rows = []
    for L in cfg.Ls:
        t0 = time.perf_counter()
        env, lab = condition_on_origin(2, L, cfg.p, cfg.seed)
        rep = chemdist_survey(env, lab, cfg.pairs, np.random.default_rng(cfg.seed))
        pct = rep.percentiles()
        rows.append([L, env.seed, rep.dch.size] + [repr(pct[k]) for k in ("p50", "p90", "p99", "max")])
        log.info("L=%4d  %s  (%.1fs)", L, {k: round(v, 3) for k, v in pct.items()}, time.perf_counter() - t0)
    write_rows(cfg.out, ["L", "env_seed", "pairs", "p50", "p90", "p99", "max"], rows)


if __name__ == "__main__":
    main(parse_config(Config, __doc__.split("\n\n")[0]))
