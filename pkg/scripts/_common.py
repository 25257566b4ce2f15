"""Shared bits for the experiment scripts: dataclass configs as CLI flags."""

import argparse
import csv
import dataclasses
import logging


def parse_config(cls, description):
    """Build a parser from the fields of a dataclass and return an instance."""
    parser = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            parser.add_argument(f"--{f.name.replace('_', '-')}", type=kind, nargs="+", default=default)
        else:
            parser.add_argument(f"--{f.name.replace('_', '-')}", type=type(default), default=default)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = vars(parser.parse_args())
    logging.basicConfig(level=logging.DEBUG if args.pop("verbose") else logging.INFO, format="%(message)s")
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in args.items()})


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
