"""Bond percolation on the periodic box (Z/LZ)^d.

Conventions used throughout the package:

* sites are indexed row-major, the first coordinate most significant;
* the 2d step directions are ordered ``+e1, -e1, +e2, -e2, ...`` so direction
  ``k`` moves along axis ``k // 2`` and ``k ^ 1`` is its reverse;
* the undirected bond between ``x`` and ``x + e_i`` has edge index
  ``x * d + i`` (site-major, then axis).

Bond ``j`` is open iff ``u_j < p`` where ``u_j = (r_j >> 11) * 2**-53`` and
``r_j`` is the ``j``-th 64-bit output of Philox4x64-10 keyed by the seed.
Any bond can therefore be regenerated from ``(seed, j)`` alone.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from . import _jit
from .errors import ConditioningError, DegenerateClusterError, ParameterError

MAGIC = b"PERC"
VERSION = 1
_HEADER = struct.Struct("<4sBIIdQ")
_U64 = 2**64


@dataclass(frozen=True)
class LatticeTorus:
    d: int
    L: int

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ParameterError(f"d must be an integer >= 2, got {self.d!r}")
        if int(self.L) != self.L or self.L < 2:
            raise ParameterError(f"L must be an integer >= 2, got {self.L!r}")

    @property
    def shape(self):
        return (self.L,) * self.d

    @property
    def n_sites(self):
        return self.L**self.d

    @property
    def n_dirs(self):
        return 2 * self.d

    @property
    def n_bonds(self):
        return self.d * self.n_sites

    @cached_property
    def steps(self):
        """(2d, d) integer array of unit step vectors."""
        s = np.zeros((2 * self.d, self.d), dtype=np.int64)
        for i in range(self.d):
            s[2 * i, i] = 1
            s[2 * i + 1, i] = -1
        return s

    def coords(self, idx):
        return np.stack(np.unravel_index(np.asarray(idx), self.shape), axis=-1)

    def index(self, coords):
        c = np.mod(np.asarray(coords, dtype=np.int64), self.L)
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)

    @cached_property
    def neighbors(self):
        """(N, 2d) table: neighbors[x, k] is the site reached from x by step k."""
        grid = np.arange(self.n_sites).reshape(self.shape)
        out = np.empty((self.n_sites, self.n_dirs), dtype=np.int64)
        for k, step in enumerate(self.steps):
            axis = k // 2
            out[:, k] = np.roll(grid, -int(step[axis]), axis=axis).ravel()
        return out

    def torus_l1(self, x, y):
        dx = np.abs(self.coords(x) - self.coords(y))
        return np.minimum(dx, self.L - dx).sum(axis=-1)

    def torus_linf(self, x, y):
        dx = np.abs(self.coords(x) - self.coords(y))
        return np.minimum(dx, self.L - dx).max(axis=-1)


@dataclass(frozen=True, eq=False)
class Environment:
    """A bond configuration. ``bonds[x, i]`` is the bond from x to x + e_i."""

    lattice: LatticeTorus
    p: float
    seed: int
    bonds: np.ndarray
    shift: tuple = field(default=None)

    def __post_init__(self):
        b = np.ascontiguousarray(self.bonds, dtype=bool).reshape(self.lattice.n_sites, self.lattice.d)
        b.setflags(write=False)
        object.__setattr__(self, "bonds", b)
        if self.shift is None:
            object.__setattr__(self, "shift", (0,) * self.lattice.d)

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        return (
            self.lattice == other.lattice
            and self.p == other.p
            and self.seed == other.seed
            and np.array_equal(self.bonds, other.bonds)
        )

    __hash__ = None

    @cached_property
    def open_mask(self):
        """(N, 2d) boolean: is the edge leaving x in direction k open."""
        lat = self.lattice
        out = np.empty((lat.n_sites, lat.n_dirs), dtype=bool)
        nb = lat.neighbors
        for i in range(lat.d):
            out[:, 2 * i] = self.bonds[:, i]
            out[:, 2 * i + 1] = self.bonds[nb[:, 2 * i + 1], i]
        out.setflags(write=False)
        return out

    @cached_property
    def degree(self):
        return self.open_mask.sum(axis=1)

    @cached_property
    def adjacency(self):
        lat = self.lattice
        src, k = np.nonzero(self.open_mask)
        dst = lat.neighbors[src, k]
        return sp.csr_matrix((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(lat.n_sites,) * 2)

    def open_fraction(self):
        return float(self.bonds.mean())

    def to_bytes(self):
        lat = self.lattice
        head = _HEADER.pack(MAGIC, VERSION, lat.d, lat.L, float(self.p), int(self.seed))
        return head + np.packbits(self.bonds.ravel(), bitorder="little").tobytes()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise ParameterError("truncated environment file")
        magic, version, d, L, p, seed = _HEADER.unpack_from(data)
        if magic != MAGIC or version != VERSION:
            raise ParameterError(f"not a PERC v{VERSION} file")
        lat = LatticeTorus(d, L)
        nbytes = -(-lat.n_bonds // 8)
        payload = np.frombuffer(data, dtype=np.uint8, offset=_HEADER.size)
        if payload.size != nbytes:
            raise ParameterError(f"expected {nbytes} payload bytes, found {payload.size}")
        bits = np.unpackbits(payload, bitorder="little")[: lat.n_bonds].astype(bool)
        return cls(lat, p, seed, bits)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def bond_uniforms(seed, start, count):
    """Uniforms u_j for edge indices start .. start + count - 1."""
    bg = np.random.Philox(key=int(seed))
    if start:
        bg.advance(start // 4)
        skip = start % 4
    else:
        skip = 0
    raw = bg.random_raw(count + skip)[skip:]
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def sample_environment(d, L, p, seed):
    lat = LatticeTorus(d, L)
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"p must lie in [0, 1], got {p!r}")
    if int(seed) != seed or not 0 <= seed < _U64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
    u = bond_uniforms(seed, 0, lat.n_bonds)
    return Environment(lat, float(p), int(seed), u < p)


def translate(env, x):
    """Shifted environment: bond (y, e) of the result is bond (y + x, e) of env."""
    lat = env.lattice
    x = np.broadcast_to(np.asarray(x, dtype=np.int64), (lat.d,))
    grid = env.bonds.reshape(lat.shape + (lat.d,))
    moved = np.roll(grid, tuple(-int(v) for v in x), axis=tuple(range(lat.d)))
    shift = tuple(int((a + b) % lat.L) for a, b in zip(env.shift, x))
    return Environment(lat, env.p, env.seed, moved.reshape(-1, lat.d), shift)


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    labels: np.ndarray
    sizes: np.ndarray
    giant_label: int
    origin_in_giant: bool

    @property
    def giant_size(self):
        return int(self.sizes[self.giant_label])

    @property
    def giant_fraction(self):
        return self.giant_size / self.labels.size

    @property
    def n_clusters(self):
        return self.sizes.size


def label_clusters(env):
    """Connected components of the open-bond graph, labelled by first site."""
    _, raw = csgraph.connected_components(env.adjacency, directed=False)
    _, first = np.unique(raw, return_index=True)
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    labels = remap[raw]
    labels.setflags(write=False)
    sizes = np.bincount(labels)
    # argmax returns the first maximum, which is the smallest label
    giant = int(np.argmax(sizes))
    return ClusterLabeling(labels, sizes, giant, bool(labels[0] == giant))


def condition_on_origin(d, L, p, seed, max_tries=100, min_fraction=0.5):
    """Sample until the origin lies in a giant cluster of fraction >= min_fraction.

    Attempt k uses seed ``(seed + k) mod 2**64``.
    """
    if max_tries < 1:
        raise ParameterError("max_tries must be >= 1")
    for k in range(max_tries):
        env = sample_environment(d, L, p, (int(seed) + k) % _U64)
        lab = label_clusters(env)
        if lab.origin_in_giant and lab.giant_fraction >= min_fraction:
            return env, lab
    raise ConditioningError(max_tries)


@dataclass(frozen=True, eq=False)
class GiantCluster:
    """The giant cluster as a graph in local indexing 0 .. n - 1.

    ``nbr[a, k]`` is the local index reached from local site ``a`` by step k,
    or -1 if that edge is closed.
    """

    env: Environment
    labeling: ClusterLabeling
    sites: np.ndarray
    local: np.ndarray
    nbr: np.ndarray

    @property
    def lattice(self):
        return self.env.lattice

    @property
    def n(self):
        return self.sites.size

    @property
    def n_dirs(self):
        return self.lattice.n_dirs

    @cached_property
    def open(self):
        return self.nbr >= 0

    @cached_property
    def degree(self):
        return self.open.sum(axis=1)

    @property
    def origin(self):
        """Local index of site 0, or -1 when the origin is outside the cluster."""
        return int(self.local[0])

    @cached_property
    def steps(self):
        return self.lattice.steps

    @cached_property
    def edges(self):
        """(a, k) pairs of all open directed edges, site-major order."""
        a, k = np.nonzero(self.open)
        return a, k


def giant_cluster(env, labeling=None):
    if labeling is None:
        labeling = label_clusters(env)
    sites = np.flatnonzero(labeling.labels == labeling.giant_label)
    local = np.full(env.lattice.n_sites, -1, dtype=np.int64)
    local[sites] = np.arange(sites.size)
    nb = env.lattice.neighbors[sites]
    nbr = np.where(env.open_mask[sites], local[nb], -1)
    for arr in (sites, local, nbr):
        arr.setflags(write=False)
    return GiantCluster(env, labeling, sites, local, nbr)


def chemical_distance(env, labeling, x, y):
    """Length of the shortest open path from x to y, or None if unreachable."""
    lat = env.lattice
    x, y = _site(lat, x), _site(lat, y)
    if labeling.labels[x] != labeling.labels[y]:
        return None
    return int(_bfs(env, np.array([x]), np.array([y]))[0])


def _bfs(env, x, y):
    nbr = np.where(env.open_mask, env.lattice.neighbors, -1).astype(np.int64)
    n = env.lattice.n_sites
    return _jit.bfs_pairs(nbr, x.astype(np.int64), y.astype(np.int64), np.full(n, -1, np.int64), np.empty(n, np.int64))


def _site(lat, x):
    if np.ndim(x) == 0:
        x = int(x)
        if not 0 <= x < lat.n_sites:
            raise ParameterError(f"site index {x} outside the torus")
        return x
    return int(lat.index(x))


@dataclass
class ChemDistReport:
    x: np.ndarray
    y: np.ndarray
    l1: np.ndarray
    linf: np.ndarray
    dch: np.ndarray

    @property
    def ratio(self):
        return self.dch / self.l1

    def percentiles(self):
        if self.dch.size == 0:
            return {}
        r = self.ratio
        return {
            "p50": float(np.percentile(r, 50)),
            "p90": float(np.percentile(r, 90)),
            "p99": float(np.percentile(r, 99)),
            "max": float(r.max()),
        }


def chemdist_survey(env, labeling, n_pairs, rng):
    """Chemical distance for uniformly sampled distinct pairs of giant-cluster sites."""
    lat = env.lattice
    sites = np.flatnonzero(labeling.labels == labeling.giant_label)
    empty = np.zeros(0, dtype=np.int64)
    if n_pairs == 0:
        return ChemDistReport(empty, empty, empty, empty, empty)
    if sites.size < 2:
        raise DegenerateClusterError("giant cluster has fewer than 2 sites")
    x = rng.choice(sites, size=n_pairs)
    y = rng.choice(sites, size=n_pairs)
    same = x == y
    while same.any():
        y[same] = rng.choice(sites, size=int(same.sum()))
        same = x == y
    dch = _bfs(env, x, y)
    return ChemDistReport(x, y, lat.torus_l1(x, y), lat.torus_linf(x, y), dch)


@dataclass
class DensityReport:
    radius: int
    side: int
    centers: np.ndarray
    counts: np.ndarray

    @property
    def min(self):
        return int(self.counts.min())

    @property
    def mean(self):
        return float(self.counts.mean())


def density_count(env, labeling, delta):
    """Giant-cluster sites in sup-norm boxes of radius delta * L / 2.

    Box centres form a coarse grid with spacing max(1, radius); boxes wider
    than the torus are clipped to the whole torus.
    """
    if not 0 < delta <= 1:
        raise ParameterError(f"delta must lie in (0, 1], got {delta!r}")
    lat = env.lattice
    radius = int(np.floor(delta * lat.L / 2))
    side = min(2 * radius + 1, lat.L)
    occ = (labeling.labels == labeling.giant_label).reshape(lat.shape).astype(np.int64)
    box = occ
    for axis in range(lat.d):
        box = _periodic_window_sum(box, axis, radius, side)
    stride = max(1, radius)
    ticks = np.arange(0, lat.L, stride)
    mesh = np.stack(np.meshgrid(*([ticks] * lat.d), indexing="ij"), axis=-1).reshape(-1, lat.d)
    counts = box[tuple(mesh.T)]
    return DensityReport(radius, side, lat.index(mesh), counts)


def _periodic_window_sum(a, axis, radius, side):
    L = a.shape[axis]
    if side >= L:
        return np.broadcast_to(a.sum(axis=axis, keepdims=True), a.shape).copy()
    out = np.zeros_like(a)
    for s in range(-radius, radius + 1):
        out += np.roll(a, -s, axis=axis)
    return out
