import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import all_open
from percoldp.env import (
    Environment,
    LatticeTorus,
    bond_uniforms,
    chemdist_survey,
    chemical_distance,
    condition_on_origin,
    density_count,
    label_clusters,
    sample_environment,
    translate,
)
from percoldp.errors import ConditioningError, DegenerateClusterError, ParameterError


def union_find_labels(env):
    """Reference labeling by a plain union-find over open bonds."""
    lat = env.lattice
    parent = list(range(lat.n_sites))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    nb = lat.neighbors
    for x in range(lat.n_sites):
        for i in range(lat.d):
            if env.bonds[x, i]:
                ra, rb = find(x), find(int(nb[x, 2 * i]))
                if ra != rb:
                    parent[ra] = rb
    return np.array([find(x) for x in range(lat.n_sites)])


def test_lattice_rejects_bad_shape():
    with pytest.raises(ParameterError):
        LatticeTorus(1, 4)
    with pytest.raises(ParameterError):
        LatticeTorus(2, 1)


def test_sample_endpoints():
    env = sample_environment(2, 4, 1.0, 3)
    assert env.bonds.size == 32 and env.bonds.all()
    env0 = sample_environment(2, 4, 0.0, 3)
    assert not env0.bonds.any()
    assert label_clusters(env0).sizes.max() == 1


def test_sample_rejects_bad_p():
    with pytest.raises(ParameterError):
        sample_environment(2, 4, 1.5, 0)


def test_open_fraction_binomial():
    env = sample_environment(2, 64, 0.75, 42)
    n = env.bonds.size
    assert n == 8192
    sigma = np.sqrt(0.75 * 0.25 / n)
    assert abs(env.open_fraction() - 0.75) <= 3 * sigma


def test_bond_uniforms_counter_addressing():
    full = bond_uniforms(11, 0, 200)
    for start in (1, 3, 4, 5, 77, 150):
        np.testing.assert_array_equal(bond_uniforms(11, start, 200 - start), full[start:])


def test_regeneration_and_bytes_roundtrip(tmp_path):
    a = sample_environment(2, 16, 0.6, 5)
    b = sample_environment(2, 16, 0.6, 5)
    assert a == b
    path = tmp_path / "env.perc"
    a.save(path)
    raw = path.read_bytes()
    assert raw[:4] == b"PERC" and raw[4] == 1
    d, L, p, seed = struct.unpack_from("<IIdQ", raw, 5)
    assert (d, L, p, seed) == (2, 16, 0.6, 5)
    assert len(raw) == 5 + 24 + -(-2 * 16 * 16 // 8)
    back = Environment.load(path)
    assert back == a and back.to_bytes() == raw


def test_edge_order_matches_packed_bits():
    env = sample_environment(3, 4, 0.5, 9)
    bits = np.unpackbits(np.frombuffer(env.to_bytes()[29:], np.uint8), bitorder="little")
    np.testing.assert_array_equal(bits[: env.lattice.n_bonds].astype(bool), env.bonds.ravel())


def test_labels_all_open_and_all_closed():
    lab = label_clusters(all_open(8))
    assert lab.giant_size == 64 and np.unique(lab.labels).size == 1
    lab0 = label_clusters(sample_environment(2, 8, 0.0, 0))
    assert lab0.giant_size == 1 and np.unique(lab0.labels).size == 64


@pytest.mark.parametrize("seed", range(5))
def test_labels_match_union_find(seed):
    env = sample_environment(2, 24, 0.5, seed)
    lab = label_clusters(env)
    ref = union_find_labels(env)
    # same partition: the map label -> reference root is a bijection
    pairs = set(zip(lab.labels.tolist(), ref.tolist()))
    assert len(pairs) == np.unique(lab.labels).size == np.unique(ref).size
    sizes = np.bincount(lab.labels)
    assert sizes[lab.giant_label] == sizes.max()
    assert lab.giant_label == np.flatnonzero(sizes == sizes.max()).min()


def test_cluster_soundness_random_edges():
    env = sample_environment(2, 64, 0.55, 3)
    lab = label_clusters(env)
    rng = np.random.default_rng(0)
    x, i = np.nonzero(env.bonds)
    pick = rng.choice(x.size, 1000)
    y = env.lattice.neighbors[x[pick], 2 * i[pick]]
    assert (lab.labels[x[pick]] == lab.labels[y]).all()
    a, b = rng.integers(0, env.lattice.n_sites, (2, 1000))
    for u, v in zip(a, b):
        if lab.labels[u] != lab.labels[v]:
            assert chemical_distance(env, lab, int(u), int(v)) is None


def test_giant_fraction_resampling_oracle():
    fr = np.array([label_clusters(sample_environment(2, 64, 0.75, 1000 + s)).giant_fraction for s in range(100)])
    theta_hat, sd = fr.mean(), fr.std(ddof=1)
    test = label_clusters(sample_environment(2, 64, 0.75, 42)).giant_fraction
    assert abs(test - theta_hat) <= 3 * sd


def test_condition_on_origin():
    env, lab = condition_on_origin(2, 8, 1.0, 5)
    assert env.seed == 5 and lab.origin_in_giant
    with pytest.raises(ConditioningError) as err:
        condition_on_origin(2, 8, 0.0, 0, max_tries=3)
    assert err.value.tries == 3


def test_condition_success_rate_matches_frequency():
    def ok(seed):
        lab = label_clusters(sample_environment(2, 32, 0.75, seed))
        return lab.origin_in_giant and lab.giant_fraction >= 0.5

    freq = np.mean([ok(s) for s in range(1000)])
    first_try = []
    for master in range(10_000, 11_000):
        env, _ = condition_on_origin(2, 32, 0.75, master)
        first_try.append(env.seed == master)
    rate = np.mean(first_try)
    pooled = (rate + freq) / 2
    sigma = np.sqrt(2 * pooled * (1 - pooled) / 1000)
    assert abs(rate - freq) <= 3 * sigma


def test_chemical_distance_basics():
    env = all_open(8)
    lab = label_clusters(env)
    assert chemical_distance(env, lab, 5, 5) == 0
    assert chemical_distance(env, lab, (0, 0), (0, 1)) == 1
    assert chemical_distance(env, lab, (0, 0), (2, 3)) == 5
    assert chemical_distance(env, lab, (0, 0), (6, 7)) == 3


def test_chemical_distance_metric():
    env = sample_environment(2, 32, 0.7, 2)
    lab = label_clusters(env)
    sites = np.flatnonzero(lab.labels == lab.giant_label)
    rng = np.random.default_rng(1)
    for _ in range(30):
        x, y, z = (int(s) for s in rng.choice(sites, 3))
        dxy, dyx = chemical_distance(env, lab, x, y), chemical_distance(env, lab, y, x)
        assert dxy == dyx
        assert dxy <= chemical_distance(env, lab, x, z) + chemical_distance(env, lab, z, y)
        assert dxy >= env.lattice.torus_l1(x, y)


def test_chemdist_survey():
    env = all_open(16)
    lab = label_clusters(env)
    rep = chemdist_survey(env, lab, 200, np.random.default_rng(0))
    assert np.all(rep.ratio == 1.0)
    empty = chemdist_survey(env, lab, 0, np.random.default_rng(0))
    assert empty.dch.size == 0 and empty.percentiles() == {}
    closed = sample_environment(2, 8, 0.0, 0)
    with pytest.raises(DegenerateClusterError):
        chemdist_survey(closed, label_clusters(closed), 5, np.random.default_rng(0))


def test_density_count_endpoints():
    env = all_open(16)
    rep = density_count(env, label_clusters(env), 1.0)
    assert (rep.counts == 256).all()
    env0 = sample_environment(2, 16, 0.0, 0)
    assert density_count(env0, label_clusters(env0), 0.5).counts.max() <= 1


def test_density_count_brute_force():
    env = sample_environment(2, 12, 0.7, 4)
    lab = label_clusters(env)
    rep = density_count(env, lab, 0.5)
    occ = (lab.labels == lab.giant_label).reshape(12, 12)
    r = rep.radius
    for c, cnt in zip(rep.centers, rep.counts):
        cx, cy = env.lattice.coords(c)
        rows = [(cx + s) % 12 for s in range(-r, r + 1)]
        cols = [(cy + s) % 12 for s in range(-r, r + 1)]
        assert cnt == occ[np.ix_(rows, cols)].sum()


@pytest.mark.slow
def test_density_lower_bound_statistical():
    hits = 0
    fr = [label_clusters(sample_environment(2, 128, 0.75, 500 + s)).giant_fraction for s in range(20)]
    theta_hat = float(np.mean(fr))
    delta, n = 0.25, 64
    for s in range(50):
        env = sample_environment(2, 128, 0.75, s)
        rep = density_count(env, label_clusters(env), delta)
        hits += rep.min >= delta**2 * (2 * n) ** 2 * theta_hat / 2
    assert hits >= 0.95 * 50


def test_translate_identity_and_period():
    env = sample_environment(2, 8, 0.5, 1)
    assert translate(env, (0, 0)) == env
    assert translate(env, (8, 0)) == env


def test_translate_exhaustive_edges():
    env = sample_environment(2, 8, 0.5, 1)
    out = translate(env, (1, 0))
    lat = env.lattice
    shift = lat.index(np.array([1, 0]))
    for y in range(lat.n_sites):
        src = lat.index((lat.coords(y) + lat.coords(shift)) % 8)
        np.testing.assert_array_equal(out.bonds[y], env.bonds[src])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.tuples(st.integers(-20, 20), st.integers(-20, 20)),
       st.tuples(st.integers(-20, 20), st.integers(-20, 20)))
def test_translate_composes(seed, x, y):
    env = sample_environment(2, 6, 0.5, seed)
    both = translate(translate(env, x), y)
    direct = translate(env, np.add(x, y))
    np.testing.assert_array_equal(both.bonds, direct.bonds)
    np.testing.assert_array_equal(translate(translate(env, x), np.negative(x)).bonds, env.bonds)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**63), st.floats(0.0, 1.0))
def test_seed_determinism(seed, p):
    a, b = sample_environment(2, 5, p, seed), sample_environment(2, 5, p, seed)
    assert a.to_bytes() == b.to_bytes()
    assert Environment.from_bytes(a.to_bytes()) == a
