import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ring_env
from percoldp.env import Environment, LatticeTorus, giant_cluster, sample_environment
from percoldp.errors import AdmissibilityError, ParameterError
from percoldp.kernel import (
    TransitionKernel,
    beta_kernel,
    mean_velocity,
    random_kernel,
    simulate,
    srw_kernel,
    tilt_from_potential,
)
from percoldp.pair import pair_empirical, stationary_pair
from percoldp.rate import entropy_I, h_bar, xi_contraction
from percoldp.spectral import build_tilted, log_perron
from percoldp.tilts import LinearTilt


def test_srw_all_open(open8):
    assert np.all(srw_kernel(open8).probs == 0.25)


def test_srw_degree_two_sites(cl8):
    k = srw_kernel(cl8)
    two = cl8.degree == 2
    assert two.any()
    assert np.all(k.probs[two][cl8.open[two]] == 0.5)


def test_srw_random_env_exhaustive(cl16):
    k = srw_kernel(cl16)
    assert np.abs(k.probs.sum(axis=1) - 1).max() <= 1e-12
    np.testing.assert_array_equal(k.probs > 0, cl16.open)


def test_beta_all_open(open8):
    k = beta_kernel(open8, 2.0)
    np.testing.assert_allclose(k.probs[0], [2 / 5, 1 / 5, 1 / 5, 1 / 5], rtol=0, atol=1e-15)


def test_beta_limit_and_domain(cl8):
    np.testing.assert_allclose(beta_kernel(cl8, 1 + 1e-12).probs, srw_kernel(cl8).probs, atol=1e-11)
    with pytest.raises(ParameterError):
        beta_kernel(cl8, 1.0)


def test_kernel_admissibility_enforced(cl8):
    bad = srw_kernel(cl8).probs.copy()
    a = int(np.flatnonzero(cl8.degree >= 2)[0])
    k = int(np.flatnonzero(cl8.open[a])[0])
    bad[a] = 0.0
    bad[a, k] = 1.0
    with pytest.raises(AdmissibilityError):
        TransitionKernel(cl8, bad)


def test_tilt_identities(cl8):
    k = srw_kernel(cl8)
    np.testing.assert_allclose(tilt_from_potential(k, 0.0, np.zeros(cl8.n)).probs, k.probs, atol=1e-15)
    np.testing.assert_allclose(tilt_from_potential(k, 0.0, np.full(cl8.n, 3.7)).probs, k.probs, atol=1e-15)


def test_tilt_from_perron_potential_attains_hbar(cl8):
    k = srw_kernel(cl8)
    f = LinearTilt((0.5, 0.0))
    res = log_perron(build_tilted(k, f))
    opt = tilt_from_potential(k, f, -np.log(res.vector))
    mu = stationary_pair(opt)
    value = mu.integrate(f) - entropy_I(mu, k).value
    assert abs(value - res.log_rho) <= 1e-10
    assert abs(value - h_bar(f, cl8).value) <= 1e-10


def test_simulate_empty_and_outside(cl8):
    k = srw_kernel(cl8)
    tr = simulate(k, cl8.sites[cl8.origin], 0, 1)
    assert tr.n == 0 and tr.end == cl8.sites[cl8.origin]
    outside = np.flatnonzero(cl8.local < 0)
    if outside.size:
        with pytest.raises(ParameterError):
            simulate(k, int(outside[0]), 5, 1)


def test_forced_moves_on_dangling_site():
    env = ring_env(4)
    # cut the ring to a path 0 - 1 - 2 - 3: site 0 then has one open edge
    bonds = env.bonds.copy()
    bonds[env.lattice.index((3, 0)), 0] = False
    cl = giant_cluster(Environment(env.lattice, 0.5, 0, bonds))
    tr = simulate(srw_kernel(cl), 0, 1, 3)
    assert tr.steps[0] == 0 and tr.end == env.lattice.index((1, 0))


def test_two_site_alternation():
    lat = LatticeTorus(2, 4)
    bonds = np.zeros((16, 2), dtype=bool)
    bonds[0, 1] = True
    cl = giant_cluster(Environment(lat, 0.5, 0, bonds))
    tr = simulate(srw_kernel(cl), 0, 10, 0)
    assert list(tr.steps) == [2, 3] * 5
    assert np.all(mean_velocity(tr) == 0)


def test_direction_frequencies_multinomial(open8):
    n = 10**6
    tr = simulate(srw_kernel(open8), 0, n, 12)
    counts = np.bincount(tr.steps, minlength=4)
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 3 * sigma)


def test_mean_velocity_cases(open8):
    k = srw_kernel(open8)
    tr = simulate(k, 0, 0, 0)
    with pytest.raises(ParameterError):
        mean_velocity(tr)
    one = simulate(TransitionKernel(open8, np.tile([1 - 3e-16, 1e-16, 1e-16, 1e-16], (64, 1))), 0, 1, 0)
    assert one.steps[0] == 0
    np.testing.assert_array_equal(mean_velocity(one), [1, 0])


def test_srw_velocity_clt_scale(cl16):
    n = 10**6
    v = mean_velocity(simulate(srw_kernel(cl16), cl16.sites[cl16.origin], n, 5))
    assert np.abs(v).max() <= 5 * n**-0.5 * 3


def test_simulate_deterministic(cl8):
    k = srw_kernel(cl8)
    a = simulate(k, cl8.sites[cl8.origin], 500, 99)
    b = simulate(k, cl8.sites[cl8.origin], 500, 99)
    np.testing.assert_array_equal(a.steps, b.steps)


def test_trajectory_csv(tmp_path, cl8):
    tr = simulate(srw_kernel(cl8), cl8.sites[cl8.origin], 5, 1)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "step_index,direction_index" and len(lines) == 6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 400), st.floats(0.1, 2.0))
def test_trajectory_uses_open_edges_and_unwraps(seed, n, spread):
    env = sample_environment(2, 6, 0.7, seed)
    cl = giant_cluster(env)
    k = random_kernel(cl, np.random.default_rng(seed), spread)
    tr = simulate(k, cl.sites[0], n, seed)
    assert cl.open[tr.path[:-1], tr.steps].all()
    lat = cl.lattice
    end = (lat.coords(tr.start) + tr.displacement) % lat.L
    assert lat.index(end) == tr.end
    np.testing.assert_allclose(xi_contraction(pair_empirical(tr)), mean_velocity(tr), atol=1e-15)
