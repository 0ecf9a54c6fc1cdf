import math

import numpy as np
import pytest

from ising_poisson.gibbs_exact import exact_law
from ising_poisson.lattice import build_lattice
from ising_poisson.patterns import LocalPattern, Potentials, count_occurrences, count_upper
from ising_poisson.sampler import ChainConfig, chain_rng, detailed_balance_residual, heat_bath_probability, run_chain
from ising_poisson.stats import CountDistribution, batch_means_stderr, empirical_distribution, tv_distance


def test_heat_bath_probability_values():
    assert heat_bath_probability(3, Potentials(0.0, 0.0)) == 0.5
    assert heat_bath_probability(0, Potentials(-1.0, 0.0)) == pytest.approx(1 / (1 + math.e**2))
    assert heat_bath_probability(0, Potentials(-1.0, 0.0)) == pytest.approx(0.11920, abs=5e-6)
    assert heat_bath_probability(4, Potentials(0.0, 500.0)) == 1.0
    assert heat_bath_probability(-4, Potentials(0.0, 500.0)) == 0.0


def test_detailed_balance():
    for geom in ((8, 1, 1), (4, 2, 1), (5, 2, "inf")):
        assert detailed_balance_residual(build_lattice(*geom), Potentials(-0.7, 0.45), trials=300) < 1e-10


def test_config_validation():
    with pytest.raises(ValueError):
        ChainConfig(sweeps=100, burn_in=100)
    with pytest.raises(ValueError):
        ChainConfig(sweeps=100, thin=0)
    with pytest.raises(ValueError):
        ChainConfig(sweeps=100, init="checkerboard")
    assert ChainConfig(sweeps=100, burn_in=10, thin=4).retained == 22
    assert ChainConfig(sweeps=5000).resolve(build_lattice(100, 1)).burn_in == 2000


def test_chains_are_reproducible_and_thread_independent():
    L = build_lattice(6, 1)
    eta = LocalPattern.single_plus(1, 1)
    cfg = ChainConfig(sweeps=600, burn_in=100, thin=2, chains=3, seed=11, init="uniform-random")
    a = run_chain(L, Potentials(-0.5, 0.3), eta, cfg)
    b = run_chain(L, Potentials(-0.5, 0.3), eta, cfg, threads=3)
    assert a.samples.shape == (3, 250, 2)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples[0], a.samples[1])
    assert np.all(a.upper >= a.x)


def test_independent_spins_at_zero_coupling():
    a = -0.6
    L = build_lattice(5, 1)
    eta = LocalPattern.null(0, 1)
    # the upper count of the radius-0 single-plus pattern is the number of plus sites
    plus = LocalPattern.single_plus(0, 1)
    res = run_chain(L, Potentials(a, 0.0), plus, ChainConfig(sweeps=11_000, burn_in=1000, seed=4))
    frac = res.upper / L.num_sites
    p = math.exp(2 * a) / (1 + math.exp(2 * a))
    se = math.sqrt(p * (1 - p) / (L.num_sites * len(frac)))
    assert abs(frac.mean() - p) < 4 * se
    assert eta.is_null


def test_sampler_matches_exact_law():
    L = build_lattice(3, 2)
    pot = Potentials(-0.8, 0.25)
    eta = LocalPattern.single_plus(1, 2)
    exact = exact_law(L, pot, eta)
    res = run_chain(L, pot, eta, ChainConfig(sweeps=41_000, burn_in=1000, seed=9))
    emp = empirical_distribution(res.x)
    assert tv_distance(emp, CountDistribution.exact(exact.pmf)) < 0.02
    assert abs(emp.mean - exact.mean) < 4 * batch_means_stderr(res.x)


def test_recorded_counts_are_pattern_counts():
    # replay one chain in numpy and compare the recorded counts
    L = build_lattice(5, 1)
    pot = Potentials(-0.4, 0.6)
    eta = LocalPattern.create([(0,), (1,)], 1, 1)
    cfg = ChainConfig(sweeps=30, burn_in=5, seed=21)
    res = run_chain(L, pot, eta, cfg)
    rng = chain_rng(21, 0)
    spins = -np.ones(5, dtype=int)
    xs, us = [], []
    for sweep in range(30):
        u = rng.random(5)
        for i in range(5):
            h = spins[L.neighbor_table[i]].sum()
            spins[i] = 1 if u[i] < heat_bath_probability(h, pot) else -1
        if sweep >= 5:
            xs.append(count_occurrences(spins, eta, L))
            us.append(count_upper(spins, eta, L))
    assert list(res.x) == xs and list(res.upper) == us
