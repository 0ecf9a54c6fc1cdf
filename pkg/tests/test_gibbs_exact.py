import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ising_poisson.gibbs_exact import (
    exact_conditional,
    exact_conditional_table,
    exact_joint_law,
    exact_law,
    fkg_covariance,
    is_increasing,
    local_energy,
    log_partition,
    markov_violation,
    pair_sum_upper,
    state_log_weight,
    upper_indicator,
    weight_ratio_conditional,
    weight_ratio_table,
)
from ising_poisson.lattice import build_lattice
from ising_poisson.patterns import (
    EnumerationLimitError,
    LocalPattern,
    Potentials,
    count_occurrences,
    pattern_log_weight,
)


def brute_law(lattice, pot, pattern, upper=False):
    """Independent oracle: loop over sign tuples with the Hamiltonian written out edge by edge."""
    from ising_poisson.patterns import count_upper

    edges = [(int(u), int(v)) for u, v in lattice.edges]
    weights, counts = [], []
    for signs in itertools.product((-1, 1), repeat=lattice.num_sites):
        h = pot.a * sum(signs) + pot.b * sum(signs[u] * signs[v] for u, v in edges)
        weights.append(h)
        counts.append((count_upper if upper else count_occurrences)(list(signs), pattern, lattice))
    w = np.exp(np.array(weights) - max(weights))
    pmf = np.bincount(counts, weights=w, minlength=lattice.num_sites + 1)
    return pmf / pmf.sum(), max(weights) + math.log(w.sum())


def test_state_log_weight_examples():
    L = build_lattice(8, 1)
    pot = Potentials(-0.7, 0.4)
    assert state_log_weight([-1] * 8, L, pot) == pytest.approx(-8 * pot.a + 8 * pot.b)
    assert state_log_weight([1, -1] * 4, L, Potentials(0.0, 0.0)) == 0.0
    L2 = build_lattice(4, 2)
    checker = [1 if (i + j) % 2 else -1 for i in range(4) for j in range(4)]
    assert state_log_weight(checker, L2, Potentials(0.0, 1.0)) == pytest.approx(-32)


def test_three_site_uniform_law():
    L = build_lattice(3, 1)
    pot = Potentials(0.0, 0.0)
    law = exact_law(L, pot, LocalPattern.single_plus(1, 1))
    assert law.pmf[:2] == pytest.approx([5 / 8, 3 / 8])
    assert law.mean == pytest.approx(3 / 8)
    assert law.log_Z == pytest.approx(3 * math.log(2))
    assert exact_law(L, pot, LocalPattern.single_plus(1, 1), mode="upper").mean == pytest.approx(1.5)


@pytest.mark.parametrize("n, d, p", [(8, 2, 1), (3, 2, "inf"), (10, 1, 1)])
def test_uniform_partition_function(n, d, p):
    if n**d > 16:
        n = 4
    L = build_lattice(n, d, p)
    assert log_partition(L, Potentials(0.0, 0.0)) == pytest.approx(L.num_sites * math.log(2))


@pytest.mark.parametrize("geom", [(6, 1, 1), (3, 2, 1), (3, 2, "inf")])
@pytest.mark.parametrize("upper", [False, True])
def test_exact_law_matches_bruteforce(geom, upper):
    L = build_lattice(*geom)
    pot = Potentials(-0.6, 0.45)
    eta = LocalPattern.single_plus(1, L.d, L.p)
    pmf, log_z = brute_law(L, pot, eta, upper)
    law = exact_law(L, pot, eta, mode="upper" if upper else "exact")
    assert law.pmf == pytest.approx(pmf, abs=1e-13)
    assert law.log_Z == pytest.approx(log_z, rel=1e-13)


def test_joint_law_marginals_and_threads():
    L = build_lattice(14, 1)
    pot = Potentials(-1.0, 0.3)
    eta = LocalPattern.create([(0,), (1,)], 1, 1)
    j1 = exact_joint_law(L, pot, eta, threads=1)
    j4 = exact_joint_law(L, pot, eta, threads=4)
    assert np.array_equal(j1.joint, j4.joint) and j1.log_Z == j4.log_Z
    assert np.allclose(j1.marginal("exact").pmf, exact_law(L, pot, eta).pmf, rtol=1e-13, atol=1e-15)
    # the exact count never exceeds the upper count
    assert np.all(np.tril(j1.joint, -1) == 0.0)


def test_conditional_matches_weight_ratio():
    L = build_lattice(8, 1)
    pot = Potentials(-1.0, 0.3)
    eta = LocalPattern.single_plus(1, 1)
    sigma0 = [-1, -1]
    lw = np.array([pattern_log_weight(LocalPattern.create([o for j, o in enumerate(eta.ball_offsets) if c >> j & 1], 1, 1), pot, L) for c in range(8)])
    expected = math.exp(pattern_log_weight(eta, pot, L)) / np.exp(lw).sum()
    assert exact_conditional(L, pot, eta, 0, sigma0) == pytest.approx(expected, rel=1e-12)
    assert weight_ratio_conditional(eta, sigma0, pot, L) == pytest.approx(expected, rel=1e-12)


def test_conditional_at_zero_coupling_factorizes():
    L = build_lattice(8, 1)
    a = -0.8
    table = exact_conditional_table(L, Potentials(a, 0.0), 1)
    p_plus = math.exp(a) / (math.exp(a) + math.exp(-a))
    eta = LocalPattern.create([(0,), (1,)], 1, 1)
    assert table.prob(eta, [1, -1], L) == pytest.approx(p_plus**2 * (1 - p_plus), rel=1e-12)


@pytest.mark.parametrize("geom", [(8, 1, 1), (4, 2, 1)])
def test_conditional_tables(geom):
    L = build_lattice(*geom)
    pot = Potentials(-1.5, 0.6)
    exact = exact_conditional_table(L, pot, 1)
    ratio = weight_ratio_table(L, pot, 1)
    assert np.allclose(exact.probs.sum(axis=0), 1.0, atol=1e-13)
    assert np.allclose(exact.probs, ratio.probs, rtol=1e-10, atol=0)
    w = np.exp(np.array([pattern_log_weight(LocalPattern.create([o for j, o in enumerate(exact.ball.offsets) if c >> j & 1], 1, L.d), pot, L) for c in range(1 << exact.ball.beta)]))
    assert np.all(exact.probs[:, 0] <= w * (1 + 1e-12))


def test_markov_property():
    assert markov_violation(build_lattice(8, 1), Potentials(-0.5, 0.9), 1) < 1e-12
    assert markov_violation(build_lattice(4, 2), Potentials(-0.5, 0.9), 0) < 1e-12


def test_local_energy_examples():
    L = build_lattice(8, 2)
    pot = Potentials(-0.4, 0.7)
    x = (2, 3)
    closure = [x] + list(L.neighbors(x))
    assert local_energy([x], {v: 1 for v in closure}, pot, L) == pytest.approx(pot.a + pot.b * L.V)
    zeta = {v: s for v, s in zip(closure, [1, -1, 1, 1, -1])}
    assert local_energy([x], zeta, Potentials(pot.a, 0.0), L) == pytest.approx(pot.a)
    with pytest.raises(ValueError):
        local_energy([x], {x: 1}, pot, L)


def test_increasing_indicator_detection():
    assert is_increasing(upper_indicator(0b101), 6)
    assert not is_increasing(lambda s: 1 - upper_indicator(0b1)(s), 6)


def test_fkg_examples():
    L = build_lattice(8, 1)
    f = upper_indicator(1 << 2)
    assert fkg_covariance(L, Potentials(-0.5, 0.5), f, f) >= 0
    assert abs(fkg_covariance(L, Potentials(-0.5, 0.0), upper_indicator(0b11), upper_indicator(0b110000))) < 1e-12
    assert fkg_covariance(L, Potentials(-1.0, 0.7), upper_indicator(1), upper_indicator(1 << 4)) > 0
    with pytest.raises(ValueError):
        fkg_covariance(L, Potentials(-0.5, 0.5), lambda s: -f(s), f)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.integers(1, 255), min_size=1, max_size=3),
    st.lists(st.integers(1, 255), min_size=1, max_size=3),
    st.floats(-2, 1),
    st.floats(0, 1.5),
)
def test_fkg_on_random_increasing_events(fa, ga, a, b):
    L = build_lattice(8, 1)
    f = lambda s: np.maximum.reduce([upper_indicator(m)(s) for m in fa])
    g = lambda s: np.maximum.reduce([upper_indicator(m)(s) for m in ga])
    assert fkg_covariance(L, Potentials(a, b), f, g, check_monotone=False) >= -1e-12


def test_second_factorial_moment_is_pair_sum():
    L = build_lattice(9, 1)
    pot = Potentials(-0.9, 0.35)
    eta = LocalPattern.create([(0,), (1,)], 1, 1)
    m2 = exact_law(L, pot, eta, mode="upper").second_factorial_moment
    assert m2 == pytest.approx(pair_sum_upper(L, pot, eta), rel=1e-12)


def test_enumeration_limit():
    with pytest.raises(EnumerationLimitError):
        exact_law(build_lattice(5, 2), Potentials(-1.0, 0.1), LocalPattern.single_plus(1, 2))
