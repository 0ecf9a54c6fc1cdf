import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ising_poisson.lattice import ball_offsets, build_lattice
from ising_poisson.patterns import (
    EnumerationLimitError,
    LocalPattern,
    Potentials,
    SpinState,
    config_log_weight,
    config_stats,
    connection,
    count_occurrences,
    count_upper,
    format_pattern,
    log_probability_gap,
    log_probability_gap_bruteforce,
    log_weight,
    maximality_probability,
    parse_pattern,
    pattern_report,
    pattern_stats,
    probability_gap,
)


def brute_stats(positives, V, adjacent):
    pos = list(positives)
    edges = sum(1 for u, v in itertools.combinations(pos, 2) if adjacent(u, v))
    return len(pos), V * len(pos) - 2 * edges


def test_null_pattern_has_weight_one():
    L = build_lattice(8, 2)
    eta = LocalPattern.null(1, 2)
    assert pattern_stats(eta, L) == (0, 0)
    assert log_weight(0, 0, Potentials(-1.3, 0.7)) == 0.0


@pytest.mark.parametrize("d, p", [(1, 1), (2, 1), (2, "inf"), (3, 1)])
def test_single_positive_has_perimeter_V(d, p):
    L = build_lattice(8, d, p)
    assert pattern_stats(LocalPattern.single_plus(1, d, p), L) == (1, L.V)


def test_ten_king_cells_with_eleven_contacts():
    L = build_lattice(20, 2, "inf")
    cells = [(i, 0) for i in range(8)] + [(0, 1), (7, 1)]
    cheb = lambda u, v: max(abs(u[0] - v[0]), abs(u[1] - v[1])) == 1
    assert brute_stats(cells, 8, cheb) == (10, 58)
    assert config_stats(L, cells) == (10, 58)


def test_log_weight_example_schedule_value():
    a = -math.log(8) / 3
    b = math.log(8) / 12
    assert log_weight(1, 2, Potentials(a, b)) == pytest.approx(math.log(1 / 8), abs=1e-14)
    assert log_weight(1, 4, Potentials(-1.0, 0.3)) == pytest.approx(2 * -1.0 - 2 * 0.3 * 4)


def test_connection_examples():
    L1 = build_lattice(8, 1)
    assert connection({0: 1}, {1: 1}, L1) == 1
    _, g0 = config_stats(L1, [0])
    _, g1 = config_stats(L1, [1])
    _, g01 = config_stats(L1, [0, 1])
    assert g01 + 2 * 1 == g0 + g1
    L2 = build_lattice(8, 2)
    assert connection({(0, 0): 1}, {(1, 0): 1, (0, 1): 1}, L2) == 2
    assert connection({(0, 0): 1}, {(2, 0): 1, (0, 3): 1}, L2) == 0
    with pytest.raises(ValueError):
        connection({0: 1}, {0: -1}, L1)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(9, 1, 1), (6, 2, 1), (6, 2, "inf")]), st.data())
def test_weight_factorizes_through_connection(geom, data):
    L = build_lattice(*geom)
    verts = data.draw(st.lists(st.integers(0, L.num_sites - 1), min_size=2, max_size=10, unique=True))
    cut = data.draw(st.integers(1, len(verts) - 1))
    signs = data.draw(st.lists(st.sampled_from([-1, 1]), min_size=len(verts), max_size=len(verts)))
    za = dict(zip(verts[:cut], signs[:cut]))
    zb = dict(zip(verts[cut:], signs[cut:]))
    pot = Potentials(data.draw(st.floats(-3, 0)), data.draw(st.floats(0, 2)))
    pos = lambda z: [v for v, s in z.items() if s == 1]
    lhs = config_log_weight(L, pos(za) + pos(zb), pot)
    rhs = config_log_weight(L, pos(za), pot) + config_log_weight(L, pos(zb), pot) + 4 * pot.b * connection(za, zb, L)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_gap_of_clean_pattern_is_single_vertex_cost():
    L = build_lattice(10, 1)
    pot = Potentials(-1.0, 0.4)
    eta = LocalPattern.single_plus(2, 1)
    assert eta.clean
    assert log_probability_gap(eta, pot, L) == pytest.approx(2 * pot.a - 2 * pot.b * L.V)


def test_gap_of_edge_pattern():
    L = build_lattice(8, 1)
    pot = Potentials(-1.2, 0.5)
    eta = LocalPattern.create([(1,)], 1, 1)
    assert log_probability_gap_bruteforce(eta, pot, L) == pytest.approx(2 * pot.a)
    assert log_probability_gap(eta, pot, L) == pytest.approx(2 * pot.a)


def test_gap_bruteforce_examples():
    pot = Potentials(-0.9, 0.35)
    L1 = build_lattice(8, 1)
    assert log_probability_gap_bruteforce(LocalPattern.single_plus(1, 1), pot, L1) == pytest.approx(2 * pot.a - 4 * pot.b)
    L2 = build_lattice(8, 2)
    assert log_probability_gap_bruteforce(LocalPattern.null(1, 2), pot, L2) == pytest.approx(2 * pot.a - 2 * pot.b * 4)


def test_gap_closed_form_on_random_square_patterns():
    L = build_lattice(8, 2)
    rng = np.random.default_rng(5)
    offs = list(ball_offsets(2, 1, 1, 1))
    for _ in range(20):
        pos = [o for o in offs if rng.random() < 0.5]
        eta = LocalPattern.create(pos, 1, 2)
        pot = Potentials(float(rng.uniform(-3, 0)), float(rng.uniform(0, 1.5)))
        assert log_probability_gap(eta, pot, L) == pytest.approx(log_probability_gap_bruteforce(eta, pot, L), abs=1e-12)


def test_gap_decreases_with_field():
    L = build_lattice(8, 2, "inf")
    eta = LocalPattern.create([(0, 0), (1, 1)], 1, 2, "inf")
    gaps = [probability_gap(eta, Potentials(a, 0.3), L) for a in (-0.5, -1, -2, -4)]
    assert all(q < p for p, q in zip(gaps, gaps[1:]))


def test_verified_gap_agrees_with_bruteforce_on_wrapped_torus():
    L = build_lattice(4, 2)
    pot = Potentials(-1.0, 1.0)
    for code in range(32):
        offs = list(ball_offsets(2, 1, 1, 1))
        eta = LocalPattern.create([o for j, o in enumerate(offs) if code >> j & 1], 1, 2)
        assert probability_gap(eta, pot, L, verify=True) == pytest.approx(
            math.exp(log_probability_gap_bruteforce(eta, pot, L)), rel=1e-12
        )


def test_maximality_of_single_positive():
    L = build_lattice(8, 1)
    pot = Potentials(-0.8, 0.3)
    eta = LocalPattern.single_plus(1, 1)
    # supersets {0,1}, {0,-1}, {-1,0,1}: ratios e^{2a}, e^{2a}, e^{4a}
    assert maximality_probability(eta, pot, L) == pytest.approx(math.exp(2 * pot.a))


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([(8, 1, 1), (8, 2, 1), (8, 2, "inf")]), st.data())
def test_maximality_bounds(geom, data):
    L = build_lattice(*geom)
    offs = list(ball_offsets(L.d, L.p, 1, 1))
    chosen = data.draw(st.lists(st.sampled_from(offs), unique=True, max_size=len(offs) - 1))
    eta = LocalPattern.create(chosen, 1, L.d, L.p)
    a = data.draw(st.floats(-3, -0.1))
    b = data.draw(st.floats(0, 1))
    theta = maximality_probability(eta, Potentials(a, b), L)
    assert theta <= math.exp(2 * a + 2 * L.V * b) * (1 + 1e-12)
    assert maximality_probability(eta, Potentials(a, 0.0), L) == pytest.approx(math.exp(2 * a))


def test_pattern_report_fields():
    L = build_lattice(8, 1)
    rep = pattern_report(LocalPattern.single_plus(1, 1), Potentials(-1.0, 0.2), L)
    assert (rep.k, rep.gamma, rep.clean) == (1, 2, True)
    assert rep.log_weight == pytest.approx(-2.8)


def test_counts_on_small_states():
    L = build_lattice(8, 1)
    eta = LocalPattern.single_plus(1, 1)
    assert count_occurrences(SpinState.all_minus(8), eta, L) == 0
    assert count_occurrences(SpinState.all_minus(8), LocalPattern.null(1, 1), L) == 8
    assert count_upper(SpinState.all_plus(8), eta, L) == 8
    one = SpinState.from_positives(L, [0])
    assert count_occurrences(one, eta, L) == 1
    two = SpinState.from_positives(L, [0, 1])
    assert (count_occurrences(two, eta, L), count_upper(two, eta, L)) == (0, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from([-1, 1]), min_size=9, max_size=9), st.data())
def test_upper_count_dominates_exact_count(signs, data):
    offs = list(ball_offsets(2, 1, 1, 1))
    chosen = data.draw(st.lists(st.sampled_from(offs), unique=True))
    eta = LocalPattern.create(chosen, 1, 2, 1)
    L = build_lattice(3, 2, 1)
    assert count_upper(signs, eta, L) >= count_occurrences(signs, eta, L)


def test_batch_counts_match_single():
    L = build_lattice(6, 1)
    eta = LocalPattern.create([(0,), (1,)], 1, 1)
    states = np.where(np.random.default_rng(0).random((20, 6)) < 0.5, 1, -1)
    assert list(count_occurrences(states, eta, L)) == [count_occurrences(s, eta, L) for s in states]


def test_pattern_file_round_trip():
    text = "# comment\n2 inf 1 1\n\n0 0   # centre\n1 -1\n"
    eta = parse_pattern(text)
    assert eta.positives == frozenset({(0, 0), (1, -1)})
    assert parse_pattern(format_pattern(eta)) == eta


@pytest.mark.parametrize(
    "text",
    [
        "",
        "1 1 1\n",
        "1 1 1 1\n0\n0\n",
        "1 1 1 1\n2\n",
        "2 1 1 1\n1 1\n",
        "2 1 1 1\n1\n",
        "1 0 1 1\n0\n",
        "1 1 1 1\nx\n",
    ],
)
def test_pattern_file_errors(text):
    with pytest.raises(ValueError):
        parse_pattern(text)


def test_negative_pair_potential_rejected():
    with pytest.raises(ValueError):
        Potentials(-1.0, -0.1)
    with pytest.raises(ValueError):
        Potentials(math.nan, 0.0)


def test_enumeration_guard():
    # the r = 4 king ball has 40 boundary vertices
    L = build_lattice(11, 2, "inf")
    eta = LocalPattern.single_plus(4, 2, "inf")
    with pytest.raises(EnumerationLimitError):
        log_probability_gap_bruteforce(eta, Potentials(-1.0, 0.1), L)
    assert math.isfinite(log_probability_gap(eta, Potentials(-1.0, 0.1), L))
