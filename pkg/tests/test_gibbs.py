import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import torus
from loopsoup.gibbs import (BoundaryCondition, brute_force_partition, gibbs_fit_test, hamiltonian, local_states,
                            log_weight, markov_independence_test, pairing_count, pairing_count_bruteforce,
                            side_statistics, trivalent_pairing)
from loopsoup.graph import complete_graph, cut_along, cycle_graph
from loopsoup.sampler import sample_fields
from loopsoup.transfer import build_transfer, log_partition_det

K4 = complete_graph(4, 0.15)


@given(st.lists(st.integers(0, 4), min_size=1, max_size=4).filter(lambda v: sum(v) <= 10))
def test_pairing_count_matches_exhaustive_oracle(occ):
    assert pairing_count(occ) == pairing_count_bruteforce(occ)


@given(st.lists(st.integers(0, 5), min_size=2, max_size=5))
def test_pairing_count_symmetric(occ):
    assert pairing_count(occ) == pairing_count(list(reversed(occ)))


def test_pairing_count_examples():
    assert pairing_count([1, 1]) == 1
    assert pairing_count([2, 0]) == 0
    assert pairing_count([1, 1, 1, 1]) == 3
    assert pairing_count([2, 2]) == 2
    assert pairing_count([1, 2]) == 0  # odd total


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6))
def test_trivalent_closed_form(a, b, c):
    assert trivalent_pairing(a, b, c) == pairing_count([a, b, c])


def test_pairing_count_rejects_negative():
    with pytest.raises(ValueError):
        pairing_count([1, -1])


@given(st.lists(st.integers(0, 3), min_size=6, max_size=6))
def test_hamiltonian_is_minus_log_weight(N):
    h = hamiltonian(K4, N)
    lw = log_weight(K4, N)
    if math.isinf(h):
        assert lw == -math.inf
    else:
        assert h == pytest.approx(-lw, abs=1e-12)


def test_invalid_field_has_infinite_energy(k4):
    assert hamiltonian(k4, [1, 0, 0, 0, 0, 0]) == math.inf


def test_local_states_skip_pendant_vertices():
    cg = cut_along(cycle_graph(4, 0.2), [0])
    states = local_states(cg.graph, np.ones(cg.graph.n_edges, dtype=int))
    assert len(states) == 4  # the two fresh pendant vertices are excluded


def test_boundary_condition_validation():
    cg = cut_along(cycle_graph(4, 0.2), [0])
    bd = sorted(cg.graph.boundary)
    BoundaryCondition(cg.graph, {k: 1 for k in bd})
    with pytest.raises(ValueError):
        BoundaryCondition(cg.graph, {bd[0]: 1})


def test_brute_force_partition_on_cycle():
    # only the windings survive: Z = sum_k C(k) x^{4k}/k!^4 with C(k) = k!^4 per winding count
    g = cycle_graph(4, 0.2)
    bf = brute_force_partition(g, nmax=6)
    assert bf == pytest.approx(sum(0.2 ** (4 * k) for k in range(7)), rel=1e-14)
    z = math.exp(log_partition_det(build_transfer(g)))
    assert bf <= z


def test_brute_force_partition_k4(k4):
    bf = brute_force_partition(k4, nmax=4)
    assert bf == pytest.approx(math.exp(log_partition_det(build_transfer(k4))), abs=1e-6)


def test_gibbs_fit_accepts_sampler_and_rejects_mutant(k4):
    good = gibbs_fit_test(sample_fields(k4, None, 20, 100_000, 21), k4)
    bad = gibbs_fit_test(sample_fields(k4, None, 20, 100_000, 21, backtracking=True), k4)
    assert good.p_value > 0.001
    assert bad.p_value < 1e-6


def test_side_statistics_split_ring():
    g = torus(2, 4, 0.0)
    ring = [0, 2, 4, 6, 16, 18, 20, 22]
    S, groups = side_statistics(g, ring, np.ones((3, g.n_edges), dtype=int))
    assert len(groups) == 2
    assert sum(len(grp) for grp in groups) == g.n_edges - len(ring)


@pytest.mark.slow
def test_markov_conditional_test_at_larger_weight():
    g = torus(2, 4, 0.0)
    ring = [0, 2, 4, 6, 16, 18, 20, 22]
    fields = sample_fields(g, 0.25, 20, 400_000, 31)
    rep = markov_independence_test(fields, g, ring)
    assert rep.classes_tested > 5
    assert rep.p_value > 0.01


def test_markov_requires_separating_cut():
    g = torus(2, 4, 0.0)
    with pytest.raises(ValueError):
        markov_independence_test(np.zeros((10, g.n_edges), dtype=int), g, [0])
