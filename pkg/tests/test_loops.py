import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import torus
from loopsoup.errors import EnumerationLimitError
from loopsoup.graph import complete_graph, cycle_graph
from loopsoup.loops import (canonical, closed_walk_sums, enumerate_loops, is_nonbacktracking_loop, multiplicity,
                            reverse_loop, rooted_counts, smallest_period, tail_bound, truncated_first_return,
                            truncated_log_partition, truncated_two_point)
from loopsoup.observables import first_return, two_point_green
from loopsoup.transfer import build_transfer, green, log_partition_det

sequences = st.lists(st.integers(0, 11), min_size=1, max_size=10)


@given(sequences, st.integers(0, 20))
def test_canonical_invariant_under_rotation(seq, r):
    r %= len(seq)
    assert canonical(seq[r:] + seq[:r]) == canonical(seq)


@given(sequences)
def test_canonical_invariant_under_reversal(seq):
    assert canonical(reverse_loop(seq)) == canonical(seq)
    assert reverse_loop(reverse_loop(seq)) == tuple(seq)


@given(sequences, st.integers(1, 4))
def test_multiplicity_of_repeats(seq, k):
    base = multiplicity(seq)
    assert multiplicity(seq * k) == base * k
    assert smallest_period(seq * k) * multiplicity(seq * k) == len(seq) * k


def _brute_loops(g, lmax):
    """All closed non-backtracking directed-edge sequences, canonicalized (exhaustive product)."""
    found = set()
    for m in range(1, lmax + 1):
        for seq in itertools.product(range(g.n_directed), repeat=m):
            if is_nonbacktracking_loop(g, seq):
                found.add(canonical(seq))
    return found


def test_three_cycle_loops_are_windings():
    loops = enumerate_loops(cycle_graph(3, 0.2), 9)
    assert [lp.length for lp in loops] == [3, 6, 9]
    assert [lp.multiplicity for lp in loops] == [1, 2, 3]


def test_enumeration_against_exhaustive_oracle():
    g = complete_graph(4, 0.15)
    got = {lp.canonical for lp in enumerate_loops(g, 5)}
    assert got == _brute_loops(g, 5)
    # K4: 4 triangles and 3 squares
    lengths = sorted(len(c) for c in got)
    assert lengths == [3] * 4 + [4] * 3


def test_rooted_counts_equal_traces(k4):
    lmax = 10
    L = build_transfer(k4).dense
    traces = [np.trace(np.linalg.matrix_power(L, n)) for n in range(lmax + 1)]
    rc = rooted_counts(enumerate_loops(k4, lmax), lmax)
    np.testing.assert_allclose(rc[1:], traces[1:], rtol=1e-12, atol=1e-18)


def test_closed_walk_sums_equal_traces():
    g = torus(2, 3, 0.1)
    L = build_transfer(g).dense
    c = closed_walk_sums(g, 9)
    for m in range(1, 10):
        assert c[m] == pytest.approx(np.trace(np.linalg.matrix_power(L, m)), rel=1e-12, abs=1e-20)


def test_loop_and_walk_methods_agree(k4):
    a = truncated_log_partition(k4, 9, method="loops")
    b = truncated_log_partition(k4, 9, method="walks")
    assert a == pytest.approx(b, rel=1e-13)


def test_three_cycle_series():
    x = 0.2
    got = truncated_log_partition(cycle_graph(3, x), 30)
    want = sum((x**3) ** k / k for k in range(1, 11))
    assert got == pytest.approx(want, rel=1e-14)
    assert abs(got + math.log(1 - x**3)) < tail_bound(cycle_graph(3, x), 30) + 1e-16  # rounding dominates


def test_truncation_within_tail_bound(k4):
    exact = log_partition_det(build_transfer(k4))
    for lmax in (6, 10, 14):
        assert abs(truncated_log_partition(k4, lmax) - exact) <= tail_bound(k4, lmax)


def test_two_point_loop_and_walk_methods_agree(k4):
    for e, f in ((0, 1), (0, 5)):
        a = truncated_two_point(k4, e, f, 8, method="loops")
        b = truncated_two_point(k4, e, f, 8, method="walks")
        assert a == pytest.approx(b, rel=1e-12)


def test_two_point_converges_to_green(k4):
    G = green(build_transfer(k4))
    assert truncated_two_point(k4, 0, 5, 20) == pytest.approx(two_point_green(G, 0, 5), abs=1e-11)


def test_first_return_oracle(k4):
    fr = first_return(build_transfer(k4), 0)
    assert truncated_first_return(k4, 0, 0, [1], 24) == pytest.approx(fr.F_plus, abs=1e-14)
    assert truncated_first_return(k4, 0, 1, [], 24) == pytest.approx(fr.Fp_plus, abs=1e-14)


def test_enumeration_cap():
    with pytest.raises(EnumerationLimitError):
        enumerate_loops(torus(2, 3, 0.1), 14, cap=1000)


def test_lmax_must_be_positive(k4):
    with pytest.raises(ValueError):
        truncated_log_partition(k4, 0)
