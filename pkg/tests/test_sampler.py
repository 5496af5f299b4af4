import math

import numpy as np
import pytest

from conftest import torus
from loopsoup.errors import SupercriticalError
from loopsoup.graph import build_grid, complete_graph, cut_along, cycle_graph
from loopsoup.loops import is_nonbacktracking_loop
from loopsoup.observables import one_point_green, two_point_green
from loopsoup.sampler import (ArcSampler, SoupSampler, StreamingMoments, empirical_stats, enumerate_arcs, occupation,
                              occupation_batches, sample_arcs, sample_fields, sample_soup, spin_network_violations)
from loopsoup.transfer import build_transfer, green, log_partition_det


def test_same_seed_same_fields(k4):
    a = sample_fields(k4, None, 20, 5000, 11)
    b = sample_fields(k4, None, 20, 5000, 11)
    c = sample_fields(k4, None, 20, 5000, 12)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_workers_do_not_change_output(k4):
    s = SoupSampler(build_transfer(k4), 20)
    one = np.concatenate([b.fields for b in occupation_batches(s, 6000, 3, chunk=1000, workers=1)])
    two = np.concatenate([b.fields for b in occupation_batches(s, 6000, 3, chunk=1000, workers=2)])
    np.testing.assert_array_equal(one, two)


def test_mass_equals_truncated_log_partition():
    g = torus(2, 3, 0.1)
    s = SoupSampler(build_transfer(g), 20)
    assert s.mass == pytest.approx(log_partition_det(build_transfer(g)), abs=s.tail_bound() + 1e-15)


def test_three_cycle_void_probability(c3):
    # P(empty soup) = exp(-mass) = 1 - x^3 up to truncation
    fields = sample_fields(c3, None, 30, 200_000, 5)
    empty = np.mean(fields.sum(axis=1) == 0)
    p = 1 - 0.008
    assert abs(empty - p) < 4 * math.sqrt(p * (1 - p) / len(fields))
    assert np.all(fields % 1 == 0)
    # all three edges are covered equally by windings
    assert np.all(fields == fields[:, :1])


def test_fields_are_spin_networks():
    g = torus(2, 4, 0.25)
    fields = sample_fields(g, None, 30, 20_000, 1)
    assert spin_network_violations(g, fields).sum() == 0


def test_backtracking_mutant_breaks_spin_networks(k4):
    fields = sample_fields(k4, 0.3, 20, 20_000, 1, backtracking=True)
    assert spin_network_violations(k4, fields).sum() > 0


def test_sampled_loops_are_valid(k4):
    seen = 0
    for seed in range(60):
        s = sample_soup(k4, 0.3, 20, seed=seed)
        seen += s.n_loops
        for seq in s.loops:
            assert is_nonbacktracking_loop(k4, seq)
        field = occupation(s)
        assert field.N.sum() == sum(len(seq) * c for seq, c in s.loops.items())
    assert seen > 0


def test_means_and_covariance_against_green():
    g = complete_graph(4, 0.25)
    fields = sample_fields(g, None, 30, 300_000, 9)
    st = empirical_stats(fields)
    G = green(build_transfer(g))
    for e in range(g.n_edges):
        assert abs(st.mean[e] - one_point_green(G, e)) < 4 * st.mean_se[e]
    cov01 = two_point_green(G, 0, 1)
    assert abs(st.cov[0, 1] - cov01) < 4 * st.cov_se[0, 1]


def test_supercritical_sampler_rejected():
    with pytest.raises(SupercriticalError):
        SoupSampler(build_transfer(complete_graph(4, 0.6)), 10)


def test_streaming_moments_match_numpy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(1000, 3))
    m = StreamingMoments(3)
    for chunk in np.array_split(X, 7):
        m.update(chunk)
    np.testing.assert_allclose(m.mean, X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(m.cov, np.cov(X.T), atol=1e-12)


def test_arc_intensity_matches_enumeration():
    cg = cut_along(cycle_graph(5, 0.3), [0])
    arcs = enumerate_arcs(cg.graph, 12)
    s = ArcSampler(build_transfer(cg.graph, allow_boundary=True), 12)
    # on a cut cycle there is exactly one arc, running from one half-edge to the other
    assert len(arcs) == 1
    assert s.mass == pytest.approx(sum(arcs.values()), rel=1e-12)


def test_arc_sample_frequencies():
    g = build_grid(3, 3, 0.3)
    cg = cut_along(g, [0, 5])
    arcs = enumerate_arcs(cg.graph, 8)
    s = ArcSampler(build_transfer(cg.graph, allow_boundary=True), 8)
    assert s.mass == pytest.approx(sum(arcs.values()), rel=1e-12)
    counts = {}
    reps = 3000
    for seed in range(reps):
        for arc, c in s.sample(seed).arcs.items():
            counts[arc] = counts.get(arc, 0) + c
    assert set(counts) <= set(arcs)
    top = max(arcs, key=arcs.get)
    assert abs(counts.get(top, 0) / reps - arcs[top]) < 5 * math.sqrt(arcs[top] / reps)


def test_sample_arcs_without_boundary_is_empty(k4):
    cg = cut_along(k4, [])
    assert sample_arcs(cg, None, 10, 0).n_arcs == 0


def test_three_cycle_winding_classes_are_poisson(c3):
    # k-fold windings arrive as independent Poisson variables with mean x^{3k}/k per replica
    s = SoupSampler(build_transfer(c3), 12)
    reps = 400_000
    hist = sum(b.length_hist for b in occupation_batches(s, reps, 17))
    for k in (1, 2):
        mean = reps * 0.2 ** (3 * k) / k
        assert abs(hist[3 * k] - mean) < 4 * math.sqrt(mean)
    assert hist[1:3].sum() == 0 and hist[4:6].sum() == 0
