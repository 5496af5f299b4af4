import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import torus
from loopsoup.errors import WrappingLoopError
from loopsoup.loops import is_nonbacktracking_loop, reverse_loop
from loopsoup.sampler import SoupSampler, occupation
from loopsoup.spin import (Patch, reflection_gram, spin_field, spins_from_fields, subset_family, winding_number,
                           winding_parity)
from loopsoup.transfer import build_transfer

PATCH = Patch.box(8, 8, 0.3)
SAMPLER = SoupSampler(build_transfer(PATCH.graph, allow_boundary=True), 40)


def _loops(n_seeds=40):
    out = []
    for seed in range(n_seeds):
        out.extend(SAMPLER.sample(seed).loops)
    return out


LOOPS = _loops()


def _square(patch, i, j):
    """Counterclockwise unit square with lower-left corner (i, j)."""
    g = patch.graph
    w = patch.width
    v = [j * w + i, j * w + i + 1, (j + 1) * w + i + 1, (j + 1) * w + i]
    return tuple(g.directed_index(v[k], v[(k + 1) % 4]) for k in range(4))


def test_unit_square_winds_once_around_its_face():
    sq = _square(PATCH, 2, 3)
    assert is_nonbacktracking_loop(PATCH.graph, sq)
    assert winding_number(PATCH, sq, (2, 3)) == 1
    assert winding_number(PATCH, reverse_loop(sq), (2, 3)) == -1
    assert winding_number(PATCH, sq, (3, 3)) == 0
    assert winding_number(PATCH, sq, (1, 3)) == 0


def test_sampled_loops_exist():
    assert len(LOOPS) > 20


@given(st.data())
def test_winding_parity_invariant_under_reroot_and_reversal(data):
    seq = data.draw(st.sampled_from(LOOPS))
    r = data.draw(st.integers(0, len(seq) - 1))
    moved = seq[r:] + seq[:r]
    if data.draw(st.booleans()):
        moved = reverse_loop(moved)
    face = (data.draw(st.integers(0, 6)), data.draw(st.integers(0, 6)))
    assert winding_parity(PATCH, moved, face) == winding_parity(PATCH, seq, face)
    assert abs(winding_number(PATCH, moved, face)) == abs(winding_number(PATCH, seq, face))


def test_winding_and_crossing_routes_agree():
    checked = 0
    for seed in range(200):
        s = SAMPLER.sample(seed)
        if not s.loops:
            continue
        sf = spin_field(s, PATCH)
        fields = occupation(s).N[None, :]
        np.testing.assert_array_equal(sf.spins, spins_from_fields(PATCH, fields)[0])
        checked += int((sf.spins == -1).any())
    assert checked > 0


def test_spins_are_signs():
    fields = np.random.default_rng(0).integers(0, 3, size=(50, PATCH.graph.n_edges))
    sig = spins_from_fields(PATCH, fields)
    assert sig.shape == (50, 7, 7)
    assert set(np.unique(sig)) <= {-1, 1}


def test_wrapping_loop_rejected_on_torus():
    g = torus(2, 4, 0.1)
    patch = Patch(g, 4, 4, period=4)
    straight = (0, 16, 32, 48)  # direction-0 edges from vertices 0, 4, 8, 12
    assert is_nonbacktracking_loop(g, straight)
    with pytest.raises(WrappingLoopError):
        winding_number(patch, straight, (0, 0))


def test_subset_family_size():
    fam = subset_family((9, 10, 11), 2)
    assert len(fam) == 7 and fam[0] == ()


def test_gram_at_zero_weight_is_all_ones():
    patch = Patch.box(20, 20, 0.1)
    fields = np.zeros((100, patch.graph.n_edges), dtype=np.int64)
    rep = reflection_gram(fields, patch, 9)
    np.testing.assert_array_equal(rep.matrix, np.ones((7, 7)))
    assert rep.symmetric and rep.positive


def test_gram_rejects_off_centre_line():
    patch = Patch.box(20, 20, 0.1)
    with pytest.raises(ValueError):
        reflection_gram(np.zeros((2, patch.graph.n_edges), dtype=np.int64), patch, 10)


def test_reflection_gram_small_run():
    patch = Patch.box(10, 10, 0.25)
    s = SoupSampler(build_transfer(patch.graph, allow_boundary=True), 40)
    from loopsoup.sampler import occupation_batches

    rep = reflection_gram((b.fields for b in occupation_batches(s, 40_000, 1)), patch, 4)
    assert rep.symmetric
    assert rep.positive
