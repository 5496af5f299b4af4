import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopsoup.errors import SupercriticalError
from loopsoup.graph import TorusSpec, build_torus
from loopsoup.torus import (block_det, block_det_dense, block_spectrum, critical_point, fourier_block,
                            free_energy_finite, free_energy_limit, modes, one_point_limit, one_point_torus,
                            singular_order, singular_scan, torus_log_partition)
from loopsoup.transfer import build_transfer, log_partition_det


def test_critical_point_and_order():
    assert critical_point(2) == pytest.approx(1 / 3)
    assert [singular_order(d) for d in (2, 3, 4)] == [1, 2, 2]


def test_zero_mode_spectrum_two_dimensions():
    # the zero-mode block of the square lattice has spectrum {3x, x, x, -x}
    x = 0.1
    spec = TorusSpec.homogeneous(2, 4, x)
    got = np.sort(block_spectrum(np.zeros(2, dtype=int), spec).real)
    np.testing.assert_allclose(got, [-x, x, x, 3 * x], atol=1e-14)


def test_fourier_block_shape():
    spec = TorusSpec.homogeneous(3, 3, 0.1)
    assert fourier_block(np.array([1, 0, 2]), spec).shape == (6, 6)


@given(st.integers(1, 3), st.integers(3, 5), st.floats(0.01, 0.95), st.data())
def test_block_det_closed_form(d, n, frac, data):
    spec = TorusSpec.homogeneous(d, n, frac * critical_point(d) if d > 1 else frac * 0.5)
    p = np.array(data.draw(st.lists(st.integers(0, n - 1), min_size=d, max_size=d)))
    assert block_det(p, spec) == pytest.approx(block_det_dense(p, spec), abs=1e-12)


def test_anisotropic_torus_against_determinant():
    spec = TorusSpec(2, 4, (0.1, 0.2))
    exact = log_partition_det(build_transfer(build_torus(spec)))
    assert torus_log_partition(spec) == pytest.approx(exact, abs=1e-13)


def test_torus_weight_check():
    with pytest.raises(SupercriticalError):
        torus_log_partition(TorusSpec.homogeneous(2, 4, 0.4))


def test_one_dimensional_free_energy_vanishes():
    # on a ring log Z = -log(1 - x^n), so the density tends to zero
    assert abs(free_energy_limit(1, 0.5).value) < 1e-12
    spec = TorusSpec.homogeneous(1, 7, 0.5)
    assert torus_log_partition(spec) == pytest.approx(-math.log(1 - 0.5**7), abs=1e-14)


@pytest.mark.parametrize("d,x", [(2, 0.2), (3, 0.1)])
def test_finite_free_energy_approaches_limit(d, x):
    lim = free_energy_limit(d, x).value
    gaps = [abs(free_energy_finite(TorusSpec.homogeneous(d, n, x)) - lim) for n in (4, 8, 12)]
    assert gaps[-1] < gaps[0]
    assert gaps[-1] < 1e-6


def test_free_energy_is_negative_and_decreasing():
    vals = [free_energy_limit(2, x).value for x in (0.05, 0.15, 0.25, 0.3)]
    assert all(v < 0 for v in vals)
    assert all(np.diff(vals) < 0)


def test_one_point_limit_matches_large_torus():
    x = 0.2
    lim = one_point_limit(2, x).value
    assert one_point_torus(TorusSpec.homogeneous(2, 30, x)) == pytest.approx(lim, abs=1e-10)


def test_one_point_limit_three_dimensions_bounded():
    xc = critical_point(3)
    vals = [one_point_limit(3, xc - e).value for e in (1e-2, 1e-3, 1e-4)]
    assert vals[0] < vals[1] < vals[2] < 0.05


def test_singular_scan_rejects_supercritical_grid():
    with pytest.raises(SupercriticalError):
        singular_scan(2, xs=[0.2, 0.34])


def test_singular_scan_rejects_points_too_close():
    with pytest.raises(ValueError):
        singular_scan(2, xs=[1 / 3 - 1e-6, 0.3, 0.31, 0.32])


def test_modes_count():
    assert modes(3, 4).shape == (64, 3)
