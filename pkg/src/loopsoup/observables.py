"""Occupation observables from the Green's function: one- and two-point functions,
first-return values, the generating function of ``N(e)`` and its chi-square limit.

An undirected edge ``e`` has orientations ``2e`` and ``2e + 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import SupercriticalError
from .graph import TorusSpec, build_torus
from .transfer import GreenFunction, TransferOperator, build_transfer, green, spectral_radius


def _green_matrix(obj) -> np.ndarray:
    if isinstance(obj, GreenFunction):
        return obj.matrix
    if isinstance(obj, TransferOperator):
        return green(obj).matrix
    return np.asarray(obj)


def one_point_green(obj, e: int, rtol: float = 1e-10) -> float:
    """``<N(e)> = G[e, e] - 1``; both orientations must agree."""
    G = _green_matrix(obj)
    a, b = G[2 * e, 2 * e] - 1.0, G[2 * e + 1, 2 * e + 1] - 1.0
    if not np.isclose(a, b, rtol=rtol, atol=1e-14):
        raise AssertionError(f"orientations of edge {e} disagree: {a!r} vs {b!r}")
    return float(a)


def two_point_green(obj, e: int, f: int) -> float:
    """Truncated two-point function ``<N(e) N(f)> - <N(e)><N(f)>`` for ``e != f``."""
    if e == f:
        raise ValueError("two-point formula needs distinct edges")
    G = _green_matrix(obj)
    E, Er = 2 * e, 2 * e + 1
    F, Fr = 2 * f, 2 * f + 1
    return 0.5 * float(
        G[E, F] * G[F, E] + G[Er, F] * G[F, Er] + G[Er, Fr] * G[Fr, Er] + G[E, Fr] * G[Fr, E]
    )


def decay_bound(d: int, x: float, dist: int) -> float:
    """Exponential bound ``2 (x(2d-1))^{2 dist} / (1 - x(2d-1))^2`` on the two-point function."""
    r = x * (2 * d - 1)
    if r >= 1:
        raise SupercriticalError(f"x = {x} is not below x_c = {1 / (2 * d - 1)}")
    return 2.0 * r ** (2 * dist) / (1.0 - r) ** 2


@dataclass(frozen=True)
class FirstReturnValues:
    edge: int
    F_plus: float  # loops rooted at 2e avoiding 2e+1
    F_minus: float  # loops rooted at 2e+1 avoiding 2e
    Fp_plus: float  # walks 2e -> 2e+1
    Fp_minus: float  # walks 2e+1 -> 2e

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.F_plus, self.Fp_plus], [self.Fp_minus, self.F_minus]])

    def char_poly(self, z):
        """``det(Id - z M)`` with ``M`` the 2x2 first-return matrix."""
        return (1 - z * self.F_plus) * (1 - z * self.F_minus) - z * z * self.Fp_plus * self.Fp_minus

    @property
    def denominator(self) -> float:
        return float(self.char_poly(1.0))


def first_return(op: TransferOperator, e: int) -> FirstReturnValues:
    """First-return and passage values of ``e`` by a linear solve on the other directed edges."""
    if spectral_radius(op) >= 1:
        raise SupercriticalError("first-return values diverge: spectral radius >= 1")
    L = op.dense
    pair = [2 * e, 2 * e + 1]
    rest = np.setdiff1d(np.arange(op.dim), pair)
    L0 = L[np.ix_(rest, rest)]
    out = L[np.ix_(pair, rest)]
    back = L[np.ix_(rest, pair)]
    M = L[np.ix_(pair, pair)] + out @ sla.solve(np.eye(len(rest)) - L0, back)
    vals = FirstReturnValues(e, float(M[0, 0]), float(M[1, 1]), float(M[0, 1]), float(M[1, 0]))
    if vals.denominator <= 0:
        raise SupercriticalError("first-return denominator is not positive")
    return vals


def pgf(op_or_fr, e: int | None = None, z=1.0):
    """Probability generating function of ``N(e)``:
    ``(det(Id - zM) / det(Id - M))^{-1/2}`` with ``M`` the first-return matrix.

    Accepts a transfer operator with an edge, or precomputed values. ``z`` may be an array;
    the square root follows the branch continuous from ``z = 1`` along the given order.
    """
    fr = op_or_fr if isinstance(op_or_fr, FirstReturnValues) else first_return(op_or_fr, e)
    z = np.asarray(z, dtype=complex)
    ratio = fr.char_poly(z) / fr.denominator
    if ratio.ndim == 0:
        return complex(ratio ** -0.5)
    return _tracked_power(ratio.ravel()).reshape(ratio.shape)


def _tracked_power(r: np.ndarray) -> np.ndarray:
    """``r^{-1/2}`` along a path, choosing the root continuous with its predecessor."""
    out = r ** -0.5
    for i in range(1, len(out)):
        if abs(out[i] + out[i - 1]) < abs(out[i] - out[i - 1]):
            out[i] = -out[i]
    return out


def mean_from_pgf(fr: FirstReturnValues) -> float:
    """Derivative of the generating function at ``z = 1``."""
    a, b, c = fr.F_plus, fr.F_minus, fr.Fp_plus * fr.Fp_minus
    return 0.5 * (a + b - 2 * a * b + 2 * c) / fr.denominator


def pgf_derivative(fr: FirstReturnValues, h: float = 1e-3) -> float:
    """Numerical derivative at ``z = 1`` from the inside of the disc (five-point backward stencil)."""
    z = 1.0 - h * np.arange(5)
    p = np.array([pgf(fr, z=zz).real for zz in z])
    return float((25 * p[0] - 48 * p[1] + 36 * p[2] - 16 * p[3] + 3 * p[4]) / (12 * h))


def pgf_coefficients(fr: FirstReturnValues, kmax: int, npts: int = 1024) -> np.ndarray:
    """``P(N(e) = k)`` for ``k <= kmax`` by a discrete Cauchy integral on the unit circle."""
    theta = 2 * np.pi * np.arange(npts) / npts
    vals = pgf(fr, z=np.exp(1j * theta))
    coeffs = np.fft.fft(vals) / npts
    return coeffs[: kmax + 1].real


def pgf_by_determinant(op: TransferOperator, e: int, z: float) -> float:
    """Independent route for real ``z``: scale the two orientations of ``e`` by ``z``."""
    L = op.dense.copy()
    L[[2 * e, 2 * e + 1], :] *= z
    n = op.dim
    s1, l1 = np.linalg.slogdet(np.eye(n) - L)
    s0, l0 = np.linalg.slogdet(np.eye(n) - op.dense)
    return float(np.exp(-0.5 * (l1 - l0)))


@dataclass
class ChiSquareScan:
    xs: np.ndarray
    deviations: np.ndarray
    means: np.ndarray
    ts: np.ndarray
    skipped: list


def chi_square_limit_scan(n: int, e: int = 0, xs=(0.30, 0.31, 0.32, 0.33), ts=None, d: int = 2) -> ChiSquareScan:
    """Sup-distance between the characteristic function of ``N(e)/<N(e)>`` and that of chi-square(1)."""
    ts = np.round(np.arange(-5.0, 5.0 + 1e-9, 0.1), 10) if ts is None else np.asarray(ts, dtype=float)
    order = np.argsort(np.abs(ts), kind="stable")
    g = build_torus(TorusSpec.homogeneous(d, n, 0.0))
    devs, means, used, skipped = [], [], [], []
    for x in xs:
        if x >= 1 / (2 * d - 1):
            skipped.append(float(x))
            continue
        fr = first_return(build_transfer(g, x), e)
        mean = mean_from_pgf(fr)
        phi = np.empty(len(ts), dtype=complex)
        for sign in (1, -1):
            idx = [i for i in order if np.sign(ts[i]) in (0, sign)]
            phi[idx] = pgf(fr, z=np.exp(1j * ts[idx] / mean))
        target = (1 - 2j * ts) ** -0.5
        devs.append(float(np.max(np.abs(phi - target))))
        means.append(mean)
        used.append(float(x))
    return ChiSquareScan(np.array(used), np.array(devs), np.array(means), ts, skipped)
