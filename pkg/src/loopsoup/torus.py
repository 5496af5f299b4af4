"""Fourier-block computations on the periodic lattice (Z/nZ)^d.

Translation invariance block-diagonalizes the transfer operator into one
2d x 2d block per mode ``p``. Directions are indexed ``2j`` for ``+e_j`` and
``2j + 1`` for ``-e_j``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .errors import SupercriticalError
from .graph import TorusSpec


def critical_point(d: int) -> float:
    return 1.0 / (2 * d - 1)


def singular_order(d: int) -> int:
    """Order of the first divergent derivative of the free energy."""
    return d // 2 if d % 2 == 0 else (d + 1) // 2


def p_poly(x: float, d: int) -> float:
    """``p(x)`` with ``2x p(x) = (2d-1)x^2 - 2dx + 1``; vanishes at the critical point."""
    return ((2 * d - 1) * x * x - 2 * d * x + 1) / (2 * x)


def modes(d: int, n: int) -> np.ndarray:
    return np.array(list(itertools.product(range(n), repeat=d)), dtype=int).reshape(-1, d)


def _check_weights(spec: TorusSpec) -> None:
    s = sum(x / (1 + x) for x in spec.weights)
    if s >= 0.5:
        raise SupercriticalError(
            f"weight condition sum x_i/(1+x_i) = {s:.12g} must be < 1/2", detail={"sum": s}
        )


def fourier_block(p, spec: TorusSpec) -> np.ndarray:
    d, n = spec.d, spec.n
    p = np.asarray(p, dtype=float)
    x = np.asarray(spec.weights)
    B = np.zeros((2 * d, 2 * d), dtype=complex)
    for v in range(2 * d):
        j, sgn = v // 2, (1 if v % 2 == 0 else -1)
        phase = np.exp(2j * np.pi * sgn * p[j] / n)
        for u in range(2 * d):
            if u != (v ^ 1):
                B[v, u] = x[j] * phase
    return B


def _bracket_coeffs(weights) -> tuple[float, np.ndarray]:
    x = np.asarray(weights, dtype=float)
    q = 1.0 - x * x
    return 1.0 + 2.0 * float(np.sum(x * x / q)), 2.0 * x / q


def block_det(p, spec: TorusSpec):
    """Closed-form ``det(Id - block(p))``; ``p`` may be one mode or an array of modes."""
    x = np.asarray(spec.weights, dtype=float)
    K, c = _bracket_coeffs(x)
    cos = np.cos(2 * np.pi * np.asarray(p, dtype=float) / spec.n)
    return (K - cos @ c) * float(np.prod(1.0 - x * x))


def block_det_dense(p, spec: TorusSpec) -> complex:
    return complex(np.linalg.det(np.eye(2 * spec.d) - fourier_block(p, spec)))


def block_spectrum(p, spec: TorusSpec) -> np.ndarray:
    """Eigenvalues of a block for homogeneous weights."""
    if not spec.is_homogeneous:
        raise ValueError("block spectrum formula needs homogeneous weights")
    d, x = spec.d, spec.weights[0]
    a = float(np.sum(np.cos(2 * np.pi * np.asarray(p, dtype=float) / spec.n)))
    r = np.sqrt(complex(a * a - 2 * d + 1))
    special = [x * (2 * d - 1) / (a + r), x * (2 * d - 1) / (a - r)]
    return np.array([x] * (d - 1) + [-x] * (d - 1) + special, dtype=complex)


def torus_log_partition(spec: TorusSpec) -> float:
    """``-1/2 sum_p log det(Id - block(p))``."""
    _check_weights(spec)
    dets = block_det(modes(spec.d, spec.n), spec)
    if np.any(dets <= 0):
        raise SupercriticalError("nonpositive block determinant")
    return -0.5 * float(np.sum(np.log(dets)))


def free_energy_finite(spec: TorusSpec) -> float:
    return -torus_log_partition(spec) / (spec.d * spec.n**spec.d)


# -- thermodynamic limit ------------------------------------------------------


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    grid: int
    converged: bool


# Grid sizes per remaining dimension after one axis is integrated in closed form.
_GRIDS = {0: (1,), 1: tuple(2**k for k in range(6, 23)), 2: tuple(2**k for k in range(5, 12)),
          3: tuple(2**k for k in range(4, 8))}


def _cos_grid(m: int, M: int) -> tuple[list[np.ndarray], np.ndarray]:
    """Half-period trapezoid nodes (cosines) and tensor weights on [0, 2pi)^m."""
    if m == 0:
        return [], np.ones(())
    k = np.arange(M // 2 + 1)
    cos = np.cos(2 * np.pi * k / M)
    w = np.full(k.size, 2.0 / M)
    w[0] = w[-1] = 1.0 / M
    cs = [cos.reshape((-1,) + (1,) * (m - 1 - i)) for i in range(m)]
    W = w
    for _ in range(m - 1):
        W = np.multiply.outer(W, w)
    return cs, W


def _grid_mean(func, coeffs: np.ndarray, M: int) -> float:
    """Mean over the torus of ``func(S)`` where ``S = sum_i coeffs[i] cos(alpha_i)``."""
    m = len(coeffs)
    cs, W = _cos_grid(m, M)
    S = np.zeros(())
    for ci, c in zip(coeffs, cs):
        S = S + ci * c
    return float(np.sum(W * func(S)))


def _refine(func, coeffs, tol: float, grids=None) -> QuadResult:
    grids = grids or _GRIDS[len(coeffs)]
    if len(coeffs) == 0:
        return QuadResult(float(func(np.zeros(()))), 0.0, 1, True)
    prev = None
    val = err = np.nan
    for M in grids:
        val = _grid_mean(func, coeffs, M)
        if prev is not None:
            err = abs(val - prev)
            if err <= tol * max(1.0, abs(val)):
                return QuadResult(val, err, M, True)
        prev = val
    return QuadResult(val, err, grids[-1], False)


def _log_inner(K: float, c: np.ndarray):
    """``S -> (1/2pi) int log(K - S - c0 cos a) da = log((A + sqrt(A^2 - c0^2))/2)`` with ``A = K - S``."""
    b = c[0]

    def f(S):
        A = K - S
        return np.log(0.5 * (A + np.sqrt(np.clip((A - b) * (A + b), 0.0, None))))

    return f


def free_energy_limit(d: int, x, tol: float = 1e-12, grids=None) -> QuadResult:
    """Infinite-volume free energy per edge, ``2d f = sum log(1-x_i^2) + mean log(bracket)``.

    One angular integral is done in closed form; the remaining ``d-1`` use a
    periodic trapezoid rule refined by doubling until successive values agree.
    """
    spec = TorusSpec(d, 3, x)
    _check_weights(spec)
    xs = np.asarray(spec.weights)
    K, c = _bracket_coeffs(xs)
    res = _refine(_log_inner(K, c), -c[1:], tol, grids)
    const = float(np.sum(np.log1p(-xs * xs)))
    return QuadResult((const + res.value) / (2 * d), res.error / (2 * d), res.grid, res.converged)


def _one_point_offset(d: int, x: float) -> float:
    return (d - 1) / d / (1 - x * x) - 1.0


def one_point_torus(spec: TorusSpec) -> float:
    """Expected occupation of any edge on the finite torus (homogeneous weights)."""
    if not spec.is_homogeneous:
        raise ValueError("one-point formula needs homogeneous weights")
    d, n, x = spec.d, spec.n, spec.weights[0]
    if x >= critical_point(d):
        raise SupercriticalError(f"x = {x} is not below x_c = {critical_point(d)}")
    a = np.cos(2 * np.pi * modes(d, n) / n).sum(axis=1)
    terms = (1 - x * a) / (1 + (2 * d - 1) * x * x - 2 * x * a)
    return float(terms.sum()) / (d * n**d) + _one_point_offset(d, x)


def one_point_limit(d: int, x: float, tol: float = 1e-10, grids=None) -> QuadResult:
    """Infinite-volume one-point function, one angle integrated in closed form."""
    if not 0 <= x < critical_point(d):
        raise SupercriticalError(f"x = {x} is not in [0, x_c = {critical_point(d)})")
    if x == 0:
        return QuadResult(0.0, 0.0, 1, True)
    B = 1 + (2 * d - 1) * x * x
    b = 2 * x

    def f(S):
        A = B - S
        return 0.5 + (1 - 0.5 * B) / np.sqrt((A - b) * (A + b))

    res = _refine(f, np.full(d - 1, 2 * x), tol, grids)
    return QuadResult(res.value / d + _one_point_offset(d, x), res.error / d, res.grid, res.converged)


# -- singular behaviour -------------------------------------------------------

_STENCILS = {
    0: (np.array([0]), np.array([1.0])),
    1: (np.array([-1, 1]), np.array([-0.5, 0.5])),
    2: (np.array([-1, 0, 1]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2, -1, 1, 2]), np.array([-0.5, 1.0, -1.0, 0.5])),
    4: (np.array([-2, -1, 0, 1, 2]), np.array([1.0, -4.0, 6.0, -4.0, 1.0])),
}

MIN_DISTANCE = 4e-5


@dataclass
class SingularScan:
    d: int
    order: int
    xs: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    quad_error: np.ndarray
    fit: dict = field(default_factory=dict)

    @property
    def x_c(self) -> float:
        return critical_point(self.d)

    @property
    def delta(self) -> int:
        return singular_order(self.d)


def _free_energy_fixed(d: int, x: float, M: int) -> float:
    K, c = _bracket_coeffs(np.full(d, x))
    v = _grid_mean(_log_inner(K, c), -c[1:], M) if d > 1 else float(_log_inner(K, c)(np.zeros(())))
    return (d * np.log1p(-x * x) + v) / (2 * d)


def _derivative(d: int, x: float, order: int, h: float, M: int) -> float:
    offs, coef = _STENCILS[order]
    vals = np.array([_free_energy_fixed(d, x + o * h, M) for o in offs])
    return float(coef @ vals) / h**order


def default_grid(d: int, points: int = 24) -> np.ndarray:
    """``x_c - x`` log-spaced from ``0.1 x_c`` down to ``10 h_min``."""
    xc = critical_point(d)
    eps = np.geomspace(0.1 * xc, 10 * MIN_DISTANCE, points)
    return xc - eps


def singular_scan(d: int, order: int | None = None, xs=None, rtol: float = 1e-7) -> SingularScan:
    """Central-difference derivatives of the limit free energy approaching x_c, plus an asymptotic fit.

    Even ``d``: least squares of the derivative against ``log(x_c - x)``.
    Odd ``d``: fit ``C + A (x_c - x)^gamma`` and report ``gamma``.
    """
    order = singular_order(d) if order is None else order
    if order not in _STENCILS:
        raise ValueError(f"derivative order {order} not supported")
    xc = critical_point(d)
    xs = default_grid(d) if xs is None else np.asarray(xs, dtype=float)
    if np.any(xs <= 0) or np.any(xs >= xc):
        raise SupercriticalError(f"scan grid must lie in (0, x_c = {xc})")
    eps = xc - xs
    if order > 0 and eps.min() < MIN_DISTANCE:
        raise ValueError(
            f"grid point at distance {eps.min():.2e} from x_c is too close for stable "
            f"differentiation; keep x_c - x >= {MIN_DISTANCE:.0e}"
        )
    grids = _GRIDS[d - 1]
    values, derivs, errs = [], [], []
    for x, e in zip(xs, eps):
        h = 0.25 * e
        reach = max(abs(_STENCILS[order][0]).max(), 0) * h
        if x - reach <= 0:
            h = x / (2 * max(1, reach / h))
        prev = None
        for M in grids:
            dv = _derivative(d, x, order, h, M)
            if prev is not None and abs(dv - prev) <= rtol * max(1.0, abs(dv)):
                break
            prev = dv
        err = abs(dv - prev) if prev is not None else 0.0
        values.append(_free_energy_fixed(d, x, M))
        derivs.append(dv)
        errs.append(err)
    scan = SingularScan(d, order, xs, np.array(values), np.array(derivs), np.array(errs))
    if order == singular_order(d) and len(xs) >= 4:
        scan.fit = _fit(d, eps, scan.derivs)
    return scan


def _r2(y: np.ndarray, yhat: np.ndarray) -> float:
    ss_res = float(np.sum((y - yhat) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def _fit(d: int, eps: np.ndarray, y: np.ndarray) -> dict:
    if d % 2 == 0:
        L = np.log(eps)
        slope, icpt = np.polyfit(L, y, 1)
        return {"kind": "log", "slope": float(slope), "intercept": float(icpt),
                "r2": _r2(y, slope * L + icpt)}

    def model(e, C, A, g):
        return C + A * e**g

    p0 = (float(y[0]), float((y[-1] - y[0]) / (eps[-1] ** -0.5 - eps[0] ** -0.5)), -0.5)
    popt, pcov = curve_fit(model, eps, y, p0=p0, maxfev=20000)
    return {"kind": "power", "constant": float(popt[0]), "amplitude": float(popt[1]),
            "exponent": float(popt[2]), "exponent_se": float(np.sqrt(pcov[2, 2])),
            "r2": _r2(y, model(eps, *popt))}


def log_fit(xs: np.ndarray, values: np.ndarray, xc: float) -> dict:
    """Linear least squares of ``values`` against ``log(xc - xs)``."""
    L = np.log(xc - np.asarray(xs))
    slope, icpt = np.polyfit(L, values, 1)
    return {"slope": float(slope), "intercept": float(icpt), "r2": _r2(np.asarray(values), slope * L + icpt)}
