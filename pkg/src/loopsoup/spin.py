"""Dual-lattice spins from winding parities of planar loop soups and a reflection-positivity harness.

A dual vertex (face) ``(i, j)`` of a ``W x H`` box sits at ``(i + 1/2, j + 1/2)``.
Its spin is ``(-1)`` to the number of loops winding an odd number of times
around it, which equals the parity of the total occupation of the vertical
edges crossed by the rightward horizontal ray from the face.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import WrappingLoopError
from .graph import WeightedGraph, build_grid
from .sampler import SoupSample, SoupSampler, StreamingMoments, occupation_batches
from .transfer import build_transfer


@dataclass(frozen=True, eq=False)
class Patch:
    """Planar box geometry attached to a graph with integer vertex coordinates.

    ``period`` is set for tori; loops are then unrolled and wrapping loops rejected.
    """

    graph: WeightedGraph
    width: int
    height: int
    period: int | None = None

    @classmethod
    def box(cls, width: int, height: int, x: float = 0.1) -> "Patch":
        return cls(build_grid(width, height, x), width, height)

    @property
    def face_shape(self) -> tuple[int, int]:
        return self.height - 1, self.width - 1  # (row j, column i)

    def vertical_edges(self) -> np.ndarray:
        """``out[j, i]`` = id of the edge between ``(i, j)`` and ``(i, j+1)``."""
        g = self.graph
        out = np.full((self.height - 1, self.width), -1, dtype=np.int64)
        for k, (u, v) in enumerate(g.edges):
            a, b = g.coords[u], g.coords[v]
            if a[0] == b[0] and abs(int(a[1]) - int(b[1])) == 1:
                out[min(a[1], b[1]), a[0]] = k
        if (out < 0).any():
            raise ValueError("patch is missing vertical edges")
        return out


def _lift(patch: Patch, seq) -> np.ndarray:
    """Vertex positions along a loop, unrolled across the period when there is one."""
    g = patch.graph
    tails, heads = g.tails, g.heads
    pos = [np.array(g.coords[tails[seq[0]]], dtype=int)]
    for s in seq:
        step = np.array(g.coords[heads[s]], dtype=int) - np.array(g.coords[tails[s]], dtype=int)
        if patch.period:
            step = (step + patch.period // 2) % patch.period - patch.period // 2
        pos.append(pos[-1] + step)
    pos = np.array(pos)
    if not np.array_equal(pos[0], pos[-1]):
        raise WrappingLoopError("loop wraps around the torus; winding is undefined")
    return pos


def winding_number(patch: Patch, seq, face) -> int:
    """Signed crossings of the rightward ray from ``face = (i, j)`` (counterclockwise positive)."""
    pos = _lift(patch, seq)
    fi, fj = face
    lifts = [(0, 0)]
    if patch.period:
        n = patch.period
        lo, hi = pos.min(axis=0), pos.max(axis=0)
        lifts = [(a * n, b * n) for a in range((lo[0] - fi) // n - 1, (hi[0] - fi) // n + 2)
                 for b in range((lo[1] - fj) // n - 1, (hi[1] - fj) // n + 2)]
    total = 0
    a, b = pos[:-1], pos[1:]
    vertical = (a[:, 0] == b[:, 0]) & (a[:, 1] != b[:, 1])
    for dx, dy in lifts:
        low = np.minimum(a[:, 1], b[:, 1])
        hit = vertical & (a[:, 0] >= fi + dx + 1) & (low == fj + dy)
        total += int(np.sum(np.sign(b[hit, 1] - a[hit, 1])))
    return total


def winding_parity(patch: Patch, seq, face) -> int:
    return winding_number(patch, seq, face) % 2


@dataclass
class SpinField:
    spins: np.ndarray  # (H-1) x (W-1), entries +-1
    odd_counts: np.ndarray  # number of soup items with odd winding around each face
    windings: dict = field(default_factory=dict)  # loop -> integer winding array


def spin_field(sample: SoupSample, patch: Patch) -> SpinField:
    """Spins from the loops of a sample via integer winding numbers."""
    shape = patch.face_shape
    odd = np.zeros(shape, dtype=np.int64)
    windings = {}
    for seq, cnt in sample.loops.items():
        w = np.zeros(shape, dtype=np.int64)
        for j in range(shape[0]):
            for i in range(shape[1]):
                w[j, i] = winding_number(patch, seq, (i, j))
        windings[seq] = w
        odd += cnt * (w % 2)
    spins = np.where(odd % 2 == 0, 1, -1)
    return SpinField(spins, odd, windings)


def spins_from_fields(patch: Patch, fields: np.ndarray, vert: np.ndarray | None = None) -> np.ndarray:
    """Crossing-parity route: ``reps x (H-1) x (W-1)`` spins from occupation fields."""
    vert = patch.vertical_edges() if vert is None else vert
    V = np.asarray(fields)[:, vert]  # reps x (H-1) x W
    suffix = np.cumsum(V[:, :, ::-1], axis=2)[:, :, ::-1]  # sum over columns >= i
    crossed = suffix[:, :, 1:]  # columns >= i + 1
    return (1 - 2 * (crossed & 1)).astype(np.int8)


# -- reflection positivity --------------------------------------------------------------


@dataclass
class GramReport:
    family: list
    matrix: np.ndarray
    stderr: np.ndarray
    asymmetry: np.ndarray  # |M - M^T| / SE of the difference
    max_asymmetry_sigma: float
    min_eigenvalue: float
    max_stderr: float
    n_samples: int
    mapping: str

    @property
    def symmetric(self) -> bool:
        return self.max_asymmetry_sigma <= 3.0

    @property
    def positive(self) -> bool:
        rounding = 1e-12 * max(1.0, float(np.abs(self.matrix).max())) * len(self.family)
        return self.min_eigenvalue >= -3.0 * self.max_stderr - rounding


def subset_family(window, max_size: int = 2) -> list[tuple]:
    out = [()]
    for k in range(1, max_size + 1):
        out += list(itertools.combinations(window, k))
    return out


class GramAccumulator:
    """Streams ``E[sigma_A * T(sigma_B)]`` for a family of subsets and a map ``T`` on faces."""

    def __init__(self, patch: Patch, family, image, row: int):
        self.patch = patch
        self.family = family
        self.row = row
        self.image = image
        self.vert = patch.vertical_edges()
        cols = sorted({c for A in family for c in A} | {image(c) for A in family for c in A})
        self.cols = cols
        self.moments = StreamingMoments(len(family) ** 2)

    def _products(self, sig: np.ndarray, subsets) -> np.ndarray:
        idx = {c: k for k, c in enumerate(self.cols)}
        out = np.ones((sig.shape[0], len(subsets)), dtype=np.int8)
        for a, A in enumerate(subsets):
            for c in A:
                out[:, a] *= sig[:, idx[c]]
        return out

    def update(self, fields: np.ndarray) -> None:
        sig_all = spins_from_fields(self.patch, fields, self.vert)[:, self.row, :]
        sig = sig_all[:, self.cols]
        left = self._products(sig, self.family)
        right = self._products(sig, [tuple(self.image(c) for c in B) for B in self.family])
        X = (left[:, :, None] * right[:, None, :]).reshape(len(sig), -1)
        self.moments.update(X)

    def report(self, mapping: str) -> GramReport:
        k = len(self.family)
        mom = self.moments
        M = mom.mean.reshape(k, k)
        cov = mom.cov
        n = mom.n
        var = np.clip(np.diag(cov), 0.0, None)
        se = np.sqrt(var / n).reshape(k, k)
        asym = np.zeros((k, k))
        for a in range(k):
            for b in range(k):
                if a == b:
                    continue
                i, j = a * k + b, b * k + a
                vd = cov[i, i] + cov[j, j] - 2 * cov[i, j]
                sd = np.sqrt(max(vd, 0.0) / n)
                diff = abs(M[a, b] - M[b, a])
                asym[a, b] = diff / sd if sd > 0 else (0.0 if diff == 0 else np.inf)
        S = 0.5 * (M + M.T)
        lam = float(np.linalg.eigvalsh(S).min())
        return GramReport(self.family, M, se, asym, float(asym.max()), lam, float(se.max()), n, mapping)


def reflection_gram(
    fields_source,
    patch: Patch,
    line: int,
    window: tuple[int, ...] | None = None,
    row: int | None = None,
    max_size: int = 2,
    mapping: str = "reflection",
    shift: int = -1,
) -> GramReport:
    """Gram matrix ``M[A, B] = E[sigma_A theta(sigma_B)]`` for the dual line at column ``line``.

    ``line`` is a face column; the reflection sends column ``i`` to ``2*line - i``
    and must map the box onto itself. ``window`` lists face columns in the
    + half (``>= line``) on face row ``row``. ``mapping="translation"``
    replaces the reflection by a shift of ``shift`` columns (negative control).
    ``fields_source`` is an array of fields or an iterable of arrays.
    """
    nf_cols = patch.width - 1
    if 2 * line != nf_cols - 1:
        raise ValueError(
            f"reflection through face column {line} does not map the box onto itself; "
            f"use the centre column {(nf_cols - 1) / 2:g}"
        )
    window = tuple(range(line, line + 3)) if window is None else tuple(window)
    if min(window) < line:
        raise ValueError("window crosses the reflection line")
    row = (patch.height - 2) // 2 if row is None else row
    if mapping == "reflection":
        image = lambda c: 2 * line - c  # noqa: E731
    elif mapping == "translation":
        image = lambda c: c + shift  # noqa: E731
    else:
        raise ValueError(f"unknown mapping {mapping!r}")
    if any(not 0 <= image(c) < nf_cols for c in window):
        raise ValueError("image of the window leaves the box")
    acc = GramAccumulator(patch, subset_family(window, max_size), image, row)
    if isinstance(fields_source, np.ndarray):
        fields_source = [fields_source]
    for batch in fields_source:
        acc.update(batch)
    return acc.report(mapping)


def spin_experiment(width: int = 20, height: int = 20, x: float = 0.25, reps: int = 1_000_000,
                    lmax: int = 60, seed: int = 0, line: int | None = None, shift: int = -1,
                    window=None):
    """Sample soups on a box and return the reflection and translation Gram reports."""
    patch = Patch.box(width, height, x)
    line = (width - 2) // 2 if line is None else line
    sampler = SoupSampler(build_transfer(patch.graph), lmax)
    window = tuple(range(line, line + 3)) if window is None else tuple(window)
    row = (height - 2) // 2
    refl = GramAccumulator(patch, subset_family(window), lambda c: 2 * line - c, row)
    trans = GramAccumulator(patch, subset_family(window), lambda c: c + shift, row)
    for batch in occupation_batches(sampler, reps, seed):
        refl.update(batch.fields)
        trans.update(batch.fields)
    return refl.report("reflection"), trans.report("translation"), sampler.tail_bound()
