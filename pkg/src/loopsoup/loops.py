"""Brute-force enumeration of non-backtracking loops and walks.

These routines never form matrix powers: every walk is generated explicitly,
so they serve as independent oracles for the determinantal formulas.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EnumerationLimitError
from .graph import WeightedGraph
from .transfer import build_transfer, edge_weights

DEFAULT_CAP = 20_000_000


# -- canonical forms -----------------------------------------------------------


def reverse_loop(seq: Sequence[int]) -> tuple[int, ...]:
    """The same cyclic loop traversed backwards: ``(-w_m, ..., -w_1)``."""
    return tuple(s ^ 1 for s in reversed(seq))


def canonical(seq: Sequence[int]) -> tuple[int, ...]:
    """Lexicographically least rotation over both orientations."""
    seq = tuple(int(s) for s in seq)
    best = None
    for cand in (seq, reverse_loop(seq)):
        for r in range(len(cand)):
            rot = cand[r:] + cand[:r]
            if best is None or rot < best:
                best = rot
    return best


def smallest_period(seq: Sequence[int]) -> int:
    n = len(seq)
    for p in range(1, n + 1):
        if n % p == 0 and all(seq[i] == seq[i % p] for i in range(n)):
            return p
    return n


def multiplicity(seq: Sequence[int]) -> int:
    """Largest ``m`` such that the sequence is ``m`` copies of one block."""
    n = len(seq)
    for m in range(n, 0, -1):
        if n % m == 0:
            block = tuple(seq[: n // m])
            if block * m == tuple(seq):
                return m
    return 1


def is_nonbacktracking_loop(g: WeightedGraph, seq: Sequence[int]) -> bool:
    tails, heads = g.tails, g.heads
    n = len(seq)
    for i in range(n):
        a, b = seq[i], seq[(i + 1) % n]
        if heads[a] != tails[b] or b == (a ^ 1):
            return False
    return n > 0


@dataclass(frozen=True)
class UnrootedLoop:
    canonical: tuple[int, ...]
    multiplicity: int
    weight: float

    @property
    def length(self) -> int:
        return len(self.canonical)

    @property
    def measure(self) -> float:
        return self.weight / self.multiplicity

    def visits(self) -> Counter:
        """Visit count per undirected edge."""
        return Counter(s >> 1 for s in self.canonical)

    @classmethod
    def from_sequence(cls, seq: Sequence[int], weights: np.ndarray) -> "UnrootedLoop":
        c = canonical(seq)
        return cls(c, multiplicity(c), float(np.prod(weights[np.asarray(c) >> 1])))


# -- enumeration -----------------------------------------------------------------


def _successors(g: WeightedGraph) -> np.ndarray:
    """``succ[e]`` lists non-backtracking continuations of ``e``, padded with -1."""
    tails, heads = g.tails, g.heads
    out_at: list[list[int]] = [[] for _ in range(g.n_vertices)]
    for i, t in enumerate(tails):
        out_at[t].append(i)
    width = max((len(o) for o in out_at), default=1)
    succ = np.full((g.n_directed, max(width - 1, 1)), -1, dtype=np.int64)
    for e in range(g.n_directed):
        nxt = [f for f in out_at[heads[e]] if f != (e ^ 1)]
        succ[e, : len(nxt)] = nxt
    return succ


def _lex_less(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Row-wise ``A < B`` in lexicographic order."""
    diff = A != B
    any_diff = diff.any(axis=1)
    first = diff.argmax(axis=1)
    rows = np.arange(A.shape[0])
    return any_diff & (A[rows, first] < B[rows, first])


def _is_canonical(P: np.ndarray) -> np.ndarray:
    L = P.shape[1]
    ok = np.ones(P.shape[0], dtype=bool)
    R = (P[:, ::-1]) ^ 1
    idx = np.arange(L)
    for cand, start in ((P, 1), (R, 0)):
        for r in range(start, L):
            ok &= ~_lex_less(cand[:, (idx + r) % L], P)
    return ok


def iter_canonical_loops(g: WeightedGraph, lmax: int, cap: int = DEFAULT_CAP):
    """Yield arrays of canonical step sequences, one array per (start edge, length)."""
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    succ = _successors(g)
    closes = np.zeros((g.n_directed, g.n_directed), dtype=bool)
    for e in range(g.n_directed):
        for f in succ[e]:
            if f >= 0:
                closes[e, f] = True
    produced = 0
    for s in range(g.n_directed):
        P = np.array([[s]], dtype=np.int64)
        for length in range(1, lmax + 1):
            ok = closes[P[:, -1], s]
            if ok.any():
                C = P[ok]
                C = C[_is_canonical(C)]
                if len(C):
                    produced += len(C)
                    yield C
            if length == lmax:
                break
            nxt = succ[P[:, -1]]
            rows, cols = np.nonzero(nxt >= s)
            if rows.size > cap:
                raise EnumerationLimitError(
                    f"frontier of {rows.size} walks exceeds cap {cap} (loops so far: {produced})",
                    produced,
                )
            P = np.column_stack([P[rows], nxt[rows, cols]])
            if P.shape[0] == 0:
                break


def enumerate_loops(g: WeightedGraph, lmax: int, x=None, cap: int = DEFAULT_CAP) -> list[UnrootedLoop]:
    """Every unrooted, unoriented non-backtracking loop of length <= lmax, sorted by (length, sequence)."""
    w = edge_weights(g, x)
    loops = []
    for block in iter_canonical_loops(g, lmax, cap):
        for row in block:
            seq = tuple(int(v) for v in row)
            loops.append(UnrootedLoop(seq, multiplicity(seq), float(np.prod(w[row >> 1]))))
    loops.sort(key=lambda lp: (lp.length, lp.canonical))
    return loops


# -- walk tables -----------------------------------------------------------------


def _walk_tables(g, w, hmax, track=None, cap=DEFAULT_CAP):
    """Explicit walk enumeration aggregated by endpoints.

    ``T[a][s, t]`` is the summed weight of non-backtracking walks from ``s`` to
    ``t`` with ``a`` transitions, each transition weighted by the departing
    edge. With ``track`` set, ``F[a][s, t]`` also sums weight times the number
    of visits to the undirected edge ``track`` among the first ``a`` edges.
    """
    succ = _successors(g)
    n = g.n_directed
    start = np.arange(n, dtype=np.int64)
    cur = start.copy()
    wt = np.ones(n)
    cnt = np.zeros(n)
    T = [np.eye(n)]
    F = [np.zeros((n, n))]
    for a in range(1, hmax + 1):
        if track is not None:
            cnt = cnt + ((cur >> 1) == track)
        wt = wt * w[cur >> 1]
        nxt = succ[cur]
        rows, cols = np.nonzero(nxt >= 0)
        if rows.size > cap:
            raise EnumerationLimitError(f"walk frontier {rows.size} exceeds cap {cap}", rows.size)
        start, cur, wt, cnt = start[rows], nxt[rows, cols], wt[rows], cnt[rows]
        flat = start * n + cur
        T.append(np.bincount(flat, weights=wt, minlength=n * n).reshape(n, n))
        if track is not None:
            F.append(np.bincount(flat, weights=wt * cnt, minlength=n * n).reshape(n, n))
    return T, F


def closed_walk_sums(g: WeightedGraph, lmax: int, x=None, cap: int = DEFAULT_CAP) -> np.ndarray:
    """``out[m]`` = total weight of rooted closed walks with ``m`` steps, by meet-in-the-middle."""
    w = edge_weights(g, x)
    h = (lmax + 1) // 2
    T, _ = _walk_tables(g, w, h, cap=cap)
    out = np.zeros(lmax + 1)
    for m in range(1, lmax + 1):
        a = (m + 1) // 2
        out[m] = float(np.sum(T[a] * T[m - a].T))
    return out


def truncated_log_partition(g: WeightedGraph, lmax: int, x=None, method: str = "walks") -> float:
    """Loop-measure mass of loops with length <= lmax.

    ``method="loops"`` sums ``mu`` over explicitly canonicalized loops;
    ``method="walks"`` sums rooted closed walks divided by ``2m``, which is the
    same quantity because each loop has ``2m/m_l`` rooted oriented versions.
    """
    if lmax < 1:
        raise ValueError("lmax must be >= 1")
    if method == "loops":
        return float(sum(lp.measure for lp in enumerate_loops(g, lmax, x)))
    if method == "walks":
        c = closed_walk_sums(g, lmax, x)
        m = np.arange(1, lmax + 1)
        return float(np.sum(c[1:] / (2 * m)))
    raise ValueError(f"unknown method {method!r}")


def rooted_counts(loops: Iterable[UnrootedLoop], lmax: int) -> np.ndarray:
    """``out[n] = sum_{|l|=n} (2n/m_l) x(l)``; equals the trace of the n-th operator power."""
    out = np.zeros(lmax + 1)
    for lp in loops:
        out[lp.length] += 2 * lp.length / lp.multiplicity * lp.weight
    return out


def truncated_two_point(g: WeightedGraph, e: int, f: int, lmax: int, x=None, method: str = "walks") -> float:
    """``sum_l N_l(e) N_l(f) mu(l)`` over loops of length <= lmax.

    The walk method sums ``N_w(f) x(w)`` over closed walks rooted at the
    directed edge ``2e``; reversal symmetry makes this equal to the loop sum.
    """
    if method == "loops":
        tot = 0.0
        for lp in enumerate_loops(g, lmax, x):
            v = lp.visits()
            tot += v.get(e, 0) * v.get(f, 0) * lp.measure
        return tot
    if method != "walks":
        raise ValueError(f"unknown method {method!r}")
    w = edge_weights(g, x)
    h = (lmax + 1) // 2
    T, F = _walk_tables(g, w, h, track=f)
    root = 2 * e
    tot = 0.0
    for m in range(1, lmax + 1):
        a = (m + 1) // 2
        b = m - a
        tot += float(T[a][root] @ F[b][:, root] + F[a][root] @ T[b][:, root])
    return tot


def truncated_first_return(
    g: WeightedGraph,
    root: int,
    terminal: int,
    forbidden: Iterable[int] = (),
    lmax: int = 12,
    x=None,
    cap: int = DEFAULT_CAP,
) -> float:
    """Weight of walks ``root -> ... -> terminal`` with at most ``lmax`` transitions.

    Interior edges avoid ``root``, ``terminal`` and ``forbidden``. Weights are
    products of departing-edge weights, which for ``root`` and ``terminal`` of
    the same undirected edge agree with the symmetric square-root convention.
    """
    forbidden = set(int(v) for v in forbidden)
    if root in forbidden:
        raise ValueError("root edge is forbidden")
    w = edge_weights(g, x)
    succ = _successors(g)
    blocked = np.zeros(g.n_directed, dtype=bool)
    blocked[list(forbidden | {root, terminal})] = True
    cur = np.array([root], dtype=np.int64)
    wt = np.ones(1)
    total = 0.0
    for _ in range(lmax):
        wt = wt * w[cur >> 1]
        nxt = succ[cur]
        rows, cols = np.nonzero(nxt >= 0)
        cur, wt = nxt[rows, cols], wt[rows]
        total += float(wt[cur == terminal].sum())
        keep = ~blocked[cur]
        cur, wt = cur[keep], wt[keep]
        if cur.size > cap:
            raise EnumerationLimitError(f"walk frontier {cur.size} exceeds cap {cap}", cur.size)
        if cur.size == 0:
            break
    return total


def _row_sum_norm(g: WeightedGraph, x=None) -> float:
    op = build_transfer(g, x, allow_boundary=True)
    return float(np.abs(op.matrix).sum(axis=1).max()) if op.matrix.nnz else 0.0


def _series_tail(r: float, lmax: int, kind: str) -> float:
    if r >= 1:
        return float("inf")
    if r == 0:
        return 0.0
    m = np.arange(lmax + 1, lmax + 1 + 5000, dtype=float)
    terms = {"loop": r**m / (2 * m), "walk": r**m, "two-point": m * r**m}[kind]
    return float(terms.sum())


def tail_bound(g: WeightedGraph, lmax: int, x=None) -> float:
    """Loop mass beyond lmax is at most ``2|E| sum_{m>lmax} r^m/(2m)``, r the max row sum of the operator."""
    return g.n_directed * _series_tail(_row_sum_norm(g, x), lmax, "loop")


def two_point_tail_bound(g: WeightedGraph, lmax: int, x=None) -> float:
    """Bound ``sum_{m>lmax} m r^m`` on the omitted part of :func:`truncated_two_point`."""
    return _series_tail(_row_sum_norm(g, x), lmax, "two-point")


def first_return_tail_bound(g: WeightedGraph, lmax: int, x=None) -> float:
    """Bound ``sum_{m>lmax} r^m`` on the omitted part of :func:`truncated_first_return`."""
    return _series_tail(_row_sum_norm(g, x), lmax, "walk")
