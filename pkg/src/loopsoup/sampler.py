"""Exact sampling of the length-truncated Poisson loop soup and of arc soups on cut graphs.

A loop soup restricted to lengths ``<= lmax`` is a Poisson process on rooted,
oriented closed walks with intensity ``x(w)/(2m)``; forgetting root and
orientation projects it onto the loop measure. We draw the Poisson count, then
(length, root) from the diagonal of the operator powers, then a bridge step
by step using the columns of those powers.
"""

from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SupercriticalError
from .graph import CutGraph, WeightedGraph
from .loops import canonical
from .transfer import TransferOperator, build_transfer, spectral_radius

BLOCK = 64
FULL_POWERS_LIMIT = 256


def _rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("LOOPSOUP_THREADS", "1")))
    except ValueError:
        return 1


def _padded_successors(mat: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    counts = np.diff(mat.indptr)
    width = max(int(counts.max()) if counts.size else 0, 1)
    succ = np.full((mat.shape[0], width), -1, dtype=np.int64)
    val = np.zeros((mat.shape[0], width))
    for e in range(mat.shape[0]):
        lo, hi = mat.indptr[e], mat.indptr[e + 1]
        succ[e, : hi - lo] = mat.indices[lo:hi]
        val[e, : hi - lo] = mat.data[lo:hi]
    return succ, val


def _choose(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise categorical draw proportional to nonnegative ``weights``."""
    cum = np.cumsum(weights, axis=1)
    u = rng.random(weights.shape[0]) * cum[:, -1]
    idx = (cum <= u[:, None]).sum(axis=1)
    return np.minimum(idx, weights.shape[1] - 1)


@dataclass(eq=False)
class BridgeSampler:
    """Shared machinery: operator powers and conditioned walks between fixed endpoints."""

    op: TransferOperator
    lmax: int

    def __post_init__(self) -> None:
        self.n = self.op.dim
        self.succ, self.succ_w = _padded_successors(self.op.matrix)
        self._full = None
        if self.n <= FULL_POWERS_LIMIT:
            self._full = self._columns(np.arange(self.n))

    def _columns(self, cols: np.ndarray, kmax: int | None = None) -> np.ndarray:
        """``C[k] = Lam^k[:, cols]`` for ``k = 0..kmax``."""
        kmax = self.lmax if kmax is None else kmax
        C = np.empty((kmax + 1, self.n, len(cols)))
        C[0] = 0.0
        C[0][cols, np.arange(len(cols))] = 1.0
        for k in range(kmax):
            C[k + 1] = self.op.matrix @ C[k]
        return C

    def column_blocks(self, cols: np.ndarray):
        """Yield ``(block_cols, C)`` over blocks of the requested target columns."""
        cols = np.unique(cols)
        if self._full is not None:
            yield cols, self._full[:, :, cols]
            return
        for i in range(0, len(cols), BLOCK):
            blk = cols[i : i + BLOCK]
            yield blk, self._columns(blk)

    def bridges(self, starts: np.ndarray, ends_local: np.ndarray, steps: np.ndarray, C: np.ndarray,
                rng: np.random.Generator) -> np.ndarray:
        """Walks ``start -> end`` with ``steps`` transitions, drawn from the weighted walk law.

        Row ``i`` of the result holds the ``steps[i] + 1`` directed edges (start and
        end included), padded with -1.
        """
        K = len(starts)
        width = int(steps.max()) + 1 if K else 1
        seq = np.full((K, width), -1, dtype=np.int64)
        seq[:, 0] = starts
        cur = starts.copy()
        rows = np.arange(K)
        for s in range(1, width):
            active = steps >= s
            if not active.any():
                break
            a = rows[active]
            c = cur[a]
            left = steps[a] - s  # transitions remaining after this one
            cand = self.succ[c]
            w = self.succ_w[c] * C[left[:, None], np.maximum(cand, 0), ends_local[a][:, None]]
            w[cand < 0] = 0.0
            pick = _choose(w, rng)
            nxt = cand[np.arange(len(a)), pick]
            seq[a, s] = nxt
            cur[a] = nxt
        return seq


@dataclass
class OccupationBatch:
    fields: np.ndarray  # reps x |E|
    loop_counts: np.ndarray  # reps
    length_hist: np.ndarray  # lmax + 1


@dataclass(eq=False)
class SoupSampler(BridgeSampler):
    """Loop soup sampler on a boundaryless graph."""

    check_radius: bool = True

    def __post_init__(self) -> None:
        if self.check_radius:
            rho = spectral_radius(self.op)
            if rho >= 1:
                raise SupercriticalError(f"spectral radius {rho:.6g} >= 1; the soup is infinite")
        super().__post_init__()
        diag = np.zeros((self.lmax + 1, self.n))
        for blk, C in self.column_blocks(np.arange(self.n)):
            diag[:, blk] = C[:, blk, np.arange(len(blk))]
        m = np.arange(self.lmax + 1)
        self.intensity = np.zeros_like(diag)
        self.intensity[1:] = diag[1:] / (2 * m[1:, None])
        self.traces = diag.sum(axis=1)
        self.mass_by_length = self.intensity.sum(axis=1)
        self.mass = float(self.mass_by_length.sum())
        self._cum = np.cumsum(self.intensity.ravel())

    @property
    def graph(self) -> WeightedGraph:
        return self.op.graph

    def tail_bound(self) -> float:
        """``2|E| sum_{m > lmax} r^m / (2m)`` with ``r`` the 1-norm of the operator."""
        r = float(np.abs(self.op.matrix).sum(axis=0).max()) if self.op.matrix.nnz else 0.0
        if r >= 1:
            return float("inf")
        m = np.arange(self.lmax + 1, self.lmax + 5001, dtype=float)
        return float(self.n * np.sum(r**m / (2 * m)))

    def _draw_roots(self, K: int, rng) -> tuple[np.ndarray, np.ndarray]:
        u = rng.random(K) * self._cum[-1]
        flat = np.searchsorted(self._cum, u, side="right")
        flat = np.minimum(flat, self._cum.size - 1)
        return flat // self.n, flat % self.n  # length, root

    def _loops(self, K: int, rng) -> tuple[np.ndarray, np.ndarray]:
        """``K`` rooted loops as (sequences without the repeated root, lengths)."""
        lengths, roots = self._draw_roots(K, rng)
        seq = np.full((K, max(int(lengths.max()) if K else 1, 1)), -1, dtype=np.int64)
        for blk, C in self.column_blocks(roots):
            mask = np.isin(roots, blk)
            if not mask.any():
                continue
            idx = np.nonzero(mask)[0]
            local = np.searchsorted(blk, roots[idx])
            walk = self.bridges(roots[idx], local, lengths[idx], C, rng)
            m = lengths[idx]
            cols = np.arange(walk.shape[1])
            walk[cols[None, :] >= m[:, None]] = -1  # drop the closing repeat of the root
            width = min(walk.shape[1], seq.shape[1])
            seq[idx, :width] = walk[:, :width]
        return seq, lengths

    def sample_batch(self, reps: int, rng: np.random.Generator) -> OccupationBatch:
        counts = rng.poisson(self.mass, size=reps)
        K = int(counts.sum())
        ne = self.graph.n_edges
        fields = np.zeros((reps, ne), dtype=np.int64)
        hist = np.zeros(self.lmax + 1, dtype=np.int64)
        if K:
            seq, lengths = self._loops(K, rng)
            owner = np.repeat(np.arange(reps), counts)
            valid = seq >= 0
            flat = (owner[:, None] * ne + (seq >> 1))[valid]
            fields = np.bincount(flat, minlength=reps * ne).reshape(reps, ne)
            hist = np.bincount(lengths, minlength=self.lmax + 1)
        return OccupationBatch(fields, counts, hist)

    def sample(self, seed: int, chunk: int = 0) -> "SoupSample":
        """One soup realization with its loops canonicalized."""
        rng = _rng(seed, chunk)
        K = int(rng.poisson(self.mass))
        loops: Counter = Counter()
        if K:
            seq, lengths = self._loops(K, rng)
            for row, m in zip(seq, lengths):
                loops[canonical(row[:m])] += 1
        return SoupSample(self.graph, loops, Counter(), self.lmax, seed)


def _batch_job(args):
    sampler, seed, chunk, reps = args
    return sampler.sample_batch(reps, _rng(seed, chunk))


def default_chunk(n_edges: int) -> int:
    return int(max(1000, min(20000, 4_000_000 // max(n_edges, 1))))


def occupation_batches(sampler: SoupSampler, reps: int, seed: int, chunk: int | None = None,
                       workers: int | None = None):
    """Yield :class:`OccupationBatch` objects covering ``reps`` replicas.

    Chunk ``i`` always uses the generator spawned from ``(seed, i)``, so the output
    does not depend on the number of workers.
    """
    chunk = chunk or default_chunk(sampler.graph.n_edges)
    sizes = [min(chunk, reps - i) for i in range(0, reps, chunk)]
    jobs = [(sampler, seed, i, s) for i, s in enumerate(sizes)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        for job in jobs:
            yield _batch_job(job)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(_batch_job, jobs)


def sample_fields(g: WeightedGraph, x=None, lmax: int = 20, reps: int = 1, seed: int = 0,
                  backtracking: bool = False) -> np.ndarray:
    """Occupation fields of ``reps`` independent soups as a ``reps x |E|`` array."""
    op = build_transfer(g, x, backtracking=backtracking)
    s = SoupSampler(op, lmax)
    return np.concatenate([b.fields for b in occupation_batches(s, reps, seed)])


# -- soup objects and occupation fields -------------------------------------------


@dataclass
class SoupSample:
    graph: WeightedGraph
    loops: Counter
    arcs: Counter
    lmax: int
    seed: int

    def __post_init__(self) -> None:
        if any(c < 1 for c in self.loops.values()) or any(c < 1 for c in self.arcs.values()):
            raise ValueError("stored counts must be >= 1")

    @property
    def n_loops(self) -> int:
        return sum(self.loops.values())

    @property
    def n_arcs(self) -> int:
        return sum(self.arcs.values())


@dataclass
class OccupationField:
    graph: WeightedGraph
    N: np.ndarray
    boundary: dict = field(default_factory=dict)


def sample_soup(g: WeightedGraph, x=None, lmax: int = 20, seed: int = 0) -> SoupSample:
    return SoupSampler(build_transfer(g, x), lmax).sample(seed)


def occupation(s: SoupSample) -> OccupationField:
    N = np.zeros(s.graph.n_edges, dtype=np.int64)
    for items in (s.loops, s.arcs):
        for seq, cnt in items.items():
            np.add.at(N, np.asarray(seq, dtype=np.int64) >> 1, cnt)
    bd = {k: int(N[k]) for k in sorted(s.graph.boundary)}
    return OccupationField(s.graph, N, bd)


def spin_network_violations(g: WeightedGraph, fields: np.ndarray) -> np.ndarray:
    """Per-field count of vertices violating the parity or triangle condition."""
    fields = np.atleast_2d(fields)
    inc = g.incident_edges()
    width = max(len(i) for i in inc)
    pad = np.full((g.n_vertices, width), g.n_edges, dtype=np.int64)
    for v, es in enumerate(inc):
        pad[v, : len(es)] = es
    ext = np.concatenate([fields, np.zeros((fields.shape[0], 1), dtype=fields.dtype)], axis=1)
    local = ext[:, pad]  # reps x V x width
    tot = local.sum(axis=2)
    mx = local.max(axis=2)
    bad = (tot % 2 == 1) | (tot < 2 * mx)
    if g.boundary:
        deg1 = g.degrees == 1
        bad[:, deg1] = False
    return bad.sum(axis=1)


@dataclass
class EmpiricalStats:
    n: int
    mean: np.ndarray
    cov: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray
    histograms: dict


def empirical_stats(fields, targets=None, hist_max: int = 10) -> EmpiricalStats:
    """Means and covariances over samples, with standard errors, for the target edges."""
    X = np.asarray(fields, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need at least two samples")
    if targets is not None:
        X = X[:, list(targets)]
    n = X.shape[0]
    mean = X.mean(axis=0)
    D = X - mean
    cov = D.T @ D / (n - 1)
    mean_se = np.sqrt(np.diag(cov) / n)
    prod = D[:, :, None] * D[:, None, :]
    cov_se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    hists = {j: np.bincount(np.minimum(X[:, j].astype(int), hist_max), minlength=hist_max + 1)
             for j in range(X.shape[1])}
    return EmpiricalStats(n, mean, cov, mean_se, cov_se, hists)


class StreamingMoments:
    """Running sums for mean and covariance of a few coordinates over many batches."""

    def __init__(self, k: int):
        self.n = 0
        self.s1 = np.zeros(k)
        self.s2 = np.zeros((k, k))
        self._shift = None

    def update(self, X: np.ndarray) -> None:
        X = np.asarray(X, dtype=float)
        if self._shift is None:
            self._shift = X.mean(axis=0)
        Y = X - self._shift
        self.n += len(Y)
        self.s1 += Y.sum(axis=0)
        self.s2 += Y.T @ Y

    @property
    def mean(self) -> np.ndarray:
        return self._shift + self.s1 / self.n

    @property
    def cov(self) -> np.ndarray:
        m = self.s1 / self.n
        return (self.s2 - self.n * np.outer(m, m)) / (self.n - 1)


# -- arcs on cut graphs -----------------------------------------------------------


def arc_endpoints(g: WeightedGraph) -> tuple[np.ndarray, np.ndarray]:
    """Directed half-edges pointing into the graph (starts) and out of it (ends)."""
    deg = g.degrees
    tails, heads = g.tails, g.heads
    starts = np.nonzero(deg[tails] == 1)[0]
    ends = np.nonzero(deg[heads] == 1)[0]
    return starts, ends


@dataclass(eq=False)
class ArcSampler(BridgeSampler):
    """Poisson process of arcs (boundary-to-boundary walks with at least one step)."""

    def __post_init__(self) -> None:
        super().__post_init__()
        g = self.op.graph
        self.starts, self.ends = arc_endpoints(g)
        w = np.asarray(g.weights)
        self.table = np.zeros((self.lmax + 1, len(self.starts), len(self.ends)))
        if len(self.ends):
            for blk, C in self.column_blocks(self.ends):
                pos = np.searchsorted(self.ends, blk)
                self.table[:, :, pos] = C[:, self.starts, :]
            root = np.sqrt(w[self.ends >> 1][None, :] / w[self.starts >> 1][:, None])
            self.table *= root[None]
        # half of each directed version so that unoriented arcs get x(alpha)
        self.table[0] = 0.0
        self.table *= 0.5
        self.mass = float(self.table.sum())
        self._cum = np.cumsum(self.table.ravel())

    def arc_weight(self, seq) -> float:
        w = np.asarray(self.op.graph.weights)
        x = w[np.asarray(seq) >> 1]
        return float(np.prod(np.sqrt(x[:-1] * x[1:])))

    def sample(self, seed: int, chunk: int = 0) -> SoupSample:
        rng = _rng(seed, chunk)
        K = int(rng.poisson(self.mass)) if self.mass > 0 else 0
        arcs: Counter = Counter()
        if K:
            u = rng.random(K) * self._cum[-1]
            flat = np.minimum(np.searchsorted(self._cum, u, side="right"), self._cum.size - 1)
            ns, ne = len(self.starts), len(self.ends)
            m, rem = flat // (ns * ne), flat % (ns * ne)
            s_idx, e_idx = rem // ne, rem % ne
            starts, ends = self.starts[s_idx], self.ends[e_idx]
            for blk, C in self.column_blocks(ends):
                mask = np.isin(ends, blk)
                idx = np.nonzero(mask)[0]
                local = np.searchsorted(blk, ends[idx])
                walks = self.bridges(starts[idx], local, m[idx], C, rng)
                for row, k in zip(walks, m[idx]):
                    arcs[_canonical_arc(row[: k + 1])] += 1
        return SoupSample(self.op.graph, Counter(), arcs, self.lmax, seed)


def _canonical_arc(seq) -> tuple[int, ...]:
    fwd = tuple(int(s) for s in seq)
    rev = tuple(s ^ 1 for s in reversed(fwd))
    return min(fwd, rev)


def sample_arcs(cg: CutGraph, x=None, lmax: int = 20, seed: int = 0) -> SoupSample:
    g = cg.graph
    if not g.boundary:
        return SoupSample(g, Counter(), Counter(), lmax, seed)
    return ArcSampler(build_transfer(g, x, allow_boundary=True), lmax).sample(seed)


def enumerate_arcs(g: WeightedGraph, lmax: int, x=None) -> dict:
    """All arcs with 1..lmax steps and their weights, by explicit walk expansion."""
    w = np.asarray(g.weights if x is None else np.broadcast_to(np.asarray(x, float), (g.n_edges,)))
    op = build_transfer(g, w, allow_boundary=True)
    succ, _ = _padded_successors(op.matrix)
    starts, ends = arc_endpoints(g)
    end_set = set(ends.tolist())
    out = {}
    frontier = [(int(s),) for s in starts]
    for _ in range(lmax):
        nxt = []
        for walk in frontier:
            for f in succ[walk[-1]]:
                if f < 0:
                    continue
                new = walk + (int(f),)
                if f in end_set:
                    xs = w[np.asarray(new) >> 1]
                    out[_canonical_arc(new)] = float(np.prod(np.sqrt(xs[:-1] * xs[1:])))
                nxt.append(new)
        frontier = nxt
    return out
