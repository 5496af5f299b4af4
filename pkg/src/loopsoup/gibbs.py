"""Gibbs description of the occupation field: local pairing counts, the Hamiltonian,
brute-force partition sums and statistical checks of sampled fields."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np
from scipy import stats

from .graph import WeightedGraph, cut_along
from .transfer import build_transfer, edge_weights, log_partition_det


# -- local combinatorics ------------------------------------------------------------


@lru_cache(maxsize=None)
def _pairings_sorted(counts: tuple[int, ...]) -> int:
    counts = tuple(c for c in counts if c)
    if not counts:
        return 1
    total = sum(counts)
    if total % 2 or 2 * max(counts) > total:
        return 0
    # pair one half-edge of the largest group with any half-edge of another group
    i = counts.index(max(counts))
    out = 0
    for j, cj in enumerate(counts):
        if j == i:
            continue
        nxt = list(counts)
        nxt[i] -= 1
        nxt[j] -= 1
        out += cj * _pairings_sorted(tuple(sorted(nxt, reverse=True)))
    return out


def pairing_count(occupations: Sequence[int]) -> int:
    """Number of perfect matchings of colored half-edges where no pair shares an edge."""
    occ = [int(v) for v in occupations]
    if any(v < 0 for v in occ):
        raise ValueError("occupations must be nonnegative")
    return _pairings_sorted(tuple(sorted(occ, reverse=True)))


def all_pairings(items: Sequence) -> Iterator[list[tuple]]:
    """Every perfect matching of a list of distinct items."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, partner in enumerate(rest):
        for tail in all_pairings(rest[:i] + rest[i + 1 :]):
            yield [(first, partner)] + tail


def pairing_count_bruteforce(occupations: Sequence[int]) -> int:
    """Exhaustive oracle: enumerate matchings of labelled half-edges and count the admissible ones."""
    halves = [(g, k) for g, n in enumerate(occupations) for k in range(n)]
    if len(halves) % 2:
        return 0
    return sum(all(a[0] != b[0] for a, b in m) for m in all_pairings(halves))


def trivalent_pairing(n1: int, n2: int, n3: int) -> int:
    """Closed form ``N1! N2! N3! / (N12! N13! N23!)`` with ``N_ij`` the strand counts between pairs."""
    s = n1 + n2 + n3
    if s % 2:
        return 0
    n12, n13, n23 = (n1 + n2 - n3) // 2, (n1 + n3 - n2) // 2, (n2 + n3 - n1) // 2
    if min(n12, n13, n23) < 0:
        return 0
    f = math.factorial
    return f(n1) * f(n2) * f(n3) // (f(n12) * f(n13) * f(n23))


@dataclass(frozen=True)
class LocalVertexState:
    vertex: int
    occupations: tuple[int, ...]
    pairings: int
    energy: float


@dataclass(frozen=True)
class BoundaryCondition:
    graph: WeightedGraph
    values: dict

    def __post_init__(self) -> None:
        if set(self.values) != set(self.graph.boundary):
            raise ValueError("boundary condition must be defined exactly on the boundary edges")
        if any(int(v) < 0 for v in self.values.values()):
            raise ValueError("boundary values must be nonnegative")


# -- Hamiltonian ----------------------------------------------------------------------


def _bulk_vertices(g: WeightedGraph) -> list[int]:
    # pendant vertices of a cut graph only terminate arcs and carry no pairing constraint
    deg = g.degrees
    return [v for v in range(g.n_vertices) if deg[v] != 1]


def local_states(g: WeightedGraph, N, x=None) -> list[LocalVertexState]:
    w = edge_weights(g, x)
    N = np.asarray(N, dtype=np.int64)
    inc = g.incident_edges()
    out = []
    for v in _bulk_vertices(g):
        occ = tuple(int(N[k]) for k in inc[v])
        c = pairing_count(occ)
        if c == 0:
            h = math.inf
        else:
            h = -math.log(c) + 0.5 * sum(math.lgamma(n + 1) for n in occ)
            for k, n in zip(inc[v], occ):
                if n:
                    h -= 0.5 * n * math.log(w[k]) if w[k] > 0 else -math.inf
        out.append(LocalVertexState(v, occ, c, h))
    return out


def hamiltonian(g: WeightedGraph, N, x=None) -> float:
    """``sum_v H_v``; ``inf`` when some vertex admits no pairing."""
    energies = [s.energy for s in local_states(g, N, x)]
    return math.inf if math.inf in energies else float(math.fsum(energies))


def log_weight(g: WeightedGraph, N, x=None) -> float:
    """``log( prod_v C_v prod_e x_e^N / N! )``, the factorized form of ``-H``."""
    w = edge_weights(g, x)
    N = np.asarray(N, dtype=np.int64)
    inc = g.incident_edges()
    tot = 0.0
    for v in _bulk_vertices(g):
        c = pairing_count([N[k] for k in inc[v]])
        if c == 0:
            return -math.inf
        tot += math.log(c)
    for k, n in enumerate(N):
        if n:
            if w[k] == 0:
                return -math.inf
            tot += n * math.log(w[k]) - math.lgamma(n + 1)
    return tot


# -- brute force partition --------------------------------------------------------


def iter_fields(n_edges: int, nmax: int, cap: int = 5_000_000) -> Iterator[tuple[int, ...]]:
    total = (nmax + 1) ** n_edges
    if total > cap:
        raise MemoryError(f"{total} states exceed the cap {cap}")
    return itertools.product(range(nmax + 1), repeat=n_edges)


def brute_force_partition(g: WeightedGraph, x=None, nmax: int = 4, cap: int = 5_000_000) -> float:
    """``sum_N exp(-H(N))`` over fields with every ``N(e) <= nmax``."""
    w = edge_weights(g, x)
    inc = g.incident_edges()
    bulk = _bulk_vertices(g)
    logfact = [math.lgamma(k + 1) for k in range(nmax + 1)]
    terms = []
    for N in iter_fields(g.n_edges, nmax, cap):
        c = 1
        for v in bulk:
            c *= pairing_count([N[k] for k in inc[v]])
            if c == 0:
                break
        if c == 0:
            continue
        lw = math.log(c)
        ok = True
        for k, n in enumerate(N):
            if n:
                if w[k] == 0:
                    ok = False
                    break
                lw += n * math.log(w[k]) - logfact[n]
        if ok:
            terms.append(math.exp(lw))
    return math.fsum(terms)


# -- goodness of fit ------------------------------------------------------------------


@dataclass
class FitReport:
    statistic: float
    dof: int
    p_value: float
    n_samples: int
    n_cells: int
    pooled_cells: int
    overflow_expected: float
    notes: list = field(default_factory=list)


def _encode(fields: np.ndarray, nmax: int) -> np.ndarray:
    base = nmax + 1
    over = (fields > nmax).any(axis=1)
    powers = base ** np.arange(fields.shape[1], dtype=np.int64)
    codes = np.where(over, -1, np.minimum(fields, nmax) @ powers)
    return codes


def gibbs_fit_test(fields, g: WeightedGraph, x=None, nmax: int = 4, min_expected: float = 5.0) -> FitReport:
    """Chi-square test of sampled fields against ``exp(-H(N))/Z``.

    Cells are the fields with all ``N(e) <= nmax``; fields outside form an
    overflow cell whose probability is ``1 - sum`` of the enumerated cells.
    Cells with expected count below ``min_expected`` are pooled together.
    """
    fields = np.asarray(fields, dtype=np.int64)
    R = fields.shape[0]
    w = edge_weights(g, x)
    Z = math.exp(log_partition_det(build_transfer(g, w)))
    base = nmax + 1
    powers = base ** np.arange(g.n_edges, dtype=np.int64)
    cells, probs = [], []
    for N in iter_fields(g.n_edges, nmax):
        lw = log_weight(g, N, w)
        if lw > -math.inf:
            cells.append(int(np.dot(N, powers)))
            probs.append(math.exp(lw) / Z)
    probs = np.array(probs)
    overflow_p = max(0.0, 1.0 - math.fsum(probs))
    codes = _encode(fields, nmax)
    lookup = {c: i for i, c in enumerate(cells)}
    obs = np.zeros(len(cells) + 1)
    uniq, cnt = np.unique(codes, return_counts=True)
    notes = []
    for c, k in zip(uniq, cnt):
        if c == -1:
            obs[-1] += k
        elif int(c) in lookup:
            obs[lookup[int(c)]] += k
        else:
            notes.append(f"observed zero-weight field code {int(c)} ({k} times)")
            obs[-1] += k
    exp = np.append(probs, overflow_p) * R
    small = exp < min_expected
    pooled_obs = obs[small].sum()
    pooled_exp = exp[small].sum()
    O = np.append(obs[~small], pooled_obs)
    E = np.append(exp[~small], pooled_exp)
    if pooled_exp == 0:
        O, E = O[:-1], E[:-1]
        if pooled_obs > 0:
            notes.append("observed fields in a cell of zero expected count")
            return FitReport(math.inf, len(O) - 1, 0.0, R, len(O), int(small.sum()), overflow_p * R, notes)
    elif pooled_exp < min_expected:
        notes.append(f"pooled cell has expected count {pooled_exp:.3g} < {min_expected}")
    stat = float(np.sum((O - E) ** 2 / E))
    dof = len(O) - 1
    p = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    return FitReport(stat, dof, p, R, len(O), int(small.sum()), overflow_p * R, notes)


# -- spatial Markov property ----------------------------------------------------------


@dataclass
class IndependenceReport:
    p_value: float
    classes_tested: int
    class_p_values: dict
    statistic_edges: list
    notes: list = field(default_factory=list)


def _bin(values: np.ndarray, min_count: int) -> np.ndarray:
    """Map values to bins, merging rare values upwards into the last adequate bin."""
    uniq, cnt = np.unique(values, return_counts=True)
    edges = []
    acc = 0
    for u, c in zip(uniq, cnt):
        acc += c
        if acc >= min_count:
            edges.append(u)
            acc = 0
    if not edges:
        return np.zeros(len(values), dtype=int)
    labels = np.searchsorted(np.array(edges), values, side="left")
    return np.minimum(labels, len(edges) - 1)


def _independence_p(a: np.ndarray, b: np.ndarray, min_count: int) -> float | None:
    ra, rb = _bin(a, min_count), _bin(b, min_count)
    if ra.max() == 0 or rb.max() == 0:
        return None
    table = np.zeros((ra.max() + 1, rb.max() + 1))
    np.add.at(table, (ra, rb), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return None
    return float(stats.chi2_contingency(table, correction=False)[1])


def side_statistics(g: WeightedGraph, H, fields: np.ndarray) -> tuple[np.ndarray, list[list[int]]]:
    """Total occupation of each connected component left after cutting ``H``."""
    cg = cut_along(g, H)
    groups = []
    for comp in cg.component_edges():
        base = sorted({cg.edge_origin[k] for k in comp} - set(cg.cut))
        if base:
            groups.append(base)
    fields = np.asarray(fields)
    return np.stack([fields[:, grp].sum(axis=1) for grp in groups], axis=1), groups


def markov_independence_test(
    fields,
    g: WeightedGraph,
    H,
    conditional: bool = True,
    min_class: int = 200,
    min_count: int = 20,
) -> IndependenceReport:
    """Test that the two sides of a separating cut ``H`` are independent given ``N`` on ``H``.

    The statistic pair is the total occupation of the first component versus the
    rest. Within each observed class of ``N|_H`` with at least ``min_class``
    samples, a contingency chi-square is computed; the reported p-value is the
    Bonferroni-corrected minimum. With ``conditional=False`` all samples form
    a single class.
    """
    fields = np.asarray(fields)
    S, groups = side_statistics(g, H, fields)
    if S.shape[1] < 2:
        raise ValueError("cut does not separate the graph")
    a, b = S[:, 0], S[:, 1:].sum(axis=1)
    H = sorted(int(k) for k in H)
    if conditional:
        keys, inverse = np.unique(fields[:, H], axis=0, return_inverse=True)
        inverse = inverse.ravel()
    else:
        keys, inverse = np.zeros((1, len(H)), dtype=int), np.zeros(len(fields), dtype=int)
    pvals = {}
    counts = np.bincount(inverse)
    for cls in np.nonzero(counts >= min_class)[0]:
        idx = inverse == cls
        p = _independence_p(a[idx], b[idx], min_count)
        if p is not None:
            pvals[tuple(int(v) for v in keys[cls])] = p
    if not pvals:
        raise ValueError(
            "no class of N on the cut has enough varied samples for a test; draw more samples"
        )
    k = len(pvals)
    p = min(1.0, k * min(pvals.values()))
    return IndependenceReport(p, k, pvals, groups)
