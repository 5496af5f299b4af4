"""Weighted graphs, directed-edge indexing, tori, grids and cut graphs.

Directed edges follow the even/odd convention: undirected edge ``k = {u, v}``
(stored as ``(u, v)``) yields directed edge ``2k`` (u -> v) and ``2k + 1``
(v -> u), so the reversal of ``i`` is ``i ^ 1``.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when a graph violates its structural invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Simple undirected graph with vertices ``0..n_vertices-1`` and edge weights.

    ``coords`` optionally embeds vertices in Z^d (tori and grids); ``meta`` carries
    free-form provenance such as the torus parameters.
    """

    n_vertices: int
    edges: tuple[tuple[int, int], ...]
    weights: np.ndarray
    coords: np.ndarray | None = None
    meta: dict = field(default_factory=dict)
    require_connected: bool = True

    def __post_init__(self) -> None:
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        w = np.array(self.weights, dtype=float).reshape(-1)
        if w.size == 1 and len(edges) != 1:
            w = np.full(len(edges), float(w[0]))
        if w.shape != (len(edges),):
            raise GraphError(f"expected {len(edges)} weights, got {w.size}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise GraphError("edge weights must be finite and nonnegative")
        object.__setattr__(self, "weights", _readonly(w))
        if self.coords is not None:
            object.__setattr__(self, "coords", _readonly(np.array(self.coords, dtype=int)))

        seen: set[frozenset[int]] = set()
        for u, v in edges:
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise GraphError(f"edge {(u, v)} references a missing vertex")
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            key = frozenset((u, v))
            if key in seen:
                raise GraphError(f"parallel edge {(u, v)}")
            seen.add(key)
        if self.require_connected and self.n_vertices > 0 and len(self.components()) != 1:
            raise GraphError("graph is not connected")

    # -- basic structure -------------------------------------------------

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_directed(self) -> int:
        return 2 * len(self.edges)

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def incident_edges(self) -> list[list[int]]:
        """Edge ids incident on each vertex, in increasing edge order."""
        inc: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for k, (u, v) in enumerate(self.edges):
            inc[u].append(k)
            inc[v].append(k)
        return inc

    def neighbors(self) -> list[list[int]]:
        nb: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for u, v in self.edges:
            nb[u].append(v)
            nb[v].append(u)
        return nb

    @property
    def boundary(self) -> frozenset[int]:
        """Edges incident on a vertex of degree one."""
        deg = self.degrees
        return frozenset(k for k, (u, v) in enumerate(self.edges) if deg[u] == 1 or deg[v] == 1)

    def components(self) -> list[list[int]]:
        nb = self.neighbors()
        label = [-1] * self.n_vertices
        comps: list[list[int]] = []
        for s in range(self.n_vertices):
            if label[s] >= 0:
                continue
            label[s] = len(comps)
            comp = [s]
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in nb[u]:
                    if label[w] < 0:
                        label[w] = label[s]
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps

    def edge_index(self, u: int, v: int) -> int:
        for k, (a, b) in enumerate(self.edges):
            if (a, b) == (u, v) or (a, b) == (v, u):
                return k
        raise KeyError(f"no edge between {u} and {v}")

    def reweighted(self, x) -> "WeightedGraph":
        """Same graph with new weights (scalar or one per edge)."""
        return WeightedGraph(
            self.n_vertices,
            self.edges,
            np.broadcast_to(np.asarray(x, dtype=float), (self.n_edges,)).copy(),
            coords=self.coords,
            meta=dict(self.meta),
            require_connected=self.require_connected,
        )

    # -- directed edges --------------------------------------------------

    @property
    def tails(self) -> np.ndarray:
        e = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        t = np.empty(2 * len(e), dtype=int)
        t[0::2], t[1::2] = e[:, 0], e[:, 1]
        return t

    @property
    def heads(self) -> np.ndarray:
        e = np.asarray(self.edges, dtype=int).reshape(-1, 2)
        h = np.empty(2 * len(e), dtype=int)
        h[0::2], h[1::2] = e[:, 1], e[:, 0]
        return h

    def directed_index(self, tail: int, head: int) -> int:
        k = self.edge_index(tail, head)
        return 2 * k if self.edges[k][0] == tail else 2 * k + 1

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": list(range(self.n_vertices)),
            "edges": [[u, v, float(x)] for (u, v), x in zip(self.edges, self.weights)],
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "WeightedGraph":
        verts = data["vertices"]
        labels = list(range(verts)) if isinstance(verts, int) else list(verts)
        index = {lab: i for i, lab in enumerate(labels)}
        edges, weights = [], []
        for item in data["edges"]:
            u, v = item[0], item[1]
            edges.append((index[u], index[v]))
            weights.append(float(item[2]) if len(item) > 2 else 1.0)
        meta = dict(data.get("meta", {}))
        if labels != list(range(len(labels))):
            meta["labels"] = labels
        coords = meta.pop("coords", None)
        return cls(len(labels), tuple(edges), np.array(weights), coords=coords, meta=meta)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_graph(g: WeightedGraph, path: str | Path) -> None:
    data = g.to_dict()
    if g.coords is not None:
        data["meta"]["coords"] = g.coords.tolist()
    Path(path).write_text(json.dumps(data, indent=1))


def load_graph(path: str | Path) -> WeightedGraph:
    return WeightedGraph.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class DirectedEdge:
    index: int
    tail: int
    head: int
    reverse: int
    undirected: int


def directed_edges(g: WeightedGraph) -> list[DirectedEdge]:
    tails, heads = g.tails, g.heads
    return [
        DirectedEdge(i, int(tails[i]), int(heads[i]), i ^ 1, i >> 1) for i in range(g.n_directed)
    ]


# -- standard graphs ------------------------------------------------------


@dataclass(frozen=True)
class TorusSpec:
    """Torus (Z/nZ)^d with translation-invariant weights, one per direction."""

    d: int
    n: int
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.d < 1:
            raise GraphError(f"torus dimension must be >= 1, got {self.d}")
        if self.n < 3:
            raise GraphError(f"torus side must be >= 3 (n=2 creates parallel edges), got {self.n}")
        w = tuple(float(v) for v in np.broadcast_to(np.asarray(self.weights, dtype=float), (self.d,)))
        if any(v < 0 for v in w):
            raise GraphError("torus weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def homogeneous(cls, d: int, n: int, x: float) -> "TorusSpec":
        return cls(d, n, (float(x),) * d)

    @property
    def is_homogeneous(self) -> bool:
        return len(set(self.weights)) == 1


def build_torus(spec: TorusSpec) -> WeightedGraph:
    """Torus graph; vertices in lexicographic coordinate order, edges by (vertex, direction)."""
    d, n = spec.d, spec.n
    coords = np.array(list(itertools.product(range(n), repeat=d)), dtype=int).reshape(-1, d)
    strides = n ** np.arange(d - 1, -1, -1)
    edges, weights, dirs = [], [], []
    for k, c in enumerate(coords):
        for j in range(d):
            nxt = c.copy()
            nxt[j] = (nxt[j] + 1) % n
            edges.append((k, int(nxt @ strides)))
            weights.append(spec.weights[j])
            dirs.append(j)
    meta = {"kind": "torus", "d": d, "n": n, "weights": list(spec.weights), "edge_direction": dirs}
    return WeightedGraph(len(coords), tuple(edges), np.array(weights), coords=coords, meta=meta)


def build_grid(width: int, height: int, x: float | Sequence[float] = 0.1) -> WeightedGraph:
    """Planar ``width x height`` box of Z^2 (free boundary); vertex (i, j) has index ``j*width + i``.

    ``x`` is a scalar or a pair (horizontal, vertical) of weights.
    """
    if width < 2 or height < 2:
        raise GraphError("grid needs at least 2x2 vertices")
    xh, xv = np.broadcast_to(np.asarray(x, dtype=float), (2,))
    coords = np.array([(i, j) for j in range(height) for i in range(width)], dtype=int)
    edges, weights, dirs = [], [], []
    for j in range(height):
        for i in range(width):
            k = j * width + i
            if i + 1 < width:
                edges.append((k, k + 1))
                weights.append(xh)
                dirs.append(0)
            if j + 1 < height:
                edges.append((k, k + width))
                weights.append(xv)
                dirs.append(1)
    meta = {"kind": "grid", "width": width, "height": height, "edge_direction": dirs}
    return WeightedGraph(len(coords), tuple(edges), np.array(weights), coords=coords, meta=meta)


def cycle_graph(n: int, x: float = 0.1) -> WeightedGraph:
    return WeightedGraph(n, tuple((i, (i + 1) % n) for i in range(n)), np.full(n, float(x)))


def complete_graph(n: int, x: float = 0.1) -> WeightedGraph:
    edges = tuple(itertools.combinations(range(n), 2))
    return WeightedGraph(n, edges, np.full(len(edges), float(x)))


# -- cutting ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CutGraph:
    """``base`` with the edges in ``cut`` split into pairs of boundary half-edges.

    ``half_edges[i] = (k, a, b)``: base edge ``k = (u, v)`` became result edges
    ``a = {u, u'}`` and ``b = {v', v}``.
    """

    base: WeightedGraph
    cut: frozenset[int]
    graph: WeightedGraph
    half_edges: tuple[tuple[int, int, int], ...]
    edge_origin: tuple[int, ...]  # result edge -> base edge

    def components(self) -> list[list[int]]:
        return self.graph.components()

    def component_edges(self) -> list[list[int]]:
        """Result-graph edge ids grouped by connected component."""
        label = {}
        for c, comp in enumerate(self.graph.components()):
            for v in comp:
                label[v] = c
        groups: list[list[int]] = [[] for _ in range(len(set(label.values())))]
        for k, (u, _) in enumerate(self.graph.edges):
            groups[label[u]].append(k)
        return groups


def cut_along(g: WeightedGraph, H: Iterable[int]) -> CutGraph:
    H = frozenset(int(k) for k in H)
    bad = [k for k in H if not 0 <= k < g.n_edges]
    if bad:
        raise GraphError(f"cut set is not a subset of the edges: {sorted(bad)}")
    edges, weights, origin = [], [], []
    for k, (u, v) in enumerate(g.edges):
        if k not in H:
            edges.append((u, v))
            weights.append(g.weights[k])
            origin.append(k)
    n = g.n_vertices
    halves = []
    for k in sorted(H):
        u, v = g.edges[k]
        u_new, v_new = n, n + 1
        n += 2
        halves.append((k, len(edges), len(edges) + 1))
        edges += [(u, u_new), (v_new, v)]
        weights += [g.weights[k], g.weights[k]]
        origin += [k, k]
    coords = None
    result = WeightedGraph(
        n, tuple(edges), np.array(weights), coords=coords,
        meta={"kind": "cut", "cut": sorted(H)}, require_connected=False,
    )
    return CutGraph(g, H, result, tuple(halves), tuple(origin))


def glue(cg: CutGraph) -> WeightedGraph:
    """Inverse of :func:`cut_along`: rejoin each half-edge pair and drop the fresh vertices."""
    n = cg.base.n_vertices
    edges: list[tuple[int, int] | None] = [None] * cg.base.n_edges
    weights = np.zeros(cg.base.n_edges)
    half = {a for _, a, b in cg.half_edges} | {b for _, a, b in cg.half_edges}
    for j, (u, v) in enumerate(cg.graph.edges):
        if j in half:
            continue
        edges[cg.edge_origin[j]] = (u, v)
        weights[cg.edge_origin[j]] = cg.graph.weights[j]
    for k, a, b in cg.half_edges:
        u = cg.graph.edges[a][0]
        v = cg.graph.edges[b][1]
        if u >= n or v >= n:
            raise GraphError("half-edge endpoints do not match the base graph")
        edges[k] = (u, v)
        weights[k] = cg.graph.weights[a]
    return WeightedGraph(n, tuple(edges), weights, coords=cg.base.coords, meta=dict(cg.base.meta))


# -- distances --------------------------------------------------------------


def vertex_distances(g: WeightedGraph, source: int) -> np.ndarray:
    nb = g.neighbors()
    dist = np.full(g.n_vertices, -1, dtype=int)
    dist[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for w in nb[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def edge_graph_distance(g: WeightedGraph, e: int, f: int) -> int:
    """Line-graph distance: 0 if ``e == f``, 1 if they share a vertex, and so on."""
    if e == f:
        return 0
    a, b = g.edges[e]
    c, d = g.edges[f]
    best = None
    for s in (a, b):
        dist = vertex_distances(g, s)
        for t in (c, d):
            if dist[t] >= 0 and (best is None or dist[t] < best):
                best = int(dist[t])
    if best is None:
        raise GraphError(f"edges {e} and {f} are in different components")
    return best + 1
