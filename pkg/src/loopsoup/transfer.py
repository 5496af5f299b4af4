"""Non-backtracking transfer operator and the determinantal identities built on it.

The operator acts on directed edges: ``Lam[e, g] = x_e`` when the head of ``e``
is the tail of ``g`` and ``g`` is not the reversal of ``e``. Products of entries
along a closed walk give the walk weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .errors import ConvergenceError, NotPositiveDefiniteError, SupercriticalError
from .graph import GraphError, WeightedGraph

DENSE_LIMIT = 20000
_DENSE_DET_LIMIT = 4000


def edge_weights(g: WeightedGraph, x=None) -> np.ndarray:
    """Per-edge weights: ``g.weights`` when ``x`` is None, else ``x`` broadcast to the edges."""
    if x is None:
        return np.asarray(g.weights, dtype=float)
    w = np.broadcast_to(np.asarray(x, dtype=float), (g.n_edges,)).astype(float)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise GraphError("edge weights must be finite and nonnegative")
    return w


@dataclass(frozen=True, eq=False)
class TransferOperator:
    graph: WeightedGraph
    matrix: sp.csr_matrix
    backtracking: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @property
    def tails(self) -> np.ndarray:
        return self.graph.tails

    @property
    def heads(self) -> np.ndarray:
        return self.graph.heads


def build_transfer(
    g: WeightedGraph, x=None, *, allow_boundary: bool = False, backtracking: bool = False
) -> TransferOperator:
    """Assemble the sparse transfer operator.

    ``allow_boundary`` admits degree-1 vertices (cut graphs); walks then die on
    entering a pendant vertex. ``backtracking=True`` builds the ordinary walk
    operator instead, used only as a deliberately wrong control.
    """
    if not allow_boundary and g.boundary:
        raise GraphError("transfer operator requires a graph without degree-1 vertices")
    w = edge_weights(g, x)
    tails, heads = g.tails, g.heads
    out_at: list[list[int]] = [[] for _ in range(g.n_vertices)]
    for i, t in enumerate(tails):
        out_at[t].append(i)
    rows, cols = [], []
    for e, h in enumerate(heads):
        for f in out_at[h]:
            if f != (e ^ 1) or backtracking:
                rows.append(e)
                cols.append(f)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    vals = w[rows >> 1]
    n = g.n_directed
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    mat.sort_indices()
    return TransferOperator(g, mat, backtracking)


def spectral_radius(op: TransferOperator, tol: float = 1e-10, max_iter: int = 100000) -> float:
    """Perron root of ``|Lam|``: the largest over its strongly connected blocks.

    Each irreducible block is handled by power iteration on ``I + |block|``; the
    unit shift makes the Perron root strictly dominant even when the block is
    periodic (bipartite tori carry both +rho and -rho). Convergence is certified
    by Collatz-Wielandt bounds. Trees and other cycle-free supports give 0.
    """
    A = abs(op.matrix).tocsr()
    A.eliminate_zeros()
    if A.nnz == 0:
        return 0.0
    n_comp, labels = csgraph.connected_components(A, directed=True, connection="strong")
    rho = 0.0
    for c in range(n_comp):
        idx = np.nonzero(labels == c)[0]
        B = A[idx][:, idx]
        if B.nnz == 0:
            continue
        rho = max(rho, _perron_root(B, tol, max_iter))
    return rho


def _perron_root(A: sp.csr_matrix, tol: float, max_iter: int) -> float:
    n = A.shape[0]
    v = np.ones(n) / n
    lo = hi = 0.0
    for _ in range(max_iter):
        Av = A @ v
        ratios = Av / v
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= tol * max(1.0, hi):
            return 0.5 * (lo + hi)
        w = v + Av
        v = w / w.sum()
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (bounds {lo:.3e}..{hi:.3e})"
    )


def _slogdet_sparse(M: sp.spmatrix) -> tuple[float, float]:
    lu = spla.splu(sp.csc_matrix(M))
    diag = lu.U.diagonal()
    sign = np.prod(np.sign(diag))
    sign *= _perm_sign(lu.perm_r) * _perm_sign(lu.perm_c)
    return float(sign), float(np.sum(np.log(np.abs(diag))))


def _perm_sign(perm: np.ndarray) -> int:
    perm = np.asarray(perm)
    seen = np.zeros(len(perm), dtype=bool)
    sign = 1
    for i in range(len(perm)):
        if seen[i]:
            continue
        j, length = i, 0
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def slogdet_id_minus(op: TransferOperator) -> tuple[float, float]:
    """Sign and log|det| of ``Id - Lam`` (dense LU for moderate sizes, sparse LU beyond)."""
    n = op.dim
    if n > DENSE_LIMIT:
        raise ValueError(f"operator dimension {n} exceeds the cap {DENSE_LIMIT}")
    M = sp.identity(n, format="csr") - op.matrix
    if n <= _DENSE_DET_LIMIT:
        sign, logabs = np.linalg.slogdet(M.toarray())
        return float(sign), float(logabs)
    return _slogdet_sparse(M)


def log_partition_det(op: TransferOperator, check_radius: bool = True) -> float:
    """``log Z = -1/2 log det(Id - Lam)``; raises SupercriticalError unless rho < 1 and det > 0."""
    if check_radius:
        rho = spectral_radius(op)
        if rho >= 1.0:
            raise SupercriticalError(f"spectral radius {rho:.12g} >= 1", detail={"rho": rho})
    sign, logabs = slogdet_id_minus(op)
    if sign <= 0:
        raise SupercriticalError("det(Id - Lam) <= 0", detail={"sign": sign})
    return -0.5 * logabs


def ihara_zeta(g: WeightedGraph, x=None) -> float:
    """Edge zeta function ``1/det(Id - Lam)``; its square root is the loop-soup partition function."""
    return float(np.exp(2.0 * log_partition_det(build_transfer(g, x))))


@dataclass(frozen=True, eq=False)
class GreenFunction:
    operator: TransferOperator
    matrix: np.ndarray

    def residual(self) -> float:
        n = self.operator.dim
        R = self.matrix - self.operator.matrix @ self.matrix - np.eye(n)
        return float(np.abs(R).max())


def green(op: TransferOperator) -> GreenFunction:
    """Dense ``(Id - Lam)^{-1}``."""
    if spectral_radius(op) >= 1.0:
        raise SupercriticalError("Green's function diverges: spectral radius >= 1")
    n = op.dim
    M = np.eye(n) - op.dense
    try:
        lu = sla.lu_factor(M, check_finite=False)
    except sla.LinAlgError as exc:  # pragma: no cover - excluded by the radius check
        raise SupercriticalError(f"singular system: {exc}") from exc
    G = sla.lu_solve(lu, np.eye(n), check_finite=False)
    return GreenFunction(op, G)


# -- vertex formula and Gaussian free field -------------------------------------


def vertex_matrices(g: WeightedGraph, x=None) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal ``D`` (as a vector) and symmetric ``A`` of the vertex determinant."""
    w = edge_weights(g, x)
    if np.any(w >= 1.0):
        raise SupercriticalError("vertex formula needs all weights < 1")
    D = np.zeros(g.n_vertices)
    A = np.zeros((g.n_vertices, g.n_vertices))
    for (u, v), xe in zip(g.edges, w):
        q = 1.0 - xe * xe
        D[u] += xe * xe / q
        D[v] += xe * xe / q
        A[u, v] = A[v, u] = xe / q
    return D, A


def _cholesky_logdet(M: np.ndarray) -> float:
    c, info = sla.lapack.dpotrf(M, lower=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:  # pragma: no cover
        raise ValueError(f"dpotrf argument {-info} invalid")
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def log_partition_vertex(g: WeightedGraph, x=None) -> float:
    """``-1/2 log det(Id + D - A) - 1/2 sum_e log(1 - x_e^2)`` via Cholesky."""
    w = edge_weights(g, x)
    D, A = vertex_matrices(g, w)
    M = np.eye(g.n_vertices) + np.diag(D) - A
    return -0.5 * _cholesky_logdet(M) - 0.5 * float(np.sum(np.log1p(-w * w)))


def gff_partition(g: WeightedGraph, c, k) -> float:
    """Log partition function of the massive Gaussian free field with conductances ``c`` and killing ``k``.

    ``log Z = sum_v 1/2 log(2 pi / lam_v) - 1/2 log det(Id - P)`` with
    ``lam_v = sum_{e ni v} c_e + k_v`` and ``P = C / lam``.
    """
    c = np.broadcast_to(np.asarray(c, dtype=float), (g.n_edges,))
    k = np.broadcast_to(np.asarray(k, dtype=float), (g.n_vertices,))
    C = np.zeros((g.n_vertices, g.n_vertices))
    for (u, v), ce in zip(g.edges, c):
        C[u, v] = C[v, u] = ce
    lam = C.sum(axis=1) + k
    if np.any(lam <= 0):
        raise SupercriticalError("chain not absorbed: a vertex has zero total rate", "supercritical")
    s = 1.0 / np.sqrt(lam)
    S = s[:, None] * C * s[None, :]  # symmetric, similar to P
    top = float(np.max(np.abs(np.linalg.eigvalsh(S)))) if g.n_vertices else 0.0
    if top >= 1.0:
        raise SupercriticalError(f"chain not absorbed: rho(P) = {top:.12g} >= 1")
    return 0.5 * float(np.sum(np.log(2 * np.pi / lam))) - 0.5 * _cholesky_logdet(np.eye(g.n_vertices) - S)


@dataclass(frozen=True)
class GFFLink:
    D: np.ndarray
    A: np.ndarray
    lam: np.ndarray
    P: np.ndarray
    killing: np.ndarray

    def symmetry_defect(self) -> float:
        L = self.lam[:, None] * self.P
        return float(np.abs(L - L.T).max()) if L.size else 0.0


@dataclass(frozen=True)
class MarginReport:
    margins: np.ndarray
    classification: str


def critical_margin(g: WeightedGraph, x=None, rtol: float = 1e-12) -> MarginReport:
    """Per-vertex ``m_v = sum_{e ni v} x_e/(1+x_e)`` and the resulting classification.

    Fractions in ``x`` are handled exactly; floats compare to 1 with relative tolerance ``rtol``.
    """
    if x is not None and _is_exact(x):
        xs = [Fraction(v) for v in np.broadcast_to(np.asarray(x, dtype=object), (g.n_edges,))]
        m = [Fraction(0)] * g.n_vertices
        for (u, v), xe in zip(g.edges, xs):
            m[u] += xe / (1 + xe)
            m[v] += xe / (1 + xe)
        above = any(mv > 1 for mv in m)
        equal = all(mv == 1 for mv in m)
        margins = np.array([float(mv) for mv in m])
    else:
        w = edge_weights(g, x)
        margins = np.zeros(g.n_vertices)
        for (u, v), xe in zip(g.edges, w):
            margins[u] += xe / (1 + xe)
            margins[v] += xe / (1 + xe)
        close = np.abs(margins - 1.0) <= rtol
        above = bool(np.any((margins > 1.0) & ~close))
        equal = bool(np.all(close))
    if above:
        cls = "supercritical"
    elif equal:
        cls = "critical"
    else:
        cls = "subcritical"
    return MarginReport(margins, cls)


def _is_exact(x) -> bool:
    if isinstance(x, Fraction):
        return True
    if isinstance(x, (list, tuple)):
        return len(x) > 0 and all(isinstance(v, (Fraction, int)) for v in x) and any(
            isinstance(v, Fraction) for v in x
        )
    return False


def gff_link(g: WeightedGraph, x=None) -> GFFLink:
    D, A = vertex_matrices(g, x)
    lam = 1.0 + D
    P = A / lam[:, None]
    return GFFLink(D, A, lam, P, lam - A.sum(axis=1))


def gff_correspondence(g: WeightedGraph, x=None) -> tuple[GFFLink, float]:
    """Build the GFF link and the residual of the loop-soup/GFF partition-function identity."""
    report = critical_margin(g, x)
    if report.classification != "subcritical":
        raise SupercriticalError(
            f"GFF link needs a subcritical margin, got {report.classification}",
            report.classification,
            detail={"margins": report.margins},
        )
    w = edge_weights(g, x)
    link = gff_link(g, w)
    log_zl = log_partition_det(build_transfer(g, w))
    c = w / (1.0 - w * w)
    log_gff = gff_partition(g, c, np.clip(link.killing, 0.0, None))
    rhs = -0.5 * g.n_vertices * np.log(2 * np.pi) - 0.5 * float(np.sum(np.log1p(-w * w))) + log_gff
    return link, abs(log_zl - rhs)
