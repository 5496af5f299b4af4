"""Identity checks run by ``loopsoup verify``."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import gibbs, loops, observables, torus, transfer
from .graph import TorusSpec, WeightedGraph


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _gap(name: str, a: float, b: float, tol: float) -> CheckResult:
    gap = abs(a - b)
    return CheckResult(name, bool(gap <= tol), f"gap={gap:.3e} tol={tol:.1e}")


def check_nb(g: WeightedGraph, spec=None) -> list[CheckResult]:
    op = transfer.build_transfer(g)
    det = transfer.log_partition_det(op)
    out = [_gap("vertex formula", transfer.log_partition_vertex(g), det, 1e-10)]
    sign, logabs = transfer.slogdet_id_minus(op)
    out.append(_gap("zeta identity", transfer.ihara_zeta(g) * sign * math.exp(logabs), 1.0, 1e-10))
    _, res = transfer.gff_correspondence(g)
    out.append(CheckResult("gff correspondence", res < 1e-10, f"residual={res:.3e}"))
    out.append(CheckResult("green residual", transfer.green(op).residual() < 1e-10,
                           f"residual={transfer.green(op).residual():.3e}"))
    return out


def check_torus(g: WeightedGraph, spec: TorusSpec | None) -> list[CheckResult]:
    if spec is None:
        return [CheckResult("torus", True, "skipped: graph is not a torus")]
    op = transfer.build_transfer(g)
    out = [_gap("fourier determinant", torus.torus_log_partition(spec), transfer.log_partition_det(op), 1e-10)]
    worst = 0.0
    for p in torus.modes(spec.d, spec.n):
        worst = max(worst, abs(torus.block_det(p, spec) - torus.block_det_dense(p, spec)))
    out.append(CheckResult("block determinants", worst < 1e-10, f"max_gap={worst:.3e}"))
    if spec.is_homogeneous:
        G = transfer.green(op)
        out.append(_gap("one-point", torus.one_point_torus(spec), observables.one_point_green(G, 0), 1e-10))
    return out


def check_loops(g: WeightedGraph, spec=None, lmax: int | None = None) -> list[CheckResult]:
    lmax = lmax or (20 if g.n_directed <= 40 else 12)
    op = transfer.build_transfer(g)
    oracle = loops.truncated_log_partition(g, lmax)
    tail = loops.tail_bound(g, lmax)
    out = [_gap(f"truncated partition (Lmax={lmax})", oracle, transfer.log_partition_det(op), tail + 1e-12)]
    if g.n_edges >= 2:
        G = transfer.green(op)
        two = loops.truncated_two_point(g, 0, 1, lmax)
        out.append(_gap("truncated two-point", two, observables.two_point_green(G, 0, 1),
                        loops.two_point_tail_bound(g, lmax) + 1e-12))
    return out


def check_gibbs(g: WeightedGraph, spec=None, nmax: int = 4) -> list[CheckResult]:
    if g.n_edges > 8:
        return [CheckResult("gibbs partition", True, "skipped: too many edges for exhaustive sum")]
    bf = gibbs.brute_force_partition(g, nmax=nmax)
    z = math.exp(transfer.log_partition_det(transfer.build_transfer(g)))
    return [CheckResult("gibbs partition", bool(bf <= z * (1 + 1e-12)) and z - bf < 1e-3 * z,
                        f"Z_brute={bf:.10g} Z={z:.10g} gap={z - bf:.3e}")]


def check_observables(g: WeightedGraph, spec=None) -> list[CheckResult]:
    op = transfer.build_transfer(g)
    fr = observables.first_return(op, 0)
    G = transfer.green(op)
    out = [_gap("pgf(1)", observables.pgf(fr, z=1.0).real, 1.0, 0.0)]
    out.append(_gap("pgf derivative", observables.pgf_derivative(fr), observables.one_point_green(G, 0), 1e-8))
    out.append(_gap("pgf determinant route", observables.pgf(fr, z=0.5).real,
                    observables.pgf_by_determinant(op, 0, 0.5), 1e-10))
    return out


SUITES = {
    "nb": check_nb, "torus": check_torus, "loops": check_loops,
    "gibbs": check_gibbs, "observables": check_observables,
}


def run_suite(name: str, g: WeightedGraph, spec: TorusSpec | None = None) -> list[CheckResult]:
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        try:
            out.extend(SUITES[n](g, spec))
        except (ArithmeticError, ValueError, np.linalg.LinAlgError, MemoryError) as exc:
            out.append(CheckResult(n, False, f"{type(exc).__name__}: {exc}"))
    return out
