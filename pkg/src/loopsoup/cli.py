"""Command-line interface: ``loopsoup <command> [options]``.

Scalar reports are JSON, scans are CSV and sampled fields are JSON lines.
A ``--config`` file (YAML or JSON) supplies defaults that flags override.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import re
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import gibbs, loops, observables, sampler, spin, torus, transfer
from .errors import SupercriticalError
from .graph import (GraphError, TorusSpec, WeightedGraph, build_grid, build_torus, complete_graph,
                    cycle_graph, load_graph)

EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3

DEFAULTS = {
    "x": None, "lmax": None, "nmax": 4, "reps": 100000, "seed": 0, "report": "det,vertex,zeta,gff",
    "check": None, "pair": None, "edge": 0, "z_grid": "0,0.5,1", "d": 2, "x_from": None, "x_to": None,
    "points": 40, "quantity": "free-energy", "order": None, "patch": "20x20", "line": None,
    "suite": "all", "out": None, "samples": None, "tol": 1e-10, "backtracking": False,
}


class UsageError(Exception):
    pass


# -- graph sources -------------------------------------------------------------------------


def parse_torus(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"(\d+)x(\d+)", text.strip())
    if not m:
        raise UsageError(f"torus must look like DxN (e.g. 2x5), got {text!r}")
    return int(m.group(1)), int(m.group(2))


def resolve_graph(args) -> tuple[WeightedGraph, TorusSpec | None]:
    """Graph from ``--torus DxN``, a JSON file, or a name such as ``K4``, ``C3`` or ``grid:6x6``."""
    x = args.x
    if args.torus:
        d, n = parse_torus(args.torus)
        spec = TorusSpec.homogeneous(d, n, 0.0 if x is None else x)
        return build_torus(spec), spec
    src = args.graph
    if src is None:
        raise UsageError("give --graph or --torus")
    if Path(src).exists():
        g = load_graph(src)
        if x is not None:
            g = g.reweighted(x)
        return g, None
    w = 0.1 if x is None else x
    m = re.fullmatch(r"[Kk](\d+)", src)
    if m:
        return complete_graph(int(m.group(1)), w), None
    m = re.fullmatch(r"[Cc](\d+)", src)
    if m:
        return cycle_graph(int(m.group(1)), w), None
    m = re.fullmatch(r"grid:(\d+)x(\d+)", src)
    if m:
        return build_grid(int(m.group(1)), int(m.group(2)), w), None
    m = re.fullmatch(r"torus:(\d+)x(\d+)", src)
    if m:
        spec = TorusSpec.homogeneous(int(m.group(1)), int(m.group(2)), w)
        return build_torus(spec), spec
    raise UsageError(f"graph {src!r} is neither a file nor a known name")


def parse_edge(text) -> int:
    return int(str(text).strip().lstrip("eE"))


def default_lmax(g: WeightedGraph) -> int:
    return 20 if g.n_directed <= 100 else 12


# -- output --------------------------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def emit_json(data: dict, out: str | None) -> None:
    text = json.dumps(_clean(data), indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def emit_csv(header: list[str], rows: list[list], out: str | None) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    if out:
        Path(out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())


def summary(text: str) -> None:
    print(text, file=sys.stderr)


# -- commands --------------------------------------------------------------------------------


def cmd_exact(args) -> int:
    g, spec = resolve_graph(args)
    reports = [r.strip() for r in args.report.split(",") if r.strip()]
    margin = transfer.critical_margin(g)
    out = {"classification": margin.classification, "margin_max": float(margin.margins.max()),
           "log_Z": {}, "residuals": {}, "error_bounds": {}}
    op = transfer.build_transfer(g)
    rho = transfer.spectral_radius(op)
    out["spectral_radius"] = rho
    if rho >= 1:
        raise SupercriticalError(f"spectral radius {rho:.6g} >= 1", margin.classification)
    det = transfer.log_partition_det(op)
    out["log_Z"]["det"] = det
    if "vertex" in reports:
        try:
            v = transfer.log_partition_vertex(g)
            out["log_Z"]["vertex"] = v
            out["residuals"]["vertex_vs_det"] = abs(v - det)
        except (np.linalg.LinAlgError, SupercriticalError) as exc:
            out["residuals"]["vertex_vs_det"] = f"not available: {exc}"
    if "zeta" in reports:
        zeta = transfer.ihara_zeta(g)
        sign, logabs = transfer.slogdet_id_minus(op)
        out["zeta"] = zeta
        out["residuals"]["zeta_identity"] = abs(zeta * sign * math.exp(logabs) - 1.0)
        out["residuals"]["sqrt_zeta_vs_Z"] = abs(math.sqrt(zeta) - math.exp(det))
    if "gff" in reports:
        try:
            _, res = transfer.gff_correspondence(g)
            out["residuals"]["gff"] = res
        except SupercriticalError as exc:
            out["residuals"]["gff"] = f"not available: {exc.classification}"
    if spec is not None:
        t = torus.torus_log_partition(spec)
        out["log_Z"]["torus"] = t
        out["residuals"]["torus_vs_det"] = abs(t - det)
    vals = list(out["log_Z"].values())
    out["max_pairwise_gap"] = max(abs(a - b) for a in vals for b in vals)
    out["error_bounds"] = {k: 0.0 for k in out["log_Z"]}
    emit_json(out, args.out)
    summary(f"log_Z={det:.15g} routes={len(vals)} max_gap={out['max_pairwise_gap']:.3e} "
            f"class={margin.classification}")
    bad = [k for k, v in out["residuals"].items() if isinstance(v, float) and v > args.tol]
    return EXIT_FAIL if bad else 0


def cmd_oracle(args) -> int:
    g, _ = resolve_graph(args)
    lmax = args.lmax or default_lmax(g)
    check = args.check or "partition"
    op = transfer.build_transfer(g)
    if check == "partition":
        oracle = loops.truncated_log_partition(g, lmax)
        exact = transfer.log_partition_det(op)
        tail = loops.tail_bound(g, lmax)
    elif check == "two-point":
        if not args.pair:
            raise UsageError("--pair e,f is required for the two-point check")
        e, f = (parse_edge(s) for s in args.pair.split(","))
        oracle = loops.truncated_two_point(g, e, f, lmax)
        exact = observables.two_point_green(transfer.green(op), e, f)
        tail = loops.two_point_tail_bound(g, lmax)
    elif check == "first-return":
        e = parse_edge(args.edge)
        fr = observables.first_return(op, e)
        vals = {
            "F_plus": (loops.truncated_first_return(g, 2 * e, 2 * e, [2 * e + 1], lmax), fr.F_plus),
            "F_minus": (loops.truncated_first_return(g, 2 * e + 1, 2 * e + 1, [2 * e], lmax), fr.F_minus),
            "Fp_plus": (loops.truncated_first_return(g, 2 * e, 2 * e + 1, [], lmax), fr.Fp_plus),
            "Fp_minus": (loops.truncated_first_return(g, 2 * e + 1, 2 * e, [], lmax), fr.Fp_minus),
        }
        tail = loops.first_return_tail_bound(g, lmax)
        out = {"check": check, "lmax": lmax, "tail_bound": tail,
               "values": {k: {"oracle": a, "closed_form": b, "gap": abs(a - b)} for k, (a, b) in vals.items()}}
        emit_json(out, args.out)
        worst = max(abs(a - b) for a, b in vals.values())
        summary(f"first-return max_gap={worst:.3e} tail_bound={tail:.3e}")
        return 0 if worst <= tail + 1e-12 else EXIT_FAIL
    else:
        raise UsageError(f"unknown check {check!r}")
    gap = abs(exact - oracle)
    emit_json({"check": check, "lmax": lmax, "oracle": oracle, "closed_form": exact, "gap": gap,
               "tail_bound": tail}, args.out)
    summary(f"{check} oracle={oracle:.15g} closed_form={exact:.15g} gap={gap:.3e} tail_bound={tail:.3e}")
    return 0 if gap <= tail + 1e-12 else EXIT_FAIL


def cmd_sample(args) -> int:
    g, _ = resolve_graph(args)
    lmax = args.lmax or default_lmax(g)
    s = sampler.SoupSampler(transfer.build_transfer(g, backtracking=args.backtracking), lmax)
    t0 = time.time()
    mom = sampler.StreamingMoments(g.n_edges)
    violations = 0
    handle = open(args.out, "w") if args.out else None
    try:
        for batch in sampler.occupation_batches(s, args.reps, args.seed):
            violations += int(sampler.spin_network_violations(g, batch.fields).sum())
            mom.update(batch.fields)
            if handle:
                handle.writelines(json.dumps(row) + "\n" for row in batch.fields.tolist())
    finally:
        if handle:
            handle.close()
    mean = mom.mean
    se = np.sqrt(np.diag(mom.cov) / mom.n)
    summary(f"reps={args.reps} mass={s.mass:.6g} tail_bound={s.tail_bound():.3e} "
            f"mean_N={mean.mean():.6g}+-{se.max():.2g} violations={violations} "
            f"time={time.time() - t0:.1f}s")
    return 0 if violations == 0 else EXIT_FAIL


def read_fields(path: str) -> np.ndarray:
    with open(path) as fh:
        return np.array([json.loads(line) for line in fh if line.strip()], dtype=np.int64)


def cmd_gibbs(args) -> int:
    g, _ = resolve_graph(args)
    check = args.check or "partition"
    if check == "partition":
        bf = gibbs.brute_force_partition(g, nmax=args.nmax)
        z = math.exp(transfer.log_partition_det(transfer.build_transfer(g)))
        gap = abs(z - bf)
        emit_json({"check": check, "nmax": args.nmax, "brute_force": bf, "determinant": z, "gap": gap,
                   "error_bound": gap}, args.out)
        summary(f"Z_brute={bf:.12g} Z_det={z:.12g} gap={gap:.3e}")
        return 0 if bf <= z * (1 + 1e-12) else EXIT_FAIL
    if check == "fit":
        if args.samples:
            fields = read_fields(args.samples)
        else:
            lmax = args.lmax or default_lmax(g)
            fields = sampler.sample_fields(g, None, lmax, args.reps, args.seed, args.backtracking)
        rep = gibbs.gibbs_fit_test(fields, g, nmax=args.nmax)
        emit_json(vars(rep), args.out)
        summary(f"chi2={rep.statistic:.4g} dof={rep.dof} p={rep.p_value:.4g} n={rep.n_samples}")
        return 0 if rep.p_value > 0.01 else EXIT_FAIL
    raise UsageError(f"unknown check {check!r}")


def cmd_observables(args) -> int:
    g, _ = resolve_graph(args)
    op = transfer.build_transfer(g)
    G = transfer.green(op)
    reports = [r.strip() for r in args.report.split(",") if r.strip()]
    if args.pair:
        e, f = (parse_edge(s) for s in args.pair.split(","))
    else:
        e, f = parse_edge(args.edge), None
    rows = []
    if "one-point" in reports:
        rows.append(["one-point", e, "", "", observables.one_point_green(G, e), 0.0])
    if "two-point" in reports:
        if f is None:
            raise UsageError("--pair e,f is required for two-point")
        rows.append(["two-point", e, f, "", observables.two_point_green(G, e, f), 0.0])
    if "pgf" in reports:
        fr = observables.first_return(op, e)
        for z in [float(v) for v in args.z_grid.split(",")]:
            rows.append(["pgf", e, "", z, observables.pgf(fr, z=z).real, 0.0])
        rows.append(["pgf-mean", e, "", 1.0, observables.mean_from_pgf(fr), 0.0])
    emit_csv(["quantity", "edge", "edge2", "z", "value", "error_bound"], rows, args.out)
    summary(" ".join(f"{r[0]}={r[4]:.10g}" for r in rows[:3]))
    return 0


def cmd_scan(args) -> int:
    d = args.d
    xc = torus.critical_point(d)
    x_from = args.x_from if args.x_from is not None else 0.9 * xc
    x_to = args.x_to if args.x_to is not None else xc - 1e-3 * xc
    xs = np.linspace(x_from, x_to, args.points)
    rows = []
    q = args.quantity
    if q in ("free-energy", "free-energy-deriv"):
        order = args.order if args.order is not None else (0 if q == "free-energy" else torus.singular_order(d))
        sc = torus.singular_scan(d, order, xs)
        for x, v, dv, err in zip(sc.xs, sc.values, sc.derivs, sc.quad_error):
            rows.append([x, v, order, dv, err])
        fit = sc.fit
    elif q == "one-point":
        for x in xs:
            r = torus.one_point_limit(d, float(x))
            rows.append([x, r.value, 0, r.value, r.error])
        fit = torus.log_fit(xs, np.array([r[1] for r in rows]), xc) if d % 2 == 0 else {}
    else:
        raise UsageError(f"unknown quantity {q!r}")
    emit_csv(["x", "value", "deriv_order", "deriv_value", "quad_error"], rows, args.out)
    summary(f"scan d={d} quantity={q} points={len(rows)} fit={json.dumps(_clean(fit))}")
    return 0


def parse_line(text, width: int) -> int:
    if text is None:
        return (width - 2) // 2
    m = re.fullmatch(r"(?:x=)?(\d+)", str(text).strip())
    if not m:
        raise UsageError(f"--line must look like x=K, got {text!r}")
    return int(m.group(1))


def cmd_spin(args) -> int:
    w, h = (int(v) for v in args.patch.lower().split("x"))
    x = 0.25 if args.x is None else args.x
    line = parse_line(args.line, w)
    if 2 * line != w - 2:
        raise UsageError(f"line x={line} is not the symmetry axis of a {w}-wide box; use x={(w - 2) // 2}")
    refl, trans, tail = spin.spin_experiment(w, h, x, args.reps, args.lmax or 60, args.seed, line)
    out = {"patch": [w, h], "x": x, "line": line, "reps": args.reps, "tail_bound": tail}
    for name, r in (("reflection", refl), ("translation", trans)):
        out[name] = {"family": [list(a) for a in r.family], "matrix": r.matrix, "stderr": r.stderr,
                     "max_asymmetry_sigma": r.max_asymmetry_sigma, "min_eigenvalue": r.min_eigenvalue,
                     "max_stderr": r.max_stderr, "symmetric": r.symmetric, "positive": r.positive}
    emit_json(out, args.out)
    summary(f"reflection: min_eig={refl.min_eigenvalue:.3e} asym={refl.max_asymmetry_sigma:.2f}sigma "
            f"se={refl.max_stderr:.2e}; translation: min_eig={trans.min_eigenvalue:.3e}")
    return 0 if refl.symmetric and refl.positive else EXIT_FAIL


def cmd_verify(args) -> int:
    from .verify import run_suite

    g, spec = resolve_graph(args)
    results = run_suite(args.suite, g, spec)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    return 0 if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "exact": cmd_exact, "oracle": cmd_oracle, "sample": cmd_sample, "gibbs": cmd_gibbs,
    "observables": cmd_observables, "scan": cmd_scan, "spin": cmd_spin, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="loopsoup", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, graph=True):
        sp.add_argument("--config", help="YAML or JSON file with default option values")
        sp.add_argument("--out", default=None)
        if graph:
            sp.add_argument("--graph", help="graph JSON file or name (K4, C3, grid:6x6, torus:2x4)")
            sp.add_argument("--torus", help="torus DxN with homogeneous weight --x")
        sp.add_argument("--x", type=float, default=None, help="homogeneous edge weight")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--tol", type=float, default=None)

    s = sub.add_parser("exact", help="partition function by several exact routes")
    common(s)
    s.add_argument("--report", default=None)

    s = sub.add_parser("oracle", help="brute-force loop enumeration against closed forms")
    common(s)
    s.add_argument("--lmax", type=int, default=None)
    s.add_argument("--check", choices=["partition", "two-point", "first-return"], default=None)
    s.add_argument("--pair", default=None)
    s.add_argument("--edge", default=None)

    s = sub.add_parser("sample", help="sample occupation fields")
    common(s)
    s.add_argument("--lmax", type=int, default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--backtracking", action="store_true", default=None,
                   help="use the backtracking walk operator (negative control)")

    s = sub.add_parser("gibbs", help="Gibbs partition function and goodness of fit")
    common(s)
    s.add_argument("--nmax", type=int, default=None)
    s.add_argument("--check", choices=["partition", "fit"], default=None)
    s.add_argument("--samples", default=None)
    s.add_argument("--lmax", type=int, default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--backtracking", action="store_true", default=None)

    s = sub.add_parser("observables", help="one-point, two-point and generating function")
    common(s)
    s.add_argument("--pair", default=None)
    s.add_argument("--edge", default=None)
    s.add_argument("--report", default=None)
    s.add_argument("--z-grid", dest="z_grid", default=None)

    s = sub.add_parser("scan", help="infinite-volume scans towards the critical point")
    common(s, graph=False)
    s.add_argument("--d", type=int, default=None)
    s.add_argument("--x-from", dest="x_from", type=float, default=None)
    s.add_argument("--x-to", dest="x_to", type=float, default=None)
    s.add_argument("--points", type=int, default=None)
    s.add_argument("--quantity", choices=["free-energy", "free-energy-deriv", "one-point"], default=None)
    s.add_argument("--order", type=int, default=None)

    s = sub.add_parser("spin", help="reflection positivity of the winding spin model")
    common(s, graph=False)
    s.add_argument("--patch", default=None)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--line", default=None)
    s.add_argument("--lmax", type=int, default=None)

    s = sub.add_parser("verify", help="run identity checks and print pass/fail")
    common(s)
    s.add_argument("--suite", choices=["all", "nb", "torus", "loops", "gibbs", "observables"], default=None)
    return p


def resolve_args(ns: argparse.Namespace) -> argparse.Namespace:
    config = {}
    if getattr(ns, "config", None):
        config = yaml.safe_load(Path(ns.config).read_text()) or {}
        if not isinstance(config, dict):
            raise UsageError("config file must hold a mapping")
        config = {k.replace("-", "_"): v for k, v in config.items()}
    for key in set(DEFAULTS) | set(vars(ns)) | set(config):
        cur = getattr(ns, key, None)
        if cur is None:
            setattr(ns, key, config.get(key, DEFAULTS.get(key)))
    if ns.report is None:
        ns.report = DEFAULTS["report"]
    if ns.command == "observables" and ns.report == DEFAULTS["report"]:
        ns.report = "one-point,two-point,pgf"
    if ns.command == "spin" and ns.reps == DEFAULTS["reps"] and "reps" not in config:
        ns.reps = 1_000_000
    for key in ("graph", "torus"):
        if not hasattr(ns, key):
            setattr(ns, key, config.get(key))
    return ns


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        ns = resolve_args(ns)
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SupercriticalError as exc:
        print(f"domain error ({exc.classification}): {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except GraphError as exc:
        print(f"invalid graph: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
