"""Matrix ingestion, the ``gwot`` command line and JSON/CSV report emission.

Exit codes: 0 computed and every asserted property holds, 1 computed with a
failed verdict, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cnd import ConcavityError, build_concavity_witness, separable_concavity_check, tensor_cnd_sample_check
from .core import (
    CostMatrix,
    Histogram,
    SeparableTensor,
    as_coupling,
    build_dense_tensor,
    get_loss,
    make_histogram,
    support,
    uniform,
)
from .gw import check_bilinear_tightness, check_qp_lp_stationarity, gw_monotonicity_check, solve_gw
from .linear_ot import check_cyclical_monotonicity, solve_linear_ot
from .polytope import as_permutation, enumerate_vertices, extreme_decomposition, is_extreme

SCHEMA_VERSION = 1


class InputError(ValueError):
    """Malformed or inconsistent user input (exit code 2)."""


# -- ingestion ----------------------------------------------------------------

def load_matrix(path, format: str = "csv") -> np.ndarray:
    """Parse a comma-separated numeric grid (no header, '.' decimal, LF or CRLF)."""
    if format != "csv":
        raise InputError(f"unsupported matrix format {format!r}")
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if not lines:
        raise InputError(f"{path}: empty matrix file")
    rows = []
    for r, line in enumerate(lines, start=1):
        cells = line.split(",")
        if rows and len(cells) != len(rows[0]):
            raise InputError(f"{path}: ragged row {r}: expected {len(rows[0])} columns, got {len(cells)}")
        row = []
        for c, tok in enumerate(cells, start=1):
            try:
                x = float(tok.strip())
            except ValueError:
                raise InputError(f"{path}:{r}:{c}: cannot parse {tok.strip()!r} as a number") from None
            if not math.isfinite(x):
                raise InputError(f"{path}:{r}:{c}: non-finite value {tok.strip()!r}")
            row.append(x)
        rows.append(row)
    return np.array(rows, dtype=float)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    weights: Histogram | None = None

    def __post_init__(self):
        X = np.array(self.points, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("point cloud needs a nonempty (n, d) array")
        if self.weights is not None and len(self.weights) != X.shape[0]:
            raise ValueError("weights length does not match the number of points")
        X.flags.writeable = False
        object.__setattr__(self, "points", X)

    def histogram(self) -> Histogram:
        return self.weights if self.weights is not None else uniform(self.points.shape[0])


def pairwise_sqdist(cloud) -> CostMatrix:
    """Squared Euclidean distances; exactly symmetric with zero diagonal."""
    X = cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points
    D = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
    return CostMatrix(D, symmetric=True)


def load_weights(source: str | None, size: int) -> Histogram:
    if source is None or source == "uniform":
        return uniform(size)
    w = load_matrix(source)
    if min(w.shape) != 1:
        raise InputError(f"{source}: weights must be a single row or column")
    w = w.ravel()
    if w.size != size:
        raise InputError(f"{source}: {w.size} weights for {size} points")
    try:
        return make_histogram(w)
    except ValueError as exc:
        raise InputError(f"{source}: {exc}") from None


# -- report emission ----------------------------------------------------------

def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            raise ValueError("report contains a non-finite number")
        return x
    return x


def dump_report(report: dict) -> str:
    # float repr is the shortest string that round-trips exactly
    return json.dumps(_plain(report), indent=2, allow_nan=False) + "\n"


def format_matrix_csv(M) -> str:
    buf = io.StringIO()
    np.savetxt(buf, np.atleast_2d(np.asarray(M, dtype=float)), fmt="%.17g", delimiter=",")
    return buf.getvalue()


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for A in arrays:
        A = np.ascontiguousarray(A, dtype=float)
        h.update(str(A.shape).encode())
        h.update(A.tobytes())
    return h.hexdigest()[:16]


# -- commands -----------------------------------------------------------------

def _cost(args, which: str) -> tuple[np.ndarray, Histogram | None]:
    cost_path = args.cost if which == "first" else args.cost2
    points_path = args.points if which == "first" else args.points2
    if cost_path is not None:
        return load_matrix(cost_path), None
    if points_path is not None:
        return np.array(pairwise_sqdist(PointCloud(load_matrix(points_path))).matrix), None
    flag = "--cost/--points" if which == "first" else "--cost2/--points2"
    raise InputError(f"missing {flag}")


def _gw_instance(args):
    C, _ = _cost(args, "first")
    Cb, _ = _cost(args, "second")
    for name, M in (("first", C), ("second", Cb)):
        if M.shape[0] != M.shape[1]:
            raise InputError(f"{name} intra cost must be square, got {M.shape}")
        try:
            CostMatrix(M, symmetric=True)
        except ValueError as exc:
            raise InputError(f"{name} intra cost: {exc}") from None
    loss = get_loss(args.loss)
    try:
        loss.check_domain(C, Cb)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    a = load_weights(args.weights, C.shape[0])
    b = load_weights(args.weights2, Cb.shape[0])
    instance = {"n": C.shape[0], "m": Cb.shape[0], "loss": loss.preset, "seed": args.seed,
                "digest": _digest(C, Cb, a.weights, b.weights)}
    return loss, C, Cb, a, b, instance


def _plan(args, fallback_cost: bool = False) -> np.ndarray | None:
    path = args.plan if args.plan is not None else (args.cost if fallback_cost else None)
    return None if path is None else load_matrix(path)


def _coupling(M, a=None, b=None):
    try:
        return as_coupling(M, a, b)
    except ValueError as exc:
        raise InputError(f"plan is not a valid coupling: {exc}") from None


def cmd_lot_solve(args):
    C = load_matrix(_require(args.cost, "--cost"))
    n, m = C.shape
    a = load_weights(args.weights, n)
    b = load_weights(args.weights2, m)
    sol = solve_linear_ot(C, a, b)
    supp = len(support(sol.plan))
    extreme = is_extreme(sol.plan)
    results = {"value": sol.value, "iterations": sol.iterations, "plan": sol.plan.matrix,
               "support_size": supp, "support_bound": n + m - 1, "is_extreme": extreme}
    instance = {"n": n, "m": m, "digest": _digest(C, a.weights, b.weights)}
    ok = extreme and supp <= n + m - 1
    return instance, results, sol.plan.matrix, ok


def cmd_lot_monotonicity(args):
    C = load_matrix(_require(args.cost, "--cost"))
    n, m = C.shape
    M = _plan(args)
    if M is None:
        P = solve_linear_ot(C, load_weights(args.weights, n), load_weights(args.weights2, m)).plan
        source = "lp_solution"
    else:
        if M.shape != C.shape:
            raise InputError(f"plan shape {M.shape} does not match cost shape {C.shape}")
        P = _coupling(M)
        source = "file"
    tol = 1e-9 if args.tol is None else args.tol
    rep = check_cyclical_monotonicity(C, P, max_N=args.max_n, tol=tol)
    results = {"plan_source": source, "verdict": rep.verdict, "max_N_checked": rep.max_N_checked,
               "support_size": rep.support_size, "plan": P.matrix}
    if rep.violation is not None:
        results["violation"] = {"pairs": rep.violation.pairs, "sigma": rep.violation.sigma,
                                "deficit": rep.violation.deficit}
    instance = {"n": n, "m": m, "tol": tol, "digest": _digest(C, P.matrix)}
    return instance, results, P.matrix, rep.passed


def _gw_results(sol):
    return {"method": sol.method, "label": sol.label, "value": sol.value, "plan": sol.plan.matrix,
            "support_size": len(support(sol.plan)), "is_extreme": is_extreme(sol.plan),
            "fw_gap": sol.fw_gap, "converged": sol.converged,
            "concave": None if sol.certificate is None else sol.certificate.concave}


def cmd_gw_solve(args):
    loss, C, Cb, a, b, instance = _gw_instance(args)
    tol = 1e-9 if args.tol is None else args.tol
    sol = solve_gw(loss, C, Cb, a, b, seed=args.seed, max_cells=args.max_size, tol=tol)
    results = {k: v for k, v in _gw_results(sol).items() if v is not None}
    return instance, results, sol.plan.matrix, sol.converged


def _certificate_dict(cert):
    return {"verdict": cert.verdict, "extreme_eigenvalue": cert.extreme_eigenvalue,
            "witness_vector": cert.witness_vector, "centered_eigenvalues": cert.centered_eigenvalues,
            "tol": cert.tol}


def cmd_gw_check_cnd(args):
    loss, C, Cb, a, b, instance = _gw_instance(args)
    verdict = separable_concavity_check(loss, C, Cb, args.tol)
    results = {"verdict": "concave" if verdict.concave else "not concave",
               "h1": _certificate_dict(verdict.h1_certificate),
               "h2": _certificate_dict(verdict.h2_certificate)}
    primary = None
    if not verdict.concave:
        try:
            w = build_concavity_witness(loss, C, Cb, a, b, args.tol)
            results["witness"] = {"P1": w.P1.matrix, "P2": w.P2.matrix, "Q": w.Q.matrix,
                                  "midpoint_gap": w.midpoint_gap}
            primary = w.Q.matrix
        except (ConcavityError, ValueError) as exc:
            results["witness_error"] = str(exc)
    if C.shape[0] * Cb.shape[0] <= 1024:
        L = build_dense_tensor(loss, C, Cb)
        s = tensor_cnd_sample_check(L, a, b, trials=200, seed=args.seed)
        results["sampling"] = {"verdict": s.verdict, "trials": s.trials, "max_value": s.max_value}
    return instance, results, primary, verdict.concave


def cmd_gw_tightness(args):
    loss, C, Cb, a, b, instance = _gw_instance(args)
    tol = 1e-9 if args.tol is None else args.tol
    rep = check_bilinear_tightness(loss, C, Cb, a, b, tol=tol, max_cells=args.max_size, seed=args.seed)
    results = {"status": rep.status, "concave": rep.concave, "bilinear_value": rep.bilinear_value,
               "gw_value": rep.gw_value, "gw_label": rep.gw_label, "passed": rep.passed,
               "plan1": rep.bilinear.plan1.matrix, "plan2": rep.bilinear.plan2.matrix,
               "details": rep.details}
    return instance, results, rep.bilinear.plan1.matrix, rep.passed


def cmd_gw_stationarity(args):
    loss, C, Cb, a, b, instance = _gw_instance(args)
    tol = 1e-7 if args.tol is None else args.tol
    M = _plan(args)
    if M is None:
        P = solve_gw(loss, C, Cb, a, b, seed=args.seed, max_cells=args.max_size).plan
        source = "gw_solve"
    else:
        if M.shape != (C.shape[0], Cb.shape[0]):
            raise InputError(f"plan shape {M.shape} does not match ({C.shape[0]}, {Cb.shape[0]})")
        P = _coupling(M)
        source = "file"
    T = SeparableTensor(loss, C, Cb)
    rep = check_qp_lp_stationarity(T, P, tol)
    results = {"plan_source": source, "passed": rep.passed, "plan_value": rep.plan_value,
               "lp_value": rep.lp_value, "excess": rep.excess, "plan": P.matrix}
    ok = rep.passed
    if len(support(P)) <= 64:
        # an approximately stationary plan can show deficits up to excess / smallest mass
        t = float(P.matrix[P.matrix > 1e-12].min())
        mono = gw_monotonicity_check(T, P, max_N=args.max_n, tol=1e-9 + max(rep.excess, 0.0) / t)
        results["monotonicity"] = mono.verdict
        ok = ok and mono.passed
    return instance, results, P.matrix, ok


def cmd_polytope_decompose(args):
    M = _plan(args, fallback_cost=True)
    if M is None:
        raise InputError("missing --plan")
    P = _coupling(M)
    dec = extreme_decomposition(P)
    perms = [as_permutation(Q) for _, Q in dec.components]
    comps = []
    for (w, Q), s in zip(dec.components, perms):
        entry = {"weight": w, "plan": Q.matrix}
        if s is not None:
            entry["permutation"] = s.sigma
        comps.append(entry)
    err = float(np.max(np.abs(dec.reconstruct() - P.matrix)))
    all_extreme = all(is_extreme(Q) for _, Q in dec.components)
    n, m = P.shape
    results = {"n_components": len(dec), "weight_sum": float(dec.weights.sum()),
               "reconstruction_error": err, "all_extreme": all_extreme,
               "all_permutations": all(s is not None for s in perms), "components": comps}
    ok = err <= 1e-9 and all_extreme and abs(dec.weights.sum() - 1) <= 1e-10
    uniform_square = n == m and np.allclose(P.row_marginal.weights, 1 / n, atol=1e-12) \
        and np.allclose(P.col_marginal.weights, 1 / n, atol=1e-12)
    if uniform_square:
        ok = ok and results["all_permutations"]
    instance = {"n": n, "m": m, "digest": _digest(P.matrix)}
    stacked = np.vstack([Q.matrix for _, Q in dec.components])
    return instance, results, stacked, ok


def cmd_polytope_vertices(args):
    if args.cost is not None:
        n, m = load_matrix(args.cost).shape
    elif args.weights not in (None, "uniform") and args.weights2 not in (None, "uniform"):
        n = load_matrix(args.weights).size
        m = load_matrix(args.weights2).size
    else:
        raise InputError("need --cost (for sizes) or both --weights and --weights2")
    a = load_weights(args.weights, n)
    b = load_weights(args.weights2, m)
    verts = enumerate_vertices(a, b, max_cells=args.max_size)
    results = {"count": len(verts), "all_extreme": all(is_extreme(V) for V in verts),
               "max_support": max(len(support(V)) for V in verts), "support_bound": n + m - 1,
               "vertices": [V.matrix for V in verts]}
    ok = results["all_extreme"] and results["max_support"] <= n + m - 1
    instance = {"n": n, "m": m, "digest": _digest(a.weights, b.weights)}
    return instance, results, np.vstack([V.matrix for V in verts]), ok


def _require(value, flag):
    if value is None:
        raise InputError(f"missing {flag}")
    return value


COMMANDS = {
    ("lot", "solve"): cmd_lot_solve,
    ("lot", "monotonicity"): cmd_lot_monotonicity,
    ("gw", "solve"): cmd_gw_solve,
    ("gw", "check-cnd"): cmd_gw_check_cnd,
    ("gw", "tightness"): cmd_gw_tightness,
    ("gw", "stationarity"): cmd_gw_stationarity,
    ("polytope", "decompose"): cmd_polytope_decompose,
    ("polytope", "vertices"): cmd_polytope_vertices,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--tol", type=float, default=None)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--loss", choices=("square", "kl"), default="square")
    common.add_argument("--max-size", type=int, default=25, help="cap on n*m for vertex enumeration")
    common.add_argument("--max-n", type=int, choices=(2, 3), default=3, help="largest monotonicity cycle")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--points")
    common.add_argument("--points2")
    common.add_argument("--cost")
    common.add_argument("--cost2")
    common.add_argument("--weights", help="CSV vector or 'uniform'")
    common.add_argument("--weights2", help="CSV vector or 'uniform'")
    common.add_argument("--plan", help="coupling matrix CSV")

    parser = argparse.ArgumentParser(prog="gwot", description="Discrete linear OT and Gromov-Wasserstein checks.")
    groups = parser.add_subparsers(dest="group", required=True)
    for group in ("lot", "gw", "polytope"):
        gp = groups.add_parser(group)
        actions = gp.add_subparsers(dest="action", required=True)
        for g, action in COMMANDS:
            if g == group:
                actions.add_parser(action, parents=[common])
    return parser


def run_command(argv, stdout=None, stderr=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = build_parser()
    try:
        with contextlib.redirect_stdout(stdout), contextlib.redirect_stderr(stderr):
            args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    try:
        instance, results, primary, ok = COMMANDS[args.group, args.action](args)
    except InputError as exc:
        print(f"gwot: error: {exc}", file=stderr)
        return 2
    except ValueError as exc:
        # contract violations surfaced by the library (size caps, domains, ...)
        print(f"gwot: error: {exc}", file=stderr)
        return 2
    elapsed = (time.perf_counter() - t0) * 1e3
    if args.format == "csv":
        if primary is not None:
            stdout.write(format_matrix_csv(primary))
        else:
            for k, v in results.items():
                if isinstance(v, (bool, int, float, str)):
                    stdout.write(f"{k},{v!r}\n" if isinstance(v, float) else f"{k},{v}\n")
    else:
        report = {"schema_version": SCHEMA_VERSION, "command": list(argv), "instance": instance,
                  "results": results, "timings_ms": {"total": elapsed}}
        stdout.write(dump_report(report))
    return 0 if ok else 1


def main(argv=None) -> int:
    return run_command(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
