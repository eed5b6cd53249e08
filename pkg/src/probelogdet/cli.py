"""Command-line interface: ``probelogdet <subcommand> ...``.

Every subcommand prints one JSON object on stdout. Exit status is 0 on
success, 1 on a numerical failure (with ``{"error": ...}`` on stdout) and 2 on
bad usage.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .krylov import ConvergenceError, SolverConfig
from .logdet import (
    LogDetEstimate,
    default_threads,
    logdet_exact_dense,
    logdet_hutchinson,
    logdet_probing,
)
from .optimize import FIT_SOLVER_TOL, fit_hyperparams, parse_schedule
from .probing import MODES, color_distance_k
from .quadrature import (
    SpectralBounds,
    build_log_quadrature,
    choose_order,
    estimate_spectral_bounds,
)
from .sparse import read_matrix_market, write_matrix_market
from .spde import BOUNDARIES, GridSpec, Hyperparams, build_operator, build_precision, precision_spectral_bounds

EXIT_OK, EXIT_NUMERICAL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _add_source(p, required=True):
    src = p.add_argument_group("matrix source (exactly one of --matrix / --grid)")
    src.add_argument("--matrix", help="Matrix Market file (coordinate real symmetric)")
    src.add_argument("--grid", help="grid extents, e.g. 64x64 or 32x32x8")
    src.add_argument("--kappa", type=float, default=1.0)
    src.add_argument("--tau", type=float, default=1.0)
    src.add_argument("--boundary", choices=BOUNDARIES, default="neumann")
    p.set_defaults(_source_required=required)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, help="worker threads (default: $PROBELOGDET_THREADS or all cores)")
    p.add_argument("--output", "-o", help="also write the result to this path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="probelogdet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="write a grid precision matrix in Matrix Market format")
    _add_source(p)
    p.add_argument("--operator", action="store_true", help="write tau (kappa I + L) instead of Q")
    p.add_argument("--output", "-o", required=True)

    p = sub.add_parser("color", help="distance-k coloring of a matrix graph")
    _add_source(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument(
        "--graph",
        choices=("operator", "precision"),
        default="operator",
        help="for --grid: color the stencil of kappa I + L (default) or of Q",
    )
    p.add_argument("--output", "-o", help="color map file, one integer per line")

    p = sub.add_parser("quadrature-table", help="print the log quadrature weights and shifts")
    p.add_argument("--lmin", type=float, required=True)
    p.add_argument("--lmax", type=float, required=True)
    p.add_argument("--N", type=int, required=True)

    p = sub.add_parser("logdet", help="log-determinant of an SPD matrix")
    _add_source(p)
    p.add_argument("--method", choices=("exact", "probing", "hutchinson"), default="probing")
    p.add_argument("--k", type=int, default=6, help="probing distance")
    p.add_argument("--s", type=int, default=100, help="Hutchinson sample count")
    p.add_argument("--N", type=int, help="quadrature order (default: from --tol and the spectral bounds)")
    p.add_argument("--tol", type=float, default=1e-3, help="relative tolerance of the shifted solves")
    p.add_argument("--mode", choices=MODES, default="signed")
    p.add_argument("--lmin", type=float, help="lower spectral bound (default: estimated)")
    p.add_argument("--lmax", type=float, help="upper spectral bound (default: estimated)")
    p.add_argument("--level", type=float, default=0.95, help="Hutchinson confidence level")
    _add_common(p)

    p = sub.add_parser("fit", help="maximum-likelihood (kappa, tau) for observed fields")
    p.add_argument("--grid", required=True)
    p.add_argument("--boundary", choices=BOUNDARIES, default="neumann")
    p.add_argument("--data", required=True, help="whitespace-delimited reals, row-major grid order")
    p.add_argument("--init-kappa", type=float, default=0.5)
    p.add_argument("--init-tau", type=float, default=1.0)
    p.add_argument("--schedule", default="2:20,4:10,6:10", help="k:max_iter phases")
    p.add_argument("--method", choices=("probing", "exact"), default="probing")
    p.add_argument("--mode", choices=MODES, default="signed")
    p.add_argument("--tol", type=float, default=FIT_SOLVER_TOL, help="relative tolerance of the shifted solves")
    _add_common(p)
    return parser


def _grid(args) -> GridSpec:
    try:
        return GridSpec.parse(args.grid, args.boundary)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _hyper(args) -> Hyperparams:
    try:
        return Hyperparams(args.kappa, args.tau)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _matrix(args, graph="precision"):
    if (args.matrix is None) == (args.grid is None):
        raise UsageError("give exactly one of --matrix and --grid")
    if args.matrix is not None:
        return read_matrix_market(args.matrix), {"matrix": args.matrix}
    g, h = _grid(args), _hyper(args)
    A = build_operator(g, h) if graph == "operator" else build_precision(g, h)
    return A, {"grid": str(g), "boundary": g.boundary, "kappa": h.kappa, "tau": h.tau}


def _check_positive(**values):
    for name, v in values.items():
        if v is not None and v <= 0:
            raise UsageError(f"--{name} must be positive, got {v}")


def cmd_build(args):
    A, src = _matrix(args, "operator" if args.operator else "precision")
    write_matrix_market(args.output, A, comment=f"probelogdet build {json.dumps(src)}")
    return {**src, "n": A.n, "nnz": A.nnz, "output": args.output}


def cmd_color(args):
    _check_positive(k=args.k)
    A, src = _matrix(args, args.graph)
    t0 = time.perf_counter()
    c = color_distance_k(A.graph(), args.k)
    out = {**src, "k": c.k, "n": c.n, "num_colors": c.num_colors, "wall_time_s": time.perf_counter() - t0}
    if args.output:
        np.savetxt(args.output, c.color_of, fmt="%d")
        out["color_map"] = args.output
    return out


def cmd_quadrature_table(args):
    _check_positive(lmin=args.lmin, lmax=args.lmax, N=args.N)
    if args.lmin > args.lmax:
        raise UsageError("--lmin must not exceed --lmax")
    rule = build_log_quadrature(SpectralBounds(args.lmin, args.lmax), args.N)
    return {
        "lambda_min": args.lmin,
        "lambda_max": args.lmax,
        "N": rule.order,
        "predicted_error": rule.predicted_error,
        "alpha": [[a.real, a.imag] for a in rule.alpha],
        "sigma": [[s.real, s.imag] for s in rule.sigma],
    }


def cmd_logdet(args):
    _check_positive(k=args.k, s=args.s, N=args.N, tol=args.tol, lmin=args.lmin, lmax=args.lmax)
    if not 0 < args.level < 1:
        raise UsageError("--level must lie in (0, 1)")
    Q, src = _matrix(args)
    threads = args.threads or default_threads()
    if args.method == "exact":
        t0 = time.perf_counter()
        est = LogDetEstimate(value=logdet_exact_dense(Q), method="exact-dense")
        est.wall_time_s = time.perf_counter() - t0
    else:
        cfg = SolverConfig(rel_tol=args.tol)
        if args.lmin is not None and args.lmax is not None:
            bounds = SpectralBounds(args.lmin, args.lmax)
        elif args.grid is not None and args.lmin is None and args.lmax is None:
            bounds = precision_spectral_bounds(_grid(args), _hyper(args), margin=0.05)
        else:
            bounds = estimate_spectral_bounds(Q, seed=args.seed)
            bounds = SpectralBounds(args.lmin or bounds.lambda_min, args.lmax or bounds.lambda_max)
        rule = build_log_quadrature(bounds, args.N or choose_order(bounds, cfg.rel_tol))
        if args.method == "probing":
            c = color_distance_k(Q.graph(), args.k)
            est = logdet_probing(Q, c, rule, cfg, mode=args.mode, seed=args.seed, threads=threads)
        else:
            est = logdet_hutchinson(Q, args.s, rule, cfg, seed=args.seed, level=args.level, threads=threads)
    out = {**src, **est.to_dict()}
    out["seed"] = args.seed
    out["threads"] = threads
    return out


def _load_fields(path, g):
    data = np.loadtxt(path, dtype=float, ndmin=1).ravel()
    if data.size == 0 or data.size % g.size:
        raise UsageError(f"{path}: {data.size} values is not a multiple of the grid size {g.size}")
    return data.reshape(-1, g.size)


def cmd_fit(args):
    _check_positive(init_kappa=args.init_kappa, init_tau=args.init_tau, tol=args.tol)
    g = _grid(args)
    try:
        schedule = parse_schedule(args.schedule)
    except ValueError as exc:
        raise UsageError(f"--schedule: {exc}") from None
    X = _load_fields(args.data, g)
    threads = args.threads or default_threads()
    t0 = time.perf_counter()
    h, trace = fit_hyperparams(
        X,
        g,
        Hyperparams(args.init_kappa, args.init_tau),
        schedule=schedule,
        cfg=SolverConfig(rel_tol=args.tol),
        method=args.method,
        mode=args.mode,
        seed=args.seed,
        threads=threads,
    )
    return {
        "grid": str(g),
        "boundary": g.boundary,
        "realizations": X.shape[0],
        "method": args.method,
        "mode": args.mode,
        "kappa": h.kappa,
        "tau": h.tau,
        "seed": args.seed,
        "threads": threads,
        "wall_time_s": time.perf_counter() - t0,
        **trace.to_dict(),
    }


COMMANDS = {
    "build": cmd_build,
    "color": cmd_color,
    "quadrature-table": cmd_quadrature_table,
    "logdet": cmd_logdet,
    "fit": cmd_fit,
}


def _emit(obj, path=None, stream=None):
    text = json.dumps(obj, indent=2, default=float)
    print(text, file=stream or sys.stdout)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", None) is not None and args.threads < 1:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        out = COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, np.linalg.LinAlgError, ArithmeticError, ValueError, OSError) as exc:
        _emit({"error": type(exc).__name__, "message": str(exc), "command": args.command})
        return EXIT_NUMERICAL
    json_path = args.output if args.command in ("logdet", "fit") else None
    _emit(out, json_path)
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
