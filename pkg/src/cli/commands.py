"""
Command-line entry: gen, solve, check and bench subcommands.

Exit codes: 0 success, 1 input error, 2 solver did not converge.
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from ..models.errors import (BreakdownError, ConvergenceError, DegenerateGeometryError, DirectionSearchError,
                             MeshFormatError, SingularInteriorError)
from ..models.mesh import (TrussMesh, generate_grid_truss, generate_union, is_stiffly_connected,
                           validate_edge_simple)
from ..models.oracle import dense_eig
from ..models.solve import SolverConfig, truss_solver
from ..models.stiffness import assemble
from ..utils.config import (APP_NAME, APP_VERSION, BENCH_SUITES, DEFAULT_EPS, DEFAULT_MAX_ITERS, DEFAULT_SEED,
                            RANK_TOL, SOLUTION_FORMATS, SPECTRAL_MAX_VERTICES)
from ..utils.io import (load_mesh, read_rhs, save_mesh, write_matrix_market, write_ordering, write_report,
                        write_solution)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2


def parse_chunk_spec(text: str):
    """`grid:nx,ny,nz` with an optional `@x,y,z` lattice placement."""
    kind, sep, rest = text.partition(':')
    if kind != 'grid' or not sep:
        raise ValueError(f"Chunk spec must look like grid:nx,ny,nz[@x,y,z], got {text!r}")
    dims_text, _, place_text = rest.partition('@')
    try:
        dims = tuple(int(v) for v in dims_text.split(','))
        placement = tuple(float(v) for v in place_text.split(',')) if place_text else None
    except ValueError:
        raise ValueError(f"Non-numeric entry in chunk spec {text!r}")
    if len(dims) != 3 or (placement is not None and len(placement) != 3):
        raise ValueError(f"Chunk spec needs three dims and an optional three-entry placement, got {text!r}")
    return dims if placement is None else (dims, placement)


def cmd_gen(args) -> int:
    if args.kind == 'grid':
        if len(args.params) != 3:
            raise ValueError(f"gen grid takes nx ny nz, got {len(args.params)} values")
        try:
            dims = [int(v) for v in args.params]
        except ValueError:
            raise ValueError(f"gen grid dims must be integers, got {args.params}")
        mesh = generate_grid_truss(*dims, gamma=args.gamma)
    else:
        if not args.params:
            raise ValueError("gen union needs at least one chunk spec")
        mesh = generate_union([parse_chunk_spec(p) for p in args.params], glue=args.glue, gamma=args.gamma)
    save_mesh(mesh, args.out)
    print(f"Wrote {mesh!r} to {args.out}")
    return EXIT_OK


def _solver_config(args) -> SolverConfig:
    return SolverConfig(eps=args.eps, c_r=args.cr, c_alpha=args.calpha, l=args.l, seed=args.seed,
                        max_iters=args.max_iters, oracle_checks=args.oracle)


def _write_outputs(args, mesh: TrussMesh, x: Optional[np.ndarray], report) -> None:
    if x is not None and args.out:
        write_solution(x, args.out, args.format)
    if args.report:
        write_report(report.to_dict(), args.report)
    if args.matrix_out:
        write_matrix_market(assemble(mesh), args.matrix_out, comment=f"truss stiffness, n={mesh.n_vertices}")
    if args.ordering_out and report.ordering is not None:
        write_ordering(report.ordering, args.ordering_out)


def cmd_solve(args) -> int:
    mesh = load_mesh(args.mesh)
    n_dofs = 3 * mesh.n_vertices
    if args.rhs:
        f = read_rhs(args.rhs, n_dofs)
    else:
        f = np.random.default_rng(args.seed).standard_normal(n_dofs)
    config = _solver_config(args)

    try:
        x, report = truss_solver(mesh, f, config)
    except ConvergenceError as e:
        report = e.result
        print(f"Not converged: {str(e)}", file=sys.stderr)
        if report is not None:
            _write_outputs(args, mesh, None, report)
            print(json.dumps({'converged': False, 'iterations': report.iterations,
                              'residual': report.residual}))
        return EXIT_NOT_CONVERGED

    _write_outputs(args, mesh, x, report)
    print(json.dumps({'converged': True, 'iterations': report.iterations, 'residual': report.residual,
                      'kappa_estimate': report.kappa_estimate}))
    return EXIT_OK


def spectral_summary(mesh: TrussMesh) -> dict:
    """Rank and smallest nonzero eigenvalue of the stiffness matrix, scaled by n * diameter^4."""
    values, _ = dense_eig(assemble(mesh).matrix)
    scale = np.max(np.abs(values))
    positive = values[np.abs(values) > RANK_TOL * scale]
    lam_min = float(positive.min()) if len(positive) else 0.0
    diameter = mesh.diameter
    return {
        'rank': int(len(positive)),
        'expected_rank': 3 * mesh.n_vertices - 6,
        'lambda_min': lam_min,
        'lambda_min_scaled': lam_min * mesh.n_vertices * diameter ** 4,
    }


def cmd_check(args) -> int:
    mesh = load_mesh(args.mesh)
    report = validate_edge_simple(mesh)
    result = {
        'n': mesh.n_vertices,
        'k': mesh.k,
        'diameter': mesh.diameter,
        'validation': report.to_dict(),
        'stiffly_connected': is_stiffly_connected(mesh),
    }
    if mesh.n_vertices <= SPECTRAL_MAX_VERTICES:
        result['spectral'] = spectral_summary(mesh)
    else:
        logger.info("Spectral section skipped: n=%d > %d", mesh.n_vertices, SPECTRAL_MAX_VERTICES)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_suite

    frame = run_suite(args.suite, seed=args.seed, eps=args.eps, out=args.out)
    frame.to_csv(args.out, index=False)
    print(f"Wrote {len(frame)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog='truss', description=f"{APP_NAME} {APP_VERSION}")
    ap.add_argument('-v', '--verbose', action='count', default=0, help="-v for info, -vv for debug logging")
    sub = ap.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', help="generate a grid truss or a union of grid chunks")
    gen.add_argument('kind', choices=['grid', 'union'])
    gen.add_argument('params', nargs='*', help="nx ny nz for grid; chunk specs grid:nx,ny,nz[@x,y,z] for union")
    gen.add_argument('--glue', choices=['x', 'y', 'z'], default='x')
    gen.add_argument('--gamma', type=float, default=1.0)
    gen.add_argument('--out', default='mesh.json')
    gen.set_defaults(func=cmd_gen)

    solve = sub.add_parser('solve', help="solve A x = f for a mesh")
    solve.add_argument('mesh')
    rhs = solve.add_mutually_exclusive_group()
    rhs.add_argument('--rhs', help="right-hand side file (.bin, otherwise text)")
    rhs.add_argument('--random-rhs', action='store_true', help="standard normal f from --seed (default)")
    solve.add_argument('--eps', type=float, default=DEFAULT_EPS)
    solve.add_argument('--cr', type=float, default=None)
    solve.add_argument('--calpha', type=float, default=None)
    solve.add_argument('--l', type=int, default=0, help="separator planes; 0 picks automatically")
    solve.add_argument('--seed', type=int, default=DEFAULT_SEED)
    solve.add_argument('--max-iters', type=int, default=DEFAULT_MAX_ITERS)
    solve.add_argument('--format', choices=SOLUTION_FORMATS, default='bin')
    solve.add_argument('--oracle', action='store_true', help="dense cross-checks for small meshes")
    solve.add_argument('--out', default=None, help="solution file")
    solve.add_argument('--report', default=None, help="JSON report file")
    solve.add_argument('--matrix-out', default=None, help="Matrix Market export of A")
    solve.add_argument('--ordering-out', default=None, help="preconditioner elimination ordering")
    solve.set_defaults(func=cmd_solve)

    check = sub.add_parser('check', help="validate a mesh; spectral report for small meshes")
    check.add_argument('mesh')
    check.set_defaults(func=cmd_check)

    bench = sub.add_parser('bench', help="run a benchmark suite and write CSV")
    bench.add_argument('suite', choices=sorted(BENCH_SUITES))
    bench.add_argument('--out', default='bench.csv')
    bench.add_argument('--seed', type=int, default=DEFAULT_SEED)
    bench.add_argument('--eps', type=float, default=DEFAULT_EPS)
    bench.set_defaults(func=cmd_bench)
    return ap


def configure_logging(verbosity: int):
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        return args.func(args)
    except BreakdownError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (MeshFormatError, DegenerateGeometryError, SingularInteriorError, DirectionSearchError, ValueError,
            OSError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_INPUT