"""
Benchmark suites: run the solver over a generated family, compare with full
nested dissection, and append fitted log-log exponents.
"""

import logging
import math
import os
import time
from typing import List, Optional

import numpy as np
import pandas as pd

from ..models.dissect import fillin_flop_simulate, nested_dissection, vertex_adjacency
from ..models.errors import ConvergenceError
from ..models.hollow import hollow, hollow_stats_frame, verify_hollowing
from ..models.mesh import TrussMesh, bounding_box, generate_grid_truss, generate_union
from ..models.solve import SolverConfig, truss_solver
from ..models.stiffness import assemble
from ..utils.config import BENCH_COLUMNS, BENCH_SUITES, CROSSING_ANGLES, DEFAULT_EPS, DEFAULT_SEED

logger = logging.getLogger(__name__)

# Columns whose log is regressed against the suite's size variable
FIT_COLUMNS = ['fill_in', 'flops', 'iterations', 'baseline_fill_in', 'baseline_flops']
FIT_VARIABLE = {'scaling-n': 'n', 'scaling-k': 'k', 'hollow-r': 'r'}


def baseline_costs(mesh: TrussMesh):
    """Fill-in and flops of a direct solve under full geometric nested dissection."""
    ordering = nested_dissection(mesh)
    return fillin_flop_simulate(vertex_adjacency(assemble(mesh)), ordering)


def bench_row(suite: str, mesh: TrussMesh, config: SolverConfig, seed: int) -> dict:
    f = np.random.default_rng(seed).standard_normal(3 * mesh.n_vertices)
    start = time.perf_counter()
    try:
        _, report = truss_solver(mesh, f, config)
    except ConvergenceError as e:
        logger.warning("%s n=%d did not converge: %s", suite, mesh.n_vertices, str(e))
        report = e.result
    total = 1000.0 * (time.perf_counter() - start)
    baseline_fill, baseline_flops = baseline_costs(mesh)

    params = report.parameters
    r_values = list(params.r.values()) if params is not None else []
    wall = report.wall_ms
    return {
        'suite': suite,
        'n': mesh.n_vertices,
        'k': mesh.k,
        'r': float(np.mean(r_values)) if r_values else np.nan,
        'l': params.l if params is not None else 0,
        'fill_in': report.fill_in,
        'schur_nnz': report.schur_nnz,
        'flops': sum(report.flops.values()),
        'iterations': report.iterations,
        'kappa_est': np.nan if report.kappa_estimate is None else report.kappa_estimate,
        'baseline_fill_in': baseline_fill,
        'baseline_flops': baseline_flops,
        'wall_ms_hollow': wall.get('hollow', 0.0),
        'wall_ms_eliminate': wall.get('eliminate', 0.0),
        'wall_ms_order': wall.get('order', 0.0),
        'wall_ms_factor': wall.get('factor', 0.0),
        'wall_ms_pcg': wall.get('pcg', 0.0),
        'wall_ms_total': total,
    }


def fit_exponents(frame: pd.DataFrame, suite: str) -> dict:
    """Slopes of log(column) against log(size variable); NaN where the fit is undefined."""
    x_name = FIT_VARIABLE[suite]
    row = {column: np.nan for column in BENCH_COLUMNS}
    row['suite'] = f"{suite}:fit"
    x = frame[x_name].to_numpy(dtype=float)
    for column in FIT_COLUMNS:
        y = frame[column].to_numpy(dtype=float)
        ok = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
        if np.count_nonzero(ok) >= 2 and len(np.unique(x[ok])) >= 2:
            row[column] = float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])
    return row


def suite_meshes(name: str) -> List[TrussMesh]:
    suite = BENCH_SUITES[name]
    if name == 'scaling-n':
        return [generate_grid_truss(*dims) for dims in suite['grids']]
    if name == 'scaling-k':
        return [generate_union([suite['chunk']] * count) for count in suite['counts']]
    return [generate_grid_truss(*suite['grid']) for _ in suite['r_values']]


def run_suite(name: str, seed: int = DEFAULT_SEED, eps: float = DEFAULT_EPS,
              out: Optional[str] = None) -> pd.DataFrame:
    """
    Run one suite and return its rows plus a fit row. hollow-r also writes
    per-r hollowing statistics next to `out`.
    """
    if name not in BENCH_SUITES:
        raise ValueError(f"Unknown suite {name!r}; choose from {sorted(BENCH_SUITES)}")

    rows, metrics = [], []
    meshes = suite_meshes(name)
    for idx, mesh in enumerate(meshes):
        config = SolverConfig(eps=eps, seed=seed)
        if name == 'hollow-r':
            r = BENCH_SUITES[name]['r_values'][idx]
            config = SolverConfig(eps=eps, seed=seed, c_r=math.log(r) / math.log(mesh.n_vertices))
            hollowing = hollow(mesh, bounding_box(mesh), r)
            metrics.append(verify_hollowing(mesh, hollowing, CROSSING_ANGLES))
        logger.info("%s: instance %d of %d, n=%d, k=%d", name, idx + 1, len(meshes), mesh.n_vertices, mesh.k)
        rows.append(bench_row(name, mesh, config, seed))

    frame = pd.DataFrame(rows, columns=BENCH_COLUMNS)
    frame = pd.concat([frame, pd.DataFrame([fit_exponents(frame, name)], columns=BENCH_COLUMNS)],
                      ignore_index=True)

    if metrics and out:
        stem, _ = os.path.splitext(out)
        hollow_stats_frame(metrics).to_csv(f"{stem}.hollow-stats.csv", index=False)
    return frame
