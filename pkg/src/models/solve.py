import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from ..utils.config import (AR_THRESHOLD, CELL_SCALE, DEFAULT_EPS, DEFAULT_MAX_ITERS, DEFAULT_SEED, MIN_R,
                            MIXED_CALPHA, MIXED_CR, ORACLE_MAX_ORDER, PIV_EPS, RANGES, SMALL_AR_CR,
                            TRUE_RESIDUAL_EVERY, worker_count)
from .dissect import (EliminationOrdering, convex_truss_union_nd, geometric_separator, glue_vertices,
                      nested_dissection, preconditioner_tets)
from .elim import PartialElimination, factor, solve_factor, eliminate_subset
from .errors import BreakdownError, ConvergenceError, DirectionSearchError, NullSpaceMismatchError
from .hollow import Hollowing, hollow
from .mesh import OrientedBox, TrussMesh, bounding_box
from .oracle import dense_sym, generalized_condition, pinv_solve
from .stiffness import assemble, project_out_null, rigid_body_basis

logger = logging.getLogger(__name__)

DIRECTION_RETRIES = 3


@dataclass
class SolverConfig:
    """
    Solver settings. c_r, c_alpha and l default to the regime rules of
    choose_parameters; l = 0 also means automatic.
    """
    eps: float = DEFAULT_EPS
    c_r: Optional[float] = None
    c_alpha: Optional[float] = None
    l: int = 0
    seed: int = DEFAULT_SEED
    max_iters: int = DEFAULT_MAX_ITERS
    piv_eps: float = PIV_EPS
    oracle_checks: bool = False
    threads: Optional[int] = None
    cell_scale: float = CELL_SCALE

    def __post_init__(self):
        # Validate input parameters
        for name in ('eps', 'c_r', 'c_alpha', 'l', 'max_iters', 'cell_scale'):
            value = getattr(self, name)
            if value is None:
                continue
            lo, hi = RANGES[name]
            if not lo <= value <= hi:
                raise ValueError(f"{name} must be in [{lo}, {hi}], got {value}")
        if self.c_r is not None and self.c_r <= 0:
            raise ValueError(f"c_r must be positive, got {self.c_r}")
        if self.c_alpha is not None and self.c_alpha <= 0:
            raise ValueError(f"c_alpha must be positive, got {self.c_alpha}")
        if self.piv_eps <= 0:
            raise ValueError(f"piv_eps must be positive, got {self.piv_eps}")
        if self.threads is not None and self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")


@dataclass
class ResolvedParameters:
    regime: str
    c_r: float
    c_alpha: Optional[float]
    l: int
    included: List[int]
    r: Dict[int, float]
    aspect_ratios: List[float]
    chunk_sizes: List[int]

    def to_dict(self) -> dict:
        return {
            'regime': self.regime,
            'c_r': self.c_r,
            'c_alpha': self.c_alpha,
            'l': self.l,
            'included': list(self.included),
            'r': {str(i): r for i, r in self.r.items()},
            'aspect_ratios': list(self.aspect_ratios),
            'chunk_sizes': list(self.chunk_sizes),
        }


@dataclass
class PCGResult:
    x: np.ndarray
    iterations: int
    residuals: List[float]
    converged: bool
    alphas: List[float] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)

    @property
    def kappa_estimate(self) -> Optional[float]:
        """Ratio of extreme Ritz values of the Lanczos tridiagonal built from the CG coefficients."""
        m = len(self.alphas)
        if m == 0:
            return None
        alphas = np.asarray(self.alphas)
        betas = np.asarray(self.betas[:m])
        diag = 1.0 / alphas
        diag[1:] += betas[:m - 1] / alphas[:m - 1]
        off = np.sqrt(betas[:m - 1]) / alphas[:m - 1]
        ritz = eigvalsh_tridiagonal(diag, off)
        if ritz[0] <= 0:
            return None
        return float(ritz[-1] / ritz[0])


def _as_operator(M) -> Callable[[np.ndarray], np.ndarray]:
    if callable(M):
        return M
    return lambda v: M @ v


def pcg(apply_A, solve_B, b, eps: float = DEFAULT_EPS, null_basis: Optional[np.ndarray] = None,
        max_iters: int = DEFAULT_MAX_ITERS) -> PCGResult:
    """
    Deflated preconditioned conjugate gradient.

    b and every iterate are projected off the span of null_basis (orthonormal
    columns). Stops when ||b - A x|| <= eps ||b|| for the projected b; the
    recursive residual is replaced by the true one every few iterations and
    before convergence is accepted.
    """
    apply_A = _as_operator(apply_A)
    solve_B = _as_operator(solve_B)
    if null_basis is None:
        project = lambda v: v
    else:
        basis_q = np.asarray(null_basis, dtype=float)
        project = lambda v: v - basis_q @ (basis_q.T @ v)

    b = project(np.asarray(b, dtype=float))
    norm_b = np.linalg.norm(b)
    x = np.zeros_like(b)
    if norm_b == 0.0:
        return PCGResult(x=x, iterations=0, residuals=[0.0], converged=True)

    r = b.copy()
    z = project(solve_B(r))
    p = z.copy()
    rz = r @ z
    residuals = [float(norm_b)]
    alphas, betas = [], []
    target = eps * norm_b

    for it in range(1, max_iters + 1):
        Ap = project(apply_A(p))
        pq = p @ Ap
        if pq <= 0.0 or rz <= 0.0:
            raise BreakdownError(f"PCG breakdown at iteration {it}: p'Ap = {pq:.3g}, r'z = {rz:.3g}")
        alpha = rz / pq
        x = project(x + alpha * p)
        r = r - alpha * Ap
        if it % TRUE_RESIDUAL_EVERY == 0:
            r = b - project(apply_A(x))
        res = float(np.linalg.norm(r))
        if res <= target:
            r = b - project(apply_A(x))
            res = float(np.linalg.norm(r))
        residuals.append(res)
        alphas.append(float(alpha))
        if res <= target:
            logger.info("PCG converged in %d iterations, relative residual %.3g", it, res / norm_b)
            return PCGResult(x=x, iterations=it, residuals=residuals, converged=True,
                             alphas=alphas, betas=betas)

        z = project(solve_B(r))
        rz_new = r @ z
        beta = rz_new / rz
        betas.append(float(beta))
        p = z + beta * p
        rz = rz_new

    result = PCGResult(x=x, iterations=max_iters, residuals=residuals, converged=False,
                       alphas=alphas, betas=betas)
    raise ConvergenceError(f"PCG did not reach eps={eps:g} in {max_iters} iterations "
                           f"(relative residual {residuals[-1] / norm_b:.3g})", result=result)


def chunk_boxes(mesh: TrussMesh) -> List[OrientedBox]:
    return [bounding_box(mesh.points[mesh.chunk_vertices(i)]) for i in range(mesh.k)]


def choose_parameters(mesh: TrussMesh, config: Optional[SolverConfig] = None,
                      boxes: Optional[Sequence[OrientedBox]] = None) -> ResolvedParameters:
    """
    Regime rules: when every chunk has aspect ratio at most AR_THRESHOLD all
    chunks are hollowed with r_i = n_i^(1/2) and a single top-level plane;
    otherwise c_alpha = c_r = 1/3 and l = ceil(n^(1/6)). Config values win.
    """
    config = config or SolverConfig()
    boxes = chunk_boxes(mesh) if boxes is None else boxes
    sizes = [len(mesh.chunk_vertices(i)) for i in range(mesh.k)]
    alphas = [b.aspect_ratio for b in boxes]

    if all(a <= AR_THRESHOLD for a in alphas):
        regime, c_r, c_alpha, l_auto = 'small-ar', SMALL_AR_CR, None, 1
    else:
        regime, c_r, c_alpha = 'mixed', MIXED_CR, MIXED_CALPHA
        l_auto = math.ceil(mesh.n_vertices ** (1 / 6))
    if config.c_r is not None:
        c_r = config.c_r
    if config.c_alpha is not None:
        c_alpha = config.c_alpha
    l = config.l if config.l else l_auto

    included, r = [], {}
    for i, (n_i, alpha, box) in enumerate(zip(sizes, alphas, boxes)):
        if c_alpha is not None and alpha > n_i ** c_alpha:
            logger.info("Chunk %d kept whole: aspect ratio %.3g > n_i^c_alpha = %.3g", i, alpha, n_i ** c_alpha)
            continue
        r_i = max(MIN_R, round(n_i ** c_r))
        r_max = math.floor(box.side_lengths.min() ** 3 + 1e-9)
        if r_i > r_max:
            if r_max < MIN_R:
                logger.warning("Chunk %d too thin to hollow (shortest side %.3g); kept whole",
                               i, box.side_lengths.min())
                continue
            r_i = r_max
        included.append(i)
        r[i] = float(r_i)

    params = ResolvedParameters(regime=regime, c_r=c_r, c_alpha=c_alpha, l=int(l), included=included,
                                r=r, aspect_ratios=alphas, chunk_sizes=sizes)
    logger.info("Regime %s: hollowing %d of %d chunks, l=%d", regime, len(included), mesh.k, params.l)
    return params


@dataclass
class SolveReport:
    n: int
    k: int
    converged: bool
    iterations: int
    residuals: List[float]
    residual: float
    fill_in: int
    schur_nnz: int
    flops: Dict[str, int]
    wall_ms: Dict[str, float]
    kappa_estimate: Optional[float]
    parameters: Optional[ResolvedParameters]
    config: SolverConfig
    glue_vertices: int = 0
    preconditioner_vertices: int = 0
    eliminated_vertices: int = 0
    dropped_pivots: int = 0
    dense_top_separator_nnz: int = 0
    kappa_oracle: Optional[float] = None
    oracle_error: Optional[float] = None
    ordering: Optional[EliminationOrdering] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            'n': self.n,
            'k': self.k,
            'converged': self.converged,
            'iterations': self.iterations,
            'residual': self.residual,
            'residuals': list(self.residuals),
            'fill_in': self.fill_in,
            'schur_nnz': self.schur_nnz,
            'flops': dict(self.flops),
            'wall_ms': dict(self.wall_ms),
            'kappa_estimate': self.kappa_estimate,
            'kappa_oracle': self.kappa_oracle,
            'oracle_error': self.oracle_error,
            'glue_vertices': self.glue_vertices,
            'preconditioner_vertices': self.preconditioner_vertices,
            'eliminated_vertices': self.eliminated_vertices,
            'dropped_pivots': self.dropped_pivots,
            'dense_top_separator_nnz': self.dense_top_separator_nnz,
            'parameters': None if self.parameters is None else self.parameters.to_dict(),
            'config': asdict(self.config),
        }


def _hollow_chunk(mesh: TrussMesh, i: int, box: OrientedBox, r: float, cell_scale: float) -> Hollowing:
    sub, vertex_ids = mesh.submesh(mesh.chunks[i])
    return hollow(sub, box, r, cell_scale).lift(mesh.chunks[i], vertex_ids)


def _interior_ordering(mesh: TrussMesh, hollowings: Dict[int, Hollowing]) -> EliminationOrdering:
    order, nodes = [], []
    for i in sorted(hollowings):
        interior = hollowings[i].interior_vertices
        if len(interior) == 0:
            continue
        local = nested_dissection(mesh.points, interior, mesh.edges)
        order.append(local.order)
        nodes.extend(local.nodes)
    order = np.concatenate(order) if order else np.zeros(0, dtype=np.int64)
    return EliminationOrdering(order=order, nodes=nodes)


def _union_ordering(mesh: TrussMesh, boxes, params: ResolvedParameters, hollowings, n_tets: int,
                    seed: int) -> EliminationOrdering:
    l = min(params.l, max(n_tets - 1, 0))
    for attempt in range(DIRECTION_RETRIES):
        try:
            return convex_truss_union_nd(mesh, boxes, params.included, hollowings, l, seed=seed + attempt)
        except DirectionSearchError as e:
            logger.warning("Direction search failed with seed %d, retrying: %s", seed + attempt, str(e))
    raise DirectionSearchError(f"No admissible direction after {DIRECTION_RETRIES} seeds")


def _dofs(vertices: np.ndarray) -> np.ndarray:
    return (3 * np.asarray(vertices, dtype=np.int64)[:, None] + np.arange(3)).ravel()


def truss_solver(mesh: TrussMesh, f, config: Optional[SolverConfig] = None) -> Tuple[np.ndarray, SolveReport]:
    """
    Solve A x = f for the truss stiffness matrix A with relative residual
    eps on the range of A, by incomplete nested dissection.
    """
    config = config or SolverConfig()
    f = np.asarray(f, dtype=float)
    if f.shape != (3 * mesh.n_vertices,):
        raise ValueError(f"f must have {3 * mesh.n_vertices} entries, got shape {f.shape}")

    wall: Dict[str, float] = {}
    flops: Dict[str, int] = {}
    start = time.perf_counter()

    basis = rigid_body_basis(mesh)
    f_r = project_out_null(f, basis)
    norm_f = float(np.linalg.norm(f_r))
    A = assemble(mesh)

    if norm_f <= 1e-12 * max(float(np.linalg.norm(f)), np.finfo(float).tiny):
        logger.info("Right-hand side lies in the rigid-body null space; returning x = 0")
        wall['total'] = 1000.0 * (time.perf_counter() - start)
        report = SolveReport(n=mesh.n_vertices, k=mesh.k, converged=True, iterations=0, residuals=[0.0],
                             residual=0.0, fill_in=0, schur_nnz=0, flops={}, wall_ms=wall,
                             kappa_estimate=None, parameters=None, config=config)
        return np.zeros_like(f), report

    boxes = chunk_boxes(mesh)
    params = choose_parameters(mesh, config, boxes)

    t = time.perf_counter()
    with ThreadPoolExecutor(max_workers=config.threads or worker_count()) as pool:
        futures = {i: pool.submit(_hollow_chunk, mesh, i, boxes[i], params.r[i], config.cell_scale)
                   for i in params.included}
        hollowings = {i: future.result() for i, future in futures.items()}
    wall['hollow'] = 1000.0 * (time.perf_counter() - t)

    t = time.perf_counter()
    interior_order = _interior_ordering(mesh, hollowings)
    elim = eliminate_subset(A, interior_order.order, ordering=interior_order, piv_eps=config.piv_eps)
    flops['eliminate'] = elim.flops
    wall['eliminate'] = 1000.0 * (time.perf_counter() - t)

    t = time.perf_counter()
    tet_ids = preconditioner_tets(mesh, params.included, hollowings)
    ordering = _union_ordering(mesh, boxes, params, hollowings, len(tet_ids), config.seed)
    if not ordering.is_bijection(elim.kept):
        raise RuntimeError("Preconditioner ordering does not cover the kept vertices")
    wall['order'] = 1000.0 * (time.perf_counter() - t)

    t = time.perf_counter()
    kept_dofs = _dofs(elim.kept)
    B = assemble(mesh, tets=tet_ids).matrix[kept_dofs][:, kept_dofs]
    try:
        F = factor(B, ordering.local_order(elim.kept), piv_eps=config.piv_eps)
    except MemoryError:
        raise MemoryError(f"Not enough memory to factor the preconditioner on {len(elim.kept)} vertices")
    flops['factor'] = F.flops
    if F.n_zeroed != 6:
        logger.warning("Preconditioner factor dropped %d pivots; a rigid truss drops 6", F.n_zeroed)
    wall['factor'] = 1000.0 * (time.perf_counter() - t)

    t = time.perf_counter()
    g = elim.reduce_rhs(f_r)
    kept_basis = rigid_body_basis(mesh.points[elim.kept]).orthonormal
    norm_g = float(np.linalg.norm(project_out_null(g, kept_basis)))
    eps_pcg = config.eps * norm_f / norm_g if norm_g > 0 else 1.0
    converged = True
    try:
        result = pcg(elim.schur, lambda v: solve_factor(F, v), g, eps=eps_pcg,
                     null_basis=kept_basis, max_iters=config.max_iters)
    except ConvergenceError as e:
        result = e.result
        converged = False
    wall['pcg'] = 1000.0 * (time.perf_counter() - t)
    flops['pcg'] = int(result.iterations * (2 * elim.schur.nnz + 4 * F.L.nnz + 24 * len(kept_dofs)))

    x = project_out_null(elim.back_substitute(result.x, f_r), basis)
    residual = float(np.linalg.norm(A @ x - f_r) / norm_f)
    wall['total'] = 1000.0 * (time.perf_counter() - start)

    report = SolveReport(
        n=mesh.n_vertices,
        k=mesh.k,
        converged=converged,
        iterations=result.iterations,
        residuals=[res / norm_g if norm_g > 0 else 0.0 for res in result.residuals],
        residual=residual,
        fill_in=F.fill_in,
        schur_nnz=elim.schur_nnz,
        flops=flops,
        wall_ms=wall,
        kappa_estimate=result.kappa_estimate,
        parameters=params,
        config=config,
        glue_vertices=len(np.intersect1d(glue_vertices(mesh), elim.kept)),
        preconditioner_vertices=len(elim.kept),
        eliminated_vertices=len(elim.eliminated),
        dropped_pivots=F.n_zeroed,
        dense_top_separator_nnz=(3 * len(geometric_separator(mesh).separator)) ** 2,
        ordering=ordering,
    )

    if config.oracle_checks and 3 * mesh.n_vertices <= ORACLE_MAX_ORDER:
        _oracle_checks(report, A, x, f_r, elim, B, kept_basis)

    if not converged:
        raise ConvergenceError(f"Solver did not converge in {config.max_iters} iterations "
                               f"(relative residual {residual:.3g})", result=report)
    logger.info("Solved n=%d in %d iterations, relative residual %.3g", mesh.n_vertices,
                report.iterations, residual)
    return x, report


def _oracle_checks(report: SolveReport, A, x, f_r, elim: PartialElimination, B, kept_basis):
    dense_a = dense_sym(A.matrix)
    reference = pinv_solve(dense_a, f_r)
    diff = x - reference
    energy = float(reference @ dense_a @ reference)
    report.oracle_error = float(np.sqrt(max(diff @ dense_a @ diff, 0.0) / energy)) if energy > 0 else 0.0
    try:
        report.kappa_oracle = generalized_condition(elim.schur, B, shared_null=kept_basis)
    except NullSpaceMismatchError as e:
        logger.warning("Oracle condition number skipped: %s", str(e))
