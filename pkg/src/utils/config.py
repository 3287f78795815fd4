"""
Configuration and constants for the Truss Solver
"""

import os

# Application Settings
APP_NAME = "Truss Solver"
APP_VERSION = "1.0.0"

# Geometric tolerances
GEOM_EPS = 1e-9
VOL_EPS = 1e-12

# Numerical tolerances
RANK_TOL = 1e-8  # relative to the largest singular value
PIV_EPS = 1e-10  # relative to the largest diagonal entry
ORACLE_MAX_ORDER = 2000
SPECTRAL_MAX_VERTICES = 700  # `check` runs the dense spectral section below this

# Edge-simple limits
DEFAULT_LIMITS = {
    'ar_max': 8.0,
    'len_min': 0.5,
    'len_max': 2.0,
    'g_min': 0.5,
    'g_max': 2.0
}

# Measured ratio of PCA box volume to convex-hull volume on generated meshes
BOX_HULL_RATIO = 6.0

# Nested dissection
LEAF_SIZE = 48
BALANCE = 0.75
DIRECTION_ATTEMPTS = 64  # times ceil(log2(n + 2))
DIRECTION_CANDIDATES = 8  # random admissible directions tried by the union ordering
SEPARATOR_OFFSETS = 16  # plane offsets scanned per axis
PLANE_SLACK = 0.5  # top-level planes may slide this many parts off the count quantiles

# Hollowing
MIN_R = 8
CELL_SCALE = 2.0  # solver cell side in units of r^(1/3)
CROSSING_ANGLES = [0.0, 0.5235987755982988, 0.7853981633974483, 1.0471975511965976]
KAPPA_MAX_DOF = 2400  # oracle kappa is skipped for chunks with more dofs
HOLLOW_DRIFT = 12.0  # alert when |U| r^(1/3) / n exceeds this

# Solver defaults
DEFAULT_EPS = 1e-8
DEFAULT_MAX_ITERS = 1000
DEFAULT_SEED = 0
AR_THRESHOLD = 4.0
SMALL_AR_CR = 0.5
MIXED_CR = 1.0 / 3.0
MIXED_CALPHA = 1.0 / 3.0
TRUE_RESIDUAL_EVERY = 10

# Parameter Ranges
RANGES = {
    'eps': (1e-14, 1.0),
    'c_r': (0.0, 1.0),
    'c_alpha': (0.0, 1.0),
    'l': (0, 64),
    'max_iters': (1, 1000000),
    'cell_scale': (1.0, 2.0)
}

# Output formats
SOLUTION_FORMATS = ('bin', 'txt')

HOLLOW_STATS_COLUMNS = [
    'n', 'r', 'hollow_tets', 'hollow_points',
    'max_chunk_vertices', 'max_chunk_contacts', 'kappa'
]

BENCH_COLUMNS = [
    'suite', 'n', 'k', 'r', 'l',
    'fill_in', 'schur_nnz', 'flops', 'iterations', 'kappa_est',
    'baseline_fill_in', 'baseline_flops',
    'wall_ms_hollow', 'wall_ms_eliminate', 'wall_ms_order',
    'wall_ms_factor', 'wall_ms_pcg', 'wall_ms_total'
]

# Benchmark families, sized to finish in minutes on a laptop
BENCH_SUITES = {
    'scaling-n': {'grids': [(9, 9, 9), (15, 15, 15), (20, 20, 20)]},
    'scaling-k': {'chunk': (5, 5, 5), 'counts': [1, 2, 4, 8]},
    'hollow-r': {'grid': (8, 8, 8), 'r_values': [8, 27, 64]}
}

THREADS_ENV = 'TRUSS_THREADS'


def worker_count() -> int:
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return max(1, min(8, os.cpu_count() or 1))
    try:
        count = int(value)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {value!r}")
    if count < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {count}")
    return count
